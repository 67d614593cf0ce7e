"""Terms of the low-order Munk (western-boundary) vorticity balance.

Uses the matched-asymptotic streamfunction
``psi = (1 - x - exp(-x/eps)) * pi * sin(pi y)`` with wind stress
``tau = -cos(pi y) i``, differentiated analytically. Term order is
``[dpsi/dx, eps*lap(psi), -curl(tau)]`` so the row sum is the O(eps) residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..term_store import TermDataset
from .. import kernels

TERM_NAMES = ("advection", "diffusion", "wind_curl")
# named balances, by term name
BALANCES = {
    "western-boundary": ("advection", "diffusion"),
    "sverdrup": ("advection", "wind_curl"),
}


@dataclass(frozen=True)
class MunkConfig:
    epsilon: float = 0.01
    nx: int = 1000
    ny: int = 100
    y_slice: float = 0.5

    def __post_init__(self):
        if not 0 < self.epsilon < 0.5:
            raise ConfigError("epsilon must be small and positive")
        if not 0 < self.y_slice < 1:
            raise ConfigError("y_slice must lie in (0, 1)")
        if self.nx < 2 or self.ny < 2:
            raise ConfigError("grid must be at least 2 x 2")


def munk_terms(x, y, epsilon: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    ex = np.exp(-x / epsilon)
    sy = np.pi * np.sin(np.pi * y)
    advection = (-1.0 + ex / epsilon) * sy
    # eps * (psi_xx + psi_yy); psi_yy = -pi^2 psi
    diffusion = -(ex / epsilon) * sy - epsilon * np.pi**2 * (1.0 - x - ex) * sy
    wind = sy  # -curl(tau) = pi sin(pi y)
    return np.stack([advection, diffusion, wind], axis=-1)


def balance_mask(name: str) -> np.ndarray:
    try:
        members = BALANCES[name]
    except KeyError:
        raise ConfigError(f"unknown Munk balance {name!r}; choose from {sorted(BALANCES)}") from None
    return np.array([t in members for t in TERM_NAMES])


def gen_munk(config: MunkConfig | None = None):
    """Cell-centred grid dataset plus per-balance score curves along ``y_slice``.

    Returns ``(dataset, curves)`` where ``curves`` maps ``"x"`` and every
    balance name to 1-D arrays, and ``"residual"`` to the row sums on the slice.
    """
    config = config or MunkConfig()
    x1 = (np.arange(config.nx) + 0.5) / config.nx
    y1 = (np.arange(config.ny) + 0.5) / config.ny
    X, Y = np.meshgrid(x1, y1, indexing="ij")
    terms = munk_terms(X.ravel(), Y.ravel(), config.epsilon)
    ds = TermDataset(
        terms,
        np.full(terms.shape[0], 1.0 / (config.nx * config.ny)),
        TERM_NAMES,
        np.column_stack([X.ravel(), Y.ravel()]),
        ("x", "y"),
    )

    slice_terms = munk_terms(x1, np.full_like(x1, config.y_slice), config.epsilon)
    curves = {"x": x1, "residual": slice_terms.sum(axis=1)}
    for name in BALANCES:
        mask = np.broadcast_to(balance_mask(name), slice_terms.shape)
        _, _, m = kernels.row_scores(slice_terms, mask)
        curves[name] = m
    return ds, curves


def score_gap(curves, threshold: float = 0.5):
    """x-interval where every named balance scores below ``threshold``."""
    x = curves["x"]
    low = np.ones_like(x, dtype=bool)
    for name in BALANCES:
        low &= curves[name] < threshold
    if not low.any():
        return None
    idx = np.flatnonzero(low)
    return float(x[idx[0]]), float(x[idx[-1]])
