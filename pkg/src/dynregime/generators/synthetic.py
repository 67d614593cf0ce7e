"""Two-regime synthetic field: half the terms dominate on each side of y = 0.5."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..term_store import TermDataset


@dataclass(frozen=True)
class SyntheticConfig:
    d: int = 8
    nx: int = 128
    ny: int = 128
    lam: float = 10.0
    beta: float = 0.1
    eta0: float = 0.1
    omega: float = 10.0 * np.pi

    def __post_init__(self):
        if self.d < 4 or self.d % 2:
            raise ConfigError("d must be an even integer >= 4")
        if self.nx < 2 or self.ny < 2:
            raise ConfigError("grid must be at least 2 x 2")
        if min(self.lam, self.beta, self.eta0, self.omega) <= 0:
            raise ConfigError("coefficients must be positive")


def heaviside(phi):
    # H(0) = 1 so a sample on the jump belongs to exactly one regime
    return np.where(np.asarray(phi) >= 0.0, 1.0, 0.0)


def true_masks(d: int, y) -> np.ndarray:
    """Dominant-term masks implied by the construction (first half above y=0.5)."""
    y = np.asarray(y, dtype=np.float64)
    first = np.arange(d) < d // 2
    upper = (y - 0.5) >= 0.0
    return np.where(upper[:, None], first[None, :], ~first[None, :])


def gen_synthetic(config: SyntheticConfig | None = None, seed: int = 0) -> TermDataset:
    """Cell-centred grid on the unit square, one row per cell.

    ``seed`` is accepted for interface symmetry; the field is deterministic.
    """
    config = config or SyntheticConfig()
    if config.d % 4:
        warnings.warn(
            f"d={config.d} is not a multiple of 4: the terms do not sum exactly to zero",
            UserWarning,
            stacklevel=2,
        )
    d = config.d
    x1 = (np.arange(config.nx) + 0.5) / config.nx
    y1 = (np.arange(config.ny) + 0.5) / config.ny
    X, Y = np.meshgrid(x1, y1, indexing="ij")
    x = X.ravel()
    y = Y.ravel()

    eta = config.eta0 * np.sin(config.omega * y)
    i = np.arange(d)
    phi = np.where(i[None, :] < d // 2, y[:, None] - 0.5, 0.5 - y[:, None])
    sign = np.where(i % 2 == 0, 1.0, -1.0)
    terms = sign[None, :] * eta[:, None] * (config.lam * heaviside(phi) + config.beta)

    if d % 4 == 0:
        # paired +/- terms cancel exactly
        assert np.all(terms.sum(axis=1) == 0.0)
    if np.any(np.max(np.abs(terms), axis=1) == 0.0):
        warnings.warn("grid samples a zero of the modulation; degenerate rows present", UserWarning, stacklevel=2)

    area = 1.0 / (config.nx * config.ny)
    return TermDataset(
        terms,
        np.full(x.size, area),
        tuple(f"e{j}" for j in range(d)),
        np.column_stack([x, y]),
        ("x", "y"),
    )
