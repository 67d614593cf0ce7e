"""Continuous tumour-induced angiogenesis model on the unit square.

Endothelial-cell density ``n`` moves by random motility, chemotaxis up the
angiogenic-factor gradient ``c`` and haptotaxis up the fibronectin gradient
``f``; ``f`` is produced and degraded by the cells, ``c`` is consumed.

Space: cell-centred grid, second-order differences, the ``n`` equation in
flux form with zero flux through every wall (mass is conserved to
round-off). The density carried by the taxis flux is reconstructed with a
van Leer limiter so that troughs between sprouts cannot be over-drained;
diffusion and the gradients of ``c`` and ``f`` stay central. Time: classical RK4 with step-doubling error control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from ..errors import ConfigError, NumericalError
from .. import kernels
from ..term_store import TermDataset

TERM_NAMES = (
    "dn_dt",
    "random_motility",
    "chemotaxis_n_lap_c",
    "chemotaxis_grad_n_grad_c",
    "chemotaxis_grad_chi_grad_c",
    "haptotaxis_n_lap_f",
    "haptotaxis_grad_n_grad_f",
)

NEGATIVE_SLACK = -1e-9
MAX_CLAMP_FRACTION = 1e-3
# per accepted step, how fast a step cap set by a negative density relaxes
POSITIVITY_CAP_GROWTH = 1.02


@dataclass(frozen=True)
class AngioParams:
    D_a: float = 0.00035
    alpha_a: float = 0.6
    chi0: float = 0.38
    rho_a: float = 0.34
    beta_f: float = 0.05
    gamma: float = 0.1
    eta_c: float = 0.1
    nu: float = (math.sqrt(5.0) - 0.1) / (math.sqrt(5.0) - 1.0)
    r0: float = 0.1
    x0: float = 1.0
    y0: float = 0.5
    k: float = 0.75
    eps1: float = 0.45
    eps2: float = 0.001

    def chi(self, c):
        return self.chi0 / (1.0 + self.alpha_a * c)

    def dchi_dc(self, c):
        return -self.chi0 * self.alpha_a / (1.0 + self.alpha_a * c) ** 2


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-6
    safety: float = 0.9
    dt_min: float = 1e-12
    dt_max: float = 1e-2
    dt_init: float = 1e-4
    red_noise_coef: float = 0.9
    # face value of n in the taxis flux: "limited" (van Leer, upwind-biased) or "central"
    advection: str = "limited"
    # halvings tried before a negative density is clipped instead
    positivity_retries: int = 8

    def __post_init__(self):
        if self.advection not in ("limited", "central"):
            raise ConfigError(f"unknown advection scheme {self.advection!r}")
        if not (0 < self.dt_min <= self.dt_init and self.dt_min <= self.dt_max and self.tol > 0):
            raise ConfigError("inconsistent solver step settings")


@dataclass
class AngioState:
    n: np.ndarray
    c: np.ndarray
    f: np.ndarray
    t: float
    h: float

    @property
    def mass(self) -> float:
        return float(math.fsum(self.n.ravel().tolist()) * self.h * self.h)

    def copy(self) -> "AngioState":
        return AngioState(self.n.copy(), self.c.copy(), self.f.copy(), self.t, self.h)


@dataclass
class SolverDiagnostics:
    steps: int = 0
    rejected: int = 0
    clamps: int = 0
    max_c_increase: float = 0.0
    min_dt: float = math.inf
    mass_history: list = field(default_factory=list)


def grid(resolution: int):
    h = 1.0 / resolution
    centers = (np.arange(resolution) + 0.5) * h
    X, Y = np.meshgrid(centers, centers, indexing="ij")
    return X, Y, h


def initial_c(X, Y, p: AngioParams = AngioParams()):
    r = np.hypot(X - p.x0, Y - p.y0)
    # the outer branch is continued past r = 1 to reach the far corners
    return np.where(r <= p.r0, 1.0, (p.nu - r) ** 2 / (p.nu - p.r0))


def initial_state(resolution: int, p: AngioParams = AngioParams()) -> AngioState:
    X, Y, h = grid(resolution)
    c = initial_c(X, Y, p)
    f = p.k * np.exp(-(X**2) / p.eps1)
    n = np.exp(-(X**2) / p.eps2) * np.sin(6.0 * np.pi * Y) ** 2
    return AngioState(n, c, f, 0.0, h)


def red_noise(shape, rng: np.random.Generator, coef: float = 0.9) -> np.ndarray:
    """White Gaussian field smoothed by an AR(1) filter along each axis, max |.| = 1."""
    white = rng.standard_normal(shape)
    field = lfilter([1.0], [1.0, -coef], white, axis=0)
    field = lfilter([1.0], [1.0, -coef], field, axis=1)
    return field / np.max(np.abs(field))


def add_initial_noise(state: AngioState, noise_amp: float, seed: int, coef: float = 0.9) -> AngioState:
    if noise_amp == 0:
        return state
    rng = np.random.default_rng(seed)
    c = state.c + noise_amp * np.max(np.abs(state.c)) * red_noise(state.c.shape, rng, coef)
    f = state.f + noise_amp * np.max(np.abs(state.f)) * red_noise(state.f.shape, rng, coef)
    return AngioState(state.n.copy(), c, f, state.t, state.h)


# --------------------------------------------------------------------------
# spatial operators


def rhs(y: np.ndarray, h: float, p: AngioParams, advection: str = "limited") -> np.ndarray:
    n, c, f = y
    out = np.empty_like(y)
    out[0] = kernels.n_flux_divergence(n, c, f, h, p.D_a, p.chi0, p.alpha_a, p.rho_a, advection == "limited")
    # reactions see only the physical (non-negative) part of n, so c never grows
    n_pos = np.maximum(n, 0.0)
    out[1] = -p.eta_c * c * n_pos
    out[2] = p.beta_f * n_pos - p.gamma * n_pos * f
    return out


def _clip_negative_n(n: np.ndarray) -> int:
    """Zero negative densities in place and rescale to the pre-clip total.

    Returns the number of cells below ``NEGATIVE_SLACK`` (round-off level
    undershoots are clipped silently).
    """
    neg = n < 0.0
    if not neg.any():
        return 0
    significant = int(np.count_nonzero(n < NEGATIVE_SLACK))
    before = math.fsum(n.ravel().tolist())
    n[neg] = 0.0
    after = math.fsum(n.ravel().tolist())
    if after > 0.0:
        n *= before / after
    return significant


def _rk4(y, dt, h, p, k1=None, advection="limited"):
    if k1 is None:
        k1 = rhs(y, h, p, advection)
    k2 = rhs(y + 0.5 * dt * k1, h, p, advection)
    k3 = rhs(y + 0.5 * dt * k2, h, p, advection)
    k4 = rhs(y + dt * k3, h, p, advection)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _grad(u, h):
    g = np.pad(u, 1, mode="edge")
    return (g[2:, 1:-1] - g[:-2, 1:-1]) / (2 * h), (g[1:-1, 2:] - g[1:-1, :-2]) / (2 * h)


def _lap(u, h):
    g = np.pad(u, 1, mode="edge")
    return (g[2:, 1:-1] + g[:-2, 1:-1] + g[1:-1, 2:] + g[1:-1, :-2] - 4.0 * u) / (h * h)


def expanded_terms(state: AngioState, p: AngioParams = AngioParams()) -> np.ndarray:
    """(M*M, 7) array of the expanded cell-density terms, time derivative first.

    The time derivative is the sum of the six right-hand-side terms, so each
    row satisfies dn/dt - sum(others) = 0 up to round-off.
    """
    n, c, f, h = state.n, state.c, state.f, state.h
    nx_, ny_ = _grad(n, h)
    cx, cy = _grad(c, h)
    fx, fy = _grad(f, h)
    chi = p.chi(c)
    grad_c_sq = cx * cx + cy * cy
    rhs_terms = [
        p.D_a * _lap(n, h),
        -chi * n * _lap(c, h),
        -chi * (nx_ * cx + ny_ * cy),
        -n * p.dchi_dc(c) * grad_c_sq,
        -p.rho_a * n * _lap(f, h),
        -p.rho_a * (nx_ * fx + ny_ * fy),
    ]
    dn_dt = rhs_terms[0].copy()
    for term in rhs_terms[1:]:
        dn_dt = dn_dt + term
    return np.stack([dn_dt] + rhs_terms, axis=-1).reshape(-1, 7)


def state_dataset(state: AngioState, p: AngioParams = AngioParams()) -> TermDataset:
    m = state.n.shape[0]
    X, Y, h = grid(m)
    return TermDataset(
        expanded_terms(state, p),
        np.full(m * m, h * h),
        TERM_NAMES,
        np.column_stack([X.ravel(), Y.ravel()]),
        ("x", "y"),
    )


def fields_dataset(state: AngioState) -> TermDataset:
    """Snapshot of (n, c, f) on the grid, stored with the term-file layout."""
    m = state.n.shape[0]
    X, Y, h = grid(m)
    vals = np.column_stack([state.n.ravel(), state.c.ravel(), state.f.ravel()])
    return TermDataset(
        vals, np.full(m * m, h * h), ("n", "c", "f"), np.column_stack([X.ravel(), Y.ravel()]), ("x", "y")
    )


# --------------------------------------------------------------------------
# time stepping


def fibronectin_factor_step(state: AngioState, dt: float, p: AngioParams = AngioParams()) -> AngioState:
    """One RK4 step of the pointwise f and c equations with n held fixed."""
    n = state.n

    def g(fc):
        f, c = fc
        return np.stack([p.beta_f * n - p.gamma * n * f, -p.eta_c * c * n])

    y = np.stack([state.f, state.c])
    k1 = g(y)
    k2 = g(y + 0.5 * dt * k1)
    k3 = g(y + 0.5 * dt * k2)
    k4 = g(y + dt * k3)
    f, c = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return AngioState(n.copy(), c, f, state.t + dt, state.h)


def integrate(
    state: AngioState,
    t_end: float,
    p: AngioParams = AngioParams(),
    solver: SolverConfig = SolverConfig(),
    snapshot_times=(),
    diagnostics: SolverDiagnostics | None = None,
):
    """Advance ``state`` to ``t_end``; returns (final state, [snapshot states])."""
    diag = diagnostics if diagnostics is not None else SolverDiagnostics()
    h = state.h
    y = np.stack([state.n, state.c, state.f])
    t = state.t
    cells = state.n.size
    stops = sorted({float(s) for s in snapshot_times if t < s < t_end})
    stops.append(float(t_end))
    snapshots = []
    dt = solver.dt_init
    retries = 0
    positivity_cap = math.inf
    diag.mass_history.append(state.mass)
    for stop in stops:
        while t < stop:
            landing = dt >= stop - t
            step = stop - t if landing else dt
            adv = solver.advection
            k1 = rhs(y, h, p, adv)
            y_full = _rk4(y, step, h, p, k1, adv)
            y_half = _rk4(y, 0.5 * step, h, p, k1, adv)
            y_two = _rk4(y_half, 0.5 * step, h, p, advection=adv)
            err = float(np.max(np.abs(y_two - y_full))) / 15.0
            ratio = err / solver.tol
            accepted = ratio <= 1.0
            undershoot = accepted and bool(np.any(y_two[0] < NEGATIVE_SLACK))
            if undershoot and retries < solver.positivity_retries:
                # treat a negative density as a failed step and retry smaller
                retries += 1
                diag.rejected += 1
                dt = 0.5 * step
                positivity_cap = dt
                if dt < solver.dt_min:
                    raise NumericalError(f"step size underflow (dt={dt:.3g}) at t={t:.6g}")
                continue
            if accepted:
                retries = 0
                positivity_cap *= POSITIVITY_CAP_GROWTH
                diag.max_c_increase = max(diag.max_c_increase, float(np.max(y_two[1] - y[1])))
                n_neg = _clip_negative_n(y_two[0])
                if n_neg:
                    diag.clamps += n_neg
                    if n_neg > MAX_CLAMP_FRACTION * cells:
                        raise NumericalError(
                            f"{n_neg} negative cells at t={t + step:.6g} "
                            f"(limit {MAX_CLAMP_FRACTION:.1%} of the grid)"
                        )
                y = y_two
                t = stop if landing else t + step
                diag.steps += 1
                diag.min_dt = min(diag.min_dt, step)
            else:
                diag.rejected += 1
            if not (accepted and landing and step < dt):
                # a shortened landing step says nothing about the natural dt
                factor = 5.0 if err == 0.0 else min(5.0, max(0.2, solver.safety * ratio**-0.2))
                dt = min(solver.dt_max, positivity_cap, step * factor)
            if dt < solver.dt_min:
                raise NumericalError(f"step size underflow (dt={dt:.3g}) at t={t:.6g}")
        diag.mass_history.append(float(math.fsum(y[0].ravel().tolist()) * h * h))
        if stop != t_end:
            snapshots.append(AngioState(y[0].copy(), y[1].copy(), y[2].copy(), t, h))
    final = AngioState(y[0].copy(), y[1].copy(), y[2].copy(), t, h)
    return final, snapshots


def simulate_angiogenesis(
    t_end: float = 0.91,
    noise_amp: float = 0.01,
    seed: int = 0,
    resolution: int = 256,
    snapshot_times=(),
    params: AngioParams = AngioParams(),
    solver: SolverConfig = SolverConfig(),
    diagnostics: SolverDiagnostics | None = None,
):
    """Run the model from the standard initial condition.

    Returns ``(trajectory, dataset)``: the trajectory holds the initial state,
    any requested snapshots and the final state; the dataset holds the
    expanded cell-density terms at ``t_end``.
    """
    if t_end < 0:
        raise ConfigError("t_end must be non-negative")
    if resolution < 64:
        raise ConfigError(f"resolution must be at least 64 (got {resolution})")
    state = add_initial_noise(initial_state(resolution, params), noise_amp, seed, solver.red_noise_coef)
    trajectory = [state.copy()]
    if t_end > 0:
        final, snaps = integrate(state, t_end, params, solver, snapshot_times, diagnostics)
        trajectory.extend(snaps)
        trajectory.append(final)
    else:
        final = state
    return trajectory, state_dataset(final, params)
