from __future__ import annotations

import math

import numpy as np
import pytest

from dynregime.errors import ConfigError
from dynregime.generators import angiogenesis as angio
from dynregime.generators.munk import MunkConfig, balance_mask, gen_munk, score_gap
from dynregime.generators.synthetic import SyntheticConfig, gen_synthetic, heaviside, true_masks
from dynregime.score import global_score

TRUE_MASK_SCORE = math.log10(100) / math.log10(102)

# --------------------------------------------------------------------------
# synthetic


def test_synthetic_exact_closure(synthetic_ds):
    assert np.all(synthetic_ds.terms.sum(axis=1) == 0.0)


def test_synthetic_dominance_ratio(synthetic_ds):
    a = np.abs(synthetic_ds.terms)
    upper = synthetic_ds.coords[:, 1] > 0.5
    ratio = a[upper][:, :4] / a[upper][:, 4:]
    assert np.allclose(ratio, 101.0, rtol=1e-12)
    ratio = a[~upper][:, 4:] / a[~upper][:, :4]
    assert np.allclose(ratio, 101.0, rtol=1e-12)


def test_synthetic_no_degenerate_rows(synthetic_ds):
    assert not synthetic_ds.degenerate_mask.any()


def test_synthetic_true_mask_score_resolution_insensitive():
    scores = []
    for m in (64, 256):
        ds = gen_synthetic(SyntheticConfig(nx=m, ny=m))
        scores.append(global_score(ds, true_masks(ds.d, ds.coords[:, 1])).global_score)
    assert scores[0] == pytest.approx(TRUE_MASK_SCORE, abs=1e-12)
    assert scores[1] == pytest.approx(TRUE_MASK_SCORE, abs=1e-12)


def test_heaviside_at_zero_is_one():
    assert heaviside([0.0, -1e-300, 1e-300]).tolist() == [1.0, 0.0, 1.0]


def test_synthetic_d_not_multiple_of_four_warns():
    with pytest.warns(UserWarning, match="sum exactly"):
        gen_synthetic(SyntheticConfig(d=6, nx=8, ny=8))


def test_synthetic_bad_d_rejected():
    with pytest.raises(ConfigError):
        SyntheticConfig(d=5)


# --------------------------------------------------------------------------
# Munk


@pytest.fixture(scope="module")
def munk():
    return gen_munk(MunkConfig())


def test_munk_limits(munk):
    _, curves = munk
    x = curves["x"]
    assert np.all(curves["sverdrup"][x > 0.2] > 0.9)
    assert np.all(curves["western-boundary"][x < 0.01] > 0.9)
    assert curves["western-boundary"][-1] == 0.0
    assert curves["sverdrup"][0] == 0.0


def test_munk_gap_location(munk):
    _, curves = munk
    lo, hi = score_gap(curves)
    assert abs(0.5 * (lo + hi) - 0.04) <= 0.02


def test_munk_residual_bound(munk):
    ds, _ = munk
    eps = MunkConfig().epsilon
    # closure error is exactly -eps*pi^2*(1-x-exp(-x/eps))*pi*sin(pi*y), so C = pi^3
    assert np.max(np.abs(ds.terms.sum(axis=1))) <= math.pi**3 * eps


def test_munk_balance_masks():
    assert balance_mask("western-boundary").tolist() == [True, True, False]
    assert balance_mask("sverdrup").tolist() == [True, False, True]
    with pytest.raises(ConfigError):
        balance_mask("ekman")


# --------------------------------------------------------------------------
# angiogenesis


def test_initial_c_values():
    p = angio.AngioParams()
    c = angio.initial_c(np.array([p.x0 - 0.05, p.x0 - 0.5]), np.array([p.y0, p.y0]), p)
    assert c[0] == 1.0
    assert c[1] == pytest.approx((p.nu - 0.5) ** 2 / (p.nu - p.r0), abs=1e-15)


def _uniform(n, c, f, m=4):
    full = lambda v: np.full((m, m), float(v))  # noqa: E731
    return angio.AngioState(full(n), full(c), full(f), 0.0, 1.0 / m)


def _ode_to_one(state, steps=100):
    for _ in range(steps):
        state = angio.fibronectin_factor_step(state, 1.0 / steps)
    return state


def test_factor_decay_matches_exponential():
    s = _ode_to_one(_uniform(1.0, 1.0, 0.0))
    assert np.max(np.abs(s.c - math.exp(-0.1))) < 1e-10
    assert np.max(np.abs(s.f - 0.5 * (1.0 - math.exp(-0.1)))) < 1e-10


def test_no_cells_no_change():
    s0 = _uniform(0.0, 0.7, 0.3)
    s = _ode_to_one(s0, 10)
    assert np.array_equal(s.c, s0.c) and np.array_equal(s.f, s0.f)


def test_expanded_terms_close_exactly():
    traj, ds = angio.simulate_angiogenesis(t_end=0.0, resolution=64, noise_amp=0.01, seed=3)
    resid = ds.terms[:, 0] - ds.terms[:, 1:].sum(axis=1)
    assert np.max(np.abs(resid)) <= 1e-12 * np.max(np.abs(ds.terms))


def test_noise_is_deterministic():
    a = angio.add_initial_noise(angio.initial_state(64), 0.01, seed=4)
    b = angio.add_initial_noise(angio.initial_state(64), 0.01, seed=4)
    c = angio.add_initial_noise(angio.initial_state(64), 0.01, seed=5)
    assert np.array_equal(a.c, b.c) and np.array_equal(a.f, b.f)
    assert not np.array_equal(a.c, c.c)
    base = angio.initial_state(64)
    assert np.max(np.abs(a.c - base.c)) == pytest.approx(0.01 * np.max(base.c), rel=1e-12)


@pytest.fixture(scope="module")
def short_run():
    diag = angio.SolverDiagnostics()
    times = tuple(np.linspace(0.02, 0.18, 9))
    traj, ds = angio.simulate_angiogenesis(
        t_end=0.2, noise_amp=0.0, resolution=64, snapshot_times=times, diagnostics=diag
    )
    return traj, ds, diag


def test_short_run_conserves_mass(short_run):
    traj, _, diag = short_run
    assert abs(traj[-1].mass / traj[0].mass - 1.0) < 1e-6
    assert diag.clamps == 0


def test_short_run_factor_never_increases(short_run):
    traj, _, diag = short_run
    assert diag.max_c_increase <= 1e-9
    for a, b in zip(traj, traj[1:]):
        assert np.all(b.c - a.c <= 1e-9)


def test_front_moves_toward_tumour(short_run):
    traj, _, _ = short_run
    X, _, _ = angio.grid(64)
    com = [float(np.sum(s.n * X) / np.sum(s.n)) for s in traj]
    assert len(com) == 11
    assert np.all(np.diff(com) > 0)


def test_resolution_floor():
    with pytest.raises(ConfigError):
        angio.simulate_angiogenesis(t_end=0.1, resolution=32)


def test_bad_advection_rejected():
    with pytest.raises(ConfigError):
        angio.SolverConfig(advection="upwind")
