"""Hyperparameter sweep over clusterer x selector settings.

For every grid point the standardized data are clustered, one hypothesis is
selected per cluster from the raw terms, hypotheses are broadcast to the
observations and the weighted global score is recorded. The best point wins
unless it fails to beat the all-terms score, in which case every observation
keeps the full set.
"""

from __future__ import annotations

import json
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import clustering, selection
from .errors import ConfigError, RegimeError, ValidationError
from .score import ScoreReport, full_set_score, global_score, score_weights
from .term_store import TermDataset, standardize, write_text_atomic


FEATURE_KINDS = ("log-magnitude", "abs", "terms")


def cluster_features(ds: TermDataset | np.ndarray, kind: str = "log-magnitude", standardized: bool = True) -> np.ndarray:
    """Feature matrix handed to the clusterer.

    ``log-magnitude`` is log10|e| with exact zeros floored one decade below the
    smallest nonzero magnitude in the data; ``abs`` is |e|; ``terms`` is the
    raw signed terms. The result is z-scored per column unless
    ``standardized`` is false.
    """
    x = ds.terms if isinstance(ds, TermDataset) else np.asarray(ds, dtype=np.float64)
    if kind == "log-magnitude":
        a = np.abs(x)
        nz = a[a > 0]
        floor = nz.min() / 10.0 if nz.size else 1.0
        x = np.log10(np.maximum(a, floor))
    elif kind == "abs":
        x = np.abs(x)
    elif kind != "terms":
        raise ConfigError(f"unknown cluster feature space {kind!r}")
    return standardize(x).z if standardized else np.array(x, dtype=np.float64)


@dataclass(frozen=True)
class SweepGrid:
    clusterer_kind: str = "kmeans"
    k_values: tuple[int, ...] = (2,)
    alpha_values: tuple[float, ...] = ()
    selector_kind: str = "chs"
    seed: int = 0
    degenerate_policy: str = "penalize"
    n_init: int = 10
    max_iter: int = 300
    tol: float = 1e-6
    covariance: str = "full"
    representative: str = "mean-score"
    spca_normalize: bool = False
    n_components: int = 1
    standardize: bool = True
    chs_max_d: int = selection.CHS_MAX_D
    cluster_features: str = "log-magnitude"

    def __post_init__(self):
        ks = tuple(sorted({int(k) for k in self.k_values}))
        if not ks:
            raise ConfigError("k_values must not be empty")
        if ks[0] < 1:
            raise ConfigError("k values must be >= 1")
        alphas = tuple(sorted({float(a) for a in self.alpha_values}))
        if self.selector_kind == "sparse-pca":
            if not alphas:
                raise ConfigError("sparse-pca needs at least one alpha value")
            if alphas[0] <= 0:
                raise ConfigError("alpha values must be positive")
        elif self.selector_kind != "chs":
            raise ConfigError(f"unknown selector kind {self.selector_kind!r}")
        if self.cluster_features not in FEATURE_KINDS:
            raise ConfigError(f"unknown cluster feature space {self.cluster_features!r}")
        if self.degenerate_policy not in ("penalize", "exclude"):
            raise ConfigError(f"unknown degenerate policy {self.degenerate_policy!r}")
        object.__setattr__(self, "k_values", ks)
        object.__setattr__(self, "alpha_values", alphas)

    @property
    def alpha_axis(self) -> tuple[float, ...]:
        """Grid columns; CHS has a single column with no alpha."""
        return self.alpha_values if self.selector_kind == "sparse-pca" else (math.nan,)

    def selector_config(self, alpha: float) -> selection.SelectorConfig:
        return selection.SelectorConfig(
            kind=self.selector_kind,
            alpha=alpha if self.selector_kind == "sparse-pca" else 1.0,
            n_components=self.n_components,
            representative=self.representative,
            normalize=self.spca_normalize,
            max_d=self.chs_max_d,
        )

    def clusterer_config(self, k: int) -> clustering.ClustererConfig:
        return clustering.ClustererConfig(
            kind=self.clusterer_kind,
            k=k,
            seed=point_seed(self.seed, k),
            n_init=self.n_init,
            max_iter=self.max_iter,
            tol=self.tol,
            covariance=self.covariance,
        )


def point_seed(seed: int, k: int) -> int:
    """Independent, reproducible clusterer seed for one k of the grid."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(int(k),))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class SweepResult:
    k_values: tuple[int, ...]
    alpha_values: tuple[float, ...]
    grid_scores: np.ndarray
    best_point: tuple[int, float, int] | None
    best_assignment: clustering.ClusterAssignment | None
    best_hypotheses: list[selection.ClusterHypothesis]
    best_global_score: float
    full_set_score: float
    fell_back_to_full_set: bool
    hypotheses: np.ndarray
    report: ScoreReport
    errors: dict = field(default_factory=dict)

    @property
    def reported_score(self) -> float:
        return self.full_set_score if self.fell_back_to_full_set else self.best_global_score

    @property
    def labels(self) -> np.ndarray:
        n = self.hypotheses.shape[0]
        if self.fell_back_to_full_set or self.best_assignment is None:
            return np.full(n, -1, dtype=np.int64)
        return self.best_assignment.labels

    def regimes(self) -> list[np.ndarray]:
        """Distinct masks in use (clusters sharing a mask form one regime)."""
        seen = {}
        for row in self.hypotheses:
            seen.setdefault(row.tobytes(), row)
        return [m.copy() for m in seen.values()]


def _labels_valid(labels, n):
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape != (n,):
        raise ValidationError(f"expected {n} labels, got {labels.size}")
    return labels


def evaluate_labeling(
    ds: TermDataset,
    labels,
    selector: selection.SelectorConfig,
    degenerate: str = "penalize",
):
    """Select, broadcast and score for a given partition (negative label = noise)."""
    labels = _labels_valid(labels, ds.n)
    w = score_weights(ds, degenerate)
    hyps = []
    for lab in np.unique(labels):
        if lab < 0:
            continue
        members = np.flatnonzero(labels == lab)
        hyps.append(selection.select(ds, members, selector, w[members], int(lab)))
    H = selection.broadcast(hyps, labels, ds.d)
    return H, global_score(ds, H, degenerate), hyps


def _sweep_row(ds, z, grid: SweepGrid, k: int):
    """All alpha points of one k: a single clustering shared across the row."""
    n_alpha = len(grid.alpha_axis)
    cfg = grid.clusterer_config(k)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            assignment = clustering.fit(z, cfg)
    except RegimeError as exc:
        return [None] * n_alpha, None, str(exc)
    out = []
    for alpha in grid.alpha_axis:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                H, report, hyps = evaluate_labeling(
                    ds, assignment.labels, grid.selector_config(alpha), grid.degenerate_policy
                )
        except RegimeError as exc:
            out.append(None)
            continue
        out.append((report.global_score, H, report, hyps))
    return out, assignment, None


def run_sweep(ds: TermDataset, grid: SweepGrid, threads: int = 1) -> SweepResult:
    if grid.selector_kind == "chs" and ds.d > grid.chs_max_d:
        raise ConfigError(
            f"CHS with D={ds.d} exceeds the ceiling D={grid.chs_max_d}; use sparse-pca"
        )
    z = cluster_features(ds, grid.cluster_features, grid.standardize)
    ks = grid.k_values
    alphas = grid.alpha_axis
    workers = threads if threads and threads > 0 else None
    if workers == 1 or len(ks) == 1:
        rows = [_sweep_row(ds, z, grid, k) for k in ks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda k: _sweep_row(ds, z, grid, k), ks))

    scores = np.full((len(ks), len(alphas)), np.nan)
    errors = {}
    best = None
    # row-major scan over ascending k then alpha; strict '>' keeps the first tie
    for i, (k, (points, assignment, err)) in enumerate(zip(ks, rows)):
        if err is not None:
            errors[k] = err
        for j, point in enumerate(points):
            if point is None:
                continue
            scores[i, j] = point[0]
            if best is None or point[0] > best[0][0]:
                best = (point, k, alphas[j], assignment)
    if best is None:
        raise RegimeError("every grid point failed: " + "; ".join(f"k={k}: {e}" for k, e in errors.items()))

    (score, H, report, hyps), k, alpha, assignment = best
    full = full_set_score(ds, grid.degenerate_policy)
    fell_back = not score > full
    if fell_back:
        H = np.ones(ds.terms.shape, dtype=bool)
        report = global_score(ds, H, grid.degenerate_policy)
    return SweepResult(
        k_values=ks,
        alpha_values=alphas,
        grid_scores=scores,
        best_point=(k, alpha, grid.clusterer_config(k).seed),
        best_assignment=assignment,
        best_hypotheses=hyps,
        best_global_score=score,
        full_set_score=full,
        fell_back_to_full_set=fell_back,
        hypotheses=H,
        report=report,
        errors=errors,
    )


# --------------------------------------------------------------------------
# serialization


def _fmt(v: float) -> str:
    return "" if v is None or not np.isfinite(v) else repr(float(v))


def grid_csv(result: SweepResult) -> str:
    head = ["k\\alpha"] + ["none" if math.isnan(a) else repr(float(a)) for a in result.alpha_values]
    lines = [",".join(head)]
    for k, row in zip(result.k_values, result.grid_scores):
        lines.append(",".join([str(k)] + [_fmt(v) for v in row]))
    return "\n".join(lines) + "\n"


def summary_dict(result: SweepResult, ds: TermDataset) -> dict:
    labels = result.labels
    clusters = []
    if not result.fell_back_to_full_set:
        for h in result.best_hypotheses:
            clusters.append(
                {
                    "id": int(h.cluster_id),
                    "size": int(np.sum(labels == h.cluster_id)),
                    "mask": [int(v) for v in h.hypothesis],
                    "names": [n for n, v in zip(ds.term_names, h.hypothesis) if v],
                    "cluster_score": float(h.cluster_score),
                }
            )
    k, alpha, seed = result.best_point
    return {
        "best_point": {"k": int(k), "alpha": None if math.isnan(alpha) else float(alpha), "seed": int(seed)},
        "global_score": float(result.reported_score),
        "best_grid_score": float(result.best_global_score),
        "full_set_score": float(result.full_set_score),
        "fell_back": bool(result.fell_back_to_full_set),
        "term_names": list(ds.term_names),
        "regimes": [[int(v) for v in m] for m in result.regimes()],
        "clusters": clusters,
        "failed_points": {str(k): e for k, e in result.errors.items()},
    }


def labels_csv(ds: TermDataset, labels, H, report: ScoreReport) -> str:
    coord_names = list(ds.coord_names)
    head = ["index"] + coord_names + ["label"] + [f"h_{n}" for n in ds.term_names] + ["m", "gamma", "omega"]
    lines = [",".join(head)]
    for i in range(ds.n):
        cells = [str(i)]
        if ds.coords is not None:
            cells += [repr(float(c)) for c in ds.coords[i]]
        cells.append(str(int(labels[i])))
        cells += [str(int(v)) for v in H[i]]
        cells += [repr(float(report.m[i])), repr(float(report.gamma[i])), repr(float(report.omega[i]))]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_sweep(result: SweepResult, ds: TermDataset, out_dir) -> dict:
    from pathlib import Path

    out = Path(out_dir)
    paths = {
        "grid": out / "grid.csv",
        "summary": out / "summary.json",
        "labels": out / "labels.csv",
    }
    write_text_atomic(paths["grid"], grid_csv(result))
    write_text_atomic(paths["summary"], json.dumps(summary_dict(result, ds), indent=2) + "\n")
    write_text_atomic(paths["labels"], labels_csv(ds, result.labels, result.hypotheses, result.report))
    return paths


# --------------------------------------------------------------------------
# timing


def time_single_pass(ds: TermDataset, grid: SweepGrid, k: int, alpha: float) -> dict:
    """Wall time of one framework pass (one clusterer and selector setting)."""
    t0 = time.perf_counter()
    z = cluster_features(ds, grid.cluster_features, grid.standardize)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        assignment = clustering.fit(z, grid.clusterer_config(k))
        t1 = time.perf_counter()
        H, report, _ = evaluate_labeling(ds, assignment.labels, grid.selector_config(alpha), grid.degenerate_policy)
    t2 = time.perf_counter()
    return {"total": t2 - t0, "cluster": t1 - t0, "select": t2 - t1, "score": report.global_score}


def benchmark(make_dataset, sizes, dims, grid: SweepGrid, repeats: int = 3) -> list[dict]:
    """Average single-pass times as N (``sizes``) or D (``dims``) varies.

    ``make_dataset(size, d)`` builds one member of the dataset family. Each
    series is normalized by its first (smallest) entry, so t/t0 = 1 there.
    """
    k = grid.k_values[0]
    alpha = grid.alpha_axis[0]
    rows = []
    series = []
    if len(sizes) > 1 or len(dims) == 1:
        series += [("N", s, dims[0]) for s in sizes]
    if len(dims) > 1:
        series += [("D", sizes[0], d) for d in dims]
    for axis, size, d in series:
        ds = make_dataset(size, d)
        times = [time_single_pass(ds, grid, k, alpha) for _ in range(repeats)]
        rows.append(
            {
                "axis": axis,
                "clusterer": grid.clusterer_kind,
                "selector": grid.selector_kind,
                "N": ds.n,
                "D": ds.d,
                "seconds": float(np.mean([t["total"] for t in times])),
                "cluster_seconds": float(np.mean([t["cluster"] for t in times])),
                "select_seconds": float(np.mean([t["select"] for t in times])),
                "score": float(times[-1]["score"]),
            }
        )
    for axis in ("N", "D"):
        sub = [r for r in rows if r["axis"] == axis]
        if sub:
            t0 = sub[0]["seconds"]
            for r in sub:
                r["t_over_t0"] = r["seconds"] / t0
    return rows


def loglog_slope(x, y) -> float:
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(lx, ly, 1)[0])


def timing_csv(rows) -> str:
    cols = ["axis", "clusterer", "selector", "N", "D", "seconds", "t_over_t0", "cluster_seconds", "select_seconds", "score"]
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join(str(r.get(c, "")) for c in cols))
    return "\n".join(lines) + "\n"
