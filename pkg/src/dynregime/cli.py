"""``dynregime`` command line: generate, simulate, score, fit and benchmark.

Every command writes into ``--out DIR`` and leaves a ``manifest.json`` there
recording the command line, the resolved configuration, seeds, input hashes
and the package version. Exit codes: 0 success, 2 bad input, 3 numerical
failure, 4 bad configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, framework, kernels
from .errors import ConfigError, DataFormatError, RegimeError, ValidationError
from .generators import angiogenesis, munk, synthetic
from .score import InvalidSelection, check_mask_array, full_set_score, global_score
from .selection import SelectorConfig
from .term_store import load_dataset, write_dataset, write_text_atomic

MANIFEST_NAME = "manifest.json"
FORMAT_SUFFIX = {"delimited-text": ".txt", "binary-grid": ".bin"}


# --------------------------------------------------------------------------
# argument helpers


def parse_int_range(text: str) -> tuple[int, ...]:
    """``lo:hi[:step]`` inclusive, or a comma list, or a single integer."""
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) not in (2, 3):
                raise ValueError
            lo, hi = parts[0], parts[1]
            step = parts[2] if len(parts) == 3 else 1
            if step < 1 or hi < lo:
                raise ValueError
            return tuple(range(lo, hi + 1, step))
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer range {text!r} (use lo:hi[:step])") from None


def parse_log_range(text: str) -> tuple[float, ...]:
    """``lo:hi[:count]`` log-spaced (count defaults to 10), or a comma list."""
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) not in (2, 3):
                raise ValueError
            lo, hi = float(parts[0]), float(parts[1])
            count = int(parts[2]) if len(parts) == 3 else 10
            if lo <= 0 or hi < lo or count < 1:
                raise ValueError
            if count == 1:
                return (lo,)
            return tuple(float(v) for v in np.logspace(math.log10(lo), math.log10(hi), count))
        return tuple(float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad alpha range {text!r} (use lo:hi[:count])") from None


def parse_float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _threads(n: int) -> int:
    if n == 0:
        return os.cpu_count() or 1
    return n


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (tuple, list)):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


class RunManifest:
    """Provenance record written beside every command's outputs."""

    def __init__(self, argv, args):
        self.argv = list(argv)
        self.config = {
            k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in ("func",)
        }
        self.seeds = {"seed": int(args.seed)}
        self.inputs = {}
        self.outputs = {}
        self.extra = {}
        self.started = datetime.now(timezone.utc).isoformat()

    def add_input(self, path):
        self.inputs[str(path)] = sha256_file(path)

    def add_output(self, path):
        self.outputs[Path(path).name] = sha256_file(path)

    def to_dict(self) -> dict:
        return {
            "command": self.argv,
            "config": self.config,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "version": __version__,
            "kernel_backend": kernels.BACKEND,
            "extra": self.extra,
            "started": self.started,
            "finished": datetime.now(timezone.utc).isoformat(),
        }

    def write(self, out_dir):
        write_text_atomic(Path(out_dir) / MANIFEST_NAME, json.dumps(self.to_dict(), indent=2) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, obj, manifest):
    write_text_atomic(path, json.dumps(obj, indent=2) + "\n")
    manifest.add_output(path)


def _write_text(path, text, manifest):
    write_text_atomic(path, text)
    manifest.add_output(path)


def _write_ds(ds, path, fmt, manifest):
    write_dataset(ds, path, fmt)
    manifest.add_output(path)


# --------------------------------------------------------------------------
# commands


def cmd_gen(args, manifest):
    out = _out_dir(args)
    suffix = FORMAT_SUFFIX[args.format]
    if args.kind == "synthetic":
        cfg = synthetic.SyntheticConfig(d=args.d, nx=args.nx, ny=args.ny)
        ds = synthetic.gen_synthetic(cfg, seed=args.seed)
        _write_ds(ds, out / f"terms{suffix}", args.format, manifest)
        masks = synthetic.true_masks(cfg.d, ds.coords[:, 1]).astype(int)
        _write_text(out / "true_masks.csv", _masks_csv(masks, ds.term_names), manifest)
        print(f"synthetic: N={ds.n} D={ds.d} -> {out}")
        return
    cfg = munk.MunkConfig(epsilon=args.epsilon, nx=args.nx, ny=args.ny, y_slice=args.y_slice)
    ds, curves = munk.gen_munk(cfg)
    _write_ds(ds, out / f"terms{suffix}", args.format, manifest)
    for name in munk.BALANCES:
        lines = ["x,score,residual"]
        for x, m, r in zip(curves["x"], curves[name], curves["residual"]):
            lines.append(f"{x!r},{float(m)!r},{float(r)!r}")
        _write_text(out / f"curve_{name}.csv", "\n".join(lines) + "\n", manifest)
    gap = munk.score_gap(curves)
    manifest.extra["score_gap"] = list(gap) if gap else None
    print(f"munk: N={ds.n} D={ds.d}, low-score gap {gap} -> {out}")


def cmd_sim_angio(args, manifest):
    out = _out_dir(args)
    solver = angiogenesis.SolverConfig(tol=args.tol, advection=args.advection)
    diag = angiogenesis.SolverDiagnostics()
    traj, ds = angiogenesis.simulate_angiogenesis(
        t_end=args.t_end,
        noise_amp=args.noise,
        seed=args.seed,
        resolution=args.resolution,
        snapshot_times=args.snapshots,
        solver=solver,
        diagnostics=diag,
    )
    suffix = FORMAT_SUFFIX[args.format]
    _write_ds(ds, out / f"terms{suffix}", args.format, manifest)
    # field dumps are for visualization and always use the binary grid layout
    bin_suffix = FORMAT_SUFFIX["binary-grid"]
    _write_ds(angiogenesis.fields_dataset(traj[-1]), out / f"fields_final{bin_suffix}", "binary-grid", manifest)
    for snap in traj[1:-1]:
        _write_ds(
            angiogenesis.state_dataset(snap), out / f"terms_t{snap.t:.4f}{suffix}", args.format, manifest
        )
        _write_ds(
            angiogenesis.fields_dataset(snap), out / f"fields_t{snap.t:.4f}{bin_suffix}", "binary-grid", manifest
        )
    m0 = traj[0].mass
    info = {
        "t_end": traj[-1].t,
        "steps": diag.steps,
        "rejected": diag.rejected,
        "clamped_cells": diag.clamps,
        "min_dt": None if not math.isfinite(diag.min_dt) else diag.min_dt,
        "max_c_increase": diag.max_c_increase,
        "mass_initial": m0,
        "mass_final": traj[-1].mass,
        "mass_relative_drift": abs(traj[-1].mass / m0 - 1.0) if m0 else 0.0,
    }
    _write_json(out / "solver.json", info, manifest)
    manifest.extra["solver"] = info
    print(f"sim-angio: {diag.steps} steps, mass drift {info['mass_relative_drift']:.2e} -> {out}")


def _grid_from_args(args) -> framework.SweepGrid:
    selector = "sparse-pca" if args.selector == "spca" else "chs"
    alphas = args.alpha if selector == "sparse-pca" else ()
    return framework.SweepGrid(
        clusterer_kind=args.clusterer,
        k_values=args.k,
        alpha_values=alphas,
        selector_kind=selector,
        seed=args.seed,
        degenerate_policy=args.degenerate,
        n_init=args.n_init,
        covariance=args.covariance,
        representative=args.representative,
        spca_normalize=args.spca_normalize,
        n_components=args.n_components,
        standardize=not args.no_standardize,
        cluster_features=args.cluster_features,
    )


def cmd_fit(args, manifest):
    ds = load_dataset(args.data)
    manifest.add_input(args.data)
    out = _out_dir(args)
    grid = _grid_from_args(args)
    result = framework.run_sweep(ds, grid, threads=_threads(args.threads))
    manifest.seeds["per_k"] = {str(k): grid.clusterer_config(k).seed for k in grid.k_values}
    _write_text(out / "grid.csv", framework.grid_csv(result), manifest)
    summary = framework.summary_dict(result, ds)
    _write_json(out / "summary.json", summary, manifest)
    _write_text(
        out / "labels.csv", framework.labels_csv(ds, result.labels, result.hypotheses, result.report), manifest
    )
    k, alpha, _ = result.best_point
    tag = "" if math.isnan(alpha) else f", alpha={alpha:.4g}"
    print(
        f"fit: best k={k}{tag} score={result.best_global_score:.6f} "
        f"(full set {result.full_set_score:.6f}{', fell back' if result.fell_back_to_full_set else ''}), "
        f"{len(result.regimes())} regime(s) -> {out}"
    )


def _masks_csv(masks, names) -> str:
    lines = [",".join(names)]
    lines += [",".join(str(int(v)) for v in row) for row in masks]
    return "\n".join(lines) + "\n"


def read_masks(path, d: int, names) -> np.ndarray:
    """0/1 mask rows (comma or whitespace separated); an optional header of term names."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = line.replace(",", " ").split()
            if not rows and all(c in names for c in cells):
                if tuple(cells) != tuple(names):
                    raise DataFormatError(f"{path}: mask header {cells} does not match the dataset terms")
                continue
            if len(cells) != d:
                raise DataFormatError(f"{path}:{lineno}: expected {d} mask entries, got {len(cells)}")
            if any(c not in ("0", "1") for c in cells):
                raise DataFormatError(f"{path}:{lineno}: mask entries must be 0 or 1")
            rows.append([c == "1" for c in cells])
    if not rows:
        raise DataFormatError(f"{path}: no mask rows")
    return np.array(rows, dtype=bool)


def _balance_mask(spec: str, names) -> np.ndarray:
    if spec in munk.BALANCES:
        members = munk.BALANCES[spec]
    else:
        members = tuple(p.strip() for p in spec.split("+"))
    unknown = [m for m in members if m not in names]
    if unknown:
        raise ConfigError(f"balance {spec!r} names unknown terms {unknown}; dataset has {list(names)}")
    return np.array([n in members for n in names])


def cmd_score(args, manifest):
    ds = load_dataset(args.data)
    manifest.add_input(args.data)
    out = _out_dir(args)
    info = {}
    if args.masks is not None:
        manifest.add_input(args.masks)
        H = read_masks(args.masks, ds.d, ds.term_names)
        if H.shape[0] == 1:
            H = np.broadcast_to(H, ds.terms.shape)
        elif H.shape[0] != ds.n:
            raise ValidationError(f"masks file has {H.shape[0]} rows; expected 1 or {ds.n}")
        try:
            check_mask_array(H)
        except InvalidSelection as exc:
            raise ValidationError(str(exc)) from None
        labels = np.full(ds.n, -1, dtype=np.int64)
        report = global_score(ds, H, args.degenerate)
    elif args.labels is not None:
        manifest.add_input(args.labels)
        labels = _read_labels(args.labels, ds.n)
        selector = SelectorConfig(
            kind="sparse-pca" if args.selector == "spca" else "chs",
            alpha=args.alpha_value,
            normalize=args.spca_normalize,
        )
        H, report, hyps = framework.evaluate_labeling(ds, labels, selector, args.degenerate)
        info["clusters"] = [
            {"id": h.cluster_id, "mask": [int(v) for v in h.hypothesis], "cluster_score": h.cluster_score}
            for h in hyps
        ]
    else:
        mask = _balance_mask(args.balance, ds.term_names)
        H = np.broadcast_to(mask, ds.terms.shape)
        try:
            check_mask_array(H)
        except InvalidSelection as exc:
            raise ValidationError(str(exc)) from None
        labels = np.full(ds.n, -1, dtype=np.int64)
        report = global_score(ds, H, args.degenerate)
    full = full_set_score(ds, args.degenerate)
    fell_back = not report.global_score > full
    info.update(
        {
            "global_score": report.global_score,
            "full_set_score": full,
            "fell_back": bool(fell_back),
            "reported_score": full if fell_back else report.global_score,
            "term_names": list(ds.term_names),
            "degenerate_policy": args.degenerate,
        }
    )
    _write_json(out / "report.json", info, manifest)
    _write_text(out / "scores.csv", framework.labels_csv(ds, labels, H, report), manifest)
    print(f"score: global={report.global_score:.6f} full set={full:.6f} -> {out}")


def _read_labels(path, n: int) -> np.ndarray:
    """Integer labels, one per row; a CSV with a ``label`` column (e.g. a fit labels.csv) also works."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    col = 0
    if lines and not lines[0].split(",")[0].lstrip("-").isdigit():
        head = lines[0].split(",")
        if "label" not in head:
            raise DataFormatError(f"{path}: no 'label' column")
        col = head.index("label")
        lines = lines[1:]
    try:
        labels = np.array([int(ln.split(",")[col]) for ln in lines], dtype=np.int64)
    except (ValueError, IndexError):
        raise DataFormatError(f"{path}: labels must be integers") from None
    if labels.size != n:
        raise ValidationError(f"{path}: {labels.size} labels for {n} observations")
    return labels


def cmd_bench(args, manifest):
    out = _out_dir(args)
    grid = _grid_from_args(args)

    def make(size, d):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            return synthetic.gen_synthetic(synthetic.SyntheticConfig(d=d, nx=size, ny=size), seed=args.seed)

    rows = framework.benchmark(make, args.sizes, args.dims, grid, repeats=args.repeats)
    _write_text(out / "timing.csv", framework.timing_csv(rows), manifest)
    fits = {}
    n_rows = [r for r in rows if r["axis"] == "N"]
    if len(n_rows) > 1:
        fits["n_loglog_slope"] = framework.loglog_slope([r["N"] for r in n_rows], [r["seconds"] for r in n_rows])
    d_rows = [r for r in rows if r["axis"] == "D"]
    if len(d_rows) > 1:
        fits["d_ratio_last_over_first"] = d_rows[-1]["seconds"] / d_rows[0]["seconds"]
    _write_json(out / "trends.json", fits, manifest)
    manifest.extra["trends"] = fits
    print(f"bench: {len(rows)} rows {fits} -> {out}")


# --------------------------------------------------------------------------
# parser


def _common(p):
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1, help="worker threads (0 = all cores)")


def _format_flag(p):
    p.add_argument("--format", choices=sorted(FORMAT_SUFFIX), default="delimited-text")


def _sweep_flags(p, k_default="2:10"):
    p.add_argument("--clusterer", choices=["kmeans", "gmm"], default="kmeans")
    p.add_argument("--selector", choices=["chs", "spca"], default="chs")
    p.add_argument("--k", type=parse_int_range, default=parse_int_range(k_default), help="lo:hi[:step]")
    p.add_argument(
        "--alpha", type=parse_log_range, default=parse_log_range("1e-2:1e2:40"), help="lo:hi[:count], log-spaced"
    )
    p.add_argument("--degenerate", choices=["penalize", "exclude"], default="penalize")
    p.add_argument("--n-init", type=int, default=10)
    p.add_argument("--covariance", choices=["full", "diagonal"], default="full")
    p.add_argument("--representative", choices=["mean-score", "mean-abs-vector"], default="mean-score")
    p.add_argument("--n-components", type=int, default=1)
    p.add_argument("--spca-normalize", action="store_true", help="scale columns to unit variance before sparse PCA")
    p.add_argument("--no-standardize", action="store_true", help="cluster on unstandardized features")
    p.add_argument(
        "--cluster-features",
        choices=list(framework.FEATURE_KINDS),
        default="log-magnitude",
        help="feature space handed to the clusterer",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynregime", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a benchmark dataset")
    gsub = gen.add_subparsers(dest="kind", required=True)
    gs = gsub.add_parser("synthetic", help="two-regime synthetic field")
    _common(gs)
    _format_flag(gs)
    gs.add_argument("--d", type=int, default=8)
    gs.add_argument("--nx", type=int, default=128)
    gs.add_argument("--ny", type=int, default=128)
    gm = gsub.add_parser("munk", help="Munk western-boundary terms and score curves")
    _common(gm)
    _format_flag(gm)
    gm.add_argument("--epsilon", type=float, default=0.01)
    gm.add_argument("--y-slice", type=float, default=0.5)
    gm.add_argument("--nx", type=int, default=1000)
    gm.add_argument("--ny", type=int, default=100)
    for p in (gs, gm):
        p.set_defaults(func=cmd_gen)

    sim = sub.add_parser("sim-angio", help="simulate the angiogenesis model and emit its terms")
    _common(sim)
    _format_flag(sim)
    sim.add_argument("--t-end", type=float, default=0.91)
    sim.add_argument("--noise", type=float, default=0.01)
    sim.add_argument("--resolution", type=int, default=256)
    sim.add_argument("--snapshots", type=parse_float_list, default=(), help="comma-separated times")
    sim.add_argument("--tol", type=float, default=1e-6, help="step-doubling error tolerance")
    sim.add_argument("--advection", choices=["limited", "central"], default="limited")
    sim.set_defaults(func=cmd_sim_angio)

    fit = sub.add_parser("fit", help="sweep clusterer x selector settings")
    _common(fit)
    fit.add_argument("--data", required=True, type=Path)
    _sweep_flags(fit)
    fit.set_defaults(func=cmd_fit)

    sc = sub.add_parser("score", help="score user-supplied hypotheses")
    _common(sc)
    sc.add_argument("--data", required=True, type=Path)
    src = sc.add_mutually_exclusive_group(required=True)
    src.add_argument("--masks", type=Path, help="0/1 rows: one per observation, or a single row for all")
    src.add_argument("--labels", type=Path, help="cluster labels; a hypothesis is selected per cluster")
    src.add_argument("--balance", help="named balance or term names joined by '+'")
    sc.add_argument("--degenerate", choices=["penalize", "exclude"], default="penalize")
    sc.add_argument("--selector", choices=["chs", "spca"], default="chs")
    sc.add_argument("--alpha-value", type=float, default=1.0)
    sc.add_argument("--spca-normalize", action="store_true")
    sc.set_defaults(func=cmd_score)

    bench = sub.add_parser("bench", help="time single framework passes on the synthetic family")
    _common(bench)
    _sweep_flags(bench, k_default="2")
    bench.add_argument("--family", choices=["synthetic"], default="synthetic")
    bench.add_argument("--sizes", type=parse_int_range, default=(32, 64, 128), help="grid sides (N = side^2)")
    bench.add_argument("--dims", type=parse_int_range, default=(8,), help="term counts")
    bench.add_argument("--repeats", type=int, default=3)
    bench.set_defaults(func=cmd_bench)
    return parser


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"dynregime: warning: {message}", file=sys.stderr)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    warnings.showwarning = _show_warning
    manifest = RunManifest(["dynregime"] + argv, args)
    try:
        args.func(args, manifest)
    except RegimeError as exc:
        print(f"dynregime: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"dynregime: error: {exc}", file=sys.stderr)
        return 2
    manifest.write(_out_dir(args))
    return 0


if __name__ == "__main__":
    sys.exit(main())
