"""Equation-term data model, file formats, area weights and standardization."""

from __future__ import annotations

import csv
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError, ValidationError

RESERVED_WEIGHT = "weight"
RESERVED_COORDS = ("x", "y", "t")
BINARY_MAGIC = b"RGSC"
BINARY_VERSION = 1
_HEADER_PREFIX = "#fields:"


@dataclass(frozen=True)
class TermDataset:
    """N observations of D equation terms.

    ``terms`` rows are observations. ``weights`` are the domain differentials
    used by the global score, ``coords`` are only carried along for reporting.
    """

    terms: np.ndarray
    weights: np.ndarray
    term_names: tuple[str, ...]
    coords: np.ndarray | None = None
    coord_names: tuple[str, ...] = ()
    degenerate_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        terms = np.array(self.terms, dtype=np.float64, copy=True)
        if terms.ndim != 2:
            raise ValidationError(f"terms must be 2-D, got shape {terms.shape}")
        n, d = terms.shape
        if n < 1:
            raise ValidationError("dataset has no observations")
        if d < 2:
            raise ValidationError(f"need at least 2 equation terms, got D={d}")
        if not np.all(np.isfinite(terms)):
            bad = int(np.argwhere(~np.isfinite(terms))[0, 0])
            raise ValidationError(f"non-finite term value in row {bad}")

        weights = np.array(self.weights, dtype=np.float64, copy=True).reshape(-1)
        if weights.shape != (n,):
            raise ValidationError(f"expected {n} weights, got {weights.shape[0]}")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValidationError("weights must be finite and non-negative")
        if not weights.sum() > 0:
            raise ValidationError("weights must have a positive sum")

        names = tuple(str(s) for s in self.term_names)
        if len(names) != d:
            raise ValidationError(f"expected {d} term names, got {len(names)}")

        coords = self.coords
        coord_names = tuple(self.coord_names)
        if coords is not None:
            coords = np.array(coords, dtype=np.float64, copy=True)
            if coords.ndim == 1:
                coords = coords[:, None]
            if coords.shape[0] != n:
                raise ValidationError("coords must have one row per observation")
            if not np.all(np.isfinite(coords)):
                raise ValidationError("non-finite coordinate value")
            if not coord_names:
                coord_names = _default_coord_names(coords.shape[1])
            if len(coord_names) != coords.shape[1]:
                raise ValidationError("coord_names does not match coords width")
            coords.setflags(write=False)
        else:
            coord_names = ()

        terms.setflags(write=False)
        weights.setflags(write=False)
        degenerate = np.max(np.abs(terms), axis=1) == 0.0
        degenerate.setflags(write=False)

        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "term_names", names)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "coord_names", coord_names)
        object.__setattr__(self, "degenerate_mask", degenerate)

    @classmethod
    def from_terms(cls, terms, weights=None, term_names=None, coords=None, coord_names=()):
        terms = np.asarray(terms, dtype=np.float64)
        if terms.ndim != 2:
            raise ValidationError(f"terms must be 2-D, got shape {terms.shape}")
        if weights is None:
            weights = np.ones(terms.shape[0])
        if term_names is None:
            term_names = default_term_names(terms.shape[1])
        return cls(terms, weights, tuple(term_names), coords, tuple(coord_names))

    @property
    def n(self) -> int:
        return self.terms.shape[0]

    @property
    def d(self) -> int:
        return self.terms.shape[1]

    def subset(self, index) -> "TermDataset":
        coords = None if self.coords is None else self.coords[index]
        return TermDataset(
            self.terms[index], self.weights[index], self.term_names, coords, self.coord_names
        )


@dataclass(frozen=True)
class StandardizedView:
    z: np.ndarray
    means: np.ndarray
    stds: np.ndarray


def default_term_names(d: int) -> tuple[str, ...]:
    return tuple(f"e{i}" for i in range(d))


def _default_coord_names(c: int) -> tuple[str, ...]:
    if c <= len(RESERVED_COORDS):
        return RESERVED_COORDS[:c]
    return tuple(f"c{i}" for i in range(c))


def standardize(ds: TermDataset | np.ndarray) -> StandardizedView:
    """Per-column z-score with the population (divide-by-N) convention.

    Constant columns come back as zeros instead of raising.
    """
    x = ds.terms if isinstance(ds, TermDataset) else np.asarray(ds, dtype=np.float64)
    if x.shape[0] < 2:
        raise ValidationError("standardization needs at least 2 observations")
    means = x.mean(axis=0)
    centered = x - means
    stds = np.sqrt(np.mean(centered**2, axis=0))
    constant = np.ptp(x, axis=0) == 0.0
    stds = np.where(constant, 1.0, stds)
    z = centered / stds
    z[:, constant] = 0.0
    return StandardizedView(z=z, means=means, stds=stds)


def _axis_cell_widths(values: np.ndarray) -> np.ndarray:
    # Cell edges sit midway between samples; the outer edges are pushed out by
    # half of the adjacent spacing, so a cell-centred uniform grid tiles its domain.
    edges = np.empty(values.size + 1)
    edges[1:-1] = 0.5 * (values[1:] + values[:-1])
    edges[0] = values[0] - 0.5 * (values[1] - values[0])
    edges[-1] = values[-1] + 0.5 * (values[-1] - values[-2])
    return np.diff(edges)


def compute_area_weights(coords) -> np.ndarray:
    """Cell area of every sample on a tensor-product rectilinear 2-D grid."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValidationError("area weights need N x 2 coordinates")
    xs, ix = np.unique(coords[:, 0], return_inverse=True)
    ys, iy = np.unique(coords[:, 1], return_inverse=True)
    if xs.size < 2 or ys.size < 2:
        raise ValidationError("unsupported geometry: coordinates do not span a 2-D grid")
    if xs.size * ys.size != coords.shape[0]:
        raise ValidationError("unsupported geometry: coordinates are not a rectilinear grid")
    seen = np.zeros((xs.size, ys.size), dtype=bool)
    seen[ix.ravel(), iy.ravel()] = True
    if not seen.all():
        raise ValidationError("unsupported geometry: coordinates are not a rectilinear grid")
    wx = _axis_cell_widths(xs)
    wy = _axis_cell_widths(ys)
    return wx[ix.ravel()] * wy[iy.ravel()]


# --------------------------------------------------------------------------
# file formats


def detect_format(path) -> str:
    with open(path, "rb") as fh:
        head = fh.read(4)
    return "binary-grid" if head == BINARY_MAGIC else "delimited-text"


def load_dataset(path, format: str | None = None) -> TermDataset:
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"no such file: {path}")
    fmt = format or detect_format(path)
    if fmt == "delimited-text":
        return _load_text(path)
    if fmt == "binary-grid":
        return _load_binary(path)
    raise DataFormatError(f"unknown dataset format {fmt!r}")


def write_dataset(ds: TermDataset, path, format: str = "delimited-text") -> None:
    if format == "delimited-text":
        _atomic_write(path, _text_payload(ds).encode("utf-8"))
    elif format == "binary-grid":
        _atomic_write(path, _binary_payload(ds))
    else:
        raise DataFormatError(f"unknown dataset format {format!r}")


def _load_text(path: Path) -> TermDataset:
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    header = None
    body_start = 0
    if lines and lines[0].startswith(_HEADER_PREFIX):
        header = [c.strip() for c in lines[0][len(_HEADER_PREFIX):].split(",")]
        body_start = 1
    rows = []
    width = None
    for lineno, row in enumerate(csv.reader(lines[body_start:]), start=body_start):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if row[0].lstrip().startswith("#"):
            continue
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataFormatError(
                f"row {lineno}: expected {width} columns, found {len(row)}"
            )
        try:
            vals = [float(c) for c in row]
        except ValueError as exc:
            raise DataFormatError(f"row {lineno}: non-numeric cell ({exc})") from None
        rows.append(vals)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    table = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(table)):
        bad = int(np.argwhere(~np.isfinite(table))[0, 0]) + body_start
        raise ValidationError(f"row {bad}: NaN or Inf value")

    if header is None:
        header = list(default_term_names(table.shape[1]))
    if len(header) != table.shape[1]:
        raise DataFormatError(
            f"header names {len(header)} columns but rows have {table.shape[1]}"
        )
    if len(set(header)) != len(header):
        raise DataFormatError("duplicate column names in header")

    term_cols = [i for i, h in enumerate(header) if h != RESERVED_WEIGHT and h not in RESERVED_COORDS]
    coord_cols = [i for i, h in enumerate(header) if h in RESERVED_COORDS]
    if len(term_cols) < 2:
        raise ValidationError(f"need at least 2 term columns, found {len(term_cols)}")
    weights = (
        table[:, header.index(RESERVED_WEIGHT)] if RESERVED_WEIGHT in header else np.ones(len(table))
    )
    coords = table[:, coord_cols] if coord_cols else None
    return TermDataset(
        table[:, term_cols],
        weights,
        tuple(header[i] for i in term_cols),
        coords,
        tuple(header[i] for i in coord_cols),
    )


def _text_payload(ds: TermDataset) -> str:
    names = list(ds.term_names) + [RESERVED_WEIGHT] + list(ds.coord_names)
    cols = [ds.terms, ds.weights[:, None]]
    if ds.coords is not None:
        cols.append(ds.coords)
    table = np.hstack(cols)
    out = [_HEADER_PREFIX + ",".join(names)]
    # repr() is the shortest string that round-trips the double exactly
    out.extend(",".join(repr(float(v)) for v in row) for row in table)
    return "\n".join(out) + "\n"


def _binary_payload(ds: TermDataset) -> bytes:
    c = 0 if ds.coords is None else ds.coords.shape[1]
    head = BINARY_MAGIC + struct.pack("<IIII", BINARY_VERSION, ds.n, ds.d, c)
    parts = [head, ds.terms.astype("<f8").tobytes(), ds.weights.astype("<f8").tobytes()]
    if c:
        parts.append(ds.coords.astype("<f8").tobytes())
    return b"".join(parts)


def _load_binary(path: Path) -> TermDataset:
    raw = path.read_bytes()
    if raw[:4] != BINARY_MAGIC:
        raise DataFormatError(f"{path}: bad magic bytes")
    if len(raw) < 20:
        raise DataFormatError(f"{path}: truncated header")
    version, n, d, c = struct.unpack("<IIII", raw[4:20])
    if version != BINARY_VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    expected = 20 + 8 * (n * d + n + n * c)
    if len(raw) != expected:
        raise DataFormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    if d < 2:
        raise ValidationError(f"need at least 2 term columns, found {d}")
    body = np.frombuffer(raw, dtype="<f8", offset=20).astype(np.float64)
    terms = body[: n * d].reshape(n, d)
    weights = body[n * d : n * d + n]
    coords = body[n * d + n :].reshape(n, c) if c else None
    return TermDataset(terms, weights, default_term_names(d), coords)


def _atomic_write(path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text_atomic(path, text: str) -> None:
    _atomic_write(path, text.encode("utf-8"))
