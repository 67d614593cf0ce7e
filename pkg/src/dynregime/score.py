"""Local and global magnitude scores.

The scalar functions here are the reference path: plain ``math`` on Python
floats. :mod:`dynregime.kernels` evaluates the same arithmetic over many rows
and masks at once and is tested against these functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .term_store import TermDataset


class DegenerateObservation(ValueError):
    """Every term of the observation is exactly zero."""


class InvalidSelection(ValueError):
    """A zero-valued term was selected as dominant."""


@dataclass(frozen=True)
class LocalScoreBreakdown:
    gamma: float
    omega: float
    m: float
    normalized_min_selected: float = math.nan
    normalized_max_remainder: float = math.nan


@dataclass(frozen=True)
class ScoreReport:
    gamma: np.ndarray
    omega: np.ndarray
    m: np.ndarray
    global_score: float
    full_set_score: float

    @property
    def local(self) -> list[LocalScoreBreakdown]:
        return [
            LocalScoreBreakdown(float(g), float(o), float(v))
            for g, o, v in zip(self.gamma, self.omega, self.m)
        ]


def as_mask(h, d: int | None = None) -> np.ndarray:
    mask = np.asarray(h).astype(bool).reshape(-1)
    if d is not None and mask.size != d:
        raise ValidationError(f"mask has {mask.size} entries, expected {d}")
    return mask


def check_mask(mask: np.ndarray, where: str = "") -> None:
    """Hypotheses need at least two selected terms (the full set is always fine)."""
    if mask.all():
        return
    if mask.sum() < 2:
        loc = f" ({where})" if where else ""
        raise ValidationError(
            f"hypothesis selects {int(mask.sum())} term(s){loc}; a balance needs at least 2"
        )


def check_mask_array(masks: np.ndarray) -> None:
    masks = np.asarray(masks, dtype=bool)
    bad = (~masks.all(axis=1)) & (masks.sum(axis=1) < 2)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise ValidationError(
            f"hypothesis in row {row} selects {int(masks[row].sum())} term(s); a balance needs at least 2"
        )


def normalization_scale(abs_e) -> float:
    """Smallest magnitude, or the smallest non-zero one if some term vanishes."""
    positive = [a for a in abs_e if a > 0.0]
    if not positive:
        raise DegenerateObservation("all terms are zero")
    return min(positive)


def normalize_split(e, h) -> tuple[list[float], list[float]]:
    e = [float(v) for v in np.asarray(e, dtype=np.float64).reshape(-1)]
    mask = as_mask(h, len(e))
    if len(e) < 2:
        raise ValidationError("need at least 2 terms")
    check_mask(mask)
    abs_e = [abs(v) for v in e]
    scale = normalization_scale(abs_e)
    s = [a / scale for a, sel in zip(abs_e, mask) if sel]
    r = [a / scale for a, sel in zip(abs_e, mask) if not sel]
    return s, r


def gamma(s, r) -> float:
    s = list(s)
    r = list(r)
    if not s:
        raise ValidationError("selected set is empty")
    if not r:
        return 1.0
    lo = min(s)
    hi = max(r)
    if lo <= hi:
        return 0.0
    if hi == 0.0:
        # remainder vanishes identically: the limit of an infinite gap
        return 1.0
    # hi >= 1 after normalization, so lo + hi > 2
    denom = math.log10(lo + hi)
    assert denom > 0.0, "magnitude-gap denominator must be positive"
    g = math.log10(lo - hi) / denom
    return g if g > 0.0 else 0.0


def omega(s) -> float:
    s = list(s)
    if not s:
        raise ValidationError("selected set is empty")
    lo = min(s)
    if lo <= 0.0:
        raise InvalidSelection("a zero-valued term cannot be dominant")
    return math.log10(max(s)) - math.log10(lo)


def local_score(e, h) -> LocalScoreBreakdown:
    try:
        s, r = normalize_split(e, h)
    except DegenerateObservation:
        return LocalScoreBreakdown(0.0, 0.0, 0.0)
    lo = min(s)
    hi = max(r) if r else math.nan
    try:
        om = omega(s)
    except InvalidSelection:
        return LocalScoreBreakdown(0.0, 0.0, 0.0, lo, hi)
    g = gamma(s, r)
    return LocalScoreBreakdown(g, om, g / (1.0 + om), lo, hi)


def weighted_mean(values, weights) -> float:
    """Correctly rounded weighted mean; independent of summation order."""
    values = np.asarray(values, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    total = math.fsum(weights.tolist())
    if not total > 0:
        raise ValidationError("weights must have a positive sum")
    return math.fsum((weights * values).tolist()) / total


def score_weights(ds: TermDataset, degenerate: str = "penalize") -> np.ndarray:
    """Weights entering the global score under a degenerate-row policy."""
    if degenerate == "penalize":
        return ds.weights
    if degenerate == "exclude":
        w = np.where(ds.degenerate_mask, 0.0, ds.weights)
        if not w.sum() > 0:
            raise ValidationError("every weighted observation is degenerate")
        return w
    raise ValidationError(f"unknown degenerate policy {degenerate!r}")


def global_score(ds: TermDataset, H, degenerate: str = "penalize") -> ScoreReport:
    from . import kernels

    masks = np.asarray(H, dtype=bool)
    if masks.shape != ds.terms.shape:
        raise ValidationError(
            f"hypothesis array shape {masks.shape} does not match data {ds.terms.shape}"
        )
    check_mask_array(masks)
    w = score_weights(ds, degenerate)
    g, o, m = kernels.row_scores(ds.terms, masks)
    full = np.ones_like(masks)
    _, _, m_full = kernels.row_scores(ds.terms, full)
    return ScoreReport(
        gamma=g,
        omega=o,
        m=m,
        global_score=weighted_mean(m, w),
        full_set_score=weighted_mean(m_full, w),
    )


def full_set_score(ds: TermDataset, degenerate: str = "penalize") -> float:
    from . import kernels

    _, _, m = kernels.row_scores(ds.terms, np.ones(ds.terms.shape, dtype=bool))
    return weighted_mean(m, score_weights(ds, degenerate))
