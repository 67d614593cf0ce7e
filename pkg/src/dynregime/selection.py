"""Per-cluster dominant-balance hypotheses.

Two selectors: exhaustive combinatorial search over masks (CHS) and a sparse
principal-component selector. Both return masks with at least two active
terms; the all-true mask is always legal.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import ConfigError, ValidationError
from .score import check_mask, weighted_mean
from .term_store import TermDataset

CHS_MAX_D = 16
# kernel objectives within this distance of the best are re-scored exactly
_RESCORE_WINDOW = 1e-9


@dataclass(frozen=True)
class SelectorConfig:
    kind: str = "chs"
    alpha: float = 1.0
    n_components: int = 1
    representative: str = "mean-score"
    normalize: bool = False
    max_d: int = CHS_MAX_D
    max_iter: int = 500
    tol: float = 1e-6

    def __post_init__(self):
        if self.kind not in ("chs", "sparse-pca"):
            raise ConfigError(f"unknown selector kind {self.kind!r}")
        if self.kind == "sparse-pca" and not self.alpha > 0:
            raise ConfigError("sparse-pca needs alpha > 0")
        if self.n_components < 1:
            raise ConfigError("n_components must be positive")
        if self.representative not in ("mean-score", "mean-abs-vector"):
            raise ConfigError(f"unknown CHS objective {self.representative!r}")


@dataclass(frozen=True)
class ClusterHypothesis:
    cluster_id: int
    hypothesis: np.ndarray
    cluster_score: float
    converged: bool = True

    def __post_init__(self):
        mask = np.asarray(self.hypothesis, dtype=bool)
        check_mask(mask, f"cluster {self.cluster_id}")
        mask.setflags(write=False)
        object.__setattr__(self, "hypothesis", mask)


@lru_cache(maxsize=32)
def legal_masks(d: int) -> np.ndarray:
    """Every mask with at least two selected terms, as an (M, d) bool array.

    Bit i of the enumeration index maps to term i.
    """
    codes = np.arange(1 << d, dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(d)) & 1).astype(bool)
    masks = bits[bits.sum(axis=1) >= 2]
    masks.setflags(write=False)
    return masks


def _tie_key(mask: np.ndarray):
    # larger cardinality first, then the lexicographically smallest 0/1 tuple
    return (-int(mask.sum()), tuple(int(v) for v in mask))


def _exact_objective(terms, weights, mask, representative):
    if representative == "mean-abs-vector":
        rep = _representative_vector(terms, weights)
        _, _, m = kernels.row_scores(rep[None, :], mask[None, :])
        return float(m[0])
    masks = np.broadcast_to(mask, terms.shape)
    _, _, m = kernels.row_scores(terms, masks)
    return weighted_mean(m, weights)


def _representative_vector(terms, weights):
    w = np.asarray(weights, dtype=np.float64)
    return (w @ np.abs(terms)) / w.sum()


def _members(ds: TermDataset, member_indices, weights):
    idx = np.asarray(member_indices, dtype=np.int64).reshape(-1)
    if idx.size == 0:
        raise ValidationError("cluster has no members")
    terms = ds.terms[idx]
    w = ds.weights[idx] if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (idx.size,):
        raise ValidationError("weights must match member_indices")
    if not w.sum() > 0:
        # an all-zero-weight cluster still needs a well-defined mean
        w = np.ones(idx.size)
    return terms, w


def chs_select(
    ds: TermDataset,
    member_indices,
    weights=None,
    config: SelectorConfig | None = None,
    cluster_id: int = 0,
) -> ClusterHypothesis:
    """Exhaustive search for the best-scoring mask of one cluster."""
    config = config or SelectorConfig()
    if ds.d > config.max_d:
        raise ConfigError(
            f"CHS over D={ds.d} terms means {2**ds.d} masks (ceiling D={config.max_d}); "
            "use the sparse-pca selector instead"
        )
    terms, w = _members(ds, member_indices, weights)
    masks = legal_masks(ds.d)
    if config.representative == "mean-abs-vector":
        rep = _representative_vector(terms, w)
        obj = kernels.mask_objectives(rep[None, :], np.ones(1), masks)
    else:
        obj = kernels.mask_objectives(terms, w, masks) / w.sum()

    best = obj.max()
    cand = np.flatnonzero(obj >= best - _RESCORE_WINDOW)
    scored = [
        (_exact_objective(terms, w, masks[j], config.representative), masks[j]) for j in cand
    ]
    top = max(s for s, _ in scored)
    winner = min((m for s, m in scored if s == top), key=_tie_key)
    if config.representative != "mean-score":
        top = _exact_objective(terms, w, winner, "mean-score")
    return ClusterHypothesis(cluster_id, winner.copy(), top)


# --------------------------------------------------------------------------
# sparse PCA


def _soft(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def sparse_loadings(x: np.ndarray, alpha: float, n_components: int = 1, max_iter: int = 500, tol: float = 1e-6):
    """Rank-one L1-penalised loadings by alternating least squares with deflation.

    Each component solves ``min ||X - u v^T||_F^2 / 2 + alpha ||v||_1`` with
    ``||u|| = 1``: ``v = soft(X^T u, alpha)`` and ``u = X v / ||X v||``.
    Returns the (n_components, D) loadings and whether every component converged.
    """
    x = np.array(x, dtype=np.float64, copy=True)
    loadings = np.zeros((n_components, x.shape[1]))
    converged = True
    for c in range(n_components):
        # start from the leading right singular vector's image
        _, sv, vt = np.linalg.svd(x, full_matrices=False)
        if sv.size == 0 or sv[0] == 0.0:
            break
        u = x @ vt[0]
        u /= np.linalg.norm(u)
        v = _soft(x.T @ u, alpha)
        ok = False
        for _ in range(max_iter):
            xv = x @ v
            norm = np.linalg.norm(xv)
            if norm == 0.0:
                ok = True
                break
            u = xv / norm
            v_new = _soft(x.T @ u, alpha)
            change = np.max(np.abs(v_new - v))
            v = v_new
            if change < tol:
                ok = True
                break
        converged &= ok
        loadings[c] = v
        if not np.any(v):
            break
        x = x - np.outer(u, v)
    return loadings, converged


def sparse_pca_select(
    ds: TermDataset,
    member_indices,
    config: SelectorConfig,
    weights=None,
    cluster_id: int = 0,
) -> ClusterHypothesis:
    terms, w = _members(ds, member_indices, weights)
    n, d = terms.shape
    if n < d + 1:
        if d <= config.max_d:
            return chs_select(ds, member_indices, weights, config, cluster_id)
        mask = _top_variance_mask(terms)
        return ClusterHypothesis(cluster_id, mask, _exact_objective(terms, w, mask, "mean-score"))

    x = terms - terms.mean(axis=0)
    if config.normalize:
        std = x.std(axis=0)
        x = x / np.where(std > 0, std, 1.0)
    loadings, converged = sparse_loadings(x, config.alpha, config.n_components, config.max_iter, config.tol)
    if not converged:
        warnings.warn(
            f"sparse PCA did not converge for cluster {cluster_id} (alpha={config.alpha})",
            RuntimeWarning,
            stacklevel=2,
        )
    mask = np.any(loadings != 0.0, axis=0)
    if mask.sum() < 2:
        mask = _top_variance_mask(terms)
    return ClusterHypothesis(
        cluster_id, mask, _exact_objective(terms, w, mask, "mean-score"), converged
    )


def _top_variance_mask(terms):
    var = terms.var(axis=0)
    order = np.argsort(-var, kind="stable")
    mask = np.zeros(terms.shape[1], dtype=bool)
    mask[order[:2]] = True
    return mask


def select(ds: TermDataset, member_indices, config: SelectorConfig, weights=None, cluster_id: int = 0):
    if config.kind == "chs":
        return chs_select(ds, member_indices, weights, config, cluster_id)
    return sparse_pca_select(ds, member_indices, config, weights, cluster_id)


def broadcast(cluster_hyps, labels, d: int | None = None) -> np.ndarray:
    """Per-observation mask array; unlabeled (negative) samples get all-true."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    by_id = {int(h.cluster_id): h.hypothesis for h in cluster_hyps}
    if d is None:
        if not by_id:
            raise ValidationError("cannot infer D without any cluster hypothesis")
        d = next(iter(by_id.values())).size
    out = np.ones((labels.size, d), dtype=bool)
    for lab in np.unique(labels):
        if lab < 0:
            continue
        if int(lab) not in by_id:
            raise ValidationError(f"label {int(lab)} has no hypothesis")
        out[labels == lab] = by_id[int(lab)]
    return out
