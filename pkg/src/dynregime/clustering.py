"""K-means (Lloyd, k-means++ seeding) and Gaussian-mixture EM clustering.

Both operate on the standardized view of the data and are deterministic for
a given seed. Restarts draw child seeds from ``numpy.random.SeedSequence``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, NumericalError, ValidationError

GMM_REG = 1e-6


@dataclass(frozen=True)
class ClustererConfig:
    kind: str = "kmeans"
    k: int = 2
    seed: int = 0
    n_init: int = 10
    max_iter: int = 300
    tol: float = 1e-6
    covariance: str = "full"

    def __post_init__(self):
        if self.kind not in ("kmeans", "gmm"):
            raise ConfigError(f"unknown clusterer kind {self.kind!r}")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.n_init < 1 or self.max_iter < 1:
            raise ConfigError("n_init and max_iter must be positive")
        if self.covariance not in ("full", "diagonal"):
            raise ConfigError(f"unknown covariance type {self.covariance!r}")


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    objective: float
    converged: bool
    iterations: int
    trace: tuple[float, ...] = field(default=(), repr=False)
    centers: np.ndarray | None = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0


def _restart_seeds(seed: int, n_init: int):
    return np.random.SeedSequence(int(seed) & (2**64 - 1)).spawn(n_init)


def _sq_dist(z, centers, z_sq=None):
    if z_sq is None:
        z_sq = np.einsum("ij,ij->i", z, z)
    c_sq = np.einsum("ij,ij->i", centers, centers)
    d2 = z_sq[:, None] - 2.0 * (z @ centers.T) + c_sq[None, :]
    return np.maximum(d2, 0.0)


def kmeans_plusplus(z: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each new center is drawn with probability ~ D(x)^2."""
    n = z.shape[0]
    centers = np.empty((k, z.shape[1]))
    centers[0] = z[rng.integers(n)]
    closest = _sq_dist(z, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))
        centers[j] = z[idx]
        closest = np.minimum(closest, _sq_dist(z, centers[j : j + 1])[:, 0])
    return centers


def _lloyd(z, centers, max_iter, tol):
    z_sq = np.einsum("ij,ij->i", z, z)
    k = centers.shape[0]
    trace = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        d2 = _sq_dist(z, centers, z_sq)
        labels = d2.argmin(axis=1)
        own = d2[np.arange(z.shape[0]), labels]
        trace.append(float(own.sum()))
        counts = np.bincount(labels, minlength=k)
        new = np.zeros_like(centers)
        np.add.at(new, labels, z)
        for j in np.flatnonzero(counts == 0):
            # re-seed an empty center at the point farthest from its center
            far = int(own.argmax())
            new[j] = z[far]
            counts[j] = 1
            own[far] = 0.0
        nonempty = counts > 0
        new[nonempty] /= counts[nonempty, None]
        shift = float(np.sum((new - centers) ** 2))
        centers = new
        if shift < tol:
            converged = True
            break
    d2 = _sq_dist(z, centers, z_sq)
    labels = d2.argmin(axis=1)
    inertia = float(d2[np.arange(z.shape[0]), labels].sum())
    trace.append(inertia)
    return labels, centers, inertia, converged, it, trace


def _relabel_compact(labels, k):
    # final assignment never leaves an id unused
    used = np.unique(labels)
    if used.size == k:
        return labels, k
    remap = np.full(k, -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    return remap[labels], used.size


def kmeans_fit(z, config: ClustererConfig) -> ClusterAssignment:
    z = np.ascontiguousarray(z, dtype=np.float64)
    n = z.shape[0]
    if n < config.k:
        raise ValidationError(f"k={config.k} exceeds the number of samples N={n}")
    best = None
    for ss in _restart_seeds(config.seed, config.n_init):
        rng = np.random.default_rng(ss)
        centers = kmeans_plusplus(z, config.k, rng)
        result = _lloyd(z, centers, config.max_iter, config.tol)
        if best is None or result[2] < best[2]:
            best = result
    labels, centers, inertia, converged, iters, trace = best
    labels, k_eff = _relabel_compact(labels.astype(np.int64), config.k)
    if k_eff < config.k:
        warnings.warn(f"k-means produced {k_eff} non-empty clusters (asked for {config.k})", RuntimeWarning)
    return ClusterAssignment(labels, inertia, converged, iters, tuple(trace), centers)


# --------------------------------------------------------------------------
# Gaussian mixture


def _log_gauss(z, means, covs, diagonal):
    n, d = z.shape
    k = means.shape[0]
    out = np.empty((n, k))
    for j in range(k):
        diff = z - means[j]
        if diagonal:
            var = covs[j]
            out[:, j] = -0.5 * (
                d * np.log(2 * np.pi) + np.sum(np.log(var)) + np.sum(diff**2 / var, axis=1)
            )
        else:
            try:
                chol = np.linalg.cholesky(covs[j])
            except np.linalg.LinAlgError:
                raise NumericalError(f"covariance of component {j} is singular") from None
            sol = np.linalg.solve(chol, diff.T)
            logdet = 2.0 * np.sum(np.log(np.diag(chol)))
            out[:, j] = -0.5 * (d * np.log(2 * np.pi) + logdet + np.sum(sol**2, axis=0))
    return out


def _m_step(z, resp, diagonal):
    nk = resp.sum(axis=0) + 10 * np.finfo(float).eps
    weights = nk / z.shape[0]
    means = (resp.T @ z) / nk[:, None]
    d = z.shape[1]
    if diagonal:
        covs = np.empty((means.shape[0], d))
        for j in range(means.shape[0]):
            diff = z - means[j]
            covs[j] = (resp[:, j] @ diff**2) / nk[j] + GMM_REG
    else:
        covs = np.empty((means.shape[0], d, d))
        for j in range(means.shape[0]):
            diff = z - means[j]
            covs[j] = (resp[:, j, None] * diff).T @ diff / nk[j]
            covs[j].flat[:: d + 1] += GMM_REG
    return weights, means, covs


def _em(z, means, diagonal, max_iter, tol):
    n, d = z.shape
    k = means.shape[0]
    # hard k-means++ assignment seeds the first M-step
    labels = _sq_dist(z, means).argmin(axis=1)
    resp = np.zeros((n, k))
    resp[np.arange(n), labels] = 1.0
    weights, means, covs = _m_step(z, resp, diagonal)
    trace = []
    converged = False
    it = 0
    prev = -np.inf
    for it in range(1, max_iter + 1):
        log_p = _log_gauss(z, means, covs, diagonal) + np.log(weights)
        log_norm = logsumexp(log_p, axis=1)
        ll = float(log_norm.sum())
        trace.append(ll)
        resp = np.exp(log_p - log_norm[:, None])
        weights, means, covs = _m_step(z, resp, diagonal)
        if abs(ll - prev) < tol * max(1.0, abs(ll)):
            converged = True
            break
        prev = ll
    log_p = _log_gauss(z, means, covs, diagonal) + np.log(weights)
    log_norm = logsumexp(log_p, axis=1)
    ll = float(log_norm.sum())
    trace.append(ll)
    labels = log_p.argmax(axis=1)
    return labels, means, ll, converged, it, trace


def gmm_fit(z, config: ClustererConfig) -> ClusterAssignment:
    z = np.ascontiguousarray(z, dtype=np.float64)
    n, d = z.shape
    if n < config.k:
        raise ValidationError(f"k={config.k} exceeds the number of samples N={n}")
    diagonal = config.covariance == "diagonal"
    if not diagonal and n < config.k * (d + 1):
        warnings.warn("too few samples for full covariances; using diagonal", RuntimeWarning)
        diagonal = True
    best = None
    failures = 0
    for ss in _restart_seeds(config.seed, config.n_init):
        rng = np.random.default_rng(ss)
        try:
            result = _em(z, kmeans_plusplus(z, config.k, rng), diagonal, config.max_iter, config.tol)
        except NumericalError:
            failures += 1
            continue
        if best is None or result[2] > best[2]:
            best = result
    if best is None:
        raise NumericalError(f"every GMM restart hit a singular covariance ({failures} tries)")
    labels, means, ll, converged, iters, trace = best
    labels, k_eff = _relabel_compact(labels.astype(np.int64), config.k)
    if k_eff < config.k:
        warnings.warn(f"GMM produced {k_eff} non-empty clusters (asked for {config.k})", RuntimeWarning)
    return ClusterAssignment(labels, ll, converged, iters, tuple(trace), means)


def fit(z, config: ClustererConfig) -> ClusterAssignment:
    if config.kind == "kmeans":
        return kmeans_fit(z, config)
    return gmm_fit(z, config)
