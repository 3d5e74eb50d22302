"""Normalized Gaussian and Gaussian-mixture densities.

These are used as importance proposals, auxiliary densities ``f`` and
posterior references. All evaluations are in the log domain.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError

_LOG_2PI = float(np.log(2.0 * np.pi))


def as_matrix(cov, dim: int) -> np.ndarray:
    """Promote a scalar, diagonal vector or matrix to a ``dim x dim`` matrix."""
    c = np.asarray(cov, dtype=float)
    if c.ndim == 0:
        return float(c) * np.eye(dim)
    if c.ndim == 1:
        if c.shape[0] != dim:
            raise InvalidArgumentError(f"diagonal of length {c.shape[0]} for dimension {dim}")
        return np.diag(c)
    if c.shape != (dim, dim):
        raise InvalidArgumentError(f"covariance of shape {c.shape} for dimension {dim}")
    return c


def spd_cholesky(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, raising InvalidArgumentError if not SPD."""
    if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12):
        raise InvalidArgumentError("covariance is not symmetric")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise InvalidArgumentError("covariance is not positive definite") from exc


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    """Column-wise log-sum-exp of a small (C, n) array without scipy call overhead."""
    if a.shape[0] == 1:
        return a[0].copy()
    m = a.max(axis=0)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return safe + np.log(np.exp(a - safe).sum(axis=0))


class Gaussian:
    """Multivariate normal density N(mean, cov).

    Parameters
    ----------
    mean : array_like, shape (D,)
    cov : float, array_like of shape (D,) or (D, D)
    """

    def __init__(self, mean, cov):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.dim = self.mean.shape[0]
        self.cov = as_matrix(cov, self.dim)
        self._chol = spd_cholesky(self.cov)
        self._log_norm = -0.5 * self.dim * _LOG_2PI - np.log(np.diag(self._chol)).sum()
        self._chol_inv_t = np.linalg.inv(self._chol).T

    def logpdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        z = (x - self.mean) @ self._chol_inv_t
        return self._log_norm - 0.5 * np.einsum("ij,ij->i", z, z)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        eps = rng.standard_normal((n, self.dim))
        return self.mean + eps @ self._chol.T


class GaussianMixture:
    """Finite mixture sum_k w_k N(mean_k, cov_k)."""

    def __init__(self, weights, means, covs):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or np.any(w < 0) or w.sum() <= 0:
            raise InvalidArgumentError("mixture weights must be nonnegative with positive sum")
        self.weights = w / w.sum()
        self.means = np.atleast_2d(np.asarray(means, dtype=float))
        self.dim = self.means.shape[1]
        covs = list(covs)
        if len(covs) != len(w) or self.means.shape[0] != len(w):
            raise InvalidArgumentError("weights, means and covariances disagree in length")
        self.components = [Gaussian(m, c) for m, c in zip(self.means, covs)]
        self.covs = np.stack([g.cov for g in self.components])

    @property
    def n_components(self) -> int:
        return len(self.components)

    def component_logpdfs(self, x) -> np.ndarray:
        """Array of shape (C, n) with log w_k + log N_k(x)."""
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return np.stack([lw + g.logpdf(x) for lw, g in zip(logw, self.components)])

    def logpdf(self, x) -> np.ndarray:
        return _logsumexp_rows(self.component_logpdfs(x))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        labels = rng.choice(self.n_components, size=n, p=self.weights)
        out = np.empty((n, self.dim))
        for k, g in enumerate(self.components):
            idx = np.flatnonzero(labels == k)
            if idx.size:
                out[idx] = g.sample(rng, idx.size)
        return out
