"""Catalog of smooth terms: lp-power residuals and Kullback-Leibler.

Both terms are compositions with a dense linear map A. The lp residual

    f(x) = (1/p) sum_i |(Ax - b)_i|^p,   p > 1

is everywhere finite with gradient A^T(|Ax-b|^{p-1} sign(Ax-b)); its
gradient is globally Lipschitz only at p = 2 (L = ||A||^2). The KL
divergence

    f(x) = D(b, Ax) = sum_i b_i log(b_i / (Ax)_i) + (Ax)_i - b_i

has the open domain {x : (Ax)_i > 0 for all i} and gradient
A^T(1 - b / (Ax)).
"""

from __future__ import annotations

import numpy as np

from .problems import ConfigurationError, DomainError, SmoothTerm, Unsupported, as_vector

__all__ = [
    "LinearMap",
    "PNormResidual",
    "KLDivergence",
    "pnorm_value",
    "pnorm_grad",
    "kl_value",
    "kl_grad",
    "quadratic_lipschitz",
]


class LinearMap:
    """Dense m x n matrix with a cached, certified operator-norm estimate."""

    def __init__(self, a):
        a = np.asarray(a, dtype=float)
        if a.ndim != 2:
            raise ConfigurationError(f"matrix must be 2-D, got shape {a.shape}")
        if a.size == 0:
            raise ConfigurationError("matrix must be nonempty")
        if not np.all(np.isfinite(a)):
            raise ConfigurationError("matrix has non-finite entries")
        self.a = a.copy()
        self.a.flags.writeable = False
        self._opnorm: float | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.a.shape

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.a @ x

    def adjoint(self, r: np.ndarray) -> np.ndarray:
        return self.a.T @ r

    def operator_norm(self) -> float:
        """||A|| by power iteration on A^T A, cached.

        The returned value is the certificate ||A v|| / ||v|| of the final
        iterate, hence always a lower bound on the true norm; the
        iteration is run until the certificate stalls, which puts it
        within a 1e-6 relative factor of the truth (Rayleigh quotients
        converge even when the top eigenspace is degenerate). The start
        vector is deterministic.
        """
        if self._opnorm is not None:
            return self._opnorm
        if not self.a.any():
            self._opnorm = 0.0
            return 0.0
        n = self.a.shape[1]
        # deterministic start with a mild index ramp so no eigenvector of a
        # structured matrix is exactly orthogonal to it
        v = np.ones(n) + np.linspace(0.0, 0.1, n)
        v /= np.linalg.norm(v)
        if np.linalg.norm(self.a.T @ (self.a @ v)) == 0.0:
            # ramp start landed in the null space; a dominant row never does
            i = int(np.argmax(np.einsum("ij,ij->i", self.a, self.a)))
            v = self.a[i] / np.linalg.norm(self.a[i])
        est = 0.0
        stall = 0
        for it in range(20000):
            w = self.a.T @ (self.a @ v)
            v = w / np.linalg.norm(w)
            new = float(np.linalg.norm(self.a @ v))
            # the certificate is monotone up to round-off; stop on a
            # persistent stall, but only after a safety minimum of sweeps
            if new <= est * (1.0 + 1e-15):
                stall += 1
                if it >= 100 and stall >= 3:
                    break
            else:
                stall = 0
            if new > est:
                est = new
        self._opnorm = est
        return est


class PNormResidual(SmoothTerm):
    """f(x) = (1/p) sum |(Ax - b)_i|^p with p > 1. Full domain."""

    lower_bound = 0.0

    def __init__(self, a: LinearMap, b, p: float = 2.0):
        if not isinstance(a, LinearMap):
            a = LinearMap(a)
        self.a = a
        self.b = as_vector(b, a.shape[0])
        if not (p > 1) or not np.isfinite(p):
            raise ConfigurationError(f"p must be a finite real > 1, got {p}")
        self.p = float(p)

    @property
    def lipschitz_bound(self) -> float | None:
        if self.p == 2.0:
            return self.a.operator_norm() ** 2
        return None

    def value(self, x) -> float:
        r = self.a.apply(np.asarray(x, dtype=float)) - self.b
        return float(np.sum(np.abs(r) ** self.p) / self.p)

    def gradient(self, x) -> np.ndarray:
        r = self.a.apply(np.asarray(x, dtype=float)) - self.b
        return self.a.adjoint(np.abs(r) ** (self.p - 1.0) * np.sign(r))


class KLDivergence(SmoothTerm):
    """f(x) = D(b, Ax), the Kullback-Leibler divergence of Ax from b.

    A must be entrywise nonnegative with no all-zero row (an all-zero
    row would force (Ax)_i = 0 everywhere, emptying the domain), b
    strictly positive. dom f = {x : Ax > 0 componentwise} is open, so
    the domain and its interior coincide.
    """

    lower_bound = 0.0

    def __init__(self, a: LinearMap, b):
        if not isinstance(a, LinearMap):
            a = LinearMap(a)
        if np.any(a.a < 0):
            raise ConfigurationError("KL needs a nonnegative matrix")
        if not np.all(a.a.any(axis=1)):
            raise ConfigurationError("KL matrix has an all-zero row; the domain would be empty")
        self.a = a
        self.b = as_vector(b, a.shape[0])
        if not np.all(self.b > 0):
            raise ConfigurationError("KL needs b > 0 componentwise")

    def value(self, x) -> float:
        ax = self.a.apply(np.asarray(x, dtype=float))
        if np.any(ax <= 0):
            return np.inf
        return float(np.sum(self.b * np.log(self.b / ax) + ax - self.b))

    def gradient(self, x) -> np.ndarray:
        ax = self.a.apply(np.asarray(x, dtype=float))
        if np.any(ax <= 0):
            raise DomainError("gradient of the KL term needs (Ax)_i > 0 for every i")
        return self.a.adjoint(1.0 - self.b / ax)

    def in_domain(self, x) -> bool:
        return bool(np.all(self.a.apply(np.asarray(x, dtype=float)) > 0))

    # dom f is open
    in_interior_domain = in_domain


def pnorm_value(f: PNormResidual, x) -> float:
    return f.value(x)


def pnorm_grad(f: PNormResidual, x) -> np.ndarray:
    return f.gradient(x)


def kl_value(f: KLDivergence, x) -> float:
    return f.value(x)


def kl_grad(f: KLDivergence, x) -> np.ndarray:
    return f.gradient(x)


def quadratic_lipschitz(f: PNormResidual) -> float:
    """Global Lipschitz constant L = ||A||^2 of the gradient, p = 2 only."""
    if not isinstance(f, PNormResidual) or f.p != 2.0:
        raise Unsupported("a global gradient Lipschitz constant exists only at p = 2")
    return f.a.operator_norm() ** 2
