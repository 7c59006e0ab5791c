"""Matrix-free linear operators with adjoints, plus covariance weights.

The scalar field is complex throughout; real problems are the special case
with zero imaginary parts. All adjoints follow the inner product
``<x, y> = sum conj(x_i) * y_i``, which fixes them unambiguously.
"""

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    DimensionMismatchError,
    IllConditionedError,
    NotPositiveDefiniteError,
    RejectedInputError,
)

_HERMITIAN_RTOL = 1e-12
_COND_LIMIT = 1e14


class LinearOperator:
    """Base class for matrix-free operators.

    Subclasses implement ``matvec`` (forward) and ``rmatvec`` (adjoint).
    ``shape`` is ``(range_dim, domain_dim)``.
    """

    def __init__(self, range_dim, domain_dim):
        self.range_dim = int(range_dim)
        self.domain_dim = int(domain_dim)

    @property
    def shape(self):
        return (self.range_dim, self.domain_dim)

    def matvec(self, x):
        raise NotImplementedError

    def rmatvec(self, y):
        raise NotImplementedError

    def to_dense(self):
        """Materialize the operator columnwise. Intended for small problems."""
        out = np.empty((self.range_dim, self.domain_dim), dtype=complex)
        e = np.zeros(self.domain_dim, dtype=complex)
        for k in range(self.domain_dim):
            e[k] = 1.0
            out[:, k] = self.matvec(e)
            e[k] = 0.0
        return out

    def __matmul__(self, x):
        return self.matvec(x)


class DenseOperator(LinearOperator):
    """Operator backed by an explicit 2-D array."""

    def __init__(self, matrix):
        matrix = np.atleast_2d(np.asarray(matrix))
        if matrix.ndim != 2:
            raise RejectedInputError("dense operator needs a 2-D array")
        super().__init__(matrix.shape[0], matrix.shape[1])
        self.matrix = matrix
        self._adjoint = None

    def matvec(self, x):
        return self.matrix @ x

    def rmatvec(self, y):
        if self._adjoint is None:
            self._adjoint = self.matrix.conj().T
        return self._adjoint @ y

    def to_dense(self):
        return self.matrix


class IdentityOperator(LinearOperator):
    def __init__(self, dim):
        super().__init__(dim, dim)

    def matvec(self, x):
        return np.asarray(x)

    def rmatvec(self, y):
        return np.asarray(y)


class FunctionOperator(LinearOperator):
    """Operator defined by a pair of callables."""

    def __init__(self, range_dim, domain_dim, matvec, rmatvec):
        super().__init__(range_dim, domain_dim)
        self._matvec = matvec
        self._rmatvec = rmatvec

    def matvec(self, x):
        return self._matvec(x)

    def rmatvec(self, y):
        return self._rmatvec(y)


class SamplingOperator(LinearOperator):
    """Selection of state entries, one unit entry per row.

    Rows pick pairwise-distinct state indices, so ``P P^T = I`` on the
    receiver space and the adjoint is a scatter.
    """

    def __init__(self, receiver_indices, state_dim):
        idx = np.asarray(receiver_indices, dtype=int).ravel()
        state_dim = int(state_dim)
        if idx.size == 0:
            raise RejectedInputError("sampling operator needs at least one index")
        if idx.min() < 0 or idx.max() >= state_dim:
            raise RejectedInputError(
                f"receiver indices must lie in [0, {state_dim}); got {idx}"
            )
        if len(np.unique(idx)) != len(idx):
            raise RejectedInputError("receiver indices must be distinct")
        super().__init__(len(idx), state_dim)
        self.receiver_indices = idx
        self.state_dim = state_dim

    @property
    def n_receivers(self):
        return len(self.receiver_indices)

    def matvec(self, x):
        x = np.asarray(x)
        return x[self.receiver_indices]

    def rmatvec(self, y):
        y = np.asarray(y)
        out = np.zeros(self.state_dim, dtype=np.result_type(y.dtype, float))
        out[self.receiver_indices] = y
        return out

    def to_dense(self):
        P = np.zeros((self.n_receivers, self.state_dim))
        P[np.arange(self.n_receivers), self.receiver_indices] = 1.0
        return P


def apply(op, x):
    """Apply ``op`` to ``x`` after validating the domain dimension."""
    x = np.asarray(x)
    if x.ndim != 1 or len(x) != op.domain_dim:
        raise DimensionMismatchError(
            f"operator domain is {op.domain_dim}, got vector of shape {x.shape}"
        )
    return op.matvec(x)


def dot_test(op, trials=10, seed=0):
    """Maximum relative adjoint mismatch over random complex probes.

    For each trial draws x, y and evaluates
    ``|<Ax, y> - <x, A^H y>| / (||Ax|| ||y|| + ||x|| ||A^H y||)``.
    Deterministic for a given seed.
    """
    if trials < 1:
        raise RejectedInputError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(op.domain_dim) + 1j * rng.standard_normal(op.domain_dim)
        y = rng.standard_normal(op.range_dim) + 1j * rng.standard_normal(op.range_dim)
        ax = np.asarray(op.matvec(x)).ravel()
        aty = np.asarray(op.rmatvec(y)).ravel()
        lhs = np.vdot(ax, y.ravel())
        rhs = np.vdot(x, aty)
        scale = (
            np.linalg.norm(ax) * np.linalg.norm(y)
            + np.linalg.norm(x) * np.linalg.norm(aty)
            + 1e-300
        )
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


class CovarianceSpec:
    """Symmetric positive definite weight with apply and solve.

    Three kinds: scaled identity ``sigma2 * I``, diagonal, and dense
    Hermitian positive definite. Dense matrices are eigenvalue-checked and
    Cholesky-factored once on construction; the factor is cached for the
    repeated solves of objective scans.
    """

    SCALED = "scaled-identity"
    DIAGONAL = "diagonal"
    DENSE = "dense-spd"

    def __init__(self, kind, dim, sigma2=None, diag=None, matrix=None,
                 factor=None, cond=None):
        self.kind = kind
        self.dim = int(dim)
        self._sigma2 = sigma2
        self._diag = diag
        self._matrix = matrix
        self._factor = factor
        self.cond = cond

    @classmethod
    def scaled_identity(cls, sigma2, dim):
        sigma2 = float(sigma2)
        if not np.isfinite(sigma2) or sigma2 <= 0:
            raise NotPositiveDefiniteError(f"sigma2 must be positive, got {sigma2}")
        return cls(cls.SCALED, dim, sigma2=sigma2, cond=1.0)

    @classmethod
    def diagonal(cls, values):
        v = np.asarray(values, dtype=float)
        if v.ndim != 1 or not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise NotPositiveDefiniteError("diagonal entries must be finite and > 0")
        return cls(cls.DIAGONAL, len(v), diag=v, cond=float(v.max() / v.min()))

    @classmethod
    def dense(cls, matrix):
        M = np.asarray(matrix)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise RejectedInputError("dense covariance must be square")
        scale = np.linalg.norm(M)
        if np.linalg.norm(M - M.conj().T) > _HERMITIAN_RTOL * scale:
            raise NotPositiveDefiniteError("dense covariance is not Hermitian")
        M = 0.5 * (M + M.conj().T)
        eigs = np.linalg.eigvalsh(M)
        if eigs.min() <= 0:
            raise NotPositiveDefiniteError(
                f"covariance has non-positive eigenvalue {eigs.min():.3e}"
            )
        factor = cho_factor(M, lower=True, check_finite=False)
        return cls(cls.DENSE, M.shape[0], matrix=M, factor=factor,
                   cond=float(eigs.max() / eigs.min()))

    def _check_dim(self, x):
        x = np.asarray(x)
        if x.shape[0] != self.dim:
            raise DimensionMismatchError(
                f"covariance dim is {self.dim}, got array of shape {x.shape}"
            )
        return x

    def apply(self, x):
        x = self._check_dim(x)
        if self.kind == self.SCALED:
            return self._sigma2 * x
        if self.kind == self.DIAGONAL:
            if x.ndim == 1:
                return self._diag * x
            return self._diag[:, None] * x
        return self._matrix @ x

    def solve(self, x):
        x = self._check_dim(x)
        if self.kind == self.SCALED:
            return x / self._sigma2
        if self.kind == self.DIAGONAL:
            if x.ndim == 1:
                return x / self._diag
            return x / self._diag[:, None]
        if self.cond is not None and self.cond > _COND_LIMIT:
            raise IllConditionedError(
                f"covariance condition {self.cond:.3e} exceeds {_COND_LIMIT:.0e}",
                condition=self.cond,
            )
        return cho_solve(self._factor, x, check_finite=False)

    def to_dense(self):
        if self.kind == self.SCALED:
            return self._sigma2 * np.eye(self.dim)
        if self.kind == self.DIAGONAL:
            return np.diag(self._diag)
        return self._matrix


def weighted_norm_sq(cov, r):
    """Quadratic form ``r^H cov^{-1} r`` as a nonnegative real scalar.

    The imaginary part of the form is discarded after asserting it is
    negligible relative to the real part.
    """
    r = np.asarray(r)
    if r.ndim != 1 or len(r) != cov.dim:
        raise DimensionMismatchError(
            f"covariance dim is {cov.dim}, got vector of shape {r.shape}"
        )
    w = cov.solve(r)
    z = np.vdot(r, w)
    if abs(z.imag) > 1e-10 * abs(z.real) + 1e-300:
        raise IllConditionedError(
            f"weighted norm has non-negligible imaginary part {z.imag:.3e} "
            f"(real part {z.real:.3e})"
        )
    val = float(z.real)
    if val < 0.0:
        floor = 1e-12 * float(np.linalg.norm(r) * np.linalg.norm(w)) + 1e-300
        if -val > floor:
            raise NotPositiveDefiniteError(
                f"quadratic form is negative ({val:.3e}); weight is not SPD"
            )
        val = 0.0
    return val
