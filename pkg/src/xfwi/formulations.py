"""Objective functions for inversion with uncertain physics and data.

The measurement/process model is

    A(m) u = q + process noise,   cov sigma_p
    P u    = d + data noise,      cov sigma_m

and the central objects are the joint least-squares objective over (m, u),
its reduced form after eliminating the state, and the equivalent weighted
formulation

    phi(m) = r^H (K(m) + sigma_m)^{-1} r,    r = P A(m)^{-1} q - d,

where ``K(m) = P (A^H sigma_p^{-1} A)^{-1} P^H`` plays the role of a
medium-dependent residual covariance (correlations of receiver-side
responses). Numerical verifiers for the equivalence and for the underlying
matrix identity live here alongside the gradient and the related
extended-source and contrast-source forms.

Sign convention: the residual is ``r = P A^{-1} q - d`` throughout; the
opposite sign appears in some derivations and cancels in every quadratic
form.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    DimensionMismatchError,
    IllConditionedError,
    NotPositiveDefiniteError,
    RejectedInputError,
    UnsupportedGeometryError,
)
from .linops import CovarianceSpec, SamplingOperator, weighted_norm_sq
from .solvers import cg, dense_spd_solve, lsqr
from .wavemodel import medium_values

_DENSE_STATE_LIMIT = 2000


@dataclass(frozen=True)
class Problem:
    """One inversion instance: operator builder, geometry, data, weights."""

    A_builder: Callable
    dA: Callable
    P: SamplingOperator
    q: np.ndarray
    d: np.ndarray
    sigma_m: CovarianceSpec
    sigma_p: CovarianceSpec

    def __post_init__(self):
        q = np.asarray(self.q, dtype=complex)
        d = np.asarray(self.d, dtype=complex)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "d", d)
        if self.P.state_dim != len(q):
            raise DimensionMismatchError(
                f"sampling state dim {self.P.state_dim} != source length {len(q)}"
            )
        if self.P.n_receivers != len(d):
            raise DimensionMismatchError(
                f"{self.P.n_receivers} receivers but data length {len(d)}"
            )
        if self.sigma_m.dim != len(d):
            raise DimensionMismatchError("sigma_m dim must equal data dim")
        if self.sigma_p.dim != len(q):
            raise DimensionMismatchError("sigma_p dim must equal state dim")

    @property
    def state_dim(self):
        return len(self.q)

    @property
    def data_dim(self):
        return len(self.d)


@dataclass
class ObjectiveReport:
    """Objective value with the residual pair and solver diagnostics.

    For the reduced objective, ``value = Re <residual, weighted_residual>``
    with ``residual = P A^{-1} q - d`` and ``weighted_residual`` the solve
    of ``(K + sigma_m)`` against it.
    """

    value: float
    residual: np.ndarray
    weighted_residual: np.ndarray
    gradient: np.ndarray | None = None
    solver_iterations: int = 0
    solver_relres: float = 0.0


@dataclass
class EquivalenceSample:
    phi_joint: float
    phi_reduced: float
    rel_gap: float
    state_split_err: float
    data_split_err: float
    process_split_err: float


@dataclass
class EquivalenceReport:
    """Worst-case mismatches over a family of media."""

    samples: list = field(default_factory=list)
    max_rel_gap: float = 0.0
    max_intermediate_err: float = 0.0


def helmholtz_problem(model, receiver_indices, q, d, sigma_m, sigma_p):
    """Wire a 1-D Helmholtz model into a Problem."""
    from . import wavemodel

    P = SamplingOperator(receiver_indices, model.n)
    return Problem(
        A_builder=lambda m: wavemodel.assemble_A(model, m),
        dA=lambda k: wavemodel.dA_dm(model, k),
        P=P,
        q=q,
        d=d,
        sigma_m=sigma_m,
        sigma_p=sigma_p,
    )


# ---------------------------------------------------------------------------
# shared dense pieces


def _dense_A(prob, m):
    return np.asarray(prob.A_builder(m).to_dense())


def _gram_factor(prob, A):
    """Factor B = A^H sigma_p^{-1} A, the process-weighted normal matrix."""
    B = A.conj().T @ prob.sigma_p.solve(A)
    B = 0.5 * (B + B.conj().T)
    try:
        return B, cho_factor(B, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError(
            f"process-weighted normal matrix is not positive definite: {exc}"
        ) from exc


def _sigma_of_m_from_factor(prob, B_factor):
    Pd = prob.P.to_dense()
    X = cho_solve(B_factor, Pd.conj().T.astype(complex), check_finite=False)
    K = Pd @ X
    return 0.5 * (K + K.conj().T)


def _rel_diff(x, y):
    num = np.linalg.norm(x - y)
    den = max(np.linalg.norm(x), np.linalg.norm(y), 1e-300)
    return float(num / den)


# ---------------------------------------------------------------------------
# state solve and objectives


def solve_state(prob, m, method="auto"):
    """State estimate from the normal equations of the joint objective.

    Returns ``u(m) = N^{-1} (A^H sigma_p^{-1} q + P^H sigma_m^{-1} d)`` with
    ``N = A^H sigma_p^{-1} A + P^H sigma_m^{-1} P``. Dense Cholesky up to
    2000 state unknowns, conjugate gradients above (or with
    ``method="cg"``).
    """
    A = _dense_A(prob, m)
    Pd = prob.P.to_dense()
    N = A.conj().T @ prob.sigma_p.solve(A) + Pd.conj().T @ prob.sigma_m.solve(
        Pd.astype(complex)
    )
    N = 0.5 * (N + N.conj().T)
    rhs = A.conj().T @ prob.sigma_p.solve(prob.q) + prob.P.rmatvec(
        prob.sigma_m.solve(prob.d)
    )
    if method == "auto":
        method = "dense" if prob.state_dim <= _DENSE_STATE_LIMIT else "cg"
    if method == "dense":
        try:
            return dense_spd_solve(N, rhs)
        except NotPositiveDefiniteError as exc:
            raise IllConditionedError(
                f"normal matrix is singular to tolerance: {exc}",
                condition=float(np.linalg.cond(N)),
            ) from exc
    if method == "cg":
        rep = cg(N, rhs)
        if not rep.converged:
            raise IllConditionedError(
                f"cg stalled at relative residual {rep.relative_residual:.3e}"
            )
        return rep.solution
    raise RejectedInputError(f"unknown method {method!r}")


def phi_joint(prob, m):
    """Joint objective at its optimal state.

    ``||P u(m) - d||^2_sigma_m + ||A(m) u(m) - q||^2_sigma_p`` with ``u(m)``
    from :func:`solve_state`.
    """
    A = _dense_A(prob, m)
    u = solve_state(prob, m)
    r_data = prob.P.matvec(u) - prob.d
    r_proc = A @ u - prob.q
    value = weighted_norm_sq(prob.sigma_m, r_data) + weighted_norm_sq(
        prob.sigma_p, r_proc
    )
    return ObjectiveReport(
        value=value,
        residual=r_data,
        weighted_residual=prob.sigma_m.solve(r_data),
    )


def sigma_of_m(prob, m):
    """Medium-dependent residual covariance ``K = P B^{-1} P^H``.

    ``B = A^H sigma_p^{-1} A`` is factored once and hit with one basis
    vector per receiver, so the cost is one simulation pair per receiver.
    Returns a dense Hermitian ``data_dim x data_dim`` array.
    """
    A = _dense_A(prob, m)
    _, B_factor = _gram_factor(prob, A)
    return _sigma_of_m_from_factor(prob, B_factor)


def phi_reduced(prob, m, method="cholesky"):
    """Reduced objective ``r^H (K + sigma_m)^{-1} r``.

    Evaluates the residual ``r = P A^{-1} q - d``, solves
    ``(K + sigma_m) r_tilde = r`` (dense Cholesky by default; ``"lsqr"`` or
    ``"cg"`` optional), and returns ``Re <r, r_tilde>`` with both residual
    vectors in the report.
    """
    A = _dense_A(prob, m)
    u0 = np.linalg.solve(A, prob.q)
    r = prob.P.matvec(u0) - prob.d
    _, B_factor = _gram_factor(prob, A)
    K = _sigma_of_m_from_factor(prob, B_factor)
    S = K + prob.sigma_m.to_dense()
    iterations = 0
    relres = 0.0
    if method == "cholesky":
        try:
            r_tilde = dense_spd_solve(S, r)
        except NotPositiveDefiniteError as exc:
            raise IllConditionedError(
                f"weight matrix K + sigma_m is singular to tolerance: {exc}"
            ) from exc
    elif method in ("lsqr", "cg"):
        rep = lsqr(S, r) if method == "lsqr" else cg(S, r)
        r_tilde, iterations, relres = rep.solution, rep.iterations, rep.relative_residual
    else:
        raise RejectedInputError(f"unknown method {method!r}")
    z = np.vdot(r, r_tilde)
    if abs(z.imag) > 1e-10 * abs(z.real) + 1e-300:
        raise IllConditionedError(
            f"reduced objective has imaginary part {z.imag:.3e}"
        )
    return ObjectiveReport(
        value=max(float(z.real), 0.0),
        residual=r,
        weighted_residual=r_tilde,
        solver_iterations=iterations,
        solver_relres=relres,
    )


def phi_conventional(prob, m):
    """Data misfit with the state eliminated exactly: ``||r||^2_sigma_m``.

    This is the vanishing-process-uncertainty limit of the reduced
    objective, implemented analytically (no floor).
    """
    A = _dense_A(prob, m)
    r = prob.P.matvec(np.linalg.solve(A, prob.q)) - prob.d
    return ObjectiveReport(
        value=weighted_norm_sq(prob.sigma_m, r),
        residual=r,
        weighted_residual=prob.sigma_m.solve(r),
    )


def phi_equation_error(prob, m):
    """Process misfit with the state read off the data: ``||A P^{-1} d - q||^2_sigma_p``.

    Requires a square, invertible sampling operator (full-state
    measurement); the selection structure makes P a permutation, so
    ``P^{-1} = P^T``.
    """
    if prob.P.n_receivers != prob.state_dim:
        raise UnsupportedGeometryError(
            "equation-error form needs a square, invertible sampling operator"
        )
    A = _dense_A(prob, m)
    u_data = prob.P.rmatvec(prob.d)
    r = A @ u_data - prob.q
    return ObjectiveReport(
        value=weighted_norm_sq(prob.sigma_p, r),
        residual=r,
        weighted_residual=prob.sigma_p.solve(r),
    )


def phi_extended_source(prob, m, f):
    """Joint objective re-parameterized by the source extension ``f = A u - q``.

    ``||P A^{-1} (q + f) - d||^2_sigma_m + ||f||^2_sigma_p``.
    """
    f = np.asarray(f)
    if len(f) != prob.state_dim:
        raise DimensionMismatchError(f"extension must have length {prob.state_dim}")
    A = _dense_A(prob, m)
    r = prob.P.matvec(np.linalg.solve(A, prob.q + f)) - prob.d
    return weighted_norm_sq(prob.sigma_m, r) + weighted_norm_sq(prob.sigma_p, f)


def minimize_phi_extended_source(prob, m):
    """Dense normal-equation minimizer of the extended-source objective.

    Returns ``(f_opt, value)``; the minimum value equals the joint
    objective, which is the change-of-variables identity the tests verify.
    """
    A = _dense_A(prob, m)
    Pd = prob.P.to_dense()
    G = np.linalg.solve(A.T, Pd.T.astype(complex)).T  # G = P A^{-1}
    r = G @ prob.q - prob.d
    N = G.conj().T @ prob.sigma_m.solve(G) + prob.sigma_p.solve(
        np.eye(prob.state_dim, dtype=complex)
    )
    N = 0.5 * (N + N.conj().T)
    f = dense_spd_solve(N, -(G.conj().T @ prob.sigma_m.solve(r)))
    return f, phi_extended_source(prob, m, f)


def phi_contrast_source(prob, m, w, m0):
    """Joint objective re-parameterized by a contrast source ``w``.

    With background ``A0 = A(m0)`` and contrast ``dA = A0 - A(m)``:
    ``||P A0^{-1} (w + q) - d||^2_sigma_m
      + ||dA A0^{-1} (w + q) - w||^2_sigma_p``.
    The substitution ``u = A0^{-1} (w + q)`` maps this bijectively onto the
    joint objective, so minimizing over ``w`` recovers it exactly. (With
    the contrast oriented model-minus-background the same expression would
    instead target the medium reflected about the background.)
    """
    w = np.asarray(w)
    if len(w) != prob.state_dim:
        raise DimensionMismatchError(f"contrast source must have length {prob.state_dim}")
    A = _dense_A(prob, m)
    A0 = _dense_A(prob, m0)
    dA = A0 - A
    u = np.linalg.solve(A0, w + prob.q)
    r_data = prob.P.matvec(u) - prob.d
    r_proc = dA @ u - w
    return weighted_norm_sq(prob.sigma_m, r_data) + weighted_norm_sq(
        prob.sigma_p, r_proc
    )


def minimize_phi_contrast_source(prob, m, m0):
    """Dense normal-equation minimizer over the contrast source."""
    A = _dense_A(prob, m)
    A0 = _dense_A(prob, m0)
    dA = A0 - A
    A0_inv = np.linalg.inv(A0)
    H = prob.P.to_dense() @ A0_inv
    C = dA @ A0_inv - np.eye(prob.state_dim)
    r0 = H @ prob.q - prob.d
    c0 = dA @ (A0_inv @ prob.q)
    N = H.conj().T @ prob.sigma_m.solve(H) + C.conj().T @ prob.sigma_p.solve(C)
    N = 0.5 * (N + N.conj().T)
    rhs = -(H.conj().T @ prob.sigma_m.solve(r0) + C.conj().T @ prob.sigma_p.solve(c0))
    w = dense_spd_solve(N, rhs)
    return w, phi_contrast_source(prob, m, w, m0)


# ---------------------------------------------------------------------------
# gradient


def grad_phi(prob, m, variant="adjoint"):
    """Gradient of the reduced objective w.r.t. the medium parameters.

    The default ``"adjoint"`` variant differentiates
    ``phi = r^H (K + sigma_m)^{-1} r`` exactly, using three auxiliary
    fields per evaluation:

        u0 = A^{-1} q
        v0 = A^{-H} P^H (K + sigma_m)^{-1} (P u0 - d)
        w0 = A^{-1} sigma_p v0
        d phi / d m_k = 2 Re < v0, (dA/dm_k) (w0 - u0) >

    so only one extra forward solve beyond the conventional adjoint state
    is needed. ``variant="paper"`` evaluates an alternative form that
    weights the data residual by ``(K^{-1} + sigma_m^{-1})`` and takes
    ``w0 = A^{-1} sigma_p^{-1} v0``; it feeds the ``paper_variant``
    comparison column of gradient reports and does not match finite
    differences.
    """
    if variant not in ("adjoint", "paper"):
        raise RejectedInputError(f"unknown gradient variant {variant!r}")
    A = _dense_A(prob, m)
    u0 = np.linalg.solve(A, prob.q)
    r = prob.P.matvec(u0) - prob.d
    _, B_factor = _gram_factor(prob, A)
    K = _sigma_of_m_from_factor(prob, B_factor)

    if variant == "adjoint":
        S = K + prob.sigma_m.to_dense()
        r_tilde = dense_spd_solve(S, r)
        v0 = np.linalg.solve(A.conj().T, prob.P.rmatvec(r_tilde))
        w0 = np.linalg.solve(A, prob.sigma_p.apply(v0))
        direction = w0 - u0
        g = np.empty(len(medium_values(m)))
        for k in range(len(g)):
            g[k] = 2.0 * np.vdot(v0, prob.dA(k).matvec(direction)).real
        return g

    weighted = dense_spd_solve(K, r) + prob.sigma_m.solve(r)
    v0 = np.linalg.solve(A.conj().T, prob.P.rmatvec(weighted))
    w0 = np.linalg.solve(A, prob.sigma_p.solve(v0))
    g = np.empty(len(medium_values(m)))
    for k in range(len(g)):
        dA_k = prob.dA(k)
        g[k] = (
            -2.0 * np.vdot(u0, dA_k.matvec(v0)) + 2.0 * np.vdot(v0, dA_k.matvec(w0))
        ).real
    return g


def fd_gradient(prob, m, rel_step=1e-4, richardson=True):
    """Central finite differences of the reduced objective, per component.

    The step is scaled per component; with ``richardson`` the two-step
    extrapolation ``(4 g(h/2) - g(h)) / 3`` cancels the leading truncation
    term, which the verification harness relies on.
    """
    v = medium_values(m).copy()

    def value_at(vec):
        return phi_reduced(prob, vec).value

    def central(k, step):
        vp = v.copy()
        vm = v.copy()
        vp[k] += step
        vm[k] -= step
        return (value_at(vp) - value_at(vm)) / (2.0 * step)

    g = np.empty(len(v))
    for k in range(len(v)):
        step = rel_step * (abs(v[k]) + 1e-2)
        if richardson:
            g[k] = (4.0 * central(k, step / 2.0) - central(k, step)) / 3.0
        else:
            g[k] = central(k, step)
    return g


# ---------------------------------------------------------------------------
# verification


def verify_matrix_identity(prob, m):
    """Entrywise check of the push-through identity behind the reduction.

    Builds both sides of

        (P^H Sm^{-1} P + B)^{-1} P^H Sm^{-1}
            = B^{-1} P^H (P B^{-1} P^H + Sm)^{-1},

    with ``B = A^H Sp^{-1} A``, densely, and returns
    ``max|LHS - RHS| / max|RHS|``.
    """
    if prob.state_dim > 200:
        raise RejectedInputError("identity check is a dense-regime verifier (n <= 200)")
    A = _dense_A(prob, m)
    Pd = prob.P.to_dense().astype(complex)
    B, B_factor = _gram_factor(prob, A)
    Sm_inv = prob.sigma_m.solve(np.eye(prob.data_dim, dtype=complex))
    N = Pd.conj().T @ Sm_inv @ Pd + B
    lhs = np.linalg.solve(N, Pd.conj().T @ Sm_inv)
    K = _sigma_of_m_from_factor(prob, B_factor)
    S = K + prob.sigma_m.to_dense()
    rhs = cho_solve(B_factor, Pd.conj().T, check_finite=False) @ np.linalg.inv(S)
    return float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs)))


def verify_equivalence(prob, m_samples):
    """Numerically confirm joint and reduced objectives coincide.

    For each medium the two objective values are compared, along with the
    three split identities relating the optimal state ``u`` to the reduced
    residual (state, data-side, and process-side expressions). Returns a
    report with the worst relative mismatches.
    """
    report = EquivalenceReport()
    for m in m_samples:
        A = _dense_A(prob, m)
        pj = phi_joint(prob, m).value
        pr = phi_reduced(prob, m).value
        rel_gap = abs(pj - pr) / (1.0 + pj)

        u = solve_state(prob, m)
        u0 = np.linalg.solve(A, prob.q)
        v = u - u0
        r = prob.d - prob.P.matvec(u0)

        Pd = prob.P.to_dense().astype(complex)
        B, B_factor = _gram_factor(prob, A)
        N = Pd.conj().T @ prob.sigma_m.solve(Pd) + B
        v_expr = np.linalg.solve(N, prob.P.rmatvec(prob.sigma_m.solve(r)))
        e_state = _rel_diff(v, v_expr)

        K = _sigma_of_m_from_factor(prob, B_factor)
        S = K + prob.sigma_m.to_dense()
        st = dense_spd_solve(S, r)
        e_data = _rel_diff(prob.P.matvec(v), K @ st)
        av_expr = prob.sigma_p.apply(
            np.linalg.solve(A.conj().T, prob.P.rmatvec(st))
        )
        e_proc = _rel_diff(A @ v, av_expr)

        report.samples.append(
            EquivalenceSample(pj, pr, rel_gap, e_state, e_data, e_proc)
        )
        report.max_rel_gap = max(report.max_rel_gap, rel_gap)
        report.max_intermediate_err = max(
            report.max_intermediate_err, e_state, e_data, e_proc
        )
    return report
