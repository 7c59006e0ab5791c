"""Concrete physics backing the inversion formulations.

Two models live here. A one-dimensional frequency-domain Helmholtz operator,
assembled densely so every algebraic claim can be checked against explicit
matrices, and the analytic constant-velocity propagator in three dimensions,
whose Green's function ``g(t, x) = delta(t - |x|/c) / |x|`` turns forward
modeling into per-receiver delay-and-scale convolutions evaluated with FFTs.

Delta pulses are represented band-limited: delays are applied as phase
factors on a zero-padded spectrum, which sinc-interpolates subsample shifts
without ad-hoc kernels. Traces are windowed back to the original record
length; the 2x padding keeps the convolution linear rather than circular.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import toeplitz

from .errors import (
    DimensionMismatchError,
    IllConditionedError,
    RejectedInputError,
    SingularGeometryError,
)
from .linops import DenseOperator, FunctionOperator, SamplingOperator

BOUNDARY_DIRICHLET = "dirichlet"
BOUNDARY_SOMMERFELD = "sommerfeld"

# Condition estimates are skipped above this size; assembly stays O(n^2).
_COND_CHECK_MAX_N = 600


@dataclass(frozen=True)
class HelmholtzModel1D:
    """1-D grid for the operator ``A(m) = L + omega^2 diag(m)``.

    ``L`` is the 3-point Laplacian ``-(u_{k-1} - 2 u_k + u_{k+1}) / h^2``
    with either a Dirichlet closure or first-order Sommerfeld (absorbing)
    rows. The absorbing impedance uses the reference squared slowness
    ``boundary_m0``, frozen at construction so that A stays linear in m and
    ``dA/dm_k = omega^2 e_k e_k^T`` holds for every k, boundaries included.

    Parameters
    ----------
    n : int
        Grid-point count, at least 3.
    h : float
        Grid spacing in km.
    omega : float
        Angular frequency in rad/s.
    boundary : str
        ``"dirichlet"`` or ``"sommerfeld"``.
    boundary_m0 : float
        Reference squared slowness (s^2/km^2) for the absorbing rows.
    """

    n: int
    h: float
    omega: float
    boundary: str = BOUNDARY_DIRICHLET
    boundary_m0: float = 0.25

    def __post_init__(self):
        if self.n < 3:
            raise RejectedInputError(f"need n >= 3 grid points, got {self.n}")
        if not (self.h > 0 and np.isfinite(self.h)):
            raise RejectedInputError(f"grid spacing must be positive, got {self.h}")
        if not (self.omega > 0 and np.isfinite(self.omega)):
            raise RejectedInputError(f"omega must be positive, got {self.omega}")
        if self.boundary not in (BOUNDARY_DIRICHLET, BOUNDARY_SOMMERFELD):
            raise RejectedInputError(f"unknown boundary {self.boundary!r}")
        if self.boundary == BOUNDARY_SOMMERFELD and not self.boundary_m0 > 0:
            raise RejectedInputError("boundary_m0 must be positive")


@dataclass(frozen=True)
class MediumModel:
    """Medium parameters: squared slowness (s^2/km^2) on the grid."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise RejectedInputError("medium values must be finite and > 0")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)


def medium_values(m):
    """Accept a MediumModel or a raw array of squared slowness."""
    if isinstance(m, MediumModel):
        return m.values
    v = np.asarray(m, dtype=float)
    if v.ndim != 1 or not np.all(np.isfinite(v)) or np.any(v <= 0):
        raise RejectedInputError("medium values must be finite and > 0")
    return v


@dataclass(frozen=True)
class Acquisition:
    """Source/receiver geometry and the time grid.

    Positions are in km; the analytic propagator only uses the Euclidean
    source-receiver distances. ``sampling`` carries the grid selection
    operator for grid-based models and is unused by the analytic one.
    """

    source_position: np.ndarray
    receiver_positions: np.ndarray
    nt: int
    dt: float
    sampling: SamplingOperator | None = None

    def __post_init__(self):
        src = np.atleast_1d(np.asarray(self.source_position, dtype=float))
        rec = np.atleast_2d(np.asarray(self.receiver_positions, dtype=float))
        object.__setattr__(self, "source_position", src)
        object.__setattr__(self, "receiver_positions", rec)
        if self.nt < 2:
            raise RejectedInputError(f"need nt >= 2 samples, got {self.nt}")
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise RejectedInputError(f"dt must be positive, got {self.dt}")
        if rec.shape[1] != src.shape[0]:
            raise DimensionMismatchError("receiver/source coordinate dims differ")
        for i in range(len(rec)):
            for j in range(i + 1, len(rec)):
                if np.allclose(rec[i], rec[j]):
                    raise RejectedInputError(f"receivers {i} and {j} coincide")
        if np.any(self.distances() <= 0):
            raise SingularGeometryError("a receiver coincides with the source")

    @property
    def n_receivers(self):
        return len(self.receiver_positions)

    def distances(self):
        return np.linalg.norm(self.receiver_positions - self.source_position, axis=1)

    def times(self):
        return np.arange(self.nt) * self.dt


@dataclass(frozen=True)
class Dataset:
    """Receiver-by-sample traces (observed or synthetic)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values))
        object.__setattr__(self, "values", v)

    @property
    def n_receivers(self):
        return self.values.shape[0]

    @property
    def nt(self):
        return self.values.shape[1]

    def ravel(self):
        return self.values.ravel()


@dataclass(frozen=True)
class KernelPanels:
    """Receiver-pair correlation kernels stored as lag-indexed traces.

    ``traces[i, j]`` samples the convolution kernel for receivers (i, j) on
    the lag grid ``lags``; the physical content is a single band-limited
    event at lag ``(r_i - r_j)/c`` with weight ``1/(r_i r_j)``.
    """

    lags: np.ndarray
    traces: np.ndarray
    c: float


# ---------------------------------------------------------------------------
# Helmholtz assembly


def assemble_A(model, m, check_condition=True):
    """Assemble the dense Helmholtz operator ``A(m) = L + omega^2 diag(m)``.

    Parameters
    ----------
    model : HelmholtzModel1D
    m : MediumModel or array
        Squared slowness per grid point, length ``model.n``.
    check_condition : bool
        Estimate the 1-norm condition number and reject operators beyond
        1e14 (skipped for n > 600 where the estimate would dominate cost).

    Returns
    -------
    DenseOperator
    """
    v = medium_values(m)
    if len(v) != model.n:
        raise DimensionMismatchError(
            f"model has {model.n} grid points, medium has {len(v)}"
        )
    n, h, omega = model.n, model.h, model.omega
    A = np.zeros((n, n), dtype=complex)
    idx = np.arange(n - 1)
    A[idx, idx + 1] = -1.0 / h**2
    A[idx + 1, idx] = -1.0 / h**2
    np.fill_diagonal(A, 2.0 / h**2 + omega**2 * v)
    if model.boundary == BOUNDARY_SOMMERFELD:
        impedance = 1j * omega * np.sqrt(model.boundary_m0) / h
        for k in (0, n - 1):
            A[k, k] = 1.0 / h**2 + omega**2 * v[k] - impedance
    if check_condition and n <= _COND_CHECK_MAX_N:
        try:
            # cond(A, 1) keeps the complex dtype (zero imaginary part)
            cond = float(abs(np.linalg.cond(A, 1)))
        except np.linalg.LinAlgError:
            cond = np.inf
        if not cond < 1e14:
            raise IllConditionedError(
                f"assembled operator condition {cond:.3e} exceeds 1e14",
                condition=cond,
            )
    return DenseOperator(A)


def dA_dm(model, k):
    """Derivative of the assembled operator w.r.t. ``m_k``: ``omega^2 e_k e_k^T``."""
    if not 0 <= k < model.n:
        raise RejectedInputError(f"index {k} out of range for n = {model.n}")
    D = np.zeros((model.n, model.n))
    D[k, k] = model.omega**2
    return DenseOperator(D)


# ---------------------------------------------------------------------------
# Analytic constant-velocity propagator


def _pad_length(nt):
    # 2x zero padding suppresses circular wrap-around of the delays.
    return 2 * nt


def _phase_factors(c, acq):
    N = _pad_length(acq.nt)
    omega = 2.0 * np.pi * np.fft.fftfreq(N, acq.dt)
    r = acq.distances()
    return np.exp(-1j * omega[None, :] * (r / c)[:, None]) / r[:, None], N


def _check_forward_inputs(c, acq):
    if not (np.isfinite(c) and c > 0):
        raise RejectedInputError(f"velocity must be positive, got {c}")
    if np.any(acq.distances() <= 0):
        raise SingularGeometryError("a receiver coincides with the source")


def _shift_stack(c, acq, q):
    """Real kernel: delay q by r_i/c and scale by 1/r_i, per receiver."""
    phases, N = _phase_factors(c, acq)
    spectrum = np.fft.fft(q, n=N)
    out = np.fft.ifft(spectrum[None, :] * phases, axis=1).real
    return out[:, : acq.nt]


def _shift_gather(c, acq, traces):
    """Real adjoint kernel: advance trace i by r_i/c, scale 1/r_i, sum."""
    phases, N = _phase_factors(c, acq)
    spectra = np.fft.fft(traces, n=N, axis=1)
    out = np.fft.ifft(spectra * phases.conj(), axis=1).real
    return out[:, : acq.nt].sum(axis=0)


def _complexified(kernel, x):
    # The FFT kernels are real-linear maps; complex inputs go through the
    # canonical complexification so operators stay complex-linear.
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return kernel(x.real) + 1j * kernel(x.imag)
    return kernel(x.astype(float, copy=False))


def forward_F(c, acq, q):
    """Model receiver traces for a source time function.

    Each trace is ``q(t - r_i/c) / r_i`` with ``r_i`` the source-receiver
    distance, evaluated by multiplying the padded spectrum of ``q`` with
    ``exp(-i omega r_i / c) / r_i``.

    Parameters
    ----------
    c : float
        Velocity in km/s.
    acq : Acquisition
    q : array, shape (nt,)

    Returns
    -------
    Dataset
        ``n_receivers x nt`` traces.
    """
    _check_forward_inputs(c, acq)
    q = np.asarray(q)
    if q.ndim != 1 or len(q) != acq.nt:
        raise DimensionMismatchError(f"source must have length {acq.nt}")
    if not np.all(np.isfinite(q)):
        raise RejectedInputError("source time function has non-finite entries")
    return Dataset(_complexified(lambda x: _shift_stack(c, acq, x), q))


def adjoint_F(c, acq, data):
    """Adjoint of :func:`forward_F`: advance, scale, and stack traces."""
    _check_forward_inputs(c, acq)
    values = data.values if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data))
    if values.shape != (acq.n_receivers, acq.nt):
        raise DimensionMismatchError(
            f"data must have shape {(acq.n_receivers, acq.nt)}, got {values.shape}"
        )
    return _complexified(
        lambda y: _shift_gather(c, acq, y.reshape(acq.n_receivers, acq.nt)),
        values.ravel(),
    )


def forward_operator(c, acq):
    """The propagator as a LinearOperator on flattened traces."""
    _check_forward_inputs(c, acq)
    nrec, nt = acq.n_receivers, acq.nt

    def mv(x):
        return _complexified(lambda v: _shift_stack(c, acq, v).ravel(), x)

    def rmv(y):
        return _complexified(
            lambda v: _shift_gather(c, acq, v.reshape(nrec, nt)), y
        )

    return FunctionOperator(nrec * nt, nt, mv, rmv)


def dense_forward_matrix(c, acq):
    """Materialize the propagator as a real ``(n_rec * nt, nt)`` matrix.

    Each receiver block is the leading ``nt x nt`` crop of the circulant
    delay kernel on the padded grid, so assembly costs one FFT per receiver
    instead of one per column. Identical to applying :func:`forward_F` to
    basis vectors, to roundoff.
    """
    _check_forward_inputs(c, acq)
    phases, N = _phase_factors(c, acq)
    nt = acq.nt
    F = np.empty((acq.n_receivers * nt, nt))
    row_idx = (-np.arange(nt)) % N
    for i in range(acq.n_receivers):
        ker = np.fft.ifft(phases[i]).real
        F[i * nt : (i + 1) * nt, :] = toeplitz(ker[:nt], ker[row_idx])
    return F


def kernel_matrix(c, acq):
    """Dense correlation kernel ``K = F F^T`` on flattened traces."""
    F = dense_forward_matrix(c, acq)
    K = F @ F.T
    return 0.5 * (K + K.T)


def kernel_k(c, acq):
    """Receiver-pair kernels as lag traces.

    Panel (i, j) is the forward-adjoint round trip for the receiver pair,
    a spike pushed through the adjoint of receiver j and the forward of
    receiver i. The composition is evaluated on the padded circle (phase
    symbol ``ph_i * conj(ph_j)``), so each trace is the pure convolution
    kernel free of window-edge artifacts: one band-limited event at lag
    ``(r_i - r_j)/c`` with weight ``1/(r_i r_j)``, and panel (i, j) exactly
    the time reverse of panel (j, i).
    """
    _check_forward_inputs(c, acq)
    nrec, nt = acq.n_receivers, acq.nt
    r = acq.distances()
    max_lag = (r.max() - r.min()) / c
    mid = nt // 2
    if max_lag > mid * acq.dt:
        raise RejectedInputError(
            f"record of {nt} samples at dt = {acq.dt} cannot hold the "
            f"kernel lag range +-{max_lag:.3f}s for c = {c}"
        )
    phases, N = _phase_factors(c, acq)
    lags = (np.arange(nt) - mid) * acq.dt
    idx = (np.arange(nt) - mid) % N
    traces = np.empty((nrec, nrec, nt))
    for i in range(nrec):
        for j in range(nrec):
            ring = np.fft.ifft(phases[i] * phases[j].conj()).real
            traces[i, j, :] = ring[idx]
    return KernelPanels(lags=lags, traces=traces, c=float(c))
