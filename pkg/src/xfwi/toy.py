"""Constant-velocity toy experiment.

A point source at the origin, three receivers at fixed distances, data
synthesized at the true velocity, and the reduced objective scanned over a
velocity grid in its two limiting regimes: vanishing process uncertainty
("conventional", the plain data misfit) and vanishing measurement
uncertainty ("extended", where the misfit is measured through the
correlation kernel and a time-extended source absorbs what it can of the
residual).

Limits are realized with small positive floors scaled by the data norm, so
every solve stays well posed.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import RejectedInputError, XfwiError
from .solvers import SolveReport, mdd_solve
from .wavemodel import (
    Acquisition,
    Dataset,
    adjoint_F,
    forward_F,
    kernel_matrix,
)

REGIMES = ("conventional", "extended", "general")


@dataclass(frozen=True)
class ToyConfig:
    """Experiment configuration; defaults use the three-offset reference geometry."""

    c_true: float = 2.0
    receiver_distances: tuple = (0.8, 1.0, 1.2)
    nt: int = 512
    dt: float = 0.004
    wavelet: str = "ricker"
    f0: float = 10.0
    t0: float = 0.15
    sigma_m: float = 1.0
    sigma_p: float = 1.0
    scan: tuple = (1.5, 2.5, 101)
    floor: float = 1e-6

    def __post_init__(self):
        if not self.c_true > 0:
            raise RejectedInputError("c_true must be positive")
        dists = tuple(float(r) for r in self.receiver_distances)
        object.__setattr__(self, "receiver_distances", dists)
        if any(r <= 0 for r in dists) or len(set(dists)) != len(dists):
            raise RejectedInputError("receiver distances must be positive and distinct")
        if self.nt < 2 or not self.dt > 0:
            raise RejectedInputError("need nt >= 2 and dt > 0")
        if self.wavelet not in ("ricker", "spike"):
            raise RejectedInputError(f"unknown wavelet {self.wavelet!r}")
        if self.wavelet == "ricker" and not self.f0 < 0.25 / self.dt:
            # Nyquist is 1/(2 dt); keep the peak frequency below half of it.
            raise RejectedInputError(
                f"f0 = {self.f0} Hz would alias at dt = {self.dt}"
            )
        c_min, c_max, n_points = self.scan
        if not (0 < c_min < c_max) or int(n_points) < 2:
            raise RejectedInputError("scan range must be positive and ordered")
        object.__setattr__(self, "scan", (float(c_min), float(c_max), int(n_points)))
        if self.sigma_m < 0 or self.sigma_p < 0 or self.sigma_m == self.sigma_p == 0:
            raise RejectedInputError("weights must be nonnegative, not both zero")
        if not self.floor > 0:
            raise RejectedInputError("limit floor must be positive")


def acquisition(cfg):
    """Source at the origin, receivers along the x axis at the set offsets."""
    rec = np.zeros((len(cfg.receiver_distances), 3))
    rec[:, 0] = cfg.receiver_distances
    return Acquisition(
        source_position=np.zeros(3),
        receiver_positions=rec,
        nt=cfg.nt,
        dt=cfg.dt,
    )


def make_wavelet(cfg):
    """Source time function: unit-peak Ricker or a single spike."""
    t = np.arange(cfg.nt) * cfg.dt
    if cfg.wavelet == "spike":
        q = np.zeros(cfg.nt)
        k = int(round(cfg.t0 / cfg.dt))
        if not 0 <= k < cfg.nt:
            raise RejectedInputError(f"spike time {cfg.t0} falls outside the record")
        q[k] = 1.0
        return q
    arg = (np.pi * cfg.f0 * (t - cfg.t0)) ** 2
    return (1.0 - 2.0 * arg) * np.exp(-arg)


def synthesize_data(cfg):
    """Noise-free data at the true velocity; the target of the inversion."""
    return forward_F(cfg.c_true, acquisition(cfg), make_wavelet(cfg))


def _regime_weights(cfg, regime, data_norm):
    if regime == "extended":
        return cfg.sigma_p, cfg.floor * data_norm
    if regime == "conventional":
        return cfg.floor * data_norm, cfg.sigma_m
    if regime == "general":
        return cfg.sigma_p, cfg.sigma_m
    raise RejectedInputError(f"unknown regime {regime!r}")


@dataclass
class ExtendedSourceResult:
    c: float
    regime: str
    r_tilde: np.ndarray
    extension: np.ndarray
    q_plus_f: np.ndarray
    fitted: Dataset
    clean: Dataset
    observed: Dataset
    report: SolveReport
    fit_rel: float
    extension_ratio: float


def estimate_extended_source(cfg, c, regime="extended"):
    """Best time-extended source at a trial velocity and the data it predicts.

    Solves the deconvolution system
    ``(sigma_p^2 K(c) + sigma_m^2 I) r_tilde = F(c) q - d`` and maps the
    weighted residual back through the adjoint, ``f = -sigma_p^2 F(c)^*
    r_tilde``, which is the minimizer of the extended-source objective
    (equivalently ``+sigma_p^2 F^*`` applied to the solve against
    ``d - F(c) q``). Returns the extension together with the fitted data
    ``F(c)(q + f)``; the fit never degrades the plain misfit.
    """
    if not c > 0:
        raise RejectedInputError("velocity must be positive")
    acq = acquisition(cfg)
    q = make_wavelet(cfg)
    observed = synthesize_data(cfg)
    clean = forward_F(c, acq, q)
    r = clean.values.ravel() - observed.values.ravel()
    d_norm = float(np.linalg.norm(observed.values))
    sigma_p, sigma_m = _regime_weights(cfg, regime, d_norm)
    K = kernel_matrix(c, acq)
    report = mdd_solve(K, sigma_p, sigma_m, r)
    f = -sigma_p**2 * adjoint_F(c, acq, report.solution.reshape(clean.values.shape).real)
    fitted = forward_F(c, acq, q + f)
    fit_rel = float(np.linalg.norm(fitted.values - observed.values) / d_norm)
    return ExtendedSourceResult(
        c=float(c),
        regime=regime,
        r_tilde=report.solution,
        extension=f,
        q_plus_f=q + f,
        fitted=fitted,
        clean=clean,
        observed=observed,
        report=report,
        fit_rel=fit_rel,
        extension_ratio=float(np.linalg.norm(f) / np.linalg.norm(q)),
    )


@dataclass
class ScanResult:
    """Objective values over the velocity grid, raw and max-normalized."""

    regime: str
    c_values: np.ndarray
    phi_raw: np.ndarray
    phi_norm: np.ndarray
    iterations: np.ndarray
    relres: np.ndarray
    status: list = field(default_factory=list)

    @property
    def argmin_c(self):
        return float(self.c_values[int(np.nanargmin(self.phi_raw))])

    @property
    def n_ok(self):
        return sum(1 for s in self.status if s == "ok")


def scan_objective(cfg, regime):
    """Evaluate the objective over the configured velocity grid.

    The conventional regime uses the analytic vanishing-process limit
    ``||r||^2 / sigma_m^2`` (no kernel solve); the extended regime solves
    the kernel-weighted system with the measurement floor; the general
    regime uses both configured weights. Per-point failures are recorded in
    ``status`` and the scan continues. Curves are normalized by their
    maximum so regimes of incomparable scale can be overlaid.
    """
    if regime not in REGIMES:
        raise RejectedInputError(f"unknown regime {regime!r}")
    c_min, c_max, n_points = cfg.scan
    c_values = np.linspace(c_min, c_max, n_points)
    acq = acquisition(cfg)
    q = make_wavelet(cfg)
    observed = synthesize_data(cfg)
    d_flat = observed.values.ravel()
    d_norm = float(np.linalg.norm(d_flat))
    sigma_p, sigma_m = _regime_weights(cfg, regime, d_norm)

    phi = np.full(n_points, np.nan)
    iters = np.zeros(n_points, dtype=int)
    relres = np.zeros(n_points)
    status = []
    for k, c in enumerate(c_values):
        try:
            r = forward_F(c, acq, q).values.ravel() - d_flat
            if regime == "conventional":
                phi[k] = float(r @ r) / cfg.sigma_m**2
            else:
                K = kernel_matrix(c, acq)
                rep = mdd_solve(K, sigma_p, sigma_m, r)
                phi[k] = max(float(np.vdot(r, rep.solution).real), 0.0)
                iters[k] = rep.iterations
                relres[k] = rep.relative_residual
            status.append("ok")
        except XfwiError as exc:
            status.append(type(exc).__name__)
    top = np.nanmax(phi) if np.any(np.isfinite(phi)) else 1.0
    phi_norm = phi / (top if top > 0 else 1.0)
    return ScanResult(
        regime=regime,
        c_values=c_values,
        phi_raw=phi,
        phi_norm=phi_norm,
        iterations=iters,
        relres=relres,
        status=status,
    )


def half_max_basin_width(c_values, phi_norm):
    """Width of the contiguous interval around the minimum with phi <= 1/2."""
    finite = np.where(np.isfinite(phi_norm), phi_norm, np.inf)
    i0 = int(np.argmin(finite))
    lo = i0
    while lo > 0 and finite[lo - 1] <= 0.5:
        lo -= 1
    hi = i0
    while hi < len(c_values) - 1 and finite[hi + 1] <= 0.5:
        hi += 1
    return float(c_values[hi] - c_values[lo])
