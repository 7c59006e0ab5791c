"""Experiment command line: verification suites and the toy pipeline.

Commands consume a strict JSON config (unknown keys rejected) and write CSV
data plus a ``manifest.json`` per run. Plots are left to external tools;
everything emitted here is plain data at full precision so reruns with the
same config and seed are byte-identical.

Exit codes: 0 success, 1 check failure, 2 usage or config error.
"""

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import XfwiError
from .formulations import (
    fd_gradient,
    grad_phi,
    helmholtz_problem,
    verify_equivalence,
    verify_matrix_identity,
)
from .linops import CovarianceSpec
from .toy import (
    ToyConfig,
    acquisition,
    estimate_extended_source,
    half_max_basin_width,
    make_wavelet,
    scan_objective,
)
from .wavemodel import HelmholtzModel1D, assemble_A, kernel_k


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG = {
    "toy": {
        "c_true": 2.0,
        "receiver_distances": [0.8, 1.0, 1.2],
        "nt": 512,
        "dt": 0.004,
        "wavelet": "ricker",
        "f0": 10.0,
        "t0": 0.15,
        "sigma_m": 1.0,
        "sigma_p": 1.0,
        "scan": [1.5, 2.5, 101],
        "floor": 1e-6,
    },
    "equiv": {
        "instances": 20,
        "n": 20,
        "h": 0.05,
        "omega": 30.0,
        "boundary": "sommerfeld",
        "receivers": [3, 9, 15],
        "sigma_m": 1.0,
        "sigma_p": 1.0,
        "sigma_m_kind": "dense",
        "sigma_p_kind": "dense",
        "m_min": 0.2,
        "m_max": 0.4,
        "data": "random",
    },
    "grad": {
        "n": 20,
        "omega": 6.0,
        "boundary": "sommerfeld",
        "sigma_m_rel": 0.1,
        "data": "perturbed",
        "fd_step": 1e-4,
    },
}


def load_config(path):
    """Merge a JSON config over the defaults, rejecting unknown keys."""
    if path is None:
        return json.loads(json.dumps(DEFAULT_CONFIG)), _digest_bytes(
            _canonical_bytes(DEFAULT_CONFIG)
        )
    raw = Path(path).read_bytes()
    try:
        user = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError("config must be a JSON object")
    merged = json.loads(json.dumps(DEFAULT_CONFIG))
    for section, values in user.items():
        if section not in merged:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"section {section!r} must be an object")
        for key, val in values.items():
            if key not in merged[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            merged[section][key] = val
    _validate_weights(merged)
    return merged, _digest_bytes(raw)


def _canonical_bytes(cfg):
    return json.dumps(cfg, sort_keys=True).encode()


def _digest_bytes(data):
    return hashlib.sha256(data).hexdigest()


def _validate_weights(cfg):
    for section in ("toy", "equiv"):
        sec = cfg[section]
        if sec["sigma_m"] == 0 and sec["sigma_p"] == 0:
            raise ConfigError("degenerate weights: sigma_m and sigma_p are both zero")


@dataclass
class RunManifest:
    """Provenance record written once per run as ``manifest.json``."""

    command: str
    config_path: str | None
    output_dir: str
    timestamp: str
    tool_version: str
    config_digest: str
    seed: int
    status: str = "running"


def _start_manifest(command, args, digest):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        command=command,
        config_path=args.config,
        output_dir=str(out),
        timestamp=datetime.now(timezone.utc).isoformat(),
        tool_version=__version__,
        config_digest=digest,
        seed=args.seed,
    )
    _write_manifest(out, manifest)
    return out, manifest


def _write_manifest(out, manifest):
    (out / "manifest.json").write_text(
        json.dumps(asdict(manifest), indent=2, sort_keys=True) + "\n"
    )


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path, header, rows):
    # '.' decimals, '\n' line endings, 17 significant digits.
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# instance builders (shared with the test suite)


def random_covariance(kind, dim, scale, rng):
    """Random SPD weight of the requested kind at the requested scale."""
    if kind == "scaled":
        return CovarianceSpec.scaled_identity(scale**2, dim)
    if kind == "diagonal":
        return CovarianceSpec.diagonal(scale**2 * (0.5 + rng.random(dim)))
    if kind == "dense":
        B = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        return CovarianceSpec.dense(scale**2 * (B @ B.conj().T / dim + np.eye(dim)))
    raise ConfigError(f"unknown covariance kind {kind!r}")


def make_equiv_instances(settings, seed):
    """Yield (instance_id, problem, medium) tuples for the equivalence suite."""
    rng = np.random.default_rng(seed)
    n = int(settings["n"])
    model = HelmholtzModel1D(
        n=n,
        h=float(settings["h"]),
        omega=float(settings["omega"]),
        boundary=settings["boundary"],
    )
    receivers = [int(i) for i in settings["receivers"]]
    for instance_id in range(int(settings["instances"])):
        m = rng.uniform(settings["m_min"], settings["m_max"], size=n)
        q = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        if settings["data"] == "consistent":
            A = assemble_A(model, m).matrix
            u = np.linalg.solve(A, q)
            d = u[receivers]
        else:
            d = rng.standard_normal(len(receivers)) + 1j * rng.standard_normal(
                len(receivers)
            )
        sigma_m = random_covariance(
            settings["sigma_m_kind"], len(receivers), float(settings["sigma_m"]), rng
        )
        sigma_p = random_covariance(
            settings["sigma_p_kind"], n, float(settings["sigma_p"]), rng
        )
        yield instance_id, helmholtz_problem(model, receivers, q, d, sigma_m, sigma_p), m


def gradient_problem(settings, seed, n=None):
    """A smooth, well-scaled instance for gradient verification.

    Data are synthesized from a smooth true medium and the objective is
    evaluated at a smoothly perturbed one, so every component of the
    gradient is driven well above the finite-difference noise floor. With
    ``data = "consistent"`` the evaluation point is the true medium and the
    gradient vanishes.
    """
    rng = np.random.default_rng(seed)
    n = int(settings["n"]) if n is None else int(n)
    model = HelmholtzModel1D(
        n=n, h=1.0 / n, omega=float(settings["omega"]), boundary=settings["boundary"]
    )
    receivers = [n // 6, n // 2, (5 * n) // 6]
    x = np.linspace(0.0, 1.0, n)
    bump = np.exp(-((x - 0.5) ** 2) / 0.1)
    m_true = 0.25 * (1.0 + 0.2 * np.sin(2 * np.pi * x) * bump)
    q = np.exp(-((x - 0.35) ** 2) / (2 * 0.05**2)) * (
        1.0 + 0.1 * rng.standard_normal(n)
    ) + 0j
    A = assemble_A(model, m_true).matrix
    d = np.linalg.solve(A, q)[receivers]
    sigma_m = CovarianceSpec.scaled_identity(
        (float(settings["sigma_m_rel"]) * np.linalg.norm(d)) ** 2, len(receivers)
    )
    sigma_p = CovarianceSpec.scaled_identity(1.0, n)
    prob = helmholtz_problem(model, receivers, q, d, sigma_m, sigma_p)
    if settings["data"] == "consistent":
        return prob, m_true
    m_eval = m_true * (1.0 + 0.04 * np.cos(3 * np.pi * x))
    return prob, m_eval


# ---------------------------------------------------------------------------
# commands


def cmd_equiv_check(args):
    cfg, digest = load_config(args.config)
    out, manifest = _start_manifest("equiv-check", args, digest)
    rows = []
    worst = 0.0
    for instance_id, prob, m in make_equiv_instances(cfg["equiv"], args.seed):
        rep = verify_equivalence(prob, [m])
        ident = verify_matrix_identity(prob, m)
        s = rep.samples[0]
        worst = max(worst, s.rel_gap)
        rows.append((instance_id, s.phi_joint, s.phi_reduced, s.rel_gap, ident))
    write_csv(
        out / "equivalence.csv",
        ["instance_id", "phi_joint", "phi_reduced", "rel_gap", "identity_max_err"],
        rows,
    )
    ok = worst <= 1e-9
    manifest.status = "ok" if ok else "failed"
    _write_manifest(out, manifest)
    print(f"equiv-check: {len(rows)} instances, worst rel gap {worst:.3e}")
    return 0 if ok else 1


def cmd_grad_check(args):
    cfg, digest = load_config(args.config)
    out, manifest = _start_manifest("grad-check", args, digest)
    prob, m = gradient_problem(cfg["grad"], args.seed)
    analytic = grad_phi(prob, m)
    fd = fd_gradient(prob, m, rel_step=float(cfg["grad"]["fd_step"]))
    paper = grad_phi(prob, m, variant="paper")
    floor = 1e-9 * (1.0 + np.max(np.abs(fd)))
    rel = np.abs(analytic - fd) / (np.abs(fd) + floor)
    rel_paper = np.abs(paper - fd) / (np.abs(fd) + floor)
    rows = [
        (k, analytic[k], fd[k], rel[k], paper[k], rel_paper[k])
        for k in range(len(analytic))
    ]
    write_csv(
        out / "gradient.csv",
        [
            "component_k",
            "analytic",
            "fd_central",
            "rel_err",
            "paper_variant",
            "paper_variant_rel_err",
        ],
        rows,
    )
    ok = bool(np.all(rel <= 1e-4))
    manifest.status = "ok" if ok else "failed"
    _write_manifest(out, manifest)
    print(
        f"grad-check: n={len(analytic)}, max rel err {rel.max():.3e}, "
        f"paper-variant max rel err {rel_paper.max():.3e}"
    )
    return 0 if ok else 1


def _toy_config(cfg):
    t = cfg["toy"]
    return ToyConfig(
        c_true=float(t["c_true"]),
        receiver_distances=tuple(t["receiver_distances"]),
        nt=int(t["nt"]),
        dt=float(t["dt"]),
        wavelet=t["wavelet"],
        f0=float(t["f0"]),
        t0=float(t["t0"]),
        sigma_m=float(t["sigma_m"]),
        sigma_p=float(t["sigma_p"]),
        scan=tuple(t["scan"]),
        floor=float(t["floor"]),
    )


def cmd_kernel(args):
    cfg, digest = load_config(args.config)
    out, manifest = _start_manifest("kernel", args, digest)
    toy_cfg = _toy_config(cfg)
    acq = acquisition(toy_cfg)
    panels = kernel_k(toy_cfg.c_true, acq)
    dists = acq.distances()
    peak_rows = []
    ok = True
    for i in range(acq.n_receivers):
        for j in range(acq.n_receivers):
            trace = panels.traces[i, j]
            write_csv(
                out / f"kernel_{i + 1}{j + 1}.csv",
                ["lag", "value"],
                list(zip(panels.lags, trace)),
            )
            expected = (dists[i] - dists[j]) / toy_cfg.c_true
            measured = float(panels.lags[int(np.argmax(np.abs(trace)))])
            delta = abs(measured - expected)
            ok = ok and delta <= toy_cfg.dt
            peak_rows.append((i + 1, j + 1, expected, measured, delta))
    write_csv(
        out / "kernel_peaks.csv",
        ["i", "j", "expected_lag", "measured_lag", "abs_delta"],
        peak_rows,
    )
    manifest.status = "ok" if ok else "failed"
    _write_manifest(out, manifest)
    print(f"kernel: {len(peak_rows)} panels written")
    return 0 if ok else 1


def cmd_scan(args):
    cfg, digest = load_config(args.config)
    out, manifest = _start_manifest("scan", args, digest)
    toy_cfg = _toy_config(cfg)
    conv = scan_objective(toy_cfg, "conventional")
    ext = scan_objective(toy_cfg, "extended")
    status = [
        "ok" if sc == se == "ok" else f"{sc}/{se}"
        for sc, se in zip(conv.status, ext.status)
    ]
    rows = [
        (
            conv.c_values[k],
            conv.phi_norm[k],
            ext.phi_norm[k],
            conv.phi_raw[k],
            ext.phi_raw[k],
            ext.iterations[k],
            status[k],
        )
        for k in range(len(conv.c_values))
    ]
    write_csv(
        out / "scan.csv",
        [
            "c",
            "phi_conventional_norm",
            "phi_extended_norm",
            "phi_conventional_raw",
            "phi_extended_raw",
            "iters_ext",
            "status",
        ],
        rows,
    )
    summary = {
        "argmin": {"conventional": conv.argmin_c, "extended": ext.argmin_c},
        "basin_width_half_max": {
            "conventional": half_max_basin_width(conv.c_values, conv.phi_norm),
            "extended": half_max_basin_width(ext.c_values, ext.phi_norm),
        },
        "phi_min_raw": {
            "conventional": float(np.nanmin(conv.phi_raw)),
            "extended": float(np.nanmin(ext.phi_raw)),
        },
        "points_ok": sum(1 for s in status if s == "ok"),
        "points_total": len(status),
    }
    (out / "scan_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )
    ok = summary["points_ok"] >= 0.95 * summary["points_total"]
    manifest.status = "ok" if ok else "failed"
    _write_manifest(out, manifest)
    print(
        f"scan: argmin conventional {conv.argmin_c}, extended {ext.argmin_c}; "
        f"basins {summary['basin_width_half_max']}"
    )
    return 0 if ok else 1


def cmd_extsrc(args):
    cfg, digest = load_config(args.config)
    out, manifest = _start_manifest("extsrc", args, digest)
    toy_cfg = _toy_config(cfg)
    times = np.arange(toy_cfg.nt) * toy_cfg.dt
    q = make_wavelet(toy_cfg)
    velocities = args.c if args.c else [1.8, 2.2]
    for c in velocities:
        res = estimate_extended_source(toy_cfg, c, regime=args.regime)
        write_csv(
            out / f"extsrc_c{c:g}.csv",
            ["t", "q", "f", "q_plus_f"],
            list(zip(times, q, res.extension, res.q_plus_f)),
        )
        rows = []
        for i in range(res.observed.n_receivers):
            for k in range(toy_cfg.nt):
                rows.append(
                    (
                        times[k],
                        i + 1,
                        res.observed.values[i, k],
                        res.clean.values[i, k],
                        res.fitted.values[i, k],
                    )
                )
        write_csv(
            out / f"extdata_c{c:g}.csv",
            ["t", "receiver_id", "observed", "clean_model", "fitted"],
            rows,
        )
        print(
            f"extsrc c={c:g} ({args.regime}): fit rel {res.fit_rel:.3e}, "
            f"|f|/|q| {res.extension_ratio:.3e}"
        )
    manifest.status = "ok"
    _write_manifest(out, manifest)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="xfwi",
        description="Extended/weighted waveform-inversion experiments and checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "equiv-check": (cmd_equiv_check, "verify joint/reduced equivalence"),
        "grad-check": (cmd_grad_check, "verify the gradient against differences"),
        "kernel": (cmd_kernel, "write receiver-pair kernel panels"),
        "scan": (cmd_scan, "scan the objective over velocity"),
        "extsrc": (cmd_extsrc, "estimate extended sources at trial velocities"),
    }
    for name, (fn, help_text) in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="JSON config path")
        p.add_argument("--out", default="xfwi_out", help="output directory")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument(
            "--regime",
            choices=["conventional", "extended", "general"],
            default="extended",
        )
        if name == "extsrc":
            p.add_argument(
                "--c",
                type=float,
                action="append",
                help="trial velocity in km/s (repeatable; default 1.8 and 2.2)",
            )
        p.set_defaults(func=fn)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except XfwiError as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
