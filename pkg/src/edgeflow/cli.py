"""Command-line front end.

Subcommands dispatch to the computational modules and write CSV data
files plus one machine-readable JSON report per run.  Exit codes:
0 all checks passed, 1 usage/configuration error, 2 a numerical
acceptance check failed.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import time

import numpy as np

from . import lattice, reference, response, rgflow, spectrum

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    raise TypeError(f"not serializable: {type(obj)}")


def write_report(outdir, name, report):
    path = os.path.join(outdir, name)
    with open(path, "w") as f:
        json.dump(report, f, sort_keys=True, indent=2, default=_json_default)
        f.write("\n")
    return path


def write_csv(outdir, name, header, rows):
    path = os.path.join(outdir, name)
    with open(path, "w") as f:
        f.write("# " + ", ".join(header) + "\n")
        for row in rows:
            f.write(" ".join(f"{x:.12g}" if isinstance(x, float) else str(x) for x in row) + "\n")
    return path


def _base_report(args, command):
    return {
        "command": command,
        "seed": getattr(args, "seed", None),
        "inputs": {
            k: v
            for k, v in sorted(vars(args).items())
            if k not in ("func", "config", "out")
        },
        "checks": {},
    }


def _load_config(path):
    cfg = configparser.ConfigParser()
    if not cfg.read(path):
        raise FileNotFoundError(path)
    return cfg


def _build_model(args):
    if getattr(args, "config", None):
        return lattice.model_from_config(_load_config(args.config))
    if args.model is None:
        raise ValueError("missing --model (or --config with a model definition file)")
    g_kwargs = dict(L1=args.L1, L2=args.L2)
    if args.model == "haldane":
        g = lattice.CylinderGeometry(M=2, **g_kwargs)
        phi = -np.pi / 2 if getattr(args, "antichiral", False) else np.pi / 2
        m_stag = args.m_stag if args.m_stag is not None else (1.5 if getattr(args, "trivial", False) else 0.0)
        return lattice.haldane_cylinder(g, t2=args.t2, phi=phi, m_stag=m_stag)
    if args.model == "hofstadter":
        g = lattice.CylinderGeometry(M=1, **g_kwargs)
        return lattice.hofstadter_cylinder(g, p=args.p, q=args.q)
    if args.model == "stacked-haldane":
        g = lattice.CylinderGeometry(M=2, **g_kwargs)
        shifts = [float(s) for s in args.shifts.split(",")]
        flips = [s == "1" for s in (args.flips.split(",") if args.flips else ["0"] * len(shifts))]
        bases = [
            lattice.haldane_cylinder(g, t2=args.t2, phi=(-np.pi / 2 if f else np.pi / 2))
            for f in flips
        ]
        return lattice.stacked_shifted(bases, shifts)
    raise ValueError(f"unknown model {args.model!r}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_spectrum(args, outdir):
    ham = _build_model(args)
    report = _base_report(args, "spectrum")
    scan = spectrum.scan_spectrum(
        ham, n_k=args.n_k, window=(args.mu - args.window, args.mu + args.window),
        threads=args.threads,
    )
    rows = []
    for k1, es in zip(scan.k_grid, scan.energies):
        for e in es:
            rows.append((float(k1), float(e)))
    write_csv(outdir, "spectrum.csv", ["k1", "energy"], rows)
    report["n_states"] = scan.state_count()
    report["checks"]["scan_nonempty"] = scan.state_count() > 0
    return report


def cmd_edges(args, outdir):
    ham = _build_model(args)
    report = _base_report(args, "edges")
    scan = spectrum.scan_spectrum(
        ham, n_k=args.n_k, window=(args.mu - args.window, args.mu + args.window),
        threads=args.threads,
    )
    branches = spectrum.extract_edge_branches(scan, args.mu)
    rows = []
    for b in branches:
        for k1, e in zip(b.k_samples, b.energies):
            rows.append((b.label, float(k1), float(e), b.side))
    write_csv(outdir, "branches.csv", ["branch", "k1", "energy", "side"], rows)
    rep = spectrum.check_assumptions(branches, gamma_min=args.gamma_min)
    report["branches"] = [
        {
            "label": b.label,
            "side": b.side,
            "k_fermi": b.k_fermi,
            "velocity": b.velocity,
            "loc_rate": b.loc_rate,
            "loc_r2": b.loc_r2,
        }
        for b in branches
    ]
    report["assumption_report"] = {
        "gamma": rep.gamma,
        "flags": rep.flags,
        "diagnostics": {k: v for k, v in rep.diagnostics.items()},
    }
    report["checks"]["assumptions"] = rep.all_pass
    return report


def cmd_conductance(args, outdir):
    ham = _build_model(args)
    report = _base_report(args, "conductance")
    n_k = ham.geometry.L1
    a = args.a if args.a is not None else ham.geometry.L2 // 2 - 2
    a_prime = args.aprime if args.aprime is not None else ham.geometry.L2 // 4
    fibers = response.fiber_cache(ham, n_k, threads=args.threads)
    scan = spectrum.scan_spectrum(
        ham, n_k=max(64, 2 * n_k), window=(args.mu - args.window, args.mu + args.window)
    )
    branches = spectrum.extract_edge_branches(scan, args.mu)
    chi = sum(
        np.sign(b.velocity)
        for b in branches
        if b.side == "lower" and np.isfinite(b.k_fermi)
    )
    est = response.edge_conductance_free(
        ham, args.mu, n_k, a=a, a_prime=a_prime, p1_count=args.p1_count,
        chirality_sum=chi, fibers=fibers,
    )
    write_csv(outdir, "conductance.csv", ["p1", "G"], list(zip(est.p1_values, est.g_values)))
    target = est.target
    rel = abs(est.g - target) / abs(target) if target != 0 else abs(est.g) * 2 * np.pi
    report["G_extrapolated"] = est.g
    report["G_stderr"] = est.stderr
    report["two_pi_G"] = 2.0 * np.pi * est.g
    report["target"] = target
    report["relative_error"] = rel
    report["chirality_sum_lower"] = chi
    report["checks"]["conductance_matches_chirality"] = bool(rel <= args.tolerance)
    return report


def cmd_wick(args, outdir):
    ham = _build_model(args)
    report = _base_report(args, "wick")
    n_k = ham.geometry.L1
    fibers = response.fiber_cache(ham, n_k)
    a = ham.geometry.L2 // 2 - 2
    a_prime = ham.geometry.L2 // 4
    rows = []
    residuals = {}
    for beta in args.betas:
        lhs, rhs, res = response.wick_rotation_check(
            ham, args.mu, beta, args.T, args.eta, 1, n_k, a, a_prime, fibers=fibers
        )
        rows.append((beta, args.T, res))
        residuals[beta] = res
    write_csv(outdir, "wick.csv", ["beta", "T", "residual"], rows)
    betas = sorted(residuals)
    ratios = [residuals[b1] / residuals[b2] for b1, b2 in zip(betas, betas[1:])]
    report["residuals"] = {str(b): residuals[b] for b in betas}
    report["beta_doubling_ratios"] = ratios
    report["checks"]["beta_scaling"] = bool(all(r >= 1.8 for r in ratios))
    return report


def cmd_ref_check(args, outdir):
    report = _base_report(args, "ref-check")
    rng = np.random.default_rng(args.seed)
    errs = []
    worst = None
    for _ in range(args.ensemble_size):
        params = reference.random_params(
            rng, n_channels=args.channels, lambda_scale=args.lambda_scale
        )
        g = reference.edge_conductance(params)
        target = float(np.sum(np.sign(params.v))) / (2.0 * np.pi)
        err = abs(g - target)
        errs.append(err)
        if worst is None or err > worst[0]:
            worst = (err, params)
    errs = np.array(errs)
    report["max_abs_error"] = float(errs.max())
    report["mean_abs_error"] = float(errs.mean())
    report["worst_params"] = {
        "v": worst[1].v,
        "z": worst[1].z,
        "lam": worst[1].lam,
    }
    report["checks"]["universality"] = bool(errs.max() <= args.tolerance)
    return report


def cmd_bubble(args, outdir):
    report = _base_report(args, "bubble")
    if args.N_min > args.N:
        raise ValueError("--N-min must not exceed --N")
    exact = reference.bubble_closed(args.p0, args.p1, args.v)
    rows = []
    for n in range(args.N_min, args.N + 1, 2):
        est = reference.bubble_regularized(args.p0, args.p1, args.v, args.h, n, tol=args.tol)
        rows.append((n, args.h, est.real, est.imag, abs(est - exact)))
    write_csv(outdir, "bubble.csv", ["N", "h", "re", "im", "error"], rows)
    final_err = rows[-1][-1]
    report["estimate"] = {"re": rows[-1][2], "im": rows[-1][3]}
    report["closed_form"] = {"re": exact.real, "im": exact.imag}
    report["error"] = final_err
    report["checks"]["bubble_converged"] = bool(final_err <= 1e-3)
    return report


def cmd_rg(args, outdir):
    report = _base_report(args, "rg")
    vs = [float(x) for x in args.velocities.split(",")]
    n = len(vs)
    lam = np.full((n, n), args.lam)
    np.fill_diagonal(lam, 0.0)
    params = reference.LuttingerParams(v=vs, z=np.ones(n), lam=lam)
    traj = rgflow.flow_run(params, -args.scales)
    hs, zs, vels, lams = traj.arrays()
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    rows = []
    for i, h in enumerate(hs):
        row = [int(h)]
        row.extend(float(z) for z in zs[i])
        row.extend(float(v) for v in vels[i])
        row.extend(float(lams[i][a, b]) for a, b in pairs)
        bl = traj.betas[i - 1].beta_lambda_max if i > 0 else 0.0
        row.append(float(bl))
        rows.append(tuple(row))
    header = (
        ["h"]
        + [f"Z_{c}" for c in range(n)]
        + [f"v_{c}" for c in range(n)]
        + [f"lambda_{a}{b}" for a, b in pairs]
        + ["beta_lambda_max"]
    )
    write_csv(outdir, "rg_trajectory.csv", header, rows)
    rep = rgflow.vanishing_beta_report(traj)
    lam_scale = max(abs(args.lam), 1e-300)
    contained = bool(
        np.max(np.abs(lams - lams[0])) <= lam_scale**1.5
        and np.max(np.abs(vels - vels[0])) <= lam_scale**0.5
    )
    report["eta"] = rep["eta"]
    report["theta"] = rep["theta"]
    report["vanishing"] = rep["vanishing"]
    report["beta_lambda_max"] = float(np.max(rep["beta_lambda_max_per_scale"]))
    report["checks"]["containment"] = contained
    report["checks"]["eta_in_range"] = bool(
        np.all(rep["eta"] > 0) and np.all(rep["eta"] <= 10 * lam_scale**2)
    )
    return report


# ---------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument(
        "--threads", type=int, default=int(os.environ.get("EDGEFLOW_THREADS", "1"))
    )
    ap = argparse.ArgumentParser(prog="edgeflow", description=__doc__, parents=[common])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=argparse.ArgumentParser)

    def add_model_args(p):
        p.add_argument("--model", choices=["haldane", "hofstadter", "stacked-haldane"])
        p.add_argument("--config", help="model definition file (INI sections)")
        p.add_argument("--L1", type=int, default=24)
        p.add_argument("--L2", type=int, default=16)
        p.add_argument("--mu", type=float, default=0.15)
        p.add_argument("--t2", type=float, default=0.2)
        p.add_argument("--m-stag", dest="m_stag", type=float, default=None)
        p.add_argument("--trivial", action="store_true")
        p.add_argument("--antichiral", action="store_true")
        p.add_argument("--p", type=int, default=1)
        p.add_argument("--q", type=int, default=3)
        p.add_argument("--shifts", default="0.0,0.1,0.26")
        p.add_argument("--flips", default="")
        p.add_argument("--window", type=float, default=0.3)

    p = sub.add_parser("spectrum", parents=[common], help="band scan near the chemical potential")
    add_model_args(p)
    p.add_argument("--n-k", dest="n_k", type=int, default=96)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("edges", parents=[common], help="edge branches, Fermi data, assumption report")
    add_model_args(p)
    p.add_argument("--n-k", dest="n_k", type=int, default=96)
    p.add_argument("--gamma-min", dest="gamma_min", type=float, default=0.05)
    p.set_defaults(func=cmd_edges)

    p = sub.add_parser("conductance", parents=[common], help="free edge conductance with extrapolation")
    add_model_args(p)
    p.add_argument("--a", type=int, default=None)
    p.add_argument("--aprime", type=int, default=None)
    p.add_argument("--p1-count", dest="p1_count", type=int, default=3)
    p.add_argument("--tolerance", type=float, default=0.05)
    p.set_defaults(func=cmd_conductance)

    p = sub.add_parser("wick", parents=[common], help="real- vs imaginary-time response comparison")
    add_model_args(p)
    p.add_argument("--betas", type=float, nargs="+", default=[20.0, 40.0, 80.0])
    p.add_argument("--T", type=float, default=200.0)
    p.add_argument("--eta", type=float, default=2.0 * np.pi / 20.0 * (4.0 / 3.0))
    p.set_defaults(func=cmd_wick)

    p = sub.add_parser("ref-check", parents=[common], help="universality identity over a random ensemble")
    p.add_argument("--channels", type=int, default=None)
    p.add_argument("--ensemble-size", dest="ensemble_size", type=int, default=500)
    p.add_argument("--lambda-scale", dest="lambda_scale", type=float, default=0.1)
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.set_defaults(func=cmd_ref_check)

    p = sub.add_parser("bubble", parents=[common], help="regularized anomalous bubble convergence")
    p.add_argument("--v", type=float, default=1.0)
    p.add_argument("--p0", type=float, default=0.0)
    p.add_argument("--p1", type=float, default=1.0)
    p.add_argument("--h", type=int, default=-12)
    p.add_argument("--N", type=int, default=12)
    p.add_argument("--N-min", dest="N_min", type=int, default=8)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_bubble)

    p = sub.add_parser("rg", parents=[common], help="truncated flow over dyadic scales")
    p.add_argument("--channels", type=int, default=2)
    p.add_argument("--velocities", default="1.0,-1.0")
    p.add_argument("--lambda", dest="lam", type=float, default=0.05)
    p.add_argument("--scales", type=int, default=30)
    p.set_defaults(func=cmd_rg)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    os.makedirs(args.out, exist_ok=True)
    t0 = time.time()
    try:
        report = args.func(args, args.out)
    except (ValueError, FileNotFoundError, KeyError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report["wall_time_s"] = time.time() - t0
    path = write_report(args.out, f"report_{report['command'].replace('-', '_')}.json", report)
    ok = all(report["checks"].values()) if report["checks"] else True
    print(f"{report['command']}: {'PASS' if ok else 'FAIL'} ({path})")
    return EXIT_OK if ok else EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
