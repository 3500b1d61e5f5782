"""Command-line entry point: ``nhbm {simulate,verify,field,pde,compare}``.

Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure
or a failed verification.
"""
import argparse
import math
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__
from . import burgers, compare, field, io, suites
from .config import ConfigError, echo, load_config, parse_complex
from .errors import NumericError, ShockDetected
from .process import run_ensemble

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

FIELD_COLUMNS = ["t", "re_z", "im_z", "re_w", "im_w", "psi", "fk_det", "re_dpsi_dw", "im_dpsi_dw",
                 "mu_lambda", "mu_overlap"]
PAIRING_COLUMNS = ["w_modulus", "xi", "theta", "xi_exact", "theta_exact", "xi_error", "theta_error"]
DENSITY_COLUMNS = ["t", "re_z", "im_z", "rho", "overlap_density", "in_support"]
CLOSED_COLUMNS = ["rho_closed", "overlap_closed", "in_support_closed"]
COMPARE_COLUMNS = ["measure", "r_lo", "r_hi", "estimate", "prediction", "std_error", "z", "rel_error"]


class Run:
    """Collects outputs and timing for the manifest of one command."""

    def __init__(self, command, args, cfg=None, seed=None):
        self.command = command
        self.out = args.out
        self.fmt = args.format
        self.cfg = cfg
        self.seed = seed
        self.outputs = []
        self.started = datetime.now(timezone.utc)
        self.clock = time.perf_counter()

    def path(self, name):
        return os.path.join(self.out, name)

    def table(self, stem, rows, columns):
        path = self.path(f"{stem}.{self.fmt}")
        io.write_table(path, rows, columns, self.fmt)
        self.outputs.append(path)
        return path

    def json(self, name, obj):
        path = self.path(name)
        io.write_json(path, obj)
        self.outputs.append(path)
        return path

    def text(self, name, text):
        path = self.path(name)
        io.atomic_write_text(path, text)
        self.outputs.append(path)
        return path

    def finish(self, summary):
        ended = datetime.now(timezone.utc)
        manifest = {
            "command": self.command,
            "version": __version__,
            "config": echo(self.cfg) if self.cfg is not None else None,
            "seed": self.seed,
            "start_time": self.started.isoformat(),
            "end_time": ended.isoformat(),
            "wall_seconds": time.perf_counter() - self.clock,
            "outputs": [{"path": p, "sha256": io.file_digest(p), "bytes": os.path.getsize(p)}
                        for p in self.outputs],
            "summary": summary,
        }
        io.write_json(self.path(f"{self.command}.manifest.json"), manifest)
        return manifest


def _require_config(args):
    if args.config is None:
        raise ConfigError("--config is required for this command")
    return load_config(args.config)


def _float_list(value, key):
    if not isinstance(value, (list, tuple)):
        value = [value]
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a list of numbers") from None


def _grid(sec, default_extent, default_resolution):
    extent = float(sec.get("extent", default_extent))
    resolution = int(sec.get("resolution", default_resolution))
    centre = parse_complex(sec.get("centre", 0))
    if resolution < 1 or not extent > 0:
        raise ConfigError("grid is empty: need resolution >= 1 and extent > 0")
    ax = np.linspace(-extent, extent, resolution) if resolution > 1 else np.zeros(1)
    return centre.real + ax, centre.imag + ax


# ---- simulate ---------------------------------------------------------------

def cmd_simulate(args):
    cfg = _require_config(args)
    pc = cfg.process(args.seed)
    run = Run("simulate", args, cfg, pc.seed)
    records = run_ensemble(pc, workers=args.workers)
    run.text("trajectories.jsonl", "".join(line + "\n" for line in io.trajectory_lines(records)))
    finite = [r.min_gap_seen for r in records if math.isfinite(r.min_gap_seen)]
    summary = {
        "n_traj": len(records),
        "n_steps": pc.n_steps,
        "retries": sum(r.retries for r in records),
        "min_gap_seen": min(finite) if finite else None,
        "displacement_fraction_max": max(r.displacement_fraction for r in records),
        "ok": True,
    }
    run.finish(summary)
    return EXIT_OK


# ---- verify -----------------------------------------------------------------

def _points(sec):
    pts = sec.get("points", [[1, 1]])
    try:
        return [(parse_complex(z), parse_complex(w)) for z, w in pts]
    except (TypeError, ValueError):
        raise ConfigError("verify.points must be a list of [z, w] pairs") from None


def cmd_verify(args):
    cfg = _require_config(args)
    seed = cfg.seed(args.seed)
    sec = cfg.section("verify")
    m = cfg.m0()
    samples = int(sec.get("samples", 100000))
    run = Run("verify", args, cfg, seed)
    names = ["frames", "sde", "spde", "fk"] if args.suite == "all" else [args.suite]
    rows = []
    for name in names:
        if name == "frames":
            rows += suites.frames_suite(m, seed, int(sec.get("random_frames", 20)))
        elif name == "sde":
            idx = sec.get("indices")
            idx = [tuple(map(int, p)) for p in idx] if idx is not None else None
            rows += suites.sde_suite(m, samples, float(sec.get("dt", 1e-6)), seed, idx)
        elif name == "spde":
            rows += suites.spde_suite(m, _points(sec), samples, float(sec.get("psi_dt", 1e-5)), seed)
        else:
            rows += suites.fk_suite(m, seed)
    run.json(f"verify_{args.suite}.json", rows)
    failed = [r["observable"] for r in rows if not r["pass"]]
    for r in rows:
        print(f"{'PASS' if r['pass'] else 'FAIL'} {r['observable']} z={r['z_score']:.3g}")
    run.finish({"suite": args.suite, "rows": len(rows), "failed": failed, "ok": not failed})
    return EXIT_OK if not failed else EXIT_NUMERIC


# ---- field ------------------------------------------------------------------

def cmd_field(args):
    cfg = _require_config(args)
    sec = cfg.section("field")
    m = cfg.m0()
    xs, ys = _grid(sec, 2.0, 41)
    ws = [parse_complex(w) for w in sec.get("w", [1e-1, 1e-2])]
    if not ws:
        raise ConfigError("field.w must list at least one value")
    t = float(sec.get("t", 0.0))
    run = Run("field", args, cfg)
    try:
        rows = field.field_grid(m, xs, ys, ws, t)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    run.table("field", rows, FIELD_COLUMNS)
    summary = {"nodes": len(xs) * len(ys), "w": [abs(w) for w in ws], "ok": True}
    pairing = sec.get("pairing")
    if pairing:
        pairing = pairing if isinstance(pairing, dict) else {}
        width = float(pairing.get("width", 1.0))
        centre = parse_complex(pairing.get("centre", 0))
        seq = _float_list(pairing.get("w", [1e-1, 1e-2, 1e-3]), "field.pairing.w")
        phi = lambda z: np.exp(-np.abs(z - centre) ** 2 / (2 * width**2))
        res = field.pairing_limit_w0(m, phi, seq, extent=abs(centre) + 8 * width)
        prow = [{"w_modulus": w, "xi": xi.real, "theta": th.real, "xi_exact": res.xi_exact.real,
                 "theta_exact": res.theta_exact.real, "xi_error": ex, "theta_error": et}
                for w, xi, th, ex, et in zip(res.w_moduli, res.xi_pairings, res.theta_pairings,
                                             res.xi_errors, res.theta_errors)]
        run.table("pairing", prow, PAIRING_COLUMNS)
        summary["pairing_final_errors"] = [res.xi_errors[-1], res.theta_errors[-1]]
    run.finish(summary)
    return EXIT_OK


# ---- pde --------------------------------------------------------------------

def _closed_form(spec, t, zs):
    if spec == "null":
        rho, ov, inside = burgers.origin_source_closed(t, zs)
        return rho, ov, inside
    if spec.startswith("two_sources:"):
        c = complex(spec.split(":", 1)[1])
        rho, ov, inside, _ = burgers.two_source_closed(t, zs, c)
        return rho, ov, inside
    return None


def cmd_pde(args):
    cfg = _require_config(args)
    sec = cfg.section("pde")
    m0 = cfg.m0()
    times = _float_list(sec.get("times", [1.0]), "pde.times")
    if any(not t > 0 for t in times):
        raise ConfigError("pde.times must be positive")
    xs, ys = _grid(sec, 2.0, 101)
    if len(xs) < 2:
        raise ConfigError("pde grid needs resolution >= 2")
    closed = cfg.m0_is_builtin
    run = Run("pde", args, cfg)
    rows = []
    masses = []
    for t in times:
        dens = burgers.density_fields(t, xs, ys, m0)
        zs = dens.nodes
        ref = _closed_form(cfg.m0_spec, t, zs) if closed else None
        masses.append({"t": t, "rho_mass": dens.mass()[0], "overlap_mass": dens.mass()[1]})
        for i in range(zs.shape[0]):
            for j in range(zs.shape[1]):
                row = {"t": t, "re_z": zs[i, j].real, "im_z": zs[i, j].imag, "rho": dens.rho[i, j],
                       "overlap_density": dens.overlap_density[i, j], "in_support": bool(dens.support_mask[i, j])}
                if ref is not None:
                    row["rho_closed"] = float(ref[0][i, j])
                    row["overlap_closed"] = float(ref[1][i, j])
                    row["in_support_closed"] = bool(ref[2][i, j])
                rows.append(row)
    run.table("density", rows, DENSITY_COLUMNS + (CLOSED_COLUMNS if closed else []))
    run.finish({"times": times, "masses": masses, "ok": True})
    return EXIT_OK


# ---- compare ----------------------------------------------------------------

def _atoms_at(dataset, t):
    samples_xi, samples_theta = [], []
    for row in dataset:
        if abs(row["t"] - t) > 1e-9 * max(1.0, abs(t)):
            continue
        lam = row["lambda"]
        n = lam.shape[0]
        samples_xi.append((lam, np.full(n, 1.0 / n)))
        samples_theta.append((lam, np.diag(row["overlap"]).real / n**2))
    return samples_xi, samples_theta


def cmd_compare(args):
    cfg = load_config(args.config) if args.config else None
    sec = cfg.section("compare") if cfg else {}
    try:
        dataset = io.read_dataset(args.dataset)
        density = io.read_csv(args.density)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read inputs: {exc}") from None
    if not dataset:
        raise ConfigError("dataset contains no trajectories")
    t = float(sec["t"]) if "t" in sec else max(row["t"] for row in dataset)
    xi_s, th_s = _atoms_at(dataset, t)
    if not xi_s:
        raise ConfigError(f"dataset has no frames at t={t}")
    dmask = np.abs(density["t"] - t) <= 1e-9 * max(1.0, abs(t))
    if not np.any(dmask):
        raise ConfigError(f"density table has no rows at t={t}")
    nodes = density["re_z"][dmask] + 1j * density["im_z"][dmask]
    width = float(sec.get("bin_width", 0.2))
    r_max = float(sec.get("r_max", np.abs(nodes).max()))
    edges = np.arange(0.0, r_max + 1e-12, width)
    radius = float(sec.get("disk_radius", 0.05))
    run = Run("compare", args, cfg)
    rows = []
    for label, samples, col in (("xi", xi_s, "rho"), ("theta", th_s, "overlap_density")):
        hist = compare.radial_histogram(samples, edges)
        rows += compare.compare_radial(hist, nodes, density[col][dmask], label)
        est, se, _ = compare.disk_density(samples, 0j, radius)
        pred = compare.annulus_average(density[col][dmask], nodes, 0.0, radius)
        z = abs(est - pred) / se if se > 0 else (0.0 if est == pred else math.inf)
        rows.append({"measure": f"{label}_disk", "r_lo": 0.0, "r_hi": radius, "estimate": est,
                     "prediction": pred, "std_error": se, "z": z,
                     "rel_error": abs(est - pred) / abs(pred) if pred else math.inf})
    run.table("compare", rows, COMPARE_COLUMNS)
    sup = {}
    for label in ("xi", "theta"):
        diffs = [abs(r["estimate"] - r["prediction"]) for r in rows
                 if r["measure"] == label and math.isfinite(r["prediction"])]
        sup[label] = max(diffs) if diffs else None
    means = [np.mean(np.diag(row["overlap"]).real) / row["lambda"].shape[0] for row in dataset
             if abs(row["t"] - t) <= 1e-9 * max(1.0, abs(t))]
    run.finish({"t": t, "n_traj": len(xi_s), "sup_discrepancy": sup,
                "mean_normalized_overlap_trace": float(np.mean(means)), "ok": True})
    return EXIT_OK


# ---- entry point ------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML run configuration")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
    common.add_argument("--seed", type=int, metavar="U64", help="overrides the config seed")
    common.add_argument("--workers", type=int, default=1, metavar="K", help="worker threads")
    common.add_argument("--format", choices=["csv", "json"], default="csv", help="table format")
    parser = argparse.ArgumentParser(prog="nhbm", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run the matrix process ensemble")
    p = sub.add_parser("verify", parents=[common], help="run invariant and moment suites")
    p.add_argument("suite", choices=["frames", "sde", "spde", "fk", "all"])
    sub.add_parser("field", parents=[common], help="dump the regularized log-determinant field")
    sub.add_parser("pde", parents=[common], help="solve for the limiting densities")
    p = sub.add_parser("compare", parents=[common], help="compare an ensemble with a density table")
    p.add_argument("dataset", help="JSON-lines trajectory dataset")
    p.add_argument("density", help="density CSV from the pde command")
    return parser


COMMANDS = {"simulate": cmd_simulate, "verify": cmd_verify, "field": cmd_field, "pde": cmd_pde,
            "compare": cmd_compare}


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("nhbm: error: --workers must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"nhbm: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ShockDetected as exc:
        print(f"nhbm: shock detected at z={exc.z} t={exc.t}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except NumericError as exc:
        print(f"nhbm: numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
