"""Batch command-line front-end.

Every subcommand writes its outputs atomically into ``--out`` together with
the resolved ``scenario.json`` and a ``<command>.manifest.json`` that
``hybrid-isac replay`` can re-run.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .coverage import (
    CoverageQuery,
    auto_region,
    coverage_mono_closed,
    coverage_numeric,
    optimal_ue_sweep,
    peb_cdf,
    write_field_csv,
    write_pgm,
)
from .crlb import (
    crlb_hybrid_position,
    crlb_mono_position,
    crlb_position_limit,
    crlb_velocity,
    optimal_bistatic_angle,
)
from .estimator import EstimationError, FftOversampling, monte_carlo, run_trial, write_mc_csv
from .fisher import fisher_set
from .scenario import Scenario, ScenarioError, derive_geometry, load_scenario, paper_scenario, scenario_from_dict
from .signal_sim import write_grid

log = logging.getLogger("hybrid_isac")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class NumericalFailure(RuntimeError):
    pass


@contextlib.contextmanager
def atomic_open(path, mode: str = "w"):
    """Write to a temp file next to ``path`` and rename it into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    kw = {} if "b" in mode else {"newline": "", "encoding": "utf-8"}
    umask = os.umask(0)
    os.umask(umask)
    os.chmod(tmp, 0o666 & ~umask)
    try:
        with os.fdopen(fd, mode, **kw) as fh:
            yield fh
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def fmt(x) -> str:
    """Locale-independent float rendering; infinities as ``inf``."""
    if x is None:
        return ""
    x = float(x)
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _write_rows(path, header, rows):
    with atomic_open(path) as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(v if isinstance(v, str) else fmt(v) for v in r) + "\n")


# ---------------------------------------------------------------- commands

PEB_COLUMNS = ["q_x_m", "q_y_m", "qU_x_m", "qU_y_m", "peb_mono_m", "peb_h_m", "peb_limit_m",
               "veb_mps", "psi_rad", "rho", "psi_opt_rad"]


def peb_point_row(sc: Scenario, q, q_U):
    cfg, lb = sc.cfg, sc.link
    q = np.asarray(q, dtype=float)
    g0 = derive_geometry(q, q + np.array([1.0, 0.0]))
    mono = float(crlb_mono_position(cfg, lb, g0).peb)
    if q_U is None:
        return [q[0], q[1], "", "", mono, "", "", "", "", "", ""]
    q_U = np.asarray(q_U, dtype=float)
    g = derive_geometry(q, q_U)
    if not g.r_U > 0:
        raise ScenarioError("UE and target coincide")
    fs = fisher_set(cfg, lb, g)
    rho = float(fs.I_fDB / fs.I_fDU)
    return [q[0], q[1], q_U[0], q_U[1], mono, crlb_hybrid_position(fs, g).peb,
            crlb_position_limit(fs, g).peb, crlb_velocity(fs, g).veb, float(g.psi), rho,
            optimal_bistatic_angle(rho)]


def cmd_peb_point(sc: Scenario, a, out: Path):
    q = a.q if a.q is not None else sc.target
    if q is None:
        raise ScenarioError("no target position (use --q or set 'target' in the scenario)")
    q_U = None if a.mono_only else (a.q_U if a.q_U is not None else sc.ue)
    row = peb_point_row(sc, q, q_U)
    _write_rows(out / "peb_point.csv", PEB_COLUMNS, [row])
    width = max(len(c) for c in PEB_COLUMNS)
    for name, v in zip(PEB_COLUMNS, row):
        shown = (v or "-") if isinstance(v, str) else fmt(v)
        print(f"{name:<{width}}  {shown}")
    return ["peb_point.csv"]


def cmd_map(sc: Scenario, a, out: Path):
    xmin, xmax, ymin, ymax = a.bbox
    if not (xmax > xmin and ymax > ymin):
        raise ScenarioError("empty bounding box")
    if not a.cell > 0:
        raise ScenarioError("cell must be positive")
    xs = np.arange(xmin + a.cell / 2, xmax, a.cell)
    ys = np.arange(ymin + a.cell / 2, ymax, a.cell)
    X, Y = np.meshgrid(xs, ys)
    pts = np.stack([X, Y], axis=-1)
    at_bs = (X == 0) & (Y == 0)
    pts[at_bs] = [1e-9, 0.0]
    values = np.full(X.shape, np.nan)
    if a.mode == "peb_mono":
        values = crlb_mono_position(sc.cfg, sc.link, derive_geometry(pts, pts + [1.0, 0.0])).peb
    else:
        q_U = a.q_U if a.q_U is not None else sc.ue
        if q_U is None:
            raise ScenarioError(f"{a.mode} map needs a UE position")
        g_all = derive_geometry(pts, np.broadcast_to(q_U, pts.shape))
        live = g_all.r_U > 0
        g = derive_geometry(pts[live], np.broadcast_to(q_U, pts[live].shape))
        fs = fisher_set(sc.cfg, sc.link, g)
        values[live] = crlb_hybrid_position(fs, g).peb if a.mode == "peb_hybrid" else crlb_velocity(fs, g).veb
    unit = "mps" if a.mode == "veb" else "m"
    name = f"map_{a.mode}"
    with atomic_open(out / f"{name}.csv") as fh:
        write_field_csv(fh, xs, ys, values, f"{a.mode}_{unit}")
    with np.errstate(divide="ignore"):
        shade = np.log10(values)
    with atomic_open(out / f"{name}.pgm", "wb") as fh:
        write_pgm(fh, shade)
    return [f"{name}.csv", f"{name}.pgm"]


def cmd_simulate(sc: Scenario, a, out: Path):
    if sc.target is None or sc.ue is None:
        raise ScenarioError("simulate needs 'target' and 'ue' in the scenario")
    if a.trials < 1:
        raise ScenarioError("trials must be >= 1")
    os_ = FftOversampling(*a.oversampling)
    rows = monte_carlo(sc, a.v, a.snr_db, trials=a.trials, seed=a.seed, os=os_, workers=a.threads)
    with atomic_open(out / "simulate.csv") as fh:
        write_mc_csv(rows, fh)
    files = ["simulate.csv"]
    if a.dump_grid:
        rec = run_trial(sc, a.v, float(a.snr_db[0]), np.random.SeedSequence([a.seed, 0, 0]), os_,
                        keep_grid=True)
        with atomic_open(out / "grid_snr0_trial0.bin", "wb") as fh:
            write_grid(fh, rec.grid)
        files.append("grid_snr0_trial0.bin")
    return files


def cmd_coverage(sc: Scenario, a, out: Path):
    q_U = a.q_U if a.q_U is not None else sc.ue
    if a.gamma_v is not None and q_U is None:
        raise ScenarioError("velocity coverage needs a UE position")
    header = ["gamma_p_m", "mono_closed_m2", "mono_numeric_m2", "mono_rel_diff",
              f"mono_{a.side}_m2"]
    if q_U is not None:
        header.append(f"hybrid_{a.side}_m2")
    if a.gamma_v is not None:
        header += ["gamma_v_mps", f"joint_{a.side}_m2"]
    rows = []
    for gp in a.gamma_p:
        closed = coverage_mono_closed(sc.cfg, sc.link, gp)
        full = coverage_numeric(sc.cfg, sc.link, None, CoverageQuery(gp, cell=a.cell)).area
        region = a.region
        side_q = CoverageQuery(gp, a.gamma_v, region=region and tuple(region), cell=a.cell, side=a.side)
        if side_q.region is None and q_U is not None:
            side_q = CoverageQuery(gp, a.gamma_v, auto_region(sc.cfg, sc.link, np.asarray(q_U), gp), a.cell, a.side)
        row = [gp, closed, full, (closed - full) / full if full > 0 else float("nan"),
               coverage_numeric(sc.cfg, sc.link, None, side_q).area]
        if q_U is not None:
            row.append(coverage_numeric(sc.cfg, sc.link, q_U, side_q, "hybrid").area)
        if a.gamma_v is not None:
            row += [a.gamma_v, coverage_numeric(sc.cfg, sc.link, q_U, side_q, "joint").area]
        rows.append(row)
    _write_rows(out / "coverage.csv", header, rows)
    files = ["coverage.csv"]
    if a.sweep_x is not None:
        lo, hi, step = a.sweep_x
        if not (step > 0 and hi >= lo):
            raise ScenarioError("--sweep-x needs XMIN <= XMAX and STEP > 0")
        x_U = np.arange(lo, hi + step / 2, step)
        srows = []
        for gp in a.gamma_p:
            _, areas, best = optimal_ue_sweep(sc.cfg, sc.link, x_U, gp, cell=a.cell, side=a.side)
            srows += [[gp, x, ar, best] for x, ar in zip(x_U, areas)]
            print(f"gamma_p={fmt(gp)} m: best x_U={fmt(best)} m")
        _write_rows(out / "coverage_sweep.csv", ["gamma_p_m", "x_U_m", "hybrid_area_m2", "x_U_best_m"], srows)
        files.append("coverage_sweep.csv")
    return files


def cmd_ue_cdf(sc: Scenario, a, out: Path):
    q = a.q if a.q is not None else sc.target
    if q is None:
        raise ScenarioError("no target position (use --q or set 'target' in the scenario)")
    if any(lam < 0 for lam in a.lam):
        raise ScenarioError("UE density must be >= 0")
    q = np.asarray(q, dtype=float)
    g = derive_geometry(q, 2 * q)
    fs = fisher_set(sc.cfg, sc.link, g)
    lo = float(crlb_position_limit(fs, g).peb)
    hi = float(crlb_mono_position(sc.cfg, sc.link, g).peb)
    if a.gamma_p is not None:
        grid = np.asarray(a.gamma_p, dtype=float)
    else:
        grid = np.linspace(0.9 * lo, 1.05 * hi, a.points)
    rows = []
    for lam in a.lam:
        for gp, p in zip(grid, np.atleast_1d(peb_cdf(sc.cfg, sc.link, q, lam, grid))):
            rows.append([lam, gp, p])
    _write_rows(out / "ue_cdf.csv", ["lambda_per_m2", "gamma_p_m", "probability"], rows)
    return ["ue_cdf.csv"]


COMMANDS = {
    "peb-point": cmd_peb_point,
    "map": cmd_map,
    "simulate": cmd_simulate,
    "coverage": cmd_coverage,
    "ue-cdf": cmd_ue_cdf,
}


# ---------------------------------------------------------------- parsing

def _global_flags(p, defaults: bool):
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p.add_argument("--scenario", default=d(None), help="scenario JSON (default: reference scenario)")
    p.add_argument("--seed", type=int, default=d(0), help="master seed (u64)")
    p.add_argument("--threads", type=int, default=d(1), help="worker processes")
    p.add_argument("--out", default=d("."), help="output directory")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybrid-isac", description="Hybrid mono/bi-static OFDM sensing bounds and simulation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(p, True)
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, False)
    xy = dict(nargs=2, type=float, metavar=("X", "Y"))

    s = sub.add_parser("peb-point", parents=[common], help="bounds at one target / UE pair")
    s.add_argument("--q", **xy)
    s.add_argument("--q-U", dest="q_U", **xy)
    s.add_argument("--mono-only", action="store_true")

    s = sub.add_parser("map", parents=[common], help="PEB / VEB heatmap")
    s.add_argument("--mode", choices=["peb_mono", "peb_hybrid", "veb"], default="peb_mono")
    s.add_argument("--bbox", nargs=4, type=float, default=[0.0, 400.0, -200.0, 200.0],
                   metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
    s.add_argument("--cell", type=float, default=2.0)
    s.add_argument("--q-U", dest="q_U", **xy)

    s = sub.add_parser("simulate", parents=[common], help="Monte-Carlo RMSE vs bounds")
    s.add_argument("--v", nargs=2, type=float, default=[20.0, 0.0], metavar=("VX", "VY"))
    s.add_argument("--snr-db", nargs="+", type=float, default=[-10.0, 0.0, 10.0, 20.0])
    s.add_argument("--trials", type=int, default=500)
    s.add_argument("--oversampling", nargs=3, type=int, default=[2048, 1024, 4096],
                   metavar=("L_TAU", "L_D", "L_THETA"), help="FFT lengths")
    s.add_argument("--dump-grid", action="store_true", help="also write the first trial's grid")

    s = sub.add_parser("coverage", parents=[common], help="coverage areas and UE position sweep")
    s.add_argument("--gamma-p", nargs="+", type=float, default=[0.5, 1.0, 2.0])
    s.add_argument("--gamma-v", type=float)
    s.add_argument("--q-U", dest="q_U", **xy)
    s.add_argument("--side", choices=["both", "right"], default="right")
    s.add_argument("--cell", type=float, default=2.0)
    s.add_argument("--region", nargs=4, type=float, metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
    s.add_argument("--sweep-x", nargs=3, type=float, metavar=("XMIN", "XMAX", "STEP"))

    s = sub.add_parser("ue-cdf", parents=[common], help="best-UE PEB distribution")
    s.add_argument("--q", **xy)
    s.add_argument("--lambda", dest="lam", nargs="+", type=float, default=[1e-6, 1e-5, 1e-4])
    s.add_argument("--gamma-p", nargs="+", type=float)
    s.add_argument("--points", type=int, default=200)

    s = sub.add_parser("replay", help="re-run a manifest")
    s.add_argument("manifest")
    s.add_argument("--out", default=argparse.SUPPRESS)
    return p


def _jsonable(ns: dict) -> dict:
    out = {}
    for k, v in ns.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        out[k] = v
    return out


def execute(command: str, sc: Scenario, args: dict, out: Path, argv=None) -> list[str]:
    out.mkdir(parents=True, exist_ok=True)
    a = argparse.Namespace(**args)
    t0 = time.perf_counter()
    files = COMMANDS[command](sc, a, out)
    with atomic_open(out / "scenario.json") as fh:
        json.dump(sc.to_dict(), fh, indent=2)
    files.append("scenario.json")
    manifest = {
        "command": command,
        "version": __version__,
        "seed": args.get("seed", 0),
        "args": _jsonable(args),
        "scenario": sc.to_dict(),
        "argv": list(argv) if argv is not None else None,
        "outputs": files,
        "duration_s": time.perf_counter() - t0,
    }
    with atomic_open(out / f"{command}.manifest.json") as fh:
        json.dump(manifest, fh, indent=2)
    return files


def _run(argv) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(ns, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if ns.command == "replay":
        man = json.loads(Path(ns.manifest).read_text())
        if man.get("command") not in COMMANDS:
            raise ScenarioError(f"{ns.manifest}: unknown command {man.get('command')!r}")
        sc = scenario_from_dict(man["scenario"])
        out = Path(getattr(ns, "out", man["args"].get("out", ".")))
        args = dict(man["args"], out=str(out))
        execute(man["command"], sc, args, out, argv)
        return EXIT_OK
    if ns.threads < 1:
        raise ScenarioError("--threads must be >= 1")
    if not 0 <= ns.seed < 2**64:
        raise ScenarioError("--seed must be an unsigned 64-bit integer")
    sc = load_scenario(ns.scenario) if ns.scenario else paper_scenario()
    args = {k: v for k, v in vars(ns).items() if k != "command"}
    execute(ns.command, sc, args, Path(ns.out), argv)
    return EXIT_OK


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        return _run(argv)
    except (ScenarioError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"hybrid-isac: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EstimationError, NumericalFailure, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"hybrid-isac: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"hybrid-isac: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
