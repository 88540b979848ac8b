"""Command-line front end.

Angles are given in degrees and fields in units of B0.  Data go to files in
``--out`` (a directory); progress lines go to stderr.  Every command writes
``manifest.json`` with the resolved configuration, library versions and
SHA-256 checksums of its outputs; ``--config manifest.json`` reruns it.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .core import GridSpec, NuclearSpecies, field_from_si, field_to_si, parse_range

COMMANDS = ("scan", "equilibrium", "susceptibility", "surface", "rovib", "units")


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _fmt(x: float, digits: int = 12) -> str:
    return "nan" if not math.isfinite(x) else f"{x:.{digits}f}"


def _thetas(text: str) -> list[float]:
    vals = parse_range(text)
    if any(v < 0 or v > 90 for v in vals):
        raise SystemExit("error: --theta values must lie in [0, 90] degrees")
    return vals


def _fields(text: str) -> list[float]:
    vals = parse_range(text)
    if any(v < 0 for v in vals):
        raise SystemExit("error: --b values must be >= 0")
    return vals


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict:
    import numba
    import scipy
    return {"h2field": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def _write_manifest(out: Path, command: str, args: argparse.Namespace, files: list[Path]) -> Path:
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
           if k not in ("func", "config") and v is not None}
    cfg["command"] = command
    doc = {"command": command, "config": cfg, "versions": _versions(),
           "outputs": {p.name: _sha256(p) for p in sorted(files)}}
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def _csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _map(fn, items, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


# -- commands ------------------------------------------------------------------

def cmd_scan(args) -> tuple[int, list[Path]]:
    from .electronic import scan_curve
    rs = parse_range(args.r or "1.0:4.0:0.05")
    tasks = [(b, t) for b in _fields(args.b or "0") for t in _thetas(args.theta or "0")]

    def run(task):
        b, t = task
        pts = scan_curve(math.radians(t), b, rs, restarts=args.restarts, seed=args.seed, rel_tol=args.tol)
        _progress(f"scan B={b:g} theta={t:g}: {sum(p.converged for p in pts)}/{len(pts)} converged")
        return pts

    files, failures = [], []
    for (b, t), pts in zip(tasks, _map(run, tasks, args.threads)):
        rows = []
        for p in pts:
            rows.append([_fmt(p.geometry.r, 10), _fmt(p.energy), int(p.converged),
                         f"{p.quadrature_error:.3e}", p.n_evals])
            if not p.converged:
                failures.append(f"B={b:g} theta={t:g} R={p.geometry.r:g}: {p.message}")
        files.append(_csv(args.out / f"scan_B{b:g}_theta{t:g}.csv",
                          ["R", "E", "converged", "quadrature_error", "n_evals"], rows))
    for f in failures:
        _progress(f"FAILED {f}")
    return (1 if failures else 0), files


def cmd_equilibrium(args) -> tuple[int, list[Path]]:
    from .electronic import OptimizationError, find_equilibrium
    tasks = [(b, t) for b in _fields(args.b or "0") for t in _thetas(args.theta or "0")]
    lo, hi = (float(x) for x in (args.bracket or "1.4,2.4").split(","))

    def run(task):
        b, t = task
        try:
            eq = find_equilibrium(math.radians(t), b, (lo, hi), seed=args.seed, rel_tol=args.tol,
                                  restarts=args.restarts)
        except OptimizationError as exc:
            _progress(f"FAILED B={b:g} theta={t:g}: {exc}")
            return None
        _progress(f"equilibrium B={b:g} theta={t:g}: R_eq={eq.r_eq:.5f} E={eq.e_eq:.9f}")
        return eq

    results = _map(run, tasks, args.threads)
    rows, records = [], []
    for (b, t), eq in zip(tasks, results):
        if eq is None:
            rows.append([_fmt(b, 6), _fmt(t, 4), "nan", "nan", 0])
            continue
        rows.append([_fmt(b, 6), _fmt(t, 4), _fmt(eq.r_eq, 10), _fmt(eq.e_eq), int(eq.point.converged)])
        records.append({"b": b, "theta_deg": t, "r_eq": eq.r_eq, "e_eq": eq.e_eq,
                        "params": eq.params.to_dict()})
    files = [_csv(args.out / "equilibrium.csv", ["B", "theta_deg", "R_eq", "E_eq", "converged"], rows)]
    path = args.out / "equilibrium.json"
    path.write_text(json.dumps(records, indent=1, sort_keys=True) + "\n")
    files.append(path)
    return (0 if all(r is not None for r in results) else 1), files


def cmd_susceptibility(args) -> tuple[int, list[Path]]:
    from . import magnetics as mg
    from .electronic import TrialParameters
    thetas = _thetas(args.theta or "0:90:15")
    bs = _fields(args.b or "0:0.2:0.01")
    need = [b for b in mg.CHI_B_SAMPLES if not any(abs(b - x) < 1e-12 for x in bs)]
    if need:
        raise SystemExit(f"error: --b must include the susceptibility samples {mg.CHI_B_SAMPLES}")
    r0 = params0 = None
    if args.equilibria:
        recs = json.loads(Path(args.equilibria).read_text())
        zero = [r for r in recs if r["b"] == 0]
        if not zero:
            raise SystemExit("error: equilibrium file has no B = 0 row")
        r0, params0 = zero[0]["r_eq"], TrialParameters.from_dict(zero[0]["params"])
    if args.r:
        r0 = float(args.r)

    def run(t):
        return mg.field_branch(math.radians(t), bs, seed=args.seed, rel_tol=args.tol, progress=_progress)

    branches = dict(zip(thetas, _map(run, thetas, args.threads)))
    rad = {math.radians(t): branches[t] for t in thetas}
    r_used, params, moms = mg.zero_field_moments([0.0] + list(rad), r=r0, params=params0,
                                                 seed=args.seed, rel_tol=args.tol)
    m0 = moms[0]
    records, chi_fits = [], {}
    for (t, br), m in zip(rad.items(), moms[1:]):
        chi, fit = mg.total_chi(t, mg.CHI_B_SAMPLES, branch=br)
        chi_fits[f"{math.degrees(t):g}"] = {"chi": chi, "E0": fit.e0, "E2": fit.e2, "E4": fit.e4,
                                           "rms": fit.rms, "condition": fit.condition}
        records.append(mg.SusceptibilityRecord(t, m.x2, m.y2, m.z2, mg.diamagnetic_chi(t, m0.x2, m0.z2), chi))
    files = []
    table = args.out / "susceptibility.csv"
    mg.write_table_csv(records, table)
    files.append(table)
    x_rows, xb, xt, xv = [], [], [], []
    for t, br in rad.items():
        for p in br:
            x_rows.append([_fmt(p.b, 6), _fmt(math.degrees(t), 4), _fmt(p.r_eq, 10), _fmt(p.energy),
                           _fmt(p.x), _fmt(p.moments.x2), _fmt(p.moments.y2), _fmt(p.moments.z2)])
            xb.append(p.b)
            xt.append(t)
            xv.append(p.x)
    files.append(_csv(args.out / "x_samples.csv", ["B", "theta_deg", "R_eq", "E", "X", "x2", "y2", "z2"], x_rows))
    xfit = mg.fit_x_surface(xb, xt, xv)
    fits = {
        "x_surface": xfit.as_dict(),
        "chi_d_from_x_surface": {"a": xfit.coefficients[0], "b": xfit.coefficients[3], "rms": xfit.rms},
        "chi_d_direct": mg.fit_chi_d([r.theta for r in records], [r.chi_d for r in records]).as_dict(),
        "chi_total_angular": mg.fit_chi_angular([r.theta for r in records],
                                                [r.chi_total for r in records]).as_dict(),
        "energy_fits": chi_fits,
        "zero_field_r": r_used,
        "zero_field_limit_b": mg.ZERO_FIELD_LIMIT,
    }
    path = args.out / "fits.json"
    path.write_text(json.dumps(fits, indent=1, sort_keys=True) + "\n")
    files.append(path)
    return 0, files


def cmd_surface(args) -> tuple[int, list[Path]]:
    from .surface import build_surface, default_grid, save_surface, write_slices_csv
    files, status = [], 0
    for b in _fields(args.b or "0.2"):
        if args.r or args.theta:
            base = default_grid()
            thetas = tuple(math.radians(t) for t in _thetas(args.theta)) if args.theta else base.theta_values
            if args.r:
                rs = parse_range(args.r)
                grid = GridSpec(rs[0], rs[-1], len(rs), thetas)
            else:
                grid = GridSpec(base.r_min, base.r_max, base.n_r, thetas, spacing="well")
        else:
            grid = default_grid()
        surf = build_surface(grid, b, restarts=args.restarts, seed=args.seed, rel_tol=args.tol,
                             threads=args.threads, progress=_progress)
        if not surf.usable:
            _progress(f"surface at B={b:g} has failed nodes in the well region")
            status = 1
        path = args.out / f"surface_B{b:g}.json"
        save_surface(surf, path)
        slices = args.out / f"surface_B{b:g}.csv"
        write_slices_csv(surf, slices)
        files += [path, slices]
    return status, files


def _read_curves(path) -> tuple[list[float], list[float], list[float]]:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    try:
        r = [float(x["R"]) for x in rows]
        v0 = [float(x["V0"]) for x in rows]
        v90 = [float(x["V90"]) for x in rows]
    except KeyError as exc:
        raise SystemExit(f"error: curve file needs columns R, V0, V90 (missing {exc})") from None
    return r, v0, v90


def cmd_rovib(args) -> tuple[int, list[Path]]:
    from .rovib import solve_levels, write_levels_csv
    from .surface import load_surface, rotor_from_curves
    if bool(args.surface) == bool(args.curves):
        raise SystemExit("error: rovib needs exactly one of --surface or --curves")
    if args.surface:
        pot = load_surface(args.surface)
        b = pot.b
    else:
        if args.b is None:
            raise SystemExit("error: --curves requires --b")
        b = _fields(args.b)[0]
        pot = rotor_from_curves(b, *_read_curves(args.curves))
    if args.b is not None and abs(_fields(args.b)[0] - b) > 1e-12:
        raise SystemExit(f"error: surface was computed at B={b}, not B={args.b}")
    models = tuple(int(m) for m in (args.model or "1,2").split(","))
    levels = []
    for name in (args.species or "H2+").split(","):
        sp = NuclearSpecies.from_name(name)
        levels += solve_levels(sp, b, pot, v_max=args.vmax, l_max=args.lmax, models=models,
                               include_forbidden=args.include_forbidden)
        _progress(f"rovib {sp.name} B={b:g}: {len(levels)} levels")
    path = args.out / f"levels_B{b:g}.csv"
    write_levels_csv(levels, path, annotate=args.include_forbidden)
    return 0, [path]


def cmd_units(args) -> tuple[int, list[Path]]:
    if args.tesla is not None:
        print(f"{float(args.tesla):.9g} T = {field_from_si(float(args.tesla)):.12g} B0")
    for b in _fields(args.b) if args.b else []:
        print(f"{b:.9g} B0 = {field_to_si(b):.12g} T")
    return 0, []


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="h2field", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with flag values (or a manifest to rerun)")
    common.add_argument("--b", help="field strength(s) in B0: value, list a,b or start:stop:step")
    common.add_argument("--theta", help="inclination(s) in degrees")
    common.add_argument("--r", help="internuclear distance(s) in bohr, start:stop:step")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol", type=float, default=1e-6, help="relative quadrature tolerance")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--restarts", type=int, default=3, help="random optimizer restarts")
    common.add_argument("--species", help="H2+, D2+ or both comma separated")
    common.add_argument("--vmax", type=int, default=3)
    common.add_argument("--lmax", type=int, default=5)
    common.add_argument("--model", help="1, 2 or 1,2")
    sub.add_parser("scan", parents=[common], help="E(R) curves")
    eq = sub.add_parser("equilibrium", parents=[common], help="equilibrium geometries")
    eq.add_argument("--bracket", help="R search interval lo,hi")
    sus = sub.add_parser("susceptibility", parents=[common], help="moments and susceptibilities")
    sus.add_argument("--equilibria", help="equilibrium.json whose B = 0 row seeds the zero-field state")
    sub.add_parser("surface", parents=[common], help="potential energy surface JSON")
    rv = sub.add_parser("rovib", parents=[common], help="rovibrational levels")
    rv.add_argument("--surface", help="surface JSON file")
    rv.add_argument("--curves", help="CSV with columns R, V0, V90")
    rv.add_argument("--include-forbidden", action="store_true",
                    help="also emit levels excluded by nuclear exchange symmetry")
    un = sub.add_parser("units", parents=[common], help="convert field units")
    un.add_argument("--tesla", help="field in tesla to convert to B0")
    return p


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    doc = json.loads(Path(args.config).read_text())
    cfg = doc.get("config", doc)
    if cfg.get("command", args.command) != args.command:
        raise SystemExit(f"error: config is for command {cfg['command']!r}, not {args.command!r}")
    explicit = vars(parser.parse_args(argv))
    defaults = vars(parser.parse_args([args.command]))
    for key, val in cfg.items():
        if key in ("command", "config") or key not in explicit:
            continue
        # command-line flags override the file
        if explicit[key] == defaults.get(key):
            setattr(args, key, Path(val) if key == "out" else val)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    args = _apply_config(parser, argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    args.out = Path(args.out)
    args.out.mkdir(parents=True, exist_ok=True)
    func = globals()[f"cmd_{args.command}"]
    status, files = func(args)
    if args.command != "units":
        _write_manifest(args.out, args.command, args, files)
    return status


if __name__ == "__main__":
    sys.exit(main())
