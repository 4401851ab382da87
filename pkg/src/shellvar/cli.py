"""Command-line entry point: ``shellvar <command> --config <path> [--out <dir>] [--seed <int>]``.

Exit codes: 0 success or all probes pass, 1 probe failure / non-convergence /
inadmissible input state, 2 input error. Errors are also written to stderr as
one JSON object.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .admissibility import check_admissible
from .config import load_config
from .energy import density_table, total_energy
from .errors import AdmissibilityError, ConfigError, ShellvarError
from .geometry import geometry_summary
from .io import write_csv, write_json, write_obj
from .minimize import minimize
from .verify import identity_checks, verify_all

COMMANDS = ("curvature", "evaluate", "verify", "minimize")
EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def _node_index(grid):
    i, j = np.meshgrid(np.arange(grid.nx), np.arange(grid.ny), indexing="ij")
    return i.ravel(), j.ravel()


def _want(cfg, fmt):
    return fmt in cfg.output["formats"]


def run_curvature(cfg, out):
    grid = cfg.grid
    conf = cfg.configuration()
    forms, curv = geometry_summary(conf)
    oracle = cfg.surface.oracle(grid)
    x1, x2 = grid.coords()
    i, j = _node_index(grid)
    cols = {"node_i": i, "node_j": j, "x1": x1, "x2": x2, "H": curv.H, "K": curv.K,
            "kappa1": curv.kappa1, "kappa2": curv.kappa2, "sqrt_a": conf.sqrt_a,
            "weight": grid.weights}
    for k in ("H", "K", "kappa1", "kappa2"):
        cols[f"{k}_error"] = getattr(curv, k) - oracle[k]
    cols = {k: np.asarray(v).ravel() for k, v in cols.items()}
    if _want(cfg, "csv"):
        write_csv(out / "curvature.csv", cols)
    ids = identity_checks(conf)
    summary = {
        "surface": {"preset": cfg.surface.name, "params": cfg.surface.params()},
        "grid": {"nx": grid.nx, "ny": grid.ny, "periodic": [grid.periodic1, grid.periodic2]},
        "area": float(grid.integrate(conf.sqrt_a)),
        "integral_K_dA": float(grid.integrate(curv.K * conf.sqrt_a)),
        "integral_H_dA": float(grid.integrate(curv.H * conf.sqrt_a)),
        "max_abs_error": {k: float(np.abs(cols[f"{k}_error"]).max())
                          for k in ("H", "K", "kappa1", "kappa2")},
        "identity_residuals": ids,
    }
    write_json(out / "curvature.json", summary, "curvature")
    return EXIT_OK


def run_evaluate(cfg, out):
    shell = cfg.shell()
    conf = cfg.configuration()
    bc = cfg.boundary_conditions(shell.reference)
    loads = cfg.load_spec()
    report = check_admissible(conf, shell, bc)
    doc = {"energy": cfg.energy.to_dict(), "admissibility": report.to_dict()}
    code = EXIT_OK
    if report.ok:
        doc["total_energy"] = total_energy(conf, cfg.energy, loads, shell, cfg.grid, bc)
        if _want(cfg, "csv"):
            write_csv(out / "density.csv", density_table(conf, cfg.energy, shell))
    else:
        doc["total_energy"] = None
        code = EXIT_FAIL
    write_json(out / "evaluate.json", doc, "evaluate")
    return code


def run_verify(cfg, out):
    v = cfg.verify
    doc = verify_all(cfg.energy, n_poly=v.get("polyconvexity", 1), n_coer=v.get("coercivity", 1),
                     steps=v.get("blowup", 25), seed=cfg.seed, probes=set(v))
    doc = {"energy": cfg.energy.to_dict(), "seed": cfg.seed, **doc}
    write_json(out / "verify.json", doc, "verify")
    return EXIT_OK if doc["passed"] else EXIT_FAIL


def run_minimize(cfg, out):
    shell = cfg.shell()
    bc = cfg.boundary_conditions(shell.reference)
    res = minimize(cfg.configuration(), cfg.energy, cfg.load_spec(), shell, bc, cfg.solver)
    doc = {"energy": cfg.energy.to_dict(), "solver": cfg.solver.to_dict(), **res.to_dict()}
    write_json(out / "minimize.json", doc, "minimize")
    final = res.psi_final
    if _want(cfg, "obj"):
        write_obj(out / "final.obj", final.psi, cfg.grid)
    if _want(cfg, "csv"):
        cols = density_table(final, cfg.energy, shell)
        p = final.psi.reshape(-1, 3)
        a3 = final.a3.reshape(-1, 3)
        cols.update({"psi1": p[:, 0], "psi2": p[:, 1], "psi3": p[:, 2],
                     "a3_1": a3[:, 0], "a3_2": a3[:, 1], "a3_3": a3[:, 2]})
        write_csv(out / "fields.csv", cols)
    return EXIT_OK if res.converged else EXIT_FAIL


RUNNERS = {"curvature": run_curvature, "evaluate": run_evaluate,
           "verify": run_verify, "minimize": run_minimize}


def error_payload(exc, command=None):
    err = {"type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError) and exc.path:
        err["path"] = exc.path
    if isinstance(exc, AdmissibilityError) and exc.report is not None:
        err["admissibility"] = exc.report.to_dict()
    if command:
        err["command"] = command
    return {"error": err}


def emit_error(exc, command=None, stream=None):
    from .io import dumps

    stream = stream or sys.stderr
    stream.write(dumps(error_payload(exc, command)))


def dispatch(command, cfg, out=None):
    """Run one command on a parsed config; returns the exit status."""
    if command not in RUNNERS:
        raise ConfigError(f"unknown command {command!r}; choose from {list(COMMANDS)}", "command")
    out = Path(out or cfg.output["directory"])
    out.mkdir(parents=True, exist_ok=True)
    return RUNNERS[command](cfg, out)


def build_parser():
    ap = argparse.ArgumentParser(prog="shellvar",
                                 description="Shell energies: geometry, evaluation, "
                                             "verification and minimization.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="path to the JSON run configuration")
    ap.add_argument("--out", help="output directory (overrides output.directory)")
    ap.add_argument("--seed", type=int, help="random seed (overrides the config seed)")
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = int(args.seed)
        return dispatch(args.command, cfg, args.out)
    except ShellvarError as exc:
        emit_error(exc, args.command)
        return EXIT_INPUT
    except (OSError, ValueError, np.linalg.LinAlgError) as exc:
        emit_error(exc, args.command)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())


__all__ = ["main", "dispatch", "build_parser", "error_payload", "COMMANDS"]
