"""Command-line entry point: ``advhopf <subcommand> --config FILE --out DIR``.

Exit codes: 0 success, 1 solver error, 2 config error, 3 verification failure.
Data go to files in the output directory; diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, acceptance, charpoint, config, hetero, normalform, simulate, spectrum
from .discretize import assemble
from .errors import ConfigError, ModelError, SolverError
from .model import GrowthSpec
from .steady import continue_branch

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2, 3
COMMANDS = ("steady", "hopf", "spectrum", "normal-form", "simulate", "sweep", "verify")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _finite(obj):
    """Replace non-finite floats by None so the output is strict JSON."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not math.isfinite(obj):
        return None
    return obj


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_finite(obj), fh, indent=2, sort_keys=True, default=_jsonable, allow_nan=False)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")


def _write_records(path_stem: Path, records, fmt: str) -> Path:
    records = list(records)
    if fmt == "json":
        path = path_stem.with_suffix(".json")
        _write_json(path, records)
        return path
    path = path_stem.with_suffix(".csv")
    keys = []
    for rec in records:
        keys.extend(k for k in rec if k not in keys)
    with open(path, "w", newline="") as fh:
        out = csv.DictWriter(fh, fieldnames=keys)
        out.writeheader()
        for rec in records:
            out.writerow({k: repr(v) if isinstance(v, float) else v for k, v in rec.items()})
    return path


def _workers(cfg, flag):
    if flag is not None:
        return max(1, flag)
    if cfg["output"]["workers"]:
        return int(cfg["output"]["workers"])
    return hetero.default_workers()


def _hopf(cfg, params):
    return charpoint.hopf_point(params, dr=cfg["hopf"]["dr"], n_max=cfg["hopf"]["n_max"])


# -------------------------------------------------------------- subcommands

def cmd_steady(cfg, params, out: Path, workers):
    ops = assemble(params)
    r_max = cfg["steady"]["r_max"] if cfg["steady"]["r_max"] is not None else params.r
    branch = continue_branch(params, ops, r_max=r_max, dr=cfg["steady"]["dr"])
    branch.to_csv(out / "steady.csv", ops)
    return {"c0": branch.c0, "c1": branch.c1, "r_values": branch.r_values.tolist(),
            "max_residual": float(np.max(branch.residual_norms)),
            "min_state": float(min(s.min() for s in branch.states))}


def cmd_hopf(cfg, params, out: Path, workers):
    ops, _, hopf = _hopf(cfg, params)
    rec = hopf.record()
    _write_records(out / "hopf", [rec], cfg["output"]["format"])
    with open(out / "eigenfunctions.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "re_psi", "im_psi", "re_psi_adj", "im_psi_adj"])
        for j, xj in enumerate(ops.x):
            w.writerow([repr(float(v)) for v in (xj, hopf.psi[j].real, hopf.psi[j].imag,
                                                 hopf.psi_adj[j].real, hopf.psi_adj[j].imag)])
    return {**rec, "tau_ladder": hopf.tau_ladder.tolist(),
            "S": [[s.real, s.imag] for s in hopf.S]}


def cmd_spectrum(cfg, params, out: Path, workers):
    ops, _, hopf = _hopf(cfg, params)
    sp = cfg["spectrum"]
    taus = sp["taus"]
    if taus is None:
        T = hopf.tau_ladder
        taus = [0.0, 0.5 * T[0], 0.5 * (T[0] + T[1]), 0.5 * (T[1] + T[2])]
    rows = []
    for i, tau in enumerate(taus):
        rep = spectrum.spectrum_at(params.r, float(tau), hopf.u_r, ops, M=sp["M"], k=sp["k"])
        rep.to_csv(out / f"spectrum_{i}.csv")
        rows.append({"tau": float(tau), "n_unstable": rep.n_unstable,
                     "re_rightmost": rep.rightmost_pair.real,
                     "im_rightmost": rep.rightmost_pair.imag})
    _write_records(out / "unstable_counts", rows, cfg["output"]["format"])
    return {"tau0": hopf.tau0, "nu": hopf.nu, "counts": rows}


def cmd_normal_form(cfg, params, out: Path, workers):
    ops, _, hopf = _hopf(cfg, params)
    records = []
    for n in cfg["normal_form"]["n"]:
        d = spectrum.transversality(params.r, hopf.u_r, hopf, ops, int(n), M=cfg["spectrum"]["M"])
        nf = normalform.c1_and_verdict(normalform.g_coefficients(hopf, ops, int(n)), d, hopf.nu)
        rec = nf.record()
        rec["re_mu_prime"] = d
        records.append(rec)
    _write_records(out / "normal_form", records, cfg["output"]["format"])
    return {"records": records}


def cmd_simulate(cfg, params, out: Path, workers):
    sc = cfg["simulate"]
    ops, _, hopf = _hopf(cfg, params)
    tau = sc["tau"] if sc["tau"] is not None else sc["tau_factor"] * hopf.tau0
    if sc["random_seed"] is not None:
        rng = np.random.default_rng(int(sc["random_seed"]))
        field_ = hopf.u_r * (1.0 + sc["eps"] * rng.uniform(-1.0, 1.0, ops.n))
        eta = lambda s: field_
    else:
        eta = simulate.perturbed_history(hopf.u_r, ops, sc["eps"], sc["shape"])
    p = params.with_(tau=float(tau))
    tr = simulate.run(p, ops, hopf.u_r, eta, sc["t_end"], M_delay=sc["M_delay"], dt=sc["dt"],
                      snapshot_times=cfg["output"]["snapshot_times"],
                      sample_every=sc["sample_every"])
    tr.to_csv(out / "trace.csv")
    if tr.snapshots:
        tr.snapshots_to_csv(out / "snapshots.csv", ops.x)
    return {"tau": float(tau), "tau0": hopf.tau0, "verdict": tr.verdict,
            "amplitude": tr.amplitude, "period": tr.period,
            "predicted_period": 2 * math.pi / hopf.nu,
            "final_distance_to_steady": tr.final_distance_to_steady}


def _axis(spec):
    if len(spec) == 3 and isinstance(spec[2], int) and not isinstance(spec[0], int):
        return np.linspace(float(spec[0]), float(spec[1]), int(spec[2]))
    return np.asarray(spec, dtype=float)


def cmd_sweep(cfg, params, out: Path, workers):
    sw = cfg["sweep"]
    alphas, Ls = _axis(sw["alpha"]), _axis(sw["L"])
    growth: GrowthSpec = params.growth
    if sw["kind"] == "monotonicity":
        table = hetero.monotonicity_scan(growth, alphas, Ls, workers=workers,
                                         raise_on_violation=False)
    elif sw["kind"] == "tau0":
        table = hetero.tau0_sweep(growth, alphas, Ls, sw["r"], kernel=params.kernel,
                                  n_cells=params.n_cells, workers=workers)
    else:
        raise ConfigError(f"sweep.kind must be monotonicity or tau0, got {sw['kind']!r}")
    if cfg["output"]["format"] == "json":
        _write_json(out / "sweep.json", table.cells)
    else:
        table.to_csv(out / "sweep.csv")
    return table.summary()


def cmd_verify(cfg, params, out: Path, workers):
    results = acceptance.run_all(cfg["verify"]["criteria"], workers=workers)
    _log(acceptance.format_table(results))
    rows = []
    for res in results:
        for c in res.checks:
            rows.append({"criterion": res.number, "check": c.label, "passed": c.passed,
                         "informational": c.informational, "detail": c.detail})
        for name, (x, dens) in res.artifacts.items():
            with open(out / f"criterion{res.number}_{name.replace('=', '')}.csv", "w",
                      newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["x", "density"])
                for xj, dj in zip(x, dens):
                    w.writerow([repr(float(xj)), repr(float(dj))])
    _write_records(out / "verify", rows, cfg["output"]["format"])
    summary = {"criteria": {str(r.number): r.passed for r in results},
               "all_passed": all(r.passed for r in results)}
    return summary


HANDLERS = {"steady": cmd_steady, "hopf": cmd_hopf, "spectrum": cmd_spectrum,
            "normal-form": cmd_normal_form, "simulate": cmd_simulate, "sweep": cmd_sweep,
            "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="advhopf", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="TOML config (default: the shipped default config)")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config key by dotted path; repeatable")
    ap.add_argument("--out", help="output directory (default: output.dir)")
    ap.add_argument("--workers", type=int, default=None,
                    help=f"worker processes (default: ${hetero.WORKERS_ENV} or all cores)")
    return ap


def dispatch(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        cfg = config.load(args.config, args.set)
        params = config.model_params(cfg)
    except (ConfigError, ModelError) as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    out = Path(args.out or cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    workers = _workers(cfg, args.workers)
    try:
        summary = HANDLERS[args.command](cfg, params, out, workers)
    except (ConfigError, ModelError) as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    except SolverError as exc:
        ctx = {k: v for k, v in exc.context.items() if np.isscalar(v)}
        _log(f"solver error ({type(exc).__name__}): {exc} {ctx if ctx else ''}".rstrip())
        return EXIT_SOLVER
    _write_json(out / "summary.json", summary)
    _write_json(out / "run_meta.json", {
        "command": args.command,
        "argv": list(sys.argv[1:] if argv is None else argv),
        "config": cfg,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "finished_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "wall_seconds": round(time.perf_counter() - started, 3),
        "workers": workers,
        "pid": os.getpid(),
    })
    if args.command == "verify" and not summary["all_passed"]:
        return EXIT_VERIFY
    return EXIT_OK


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
