"""Command-line front end: ``run``, ``compare`` and ``plotdata``.

Exit codes: 0 success, 1 configuration error, 2 numeric failure (including any
failed trajectory), 3 when ``compare`` finds a deviation above its tolerance.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import PRESETS, ConfigError, config_dict, format_config, resolve
from .ensemble import EnsembleObservables, RunConfig, run_ensemble
from .errors import DimensionError, DomainError, NumericError
from .model import ModelParams, build_hq, electronic_eigenbasis, participation_ratio

log = logging.getLogger("tmqc")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_TOLERANCE = 0, 1, 2, 3

UNITS = {
    "energy": "1 natural energy unit = 25 meV",
    "time": "1 natural time unit = 164 fs",
    "convention": "hbar = 1, lattice mass m = 1, h_n = omega",
}

TABLES = ("populations", "P_n", "P_k", "P_i", "energies")
EIGEN_COUNT = 8


def write_table(path: Path, times: np.ndarray, columns, data: np.ndarray) -> None:
    """CSV with a ``t`` column; floats are written with 17 significant digits."""
    block = np.column_stack([times, data])
    np.savetxt(path, block, fmt="%.17g", delimiter=",", header=",".join(["t", *columns]), comments="")


def read_table(path: Path):
    """Return (column names, 2-D array) for a CSV written by :func:`write_table`."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(header):
        raise DimensionError(f"{path}: header has {len(header)} columns, rows have {data.shape[1]}")
    return header, data


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_outputs(obs: EnsembleObservables, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    t = obs.times
    written = []

    def put(name, cols, data):
        write_table(out / name, t, cols, data)
        written.append(name)

    pcols = [*obs.column_names["populations"], "leakage"]
    put("populations.csv", pcols, np.column_stack([obs.mean["populations"], obs.mean["leakage"]]))
    put("populations_sem.csv", pcols, np.column_stack([obs.sem["populations"], obs.sem["leakage"]]))
    for name in ("P_n", "P_k", "P_i"):
        put(f"{name}.csv", obs.column_names[name], obs.mean[name])
        put(f"{name}_sem.csv", obs.column_names[name], obs.sem[name])
    put("energies.csv", obs.column_names["energies"], obs.mean["energies"])
    put("energies_sem.csv", obs.column_names["energies"], obs.sem["energies"])
    if obs.config.method == "fssh" and obs.hops is not None:
        with open(out / "hops.csv", "w") as fh:
            fh.write("trajectory,t,source,target,gamma,outcome,residual\n")
            for idx, ev in obs.hops:
                fh.write(f"{idx},{ev.time!r},{ev.source},{ev.target},{ev.gamma!r},{ev.outcome},{ev.residual!r}\n")
        written.append("hops.csv")
    manifest = {
        "version": __version__,
        "config": config_dict(obs.config),
        "seed": obs.config.seed,
        "units": UNITS,
        "n_traj": obs.n_traj,
        "n_failed": obs.n_failed,
        "failures": [[i, msg] for i, msg in obs.failures],
        "hops_accepted": obs.n_accepted,
        "hops_frustrated": obs.n_frustrated,
        "max_norm_drift": obs.max_norm_drift,
        "checksums": {name: _sha256(out / name) for name in written},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def eigeninspect(params: ModelParams, out: Path, deltas=(0.0, 2.0), count: int = EIGEN_COUNT) -> dict:
    """Write the ``count`` lowest eigenvectors of H_q for each impurity strength."""
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    written = []
    for delta in deltas:
        p = ModelParams(params.N, params.J, delta, params.impurity_site, params.omega, params.g, params.T,
                        params.mass)
        eb = electronic_eigenbasis(build_hq(p))
        k = min(count, p.N)
        tag = f"delta{delta:g}"
        vec_name = f"eigenvectors_{tag}.csv"
        cols = [f"i{j}" for j in range(1, k + 1)]
        np.savetxt(out / vec_name, np.column_stack([np.arange(p.N), eb.vectors[:k].T]), fmt="%.17g",
                   delimiter=",", header=",".join(["n", *cols]), comments="")
        val_name = f"eigenvalues_{tag}.csv"
        pr = [participation_ratio(v) for v in eb.vectors[:k]]
        np.savetxt(out / val_name, np.column_stack([np.arange(1, k + 1), eb.energies[:k], pr]), fmt="%.17g",
                   delimiter=",", header="i,energy,participation_ratio", comments="")
        written += [vec_name, val_name]
        summary[tag] = {"lowest_energy": float(eb.energies[0]), "participation_ratio": pr[0]}
    manifest = {
        "version": __version__,
        "model": {"N": params.N, "J": params.J, "impurity_site": params.impurity_site, "deltas": list(deltas)},
        "units": UNITS,
        "summary": summary,
        "checksums": {name: _sha256(out / name) for name in written},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# argument handling


def _add_run_parser(sub):
    p = sub.add_parser("run", help="run an ensemble (or inspect eigenvectors for the eigeninspect preset)")
    p.add_argument("preset_pos", nargs="?", metavar="PRESET", choices=sorted(PRESETS),
                   help="preset name (same as --preset)")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--basis", choices=["site", "fourier", "eigen", "file"])
    p.add_argument("--classical-basis", choices=["site", "fourier", "eigen", "file"])
    p.add_argument("--basis-file")
    rule = p.add_mutually_exclusive_group()
    rule.add_argument("--truncate-frac", type=float, help="fraction of basis rows removed")
    rule.add_argument("--ecut", type=float, help="keep rows with energy <= ECUT")
    rule.add_argument("--kcut", type=float, help="keep Fourier rows with |k| <= KCUT")
    p.add_argument("--method", choices=["fssh", "ehrenfest"])
    p.add_argument("--n-traj", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--t-max", type=float)
    p.add_argument("--output-every", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="run_out")
    p.add_argument("--hop-log", action="store_true", help="write every hop attempt to hops.csv")
    p.add_argument("--show-config", action="store_true", help="print the resolved config and exit")
    return p


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tmqc", description="Mixed quantum-classical dynamics in transformed bases.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    _add_run_parser(sub)

    c = sub.add_parser("compare", help="deviation between two runs for one observable")
    c.add_argument("run_a")
    c.add_argument("run_b")
    c.add_argument("--observable", required=True, help="TABLE or TABLE:COLUMN, e.g. P_k:k0 or P_n:n15")
    c.add_argument("--tolerance", type=float)

    d = sub.add_parser("plotdata", help="long-format (t, series, value) table")
    d.add_argument("run_dir")
    d.add_argument("--observable", required=True, help="table name, e.g. P_k")
    d.add_argument("--out", help="write here instead of stdout")
    return ap


def _flags(args) -> dict:
    flags = {
        "basis": args.basis, "classical_basis": args.classical_basis, "basis_file": args.basis_file,
        "truncate_frac": args.truncate_frac, "ecut": args.ecut, "kcut": args.kcut, "method": args.method,
        "n_traj": args.n_traj, "dt": args.dt, "t_max": args.t_max, "output_every": args.output_every,
        "seed": args.seed,
    }
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        flags[k.strip()] = v
    return flags


def cmd_run(args) -> int:
    if args.preset and args.preset_pos and args.preset != args.preset_pos:
        raise ConfigError("conflicting presets given")
    preset = args.preset or args.preset_pos
    cfg = resolve(preset=preset, file=args.config, flags=_flags(args))
    if args.show_config:
        sys.stdout.write(format_config(cfg))
        return EXIT_OK
    out = Path(args.out)
    if preset == "eigeninspect":
        manifest = eigeninspect(cfg.params, out)
        for tag, s in manifest["summary"].items():
            print(f"{tag}: lowest energy {s['lowest_energy']:.10f}, participation ratio {s['participation_ratio']:.3f}")
        return EXIT_OK
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")

    step = max(1, cfg.n_traj // 10)

    def progress(done, total):
        if done % step == 0 or done == total:
            log.info("%d / %d trajectories", done, total)

    obs = run_ensemble(cfg, workers=args.workers, hop_log=args.hop_log, progress=progress)
    if not args.hop_log:
        obs.hops = None
    manifest = write_outputs(obs, out)
    print(f"wrote {out} ({obs.n_traj} trajectories, {obs.n_accepted} accepted and "
          f"{obs.n_frustrated} frustrated hops)")
    if manifest["n_failed"]:
        log.error("%d trajectories failed", manifest["n_failed"])
        return EXIT_NUMERIC
    return EXIT_OK


def _select(run_dir: Path, observable: str):
    table, _, column = observable.partition(":")
    if table not in TABLES:
        raise ConfigError(f"unknown observable table {table!r}; choose from {', '.join(TABLES)}")
    path = run_dir / f"{table}.csv"
    if not path.exists():
        raise ConfigError(f"{path} not found")
    header, data = read_table(path)
    if column:
        if column not in header[1:]:
            raise ConfigError(f"column {column!r} not in {path.name}")
        j = header.index(column)
        return data[:, 0], [column], data[:, j:j + 1]
    return data[:, 0], header[1:], data[:, 1:]


def compare_runs(run_a, run_b, observable: str):
    """Return (max-abs, RMS) deviation of ``observable`` between two run directories."""
    ta, ca, a = _select(Path(run_a), observable)
    tb, cb, b = _select(Path(run_b), observable)
    if ta.shape != tb.shape or not np.allclose(ta, tb, rtol=0.0, atol=1e-9):
        raise DimensionError("runs do not share a time grid")
    if ca != cb:
        raise DimensionError(f"column sets differ: {ca} vs {cb}")
    diff = a - b
    return float(np.max(np.abs(diff))), float(math.sqrt(np.mean(diff * diff)))


def cmd_compare(args) -> int:
    max_abs, rms = compare_runs(args.run_a, args.run_b, args.observable)
    line = f"{args.observable}: max-abs {max_abs:.6g}, rms {rms:.6g}"
    if args.tolerance is None:
        print(line)
        return EXIT_OK
    ok = max_abs <= args.tolerance
    print(f"{line}, tolerance {args.tolerance:g}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_TOLERANCE


def plotdata_rows(run_dir, observable: str):
    run_dir = Path(run_dir)
    if not run_dir.is_dir() or not any(run_dir.iterdir()):
        raise ConfigError(f"{run_dir} is missing or empty")
    t, cols, data = _select(run_dir, observable)
    for j, name in enumerate(cols):
        for ti, v in zip(t, data[:, j]):
            yield ti, name, v


def cmd_plotdata(args) -> int:
    rows = list(plotdata_rows(args.run_dir, args.observable))
    fh = open(args.out, "w") if args.out else sys.stdout
    try:
        fh.write("t,series,value\n")
        for t, name, v in rows:
            fh.write(f"{t!r},{name},{v!r}\n")
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def main(argv: Optional[list] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        logging.getLogger("tmqc").setLevel(min(level, logging.INFO))
    handlers = {"run": cmd_run, "compare": cmd_compare, "plotdata": cmd_plotdata}
    try:
        return handlers[args.command](args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, DomainError, DimensionError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
