"""Shared helpers for the figure scripts."""
import argparse
import logging
from pathlib import Path

import numpy as np

from tmqc.cli import write_outputs
from tmqc.config import PRESETS
from tmqc.ensemble import RunConfig, run_ensemble


def common_args(description):
    ap = argparse.ArgumentParser(description=description, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n-traj", type=int, default=2000)
    ap.add_argument("--dt", type=float, default=0.025)
    ap.add_argument("--t-max", type=float, default=30.0)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", required=True)
    return ap


def run_case(args, preset, label, **overrides):
    settings = dict(PRESETS[preset])
    settings.update(dt=args.dt, t_max=args.t_max, n_traj=args.n_traj, seed=args.seed, output_every=0.05)
    settings.update(overrides)
    cfg = RunConfig(**settings)
    logging.info("running %s", label)
    obs = run_ensemble(cfg, workers=args.workers)
    write_outputs(obs, Path(args.out) / label)
    return obs


def series(obs, table, column):
    j = obs.column_names[table].index(column)
    return obs.mean[table][:, j], obs.sem[table][:, j]


def coarse(t, y, width=1.0):
    """Averages of y over consecutive windows of the given width."""
    edges = np.arange(0.0, t[-1] + 1e-9, width)
    return np.array([y[(t >= a) & (t < a + width)].mean() for a in edges[:-1]])
