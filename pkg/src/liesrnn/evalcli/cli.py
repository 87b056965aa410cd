"""Command-line interface.

Exit codes: 0 success, 1 configuration or usage error, 2 numerical divergence,
3 file I/O or format error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from ..autodiff.checkpoint import CheckpointError
from ..integrators import DivergenceError, StepContext, StepScheme, rollout_arrays
from ..learning.dataset import Dataset, DatasetError, generate_dataset, load_dataset, save_dataset
from ..learning.model import load_model, save_model
from ..learning.train import TrainConfig, TrainingDiverged, train
from ..rigidbody import Phase
from . import experiments
from .config import ConfigError, load_config
from .metrics import MetricsReport, evaluate_trajectories, metric_conservation, reports_to_csv

log = logging.getLogger("liesrnn")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _write(path, text):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _write_json(path, obj):
    _write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _config(args):
    if not args.config:
        raise UsageError("--config is required")
    cfg = load_config(args.config)
    cfg.apply_overrides(args.seed, args.scheme, args.steps, args.h, args.substeps)
    return cfg


def _out(args, default):
    path = args.out or default
    os.makedirs(path, exist_ok=True)
    return path


def _truth(cfg):
    params, state = cfg.system.build()
    potential, forcing = cfg.truth.build(params)
    return params, state, potential, forcing


def _context(cfg, params, potential, forcing):
    it = cfg.integrator
    return StepContext(params, potential, forcing, h=it.h, verlet_literal=it.verlet_literal, asym_left=it.asym_left)


def _dataset(args, cfg):
    if args.dataset:
        return load_dataset(args.dataset)
    params, state, potential, forcing = _truth(cfg)
    d = cfg.data
    return generate_dataset(params, potential, forcing, state, d.L, d.K, d.dt, d.fine_h,
                            d.noise_sigma, d.seed, d.train_fraction, truth=_truth_label(cfg))


def _truth_label(cfg):
    parts = ["point"] + (["quadrupole"] if cfg.truth.quadrupole else []) + (["drag"] if cfg.truth.drag else [])
    return "+".join(parts)


# ---------------------------------------------------------------- subcommands


def cmd_simulate(args):
    """Integrate the configured system and write the trajectory in the dataset format."""
    cfg = _config(args)
    params, state, potential, forcing = _truth(cfg)
    ctx = _context(cfg, params, potential, forcing)
    it = cfg.integrator
    x0 = state.phase()
    traj, status = rollout_arrays(x0, ctx, it.steps, it.scheme)
    if status:
        raise DivergenceError(int(status))
    full = Phase(*(np.concatenate([a[None], b])[None] for a, b in zip(x0, traj)))
    t = state.t + it.h * np.arange(it.steps + 1)
    meta = {"scheme": it.scheme, "truth": _truth_label(cfg), "seed": cfg.seed}
    ds = Dataset(params, float(it.h), t, *full, np.array(["val"]), meta)
    out = _out(args, "out/simulate")
    save_dataset(ds, os.path.join(out, "trajectory.txt"))
    defect, err, absolute = metric_conservation(Phase(*(a[0] for a in full)), params, potential, cfg.eval.energy_absolute)
    _write_json(os.path.join(out, "conservation.json"),
                {"max_defect": defect, "max_energy_error": err, "energy_error_absolute": absolute, "steps": it.steps})
    return EXIT_OK


def cmd_gen_data(args):
    cfg = _config(args)
    ds = _dataset(argparse.Namespace(dataset=None), cfg)
    out = _out(args, "out/data")
    save_dataset(ds, os.path.join(out, "dataset.txt"))
    _write_json(os.path.join(out, "config.json"), cfg.to_dict())
    return EXIT_OK


def _curve_csv(curve):
    cols = ("epoch", "train_loss", "val_loss", "train_diverged", "val_diverged")
    lines = [",".join(cols)]
    for row in curve:
        lines.append(",".join("" if row[c] is None else repr(row[c]) for c in cols))
    return "\n".join(lines) + "\n"


def cmd_train(args):
    cfg = _config(args)
    ds = _dataset(args, cfg)
    res = train(ds, cfg.train)
    out = _out(args, "out/train")
    save_model(os.path.join(out, "model.ckpt"), res.model, cfg.to_dict(), res.curve, res.optimizer)
    _write(os.path.join(out, "curve.csv"), _curve_csv(res.curve))
    _write_json(os.path.join(out, "train.json"), {"best_epoch": res.best_epoch, "stop_reason": res.stop_reason})
    return EXIT_OK


def cmd_evaluate(args):
    """Metrics of a checkpoint (or, without one, of the configured physics) on a dataset."""
    cfg = _config(args)
    ds = _dataset(args, cfg)
    if args.checkpoint:
        model, _, _ = load_model(args.checkpoint)
        residual = experiments.residual_truth(ds.params) if cfg.truth.quadrupole else None
        rep = experiments.evaluate_model(model, ds, cfg.train.scheme, cfg.train.substeps, cfg.eval.steps,
                                         label="learned", truth_residual=residual)
    else:
        potential, forcing = cfg.truth.build(ds.params)
        ctx = _context(cfg, ds.params, potential, forcing)
        substeps = int(round(ds.dt / cfg.integrator.h))
        if substeps < 1 or abs(substeps * cfg.integrator.h - ds.dt) > 1e-9 * ds.dt:
            raise ConfigError(f"integrator h={cfg.integrator.h!r} does not divide the dataset spacing {ds.dt!r}")
        steps = min(cfg.eval.steps, ds.K * substeps)
        rep = MetricsReport(label="physics", steps=steps)
        rep.dq, rep.dR, ndiv = evaluate_trajectories(ctx, ds, steps, substeps, cfg.integrator.scheme, which="all")
        rep.diverged = ndiv > 0
    out = _out(args, "out/evaluate")
    _write(os.path.join(out, "report.json"), rep.to_json())
    _write(os.path.join(out, "report.csv"), reports_to_csv([rep]))
    return EXIT_DIVERGED if rep.diverged else EXIT_OK


def cmd_compare_integrators(args):
    """Per-scheme metric matrix: true physics, and (with ``--train``) identically trained models."""
    cfg = _config(args)
    params, state, potential, forcing = _truth(cfg)
    out = _out(args, "out/compare")
    phys = experiments.compare_physics(params, state, potential, forcing, cfg.eval.schemes,
                                       cfg.integrator.h, cfg.eval.steps, energy_absolute=cfg.eval.energy_absolute)
    _write(os.path.join(out, "physics.csv"), reports_to_csv(phys))
    if args.train:
        ds = _dataset(args, cfg)
        residual = experiments.residual_truth(ds.params) if cfg.truth.quadrupole else None
        reports, _ = experiments.compare_trained(ds, cfg.train, cfg.eval.schemes, cfg.eval.steps, residual)
        _write(os.path.join(out, "trained.csv"), reports_to_csv(reports))
        _write_json(os.path.join(out, "ordering.json"), experiments.ordering_check(reports))
    return EXIT_OK


def cmd_convergence(args):
    cfg = _config(args)
    c = cfg.convergence
    out = _out(args, "out/convergence")
    summary = {}
    for name, hs in (("kepler", c.hs), ("top", c.top_hs)):
        x0, ctx, key = experiments.convergence_problem(name)
        rows = experiments.convergence_study(x0, ctx, c.schemes, hs, c.T, key)
        _write(os.path.join(out, f"convergence_{name}.csv"), experiments.convergence_csv(rows))
        summary[name] = experiments.slopes(rows)
    _write_json(os.path.join(out, "slopes.json"), summary)
    return EXIT_OK


def cmd_precess_demo(args):
    cfg = _config(args)
    params, state, _, _ = _truth(cfg)
    model = load_model(args.checkpoint)[0] if args.checkpoint else None
    rows, summary = experiments.precess_demo(params, state, cfg.integrator.h, cfg.integrator.steps, model)
    lines = ["t,label,rel_x,rel_y,rel_z,apse_angle"]
    lines += [f"{r[0]!r},{r[1]}," + ",".join(repr(float(v)) for v in r[2:]) for r in rows]
    out = _out(args, "out/precess")
    _write(os.path.join(out, "precession.csv"), "\n".join(lines) + "\n")
    _write_json(os.path.join(out, "summary.json"), summary)
    return EXIT_DIVERGED if any("diverged_at" in v for v in summary.values()) else EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare-integrators": cmd_compare_integrators,
    "convergence": cmd_convergence,
    "precess-demo": cmd_precess_demo,
}


def build_parser():
    parser = _Parser(prog="liesrnn", description="Rigid-body N-body integrators and learned corrections.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="run configuration (JSON)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--scheme", choices=[s.value for s in StepScheme] + ["cf2", "cf4", "liet2"])
        p.add_argument("--steps", type=int)
        p.add_argument("--h", type=float)
        p.add_argument("--substeps", type=int)
        if name in ("train", "evaluate", "compare-integrators"):
            p.add_argument("--dataset", help="dataset file (generated from the config when omitted)")
        if name in ("evaluate", "precess-demo"):
            p.add_argument("--checkpoint")
        if name == "compare-integrators":
            p.add_argument("--train", action="store_true", help="also train one model per scheme")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError, ValueError) as exc:
        if isinstance(exc, (DatasetError, CheckpointError)):
            print(f"liesrnn: {exc}", file=sys.stderr)
            return EXIT_IO
        print(f"liesrnn: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, TrainingDiverged) as exc:
        print(f"liesrnn: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, CheckpointError, DatasetError) as exc:
        print(f"liesrnn: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
