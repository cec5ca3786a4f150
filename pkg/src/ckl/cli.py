"""Command-line entry point.

Subcommands: gradcheck, bounds, weights, curves, train, compare. Parameters
come from an optional JSON config file (--config) organized into groups
(hp, bkl, synth, train, bounds, curves, weights, gradcheck, compare); any
flag overrides its config key. Unknown config keys are rejected before any
computation runs.

Exit codes: 0 success, 1 validation error, 2 verification failure (a checked
mathematical invariant was violated), so CI can gate on the difference
between "tool broke" and "claim failed".
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bounds as bounds_mod
from . import gradients, io, synth, trainer
from .beta import compute_beta, compute_ranks
from .core import CklHyperparams, top_one_probability
from .losses import LOSS_KINDS, BklParams

_CONFIG_GROUPS = {
    "hp": {"gamma", "alpha", "beta_update_period", "prob_clamp_epsilon"},
    "bkl": {"lam"},
    "synth": {
        "num_queries",
        "num_eval_queries",
        "num_positives",
        "num_negatives",
        "feature_dim",
        "teacher_noise_sigma",
        "teacher_corruption_rate",
        "direction_jitter",
        "feature_noise_sigma",
        "rng_seed",
    },
    "train": {
        "loss",
        "learning_rate",
        "epochs",
        "batch_size",
        "warmup_steps",
        "warmup_loss",
        "beta_update_period",
        "init_seed",
        "init_scale",
        "shuffle_seed",
    },
    "bounds": {"samples", "s_max", "m_max", "seed", "tolerance"},
    "curves": {"gamma", "beta", "lam", "q_grid", "ratio_min", "ratio_max", "ratio_points"},
    "weights": {"gamma", "alpha", "num_positives", "num_negatives", "seed"},
    "gradcheck": {"draws", "seed", "step", "tolerance"},
    "compare": {"losses", "seeds"},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we use 1
        raise UsageError(message)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object of parameter groups")
    for group, keys in cfg.items():
        if group not in _CONFIG_GROUPS:
            raise UsageError(f"unknown config group {group!r}")
        if not isinstance(keys, dict):
            raise UsageError(f"config group {group!r} must be an object")
        unknown = set(keys) - _CONFIG_GROUPS[group]
        if unknown:
            raise UsageError(f"unknown keys in config group {group!r}: {sorted(unknown)}")
    return cfg


def _merged(cfg: dict, group: str, flags: dict) -> dict:
    """Config values for one group with non-None flag values on top."""
    out = dict(cfg.get(group, {}))
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def _hp_from(values: dict) -> CklHyperparams:
    try:
        return CklHyperparams(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad hyperparameters: {exc}") from exc


def _build_parser() -> _Parser:
    parser = _Parser(prog="ckl", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--out", help="output path (atomic write); stdout when omitted")
        return p

    p = add("gradcheck", "verify analytic gradients against finite differences")
    p.add_argument("--draws", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--step", type=float, help="finite-difference step")
    p.add_argument("--tol", type=float, dest="tolerance", help="max relative error gate")

    p = add("bounds", "Monte-Carlo verification of the loss lower-bound chain")
    p.add_argument("--samples", type=int)
    p.add_argument("--s-max", type=int, dest="s_max")
    p.add_argument("--m-max", type=int, dest="m_max")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float, dest="tolerance")

    p = add("weights", "tabulate the weighted-KL term weights for one instance")
    p.add_argument("--gamma", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--positives", type=int, dest="num_positives")
    p.add_argument("--negatives", type=int, dest="num_negatives")
    p.add_argument("--seed", type=int)

    p = add("curves", "tabulate gradient-contribution ratio curves")
    p.add_argument("--gamma", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--q", dest="q_grid", help="comma-separated student probabilities")
    p.add_argument("--ratio-min", type=float, dest="ratio_min")
    p.add_argument("--ratio-max", type=float, dest="ratio_max")
    p.add_argument("--ratio-points", type=int, dest="ratio_points")

    def add_train_flags(p):
        p.add_argument("--loss", choices=LOSS_KINDS)
        p.add_argument("--lr", type=float, dest="learning_rate")
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int, dest="batch_size")
        p.add_argument("--warmup-steps", type=int, dest="warmup_steps")
        p.add_argument("--warmup-loss", choices=LOSS_KINDS, dest="warmup_loss")
        p.add_argument("--beta-update-period", type=int, dest="beta_update_period")
        p.add_argument("--init-seed", type=int, dest="init_seed")
        p.add_argument("--shuffle-seed", type=int, dest="shuffle_seed")
        p.add_argument("--gamma", type=float)
        p.add_argument("--alpha", type=float)
        p.add_argument("--queries", type=int, dest="num_queries")
        p.add_argument("--eval-queries", type=int, dest="num_eval_queries")
        p.add_argument("--positives", type=int, dest="num_positives")
        p.add_argument("--negatives", type=int, dest="num_negatives")
        p.add_argument("--dim", type=int, dest="feature_dim")
        p.add_argument("--sigma", type=float, dest="teacher_noise_sigma")
        p.add_argument("--corruption", type=float, dest="teacher_corruption_rate")
        p.add_argument("--data-seed", type=int, dest="rng_seed")

    p = add("train", "train the linear student on a synthetic dataset")
    add_train_flags(p)
    p.add_argument("--summary-out", dest="summary_out", help="summary JSON path")

    p = add("compare", "train several losses under an identical protocol")
    add_train_flags(p)
    p.add_argument("--losses", help="comma-separated loss kinds")
    p.add_argument("--seeds", help="comma-separated seeds")

    return parser


def _synth_config(cfg: dict, args) -> synth.SynthConfig:
    flags = {
        k: getattr(args, k, None)
        for k in _CONFIG_GROUPS["synth"]
    }
    try:
        return synth.SynthConfig(**_merged(cfg, "synth", flags))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad synth config: {exc}") from exc


def _train_config(cfg: dict, args, loss=None) -> trainer.TrainConfig:
    flags = {k: getattr(args, k, None) for k in _CONFIG_GROUPS["train"]}
    if loss is not None:
        flags["loss"] = loss
    try:
        return trainer.TrainConfig(**_merged(cfg, "train", flags))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad train config: {exc}") from exc


def _hp_config(cfg: dict, args) -> CklHyperparams:
    flags = {
        "gamma": getattr(args, "gamma", None),
        "alpha": getattr(args, "alpha", None),
    }
    return _hp_from(_merged(cfg, "hp", flags))


def _cmd_gradcheck(args) -> int:
    cfg = _load_config(args.config)
    values = _merged(cfg, "gradcheck", {"draws": args.draws, "seed": args.seed, "step": args.step, "tolerance": args.tolerance})
    draws = int(values.get("draws", 1000))
    seed = int(values.get("seed", 20240817))
    step = float(values.get("step", 1e-6))
    tol = float(values.get("tolerance", 1e-6))
    report = gradients.run_gradcheck(draws=draws, seed=seed, h=step)
    report["tolerance"] = tol
    report["passed"] = report["max_rel_error"] < tol
    io.emit(args.out, io.json_text(report))
    return 0 if report["passed"] else 2


def _cmd_bounds(args) -> int:
    cfg = _load_config(args.config)
    values = _merged(
        cfg,
        "bounds",
        {"samples": args.samples, "s_max": args.s_max, "m_max": args.m_max, "seed": args.seed, "tolerance": args.tolerance},
    )
    try:
        report = bounds_mod.verify_bound_chain(
            samples=int(values.get("samples", 100_000)),
            s_max=int(values.get("s_max", 2)),
            seed=int(values.get("seed", 7)),
            m_max=int(values.get("m_max", 8)),
            tolerance=float(values.get("tolerance", 1e-9)),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    io.emit(args.out, io.json_text(report.to_json_dict()))
    return 0 if report.violations == 0 else 2


def _cmd_weights(args) -> int:
    cfg = _load_config(args.config)
    values = _merged(
        cfg,
        "weights",
        {
            "gamma": args.gamma,
            "alpha": args.alpha,
            "num_positives": args.num_positives,
            "num_negatives": args.num_negatives,
            "seed": args.seed,
        },
    )
    gamma = float(values.get("gamma", 5.0))
    alpha = float(values.get("alpha", 1.0))
    s = int(values.get("num_positives", 3))
    m = int(values.get("num_negatives", 7))
    seed = int(values.get("seed", 11))
    hp = _hp_from({"gamma": gamma, "alpha": alpha})
    rng = np.random.default_rng(seed)
    scores = np.concatenate([rng.normal(1.2, 0.6, size=s), rng.normal(0.0, 1.0, size=m)])
    mask = np.array([True] * s + [False] * m)
    dist = top_one_probability(scores, mask)
    ids = [f"p{i}" for i in range(s)] + [f"n{i}" for i in range(m)]
    ranks = compute_ranks(dict(zip(ids, scores)))
    assignment = compute_beta(ranks, ids[:s], ids[s:], alpha)
    from .losses import ckl_weights

    w = ckl_weights(dist, assignment.beta_vector(ids[s:]), hp)
    weight_by_index = np.concatenate([w.positive_weights, w.negative_weights])
    order = np.argsort(-dist.probs, kind="stable")
    rows = [
        (
            idx,
            "positive" if mask[doc] else "negative",
            float(dist.probs[doc]),
            float(weight_by_index[doc]),
        )
        for idx, doc in enumerate(order)
    ]
    io.emit(args.out, io.csv_text(("doc_index", "kind", "q", "weight"), rows))
    return 0


def _parse_q_grid(raw) -> tuple[float, ...]:
    if raw is None:
        return gradients.DEFAULT_Q_GRID
    if isinstance(raw, (list, tuple)):
        return tuple(float(x) for x in raw)
    try:
        return tuple(float(x) for x in str(raw).split(","))
    except ValueError as exc:
        raise UsageError(f"bad q grid: {raw!r}") from exc


def _cmd_curves(args) -> int:
    cfg = _load_config(args.config)
    values = _merged(
        cfg,
        "curves",
        {
            "gamma": args.gamma,
            "beta": args.beta,
            "lam": args.lam,
            "q_grid": args.q_grid,
            "ratio_min": args.ratio_min,
            "ratio_max": args.ratio_max,
            "ratio_points": args.ratio_points,
        },
    )
    gamma = float(values.get("gamma", 5.0))
    beta = float(values.get("beta", 0.0))
    lam = float(values.get("lam", 0.1))
    q_grid = _parse_q_grid(values.get("q_grid"))
    ratio_grid = np.geomspace(
        float(values.get("ratio_min", 0.05)),
        float(values.get("ratio_max", 1.95)),
        int(values.get("ratio_points", 121)),
    )
    if gamma - beta < 1.0:
        raise UsageError("exponent below one: need gamma - beta >= 1")
    rows = [
        (pt.branch, pt.pq_ratio, pt.q, pt.g_ckl, pt.g_bkl)
        for pt in gradients.curve_sweep(gamma, beta, lam, q_grid, ratio_grid)
    ]
    io.emit(args.out, io.csv_text(("branch", "pq_ratio", "q", "g_ckl", "g_bkl"), rows))
    return 0


def _trainlog_rows(log: trainer.TrainRunLog):
    return [
        (r.step, r.loss, r.margin_separation, r.positive_entropy, r.mrr_at_10, r.ndcg_at_10)
        for r in log.records
    ]


_TRAINLOG_HEADER = ("step", "loss", "margin", "entropy", "mrr10", "ndcg10")


def _cmd_train(args) -> int:
    cfg = _load_config(args.config)
    synth_cfg = _synth_config(cfg, args)
    train_cfg = _train_config(cfg, args)
    hp = _hp_config(cfg, args)
    bkl = BklParams(**_merged(cfg, "bkl", {}))
    dataset = synth.generate_dataset(synth_cfg)
    try:
        log = trainer.train(dataset, train_cfg, hp, bkl)
    except trainer.TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    io.emit(args.out, io.csv_text(_TRAINLOG_HEADER, _trainlog_rows(log)))
    if args.summary_out:
        summary = {
            "loss": log.loss_kind,
            "steps": len(log.records),
            "beta_update_period": log.beta_update_period,
            "final_eval": {
                "mrr_at_10": log.final_eval.mrr_at_10,
                "ndcg_at_10": log.final_eval.ndcg_at_10,
                "positive_entropy": log.final_eval.positive_entropy,
                "margin_separation": log.final_eval.margin_separation,
            },
            "hp": {"gamma": hp.gamma, "alpha": hp.alpha},
        }
        io.atomic_write_text(args.summary_out, io.json_text(summary))
    return 0


def _cmd_compare(args) -> int:
    cfg = _load_config(args.config)
    synth_cfg = _synth_config(cfg, args)
    base_cfg = _train_config(cfg, args)
    hp = _hp_config(cfg, args)
    bkl = BklParams(**_merged(cfg, "bkl", {}))
    values = _merged(cfg, "compare", {"losses": args.losses, "seeds": args.seeds})
    raw_losses = values.get("losses", "kl,ckl")
    losses = raw_losses.split(",") if isinstance(raw_losses, str) else list(raw_losses)
    bad = [l for l in losses if l not in LOSS_KINDS]
    if bad:
        raise UsageError(f"unknown losses: {bad}")
    raw_seeds = values.get("seeds", "0,1,2,3,4")
    try:
        seeds = (
            tuple(int(x) for x in raw_seeds.split(","))
            if isinstance(raw_seeds, str)
            else tuple(int(x) for x in raw_seeds)
        )
    except ValueError as exc:
        raise UsageError(f"bad seeds: {raw_seeds!r}") from exc
    dataset = synth.generate_dataset(synth_cfg)
    try:
        rows = trainer.compare_losses(dataset, losses, [hp], seeds, base_cfg, bkl)
    except (ValueError, trainer.TrainingDivergedError) as exc:
        raise UsageError(str(exc)) from exc
    header = (
        "loss",
        "gamma",
        "alpha",
        "seeds",
        "margin_mean",
        "margin_std",
        "entropy_mean",
        "entropy_std",
        "mrr10_mean",
        "mrr10_std",
        "ndcg10_mean",
        "ndcg10_std",
    )
    out_rows = [
        (
            r.loss,
            r.gamma,
            r.alpha,
            len(r.seeds),
            r.margin_mean,
            r.margin_std,
            r.entropy_mean,
            r.entropy_std,
            r.mrr10_mean,
            r.mrr10_std,
            r.ndcg10_mean,
            r.ndcg10_std,
        )
        for r in rows
    ]
    io.emit(args.out, io.csv_text(header, out_rows))
    return 0


_COMMANDS = {
    "gradcheck": _cmd_gradcheck,
    "bounds": _cmd_bounds,
    "weights": _cmd_weights,
    "curves": _cmd_curves,
    "train": _cmd_train,
    "compare": _cmd_compare,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand")
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(parser.format_usage(), file=sys.stderr, end="")
        return 1


if __name__ == "__main__":
    sys.exit(main())
