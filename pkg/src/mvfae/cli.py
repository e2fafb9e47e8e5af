"""Command-line front end: synth, train, eval, gradcheck, repeat.

Configuration comes from an optional JSON file plus flag overrides, with
flags winning. Exit codes: 0 success, 1 check failure, 2 usage/config
error, 3 data/corruption error. Artifacts carry no timestamps, so a rerun
with identical inputs and seed reproduces them byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys

from .data import SplitSpec, SynthSpec, prepare_dataset, read_manifest, \
    synth_generate, write_dataset
from .errors import (CheckpointError, ConfigError, DegenerateGraphError,
                     DimensionError, MetricError, MvfaeError, NumericError,
                     ParseError, StratificationError, ValidationError)
from .metrics import (RunConfig, accuracy_at_threshold, auc, config_hash,
                      repeat_runs, single_run, write_results)
from .model import predict_proba
from .optim import Schedule, load_checkpoint, read_tensor_file
from .selfcheck import run_gradient_check

GRADCHECK_TOL = 1e-4

_SYNTH_DEFAULTS = SynthSpec()
_SCHEDULE_DEFAULTS = Schedule()
_SPLIT_DEFAULTS = SplitSpec()


def blob_sha1(path) -> str:
    """Git-style blob hash of a file's content."""
    with open(path, "rb") as fh:
        content = fh.read()
    h = hashlib.sha1(b"blob %d\0" % len(content))
    h.update(content)
    return h.hexdigest()


def _ints(text: str) -> tuple:
    return tuple(int(part) for part in text.split(",") if part.strip())


def _floats(text: str) -> tuple:
    return tuple(float(part) for part in text.split(",") if part.strip())


# --- config assembly --------------------------------------------------------

def _load_config_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid config JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return cfg


def _run_config_from(args) -> RunConfig:
    """Merge config file and flags (flags win) into a RunConfig."""
    cfg = _load_config_file(args.config) if getattr(args, "config", None) else {}

    def pick(flag, key, default):
        if flag is not None:
            return flag
        return cfg.get(key, default)

    manifest = pick(args.manifest, "manifest_path", cfg.get("manifest"))
    if manifest is None:
        raise ConfigError("a dataset manifest is required (--manifest or config file)")

    sched = cfg.get("schedule", {})
    schedule = Schedule(
        lr_initial=pick(args.lr, "_", sched.get("lr_initial", _SCHEDULE_DEFAULTS.lr_initial)),
        drop_at=pick(args.drop_at, "_", sched.get("drop_at", _SCHEDULE_DEFAULTS.drop_at)),
        lr_after=pick(args.lr_after, "_", sched.get("lr_after", _SCHEDULE_DEFAULTS.lr_after)),
        total_iters=pick(args.iters, "_", sched.get("total_iters", _SCHEDULE_DEFAULTS.total_iters)),
    )

    split_cfg = cfg.get("split", {})
    if args.split is not None:
        fractions = _floats(args.split)
        if len(fractions) != 3:
            raise ConfigError(f"--split needs three fractions, got {args.split!r}")
    else:
        fractions = (split_cfg.get("train", _SPLIT_DEFAULTS.train),
                     split_cfg.get("val", _SPLIT_DEFAULTS.val),
                     split_cfg.get("test", _SPLIT_DEFAULTS.test))
    split = SplitSpec(*fractions, seed=split_cfg.get("seed", 0))

    hidden = args.hidden_dims if args.hidden_dims is not None \
        else tuple(cfg.get("hidden_dims", (100, 100)))
    seeds = tuple(cfg.get("seeds", (0,)))
    if getattr(args, "seeds", None) is not None:
        seeds = args.seeds
    elif getattr(args, "seed", None) is not None:
        seeds = (args.seed,)

    return RunConfig(
        manifest_path=manifest,
        hidden_dims=tuple(hidden),
        latent_dim=pick(args.latent_dim, "latent_dim", None),
        activation=pick(args.activation, "activation", "tanh"),
        alpha=pick(args.alpha, "alpha", 1.0),
        beta=pick(args.beta, "beta", 1.0),
        eta=pick(args.eta, "eta", 1.0),
        lam=pick(args.lam, "lambda", cfg.get("lam", 0.0)),
        schedule=schedule,
        split=split,
        weight_decay=pick(args.weight_decay, "weight_decay", 1e-4),
        eval_every=pick(args.eval_every, "eval_every", 10),
        sim_refresh=pick(args.sim_refresh, "sim_refresh", 1),
        seeds=seeds,
        outdir=pick(args.outdir, "outdir", None),
    )


def _input_hashes(manifest_path) -> dict:
    manifest = read_manifest(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))
    files = {os.path.basename(manifest_path): blob_sha1(manifest_path)}
    for entry in manifest["views"]:
        for key in ("matrix_path", "network_path"):
            files[entry[key]] = blob_sha1(os.path.join(base, entry[key]))
    files[manifest["labels_path"]] = blob_sha1(os.path.join(base, manifest["labels_path"]))
    return dict(sorted(files.items()))


# --- subcommands ------------------------------------------------------------

def cmd_synth(args) -> int:
    spec = SynthSpec(samples=args.samples, view_dims=_ints(args.view_dims),
                     latent_dim=args.latent_dim, clusters=args.clusters,
                     separation=args.separation, noise=args.noise,
                     graph_density=args.graph_density, seed=args.seed)
    views, labels = synth_generate(spec)
    manifest_path = write_dataset(args.out, views, labels)
    print(manifest_path)
    return 0


def cmd_train(args) -> int:
    config = _run_config_from(args)
    seed = config.seeds[0]
    outdir = config.outdir or os.path.join(
        "runs", f"{config_hash(config)[:12]}-seed{seed}")
    config = dataclasses.replace(config, outdir=outdir, seeds=(seed,))
    os.makedirs(outdir, exist_ok=True)

    result = single_run(config, seed)
    run_manifest = {
        "config": dataclasses.asdict(config),
        "seed": seed,
        "inputs": _input_hashes(config.manifest_path),
        "metrics": {
            "test_auc": result["auc"],
            "test_accuracy": result["test_accuracy"],
            "best_iter": result["best_iter"],
            "best_val_accuracy": result["best_val_accuracy"],
            "final_loss": result["final_loss"],
        },
    }
    with open(os.path.join(outdir, "run_manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(run_manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"seed={seed} test_auc={result['auc']:.4f} "
          f"best_iter={result['best_iter']} -> {outdir}")
    return 0


def cmd_eval(args) -> int:
    tensors = read_tensor_file(args.checkpoint)
    model = load_checkpoint(args.checkpoint)
    data = prepare_dataset(args.manifest, SplitSpec(seed=args.split_seed))

    found = tuple(b.num_features for b in data.test_views)
    if found != model.config.input_dims:
        raise DimensionError(
            f"checkpoint expects view dims {model.config.input_dims}, dataset has {found}")

    scores = predict_proba(model, [b.matrix for b in data.test_views])
    test_auc = auc(scores, data.test_labels)
    reconstructed = RunConfig(
        manifest_path=args.manifest,
        hidden_dims=model.config.hidden_dims,
        latent_dim=model.config.latent_dim,
        activation=model.config.activation,
        alpha=model.alpha, beta=model.beta, eta=model.eta, lam=model.lam,
        split=SplitSpec(seed=args.split_seed),
        seeds=(args.split_seed,),
    )
    results = {
        "endpoint": data.endpoint,
        "config_hash": config_hash(reconstructed),
        "per_seed": [{"seed": args.split_seed, "auc": test_auc,
                      "best_iter": int(tensors.get("meta/best_iter", -1))}],
        "mean_auc": test_auc,
        "std_auc": 0.0,
        "test_accuracy": accuracy_at_threshold(scores, data.test_labels),
    }
    print(json.dumps(results, indent=2, sort_keys=True))
    return 0


def cmd_repeat(args) -> int:
    config = _run_config_from(args)
    outdir = config.outdir or os.path.join(
        "runs", f"{config_hash(config)[:12]}-repeat")
    config = dataclasses.replace(config, outdir=outdir)
    os.makedirs(outdir, exist_ok=True)

    summary = repeat_runs(config, jobs=args.jobs)
    results_path = os.path.join(outdir, "results.json")
    write_results(summary, results_path)
    print(f"{len(summary.runs)} runs ({len(summary.failures)} failed): "
          f"mean_auc={summary.mean_auc:.4f} std={summary.std_auc:.4f} -> {results_path}")
    return 0


def _corrupt_head_gradient(grads) -> None:
    grads["head/W"] += 1.0


def cmd_gradcheck(args) -> int:
    corrupt = _corrupt_head_gradient if args.corrupt_gradient else None
    result = run_gradient_check(epsilon=args.epsilon, samples=args.samples,
                                seed=args.seed, corrupt_gradient=corrupt)
    where = f"{result.worst_param}{list(result.worst_index)}"
    print(f"max relative error {result.max_rel_err:.3e} at {where} "
          f"over {result.samples} coordinates")
    if result.max_rel_err <= GRADCHECK_TOL:
        print("PASS")
        return 0
    print(f"FAIL (tolerance {GRADCHECK_TOL:g})")
    return 1


# --- parser and dispatch ----------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvfae",
        description="Multi-view factorization autoencoder with graph constraints.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic multi-view dataset")
    p_synth.add_argument("--out", required=True, help="output dataset directory")
    p_synth.add_argument("--samples", type=int, default=_SYNTH_DEFAULTS.samples)
    p_synth.add_argument("--view-dims", default=",".join(map(str, _SYNTH_DEFAULTS.view_dims)),
                         help="comma-separated feature counts per view")
    p_synth.add_argument("--latent-dim", type=int, default=_SYNTH_DEFAULTS.latent_dim)
    p_synth.add_argument("--clusters", type=int, default=_SYNTH_DEFAULTS.clusters)
    p_synth.add_argument("--separation", type=float, default=_SYNTH_DEFAULTS.separation)
    p_synth.add_argument("--noise", type=float, default=_SYNTH_DEFAULTS.noise)
    p_synth.add_argument("--graph-density", type=float, default=_SYNTH_DEFAULTS.graph_density)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(func=cmd_synth)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config JSON; flags override it")
    common.add_argument("--manifest", help="dataset manifest path")
    common.add_argument("--hidden-dims", type=_ints, default=None,
                        help="comma-separated encoder widths, e.g. 100,100")
    common.add_argument("--latent-dim", type=int, default=None)
    common.add_argument("--activation", choices=("tanh", "relu", "identity"), default=None)
    common.add_argument("--alpha", type=float, default=None,
                        help="feature-network penalty weight")
    common.add_argument("--beta", type=float, default=None,
                        help="view-similarity penalty weight")
    common.add_argument("--eta", type=float, default=None,
                        help="reconstruction weight")
    common.add_argument("--lambda", dest="lam", type=float, default=None,
                        help="factorization regularizer weight")
    common.add_argument("--lr", type=float, default=None)
    common.add_argument("--lr-after", type=float, default=None)
    common.add_argument("--drop-at", type=int, default=None)
    common.add_argument("--iters", type=int, default=None)
    common.add_argument("--weight-decay", type=float, default=None)
    common.add_argument("--eval-every", type=int, default=None)
    common.add_argument("--sim-refresh", type=int, default=None)
    common.add_argument("--split", default=None, help="train,val,test fractions")
    common.add_argument("--outdir", default=None)

    p_train = sub.add_parser("train", parents=[common],
                             help="train one model and write run artifacts")
    p_train.add_argument("--seed", type=int, default=None)
    p_train.set_defaults(func=cmd_train)

    p_repeat = sub.add_parser("repeat", parents=[common],
                              help="train across seeds and aggregate test AUC")
    p_repeat.add_argument("--seeds", type=_ints, default=None,
                          help="comma-separated seed list")
    p_repeat.add_argument("--jobs", type=int, default=1)
    p_repeat.set_defaults(func=cmd_repeat)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a dataset's test split")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--split-seed", type=int, default=0)
    p_eval.set_defaults(func=cmd_eval)

    p_check = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p_check.add_argument("--epsilon", type=float, default=1e-5)
    p_check.add_argument("--samples", type=int, default=50)
    p_check.add_argument("--seed", type=int, default=0)
    p_check.add_argument("--corrupt-gradient", action="store_true",
                         help=argparse.SUPPRESS)
    p_check.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, CheckpointError, MetricError, StratificationError,
            DegenerateGraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValidationError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except MvfaeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
