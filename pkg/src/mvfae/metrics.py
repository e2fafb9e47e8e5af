"""AUC, accuracy, and multi-seed run aggregation.

AUC uses the rank-based Mann-Whitney formulation with midranks for
ties, which makes auc(scores) + auc(-scores) = 1 hold exactly.
``repeat_runs`` executes the whole pipeline once per seed — fresh split,
fresh initialization, training, test AUC of the selected checkpoint —
and aggregates the per-seed results.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import SplitSpec, prepare_dataset
from .errors import DimensionError, MetricError, MvfaeError, ValidationError
from .model import ModelConfig, init_model, predict_proba
from .optim import Schedule, TrainOptions, train


def _midranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with tied scores sharing their average rank."""
    n = scores.shape[0]
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(n, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    return ranks


def auc(scores, labels) -> float:
    """Area under the ROC curve via the rank statistic."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise DimensionError(
            f"scores/labels must be equal-length vectors, got {scores.shape} vs {labels.shape}")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC is undefined with a single class")
    ranks = _midranks(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def accuracy_at_threshold(probs, labels, threshold: float = 0.5) -> float:
    """Fraction correct; probabilities at or above the threshold predict class 1."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.shape != labels.shape or probs.ndim != 1:
        raise DimensionError(
            f"probs/labels must be equal-length vectors, got {probs.shape} vs {labels.shape}")
    if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
        raise ValidationError("probabilities must lie in [0, 1]")
    return float(np.mean((probs >= threshold).astype(np.int64) == labels))


# --- multi-seed protocol ----------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one training run (minus the seed)."""

    manifest_path: str
    hidden_dims: tuple = (100, 100)
    latent_dim: int | None = None
    activation: str = "tanh"
    alpha: float = 1.0
    beta: float = 1.0
    eta: float = 1.0
    lam: float = 0.0
    schedule: Schedule = Schedule()
    split: SplitSpec = SplitSpec()
    weight_decay: float = 1e-4
    eval_every: int = 10
    sim_refresh: int = 1
    seeds: tuple = (0,)
    outdir: str | None = None


def config_hash(config: RunConfig) -> str:
    """Stable hex digest of the run configuration (output paths excluded)."""
    payload = dataclasses.asdict(config)
    payload.pop("outdir")
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


@dataclass
class RunSummary:
    """Aggregate of one repeat_runs invocation."""

    endpoint: str
    config_hash: str
    runs: list
    failures: list
    mean_auc: float
    std_auc: float


def single_run(config: RunConfig, seed: int) -> dict:
    """One full pipeline pass: split, init, train, test AUC of the best model."""
    split_spec = dataclasses.replace(config.split, seed=seed)
    data = prepare_dataset(config.manifest_path, split_spec)

    model_config = ModelConfig(
        views=len(data.train_views),
        input_dims=tuple(b.num_features for b in data.train_views),
        hidden_dims=tuple(config.hidden_dims),
        latent_dim=config.latent_dim,
        activation=config.activation,
        seed=seed,
    )
    model = init_model(model_config, alpha=config.alpha, beta=config.beta,
                       eta=config.eta, lam=config.lam)

    options = TrainOptions(weight_decay=config.weight_decay,
                           eval_every=config.eval_every,
                           sim_refresh=config.sim_refresh)
    if config.outdir is not None:
        os.makedirs(config.outdir, exist_ok=True)
        options.log_path = os.path.join(config.outdir, f"seed{seed}.train.csv")
        options.checkpoint_path = os.path.join(config.outdir, f"seed{seed}.ckpt")
    record = train(model, data, config.schedule, options)

    scores = predict_proba(model, [b.matrix for b in data.test_views])
    final = record.breakdowns[-1]
    return {
        "seed": int(seed),
        "auc": auc(scores, data.test_labels),
        "best_iter": int(record.best_iter),
        "endpoint": data.endpoint,
        "best_val_accuracy": float(record.best_val_accuracy),
        "test_accuracy": accuracy_at_threshold(scores, data.test_labels),
        "final_loss": {
            "classification": final.classification,
            "reconstruction": final.reconstruction,
            "feature_net": final.feature_net,
            "view_sim": final.view_sim,
            "total": final.total,
        },
    }


def _worker(payload):
    config, seed = payload
    try:
        return "ok", single_run(config, seed)
    except MvfaeError as exc:
        return "err", {"seed": int(seed), "error": str(exc)}


def repeat_runs(config: RunConfig, seeds=None, jobs: int = 1) -> RunSummary:
    """Run the pipeline once per seed and aggregate test AUCs.

    Failed seeds are recorded and excluded from the aggregate; at least
    one run must succeed.
    """
    seeds = tuple(config.seeds if seeds is None else seeds)
    if not seeds:
        raise ValidationError("repeat_runs needs at least one seed")
    if jobs < 1:
        raise ValidationError(f"jobs must be >= 1, got {jobs}")

    if jobs == 1 or len(seeds) == 1:
        outcomes = [_worker((config, s)) for s in seeds]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_worker, [(config, s) for s in seeds]))

    runs = [entry for status, entry in outcomes if status == "ok"]
    failures = [entry for status, entry in outcomes if status == "err"]
    if not runs:
        raise MetricError(
            f"all {len(seeds)} runs failed; first error: {failures[0]['error']}")
    aucs = np.asarray([r["auc"] for r in runs])
    endpoint = runs[0].pop("endpoint")
    for r in runs[1:]:
        r.pop("endpoint")
    return RunSummary(
        endpoint=endpoint,
        config_hash=config_hash(config),
        runs=runs,
        failures=failures,
        mean_auc=float(aucs.mean()),
        std_auc=float(aucs.std()),
    )


def results_to_dict(summary: RunSummary) -> dict:
    out = {
        "endpoint": summary.endpoint,
        "config_hash": summary.config_hash,
        "per_seed": [{"seed": r["seed"], "auc": r["auc"], "best_iter": r["best_iter"]}
                     for r in summary.runs],
        "mean_auc": summary.mean_auc,
        "std_auc": summary.std_auc,
    }
    if summary.failures:
        out["failures"] = summary.failures
    return out


def write_results(summary: RunSummary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(results_to_dict(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
