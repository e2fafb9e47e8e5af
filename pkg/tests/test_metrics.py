"""Tests for AUC, accuracy, and the multi-seed run protocol."""

import json
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvfae.data import SynthSpec, SplitSpec, synth_generate, write_dataset
from mvfae.errors import DimensionError, MetricError, ValidationError
from mvfae.metrics import (RunConfig, accuracy_at_threshold, auc, config_hash,
                           repeat_runs, results_to_dict, single_run,
                           write_results)
from mvfae.optim import Schedule


def auc_pairwise_oracle(scores, labels):
    """O(n^2) brute force: wins + half-ties over positive-negative pairs."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                wins += 1.0
            elif sp == sn:
                wins += 0.5
    return wins / (pos.size * neg.size)


class TestAuc:
    def test_textbook_example(self):
        scores = [0.1, 0.4, 0.35, 0.8]
        labels = [0, 0, 1, 1]
        assert auc(scores, labels) == pytest.approx(0.75, abs=1e-15)

    def test_perfect_separation(self):
        assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_reversed_separation(self):
        assert auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0

    def test_all_scores_tied(self):
        assert auc([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1]) == pytest.approx(0.5, abs=1e-15)

    def test_single_class_rejected(self):
        with pytest.raises(MetricError):
            auc([0.1, 0.2], [1, 1])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            auc([0.1, 0.2], [1])

    def test_matches_pairwise_oracle_including_ties(self):
        rng = np.random.default_rng(0)
        for trial in range(200):
            n = int(rng.integers(2, 501))
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            if trial % 3 == 0:
                scores = rng.integers(0, 4, size=n).astype(float) / 3.0
            elif trial % 3 == 1:
                scores = np.round(rng.uniform(size=n), 1)
            else:
                scores = rng.uniform(size=n)
            got = auc(scores, labels)
            want = auc_pairwise_oracle(scores, labels)
            assert abs(got - want) <= 1e-12

    @given(st.integers(2, 60), st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_antisymmetry(self, n, seed):
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        scores = np.round(rng.uniform(size=n), 2)
        assert abs(auc(scores, labels) + auc(-scores, labels) - 1.0) <= 1e-12

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(1)
        scores = rng.uniform(size=50)
        labels = rng.integers(0, 2, size=50)
        labels[0], labels[1] = 0, 1
        base = auc(scores, labels)
        for transform in (lambda s: 3.0 * s + 2.0, np.exp,
                          lambda s: np.log(s + 1.0)):
            assert auc(transform(scores), labels) == pytest.approx(base, abs=1e-12)


class TestAccuracy:
    def test_tie_breaks_toward_class_one(self):
        assert accuracy_at_threshold([0.5], [1]) == 1.0
        assert accuracy_at_threshold([0.5], [0]) == 0.0

    def test_basic_counts(self):
        probs = [0.9, 0.1, 0.6, 0.4]
        labels = [1, 0, 0, 1]
        assert accuracy_at_threshold(probs, labels) == 0.5

    def test_out_of_range_probs_rejected(self):
        with pytest.raises(ValidationError):
            accuracy_at_threshold([1.2], [1])

    def test_custom_threshold(self):
        assert accuracy_at_threshold([0.3], [1], threshold=0.25) == 1.0


class TestRunConfig:
    def test_hash_stable_and_ignores_outdir(self):
        a = RunConfig(manifest_path="m.json")
        b = RunConfig(manifest_path="m.json", outdir="/tmp/somewhere")
        assert config_hash(a) == config_hash(b)
        assert len(config_hash(a)) == 16

    def test_hash_sensitive_to_hyperparameters(self):
        a = RunConfig(manifest_path="m.json")
        b = RunConfig(manifest_path="m.json", alpha=0.0)
        assert config_hash(a) != config_hash(b)


@pytest.fixture(scope="module")
def small_manifest(tmp_path_factory):
    directory = tmp_path_factory.mktemp("runs") / "ds"
    views, labels = synth_generate(
        SynthSpec(samples=150, view_dims=(8, 6), latent_dim=4, noise=0.3, seed=0))
    return write_dataset(str(directory), views, labels)


def quick_config(manifest, **overrides):
    base = dict(manifest_path=manifest, hidden_dims=(6,), latent_dim=6,
                schedule=Schedule(lr_initial=5e-3, drop_at=40, lr_after=5e-4,
                                  total_iters=80),
                eval_every=10)
    base.update(overrides)
    return RunConfig(**base)


class TestSingleRun:
    def test_result_schema_and_learning(self, small_manifest):
        result = single_run(quick_config(small_manifest), seed=0)
        assert set(result) == {"seed", "auc", "best_iter", "endpoint",
                               "best_val_accuracy", "test_accuracy", "final_loss"}
        assert result["endpoint"] == "synthetic"
        assert 0.0 <= result["auc"] <= 1.0
        assert result["auc"] >= 0.9  # easy, low-noise instance
        assert set(result["final_loss"]) == {"classification", "reconstruction",
                                             "feature_net", "view_sim", "total"}

    def test_deterministic(self, small_manifest):
        a = single_run(quick_config(small_manifest), seed=3)
        b = single_run(quick_config(small_manifest), seed=3)
        assert a == b

    def test_seed_controls_split_and_init(self, small_manifest):
        a = single_run(quick_config(small_manifest), seed=0)
        b = single_run(quick_config(small_manifest), seed=1)
        assert a["auc"] != b["auc"] or a["final_loss"] != b["final_loss"]


class TestRepeatRuns:
    def test_aggregates_over_seeds(self, small_manifest):
        summary = repeat_runs(quick_config(small_manifest, seeds=(0, 1, 2)))
        assert [r["seed"] for r in summary.runs] == [0, 1, 2]
        aucs = [r["auc"] for r in summary.runs]
        assert summary.mean_auc == pytest.approx(np.mean(aucs), abs=1e-15)
        assert summary.std_auc == pytest.approx(np.std(aucs), abs=1e-15)
        assert summary.failures == []
        assert summary.endpoint == "synthetic"

    def test_parallel_matches_serial(self, small_manifest):
        cfg = quick_config(small_manifest, seeds=(0, 1))
        serial = repeat_runs(cfg, jobs=1)
        parallel = repeat_runs(cfg, jobs=2)
        assert serial.runs == parallel.runs
        assert serial.mean_auc == parallel.mean_auc

    def test_no_seeds_rejected(self, small_manifest):
        with pytest.raises(ValidationError):
            repeat_runs(quick_config(small_manifest, seeds=()))

    def test_all_failures_raise(self, tmp_path):
        cfg = quick_config(str(tmp_path / "missing" / "manifest.json"))
        with pytest.raises((MetricError, OSError)):
            repeat_runs(cfg)


class TestResultsJson:
    def test_schema(self, small_manifest, tmp_path):
        summary = repeat_runs(quick_config(small_manifest, seeds=(0, 1)))
        path = tmp_path / "results.json"
        write_results(summary, str(path))
        payload = json.loads(path.read_text())
        assert set(payload) == {"endpoint", "config_hash", "per_seed",
                                "mean_auc", "std_auc"}
        assert [set(e) for e in payload["per_seed"]] == \
            [{"seed", "auc", "best_iter"}] * 2
        assert payload["config_hash"] == summary.config_hash

    def test_failures_key_only_when_present(self, small_manifest):
        summary = repeat_runs(quick_config(small_manifest, seeds=(0,)))
        assert "failures" not in results_to_dict(summary)
