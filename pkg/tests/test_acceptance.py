"""Acceptance suite for the full package.

Each test checks one end-to-end guarantee at a pinned tolerance and prints
a single verdict line (with the measured statistic and elapsed time) so a
verbose run reads as a checklist. Budgeted tests also assert their runtime.
"""

import csv
import json
import time

import numpy as np

from mvfae.data import SynthSpec, synth_generate, write_dataset
from mvfae.graphs import InteractionNetwork, laplacian, normalize_frobenius
from mvfae.metrics import RunConfig, auc, repeat_runs, single_run, write_results
from mvfae.model import DecoderMatrix, project_decoder_columns
from mvfae.objective import feature_net_penalty
from mvfae.optim import Schedule, fit_factorization
from mvfae.selfcheck import build_tiny_instance, run_gradient_check
from mvfae.tensor import quad_trace_rows


def report(capsys, name, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {'PASS' if ok else 'FAIL'}: {name} — {detail}",
              flush=True)


def test_graph_trace_identity(capsys):
    """Trace(Y L Y^T) equals the half-sum of weighted squared column gaps.

    100 random (Y, G) with p <= 50; the two sides come from independent
    code paths (matrix products vs. an explicit pairwise loop that never
    forms the Laplacian). |difference| <= 1e-10, runtime < 5 s.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(42)
    worst = 0.0
    for trial in range(100):
        p = int(rng.integers(2, 51))
        k = int(rng.integers(1, 9))
        w = rng.uniform(0.0, 1.0, size=(p, p))
        if trial % 2:  # half the trials use sparse graphs
            w *= rng.uniform(size=(p, p)) < 0.3
        w = (w + w.T) / 2.0
        np.fill_diagonal(w, 0.0)
        y = rng.normal(size=(k, p))

        via_trace = quad_trace_rows(y, laplacian(w)).item()

        pairwise = 0.0
        for i in range(p):
            for j in range(p):
                d = y[:, i] - y[:, j]
                pairwise += w[i, j] * float(d @ d)
        pairwise *= 0.5

        worst = max(worst, abs(via_trace - pairwise))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 5.0
    report(capsys, "graph-trace identity",
           ok, f"max |trace - pairwise| = {worst:.3e} over 100 trials "
               f"({elapsed:.1f}s < 5s)")
    assert worst <= 1e-10
    assert elapsed < 5.0


def test_gradients_match_finite_differences(capsys):
    """Backpropagated gradients of the full objective are correct.

    Canonical tiny instance (8 samples, 2 views of 6 and 5 features,
    latent size 3 behind one hidden layer of 4, tanh, all weights 1.0);
    50 sampled coordinates covering every parameter group vs. central
    differences at eps=1e-5, relative error <= 1e-4, runtime < 10 s.
    """
    t0 = time.perf_counter()
    model, views, labels = build_tiny_instance(seed=0)
    assert model.config.views == 2
    assert model.config.input_dims == (6, 5)
    assert model.config.hidden_dims == (4, 3)
    assert model.config.activation == "tanh"
    assert views[0].matrix.shape[0] == 8
    assert (model.alpha, model.beta, model.eta) == (1.0, 1.0, 1.0)

    result = run_gradient_check(epsilon=1e-5, samples=50, seed=0)
    elapsed = time.perf_counter() - t0

    sampled_groups = {name for name, _ in result.coords}
    all_groups = set(model.parameters().keys())
    ok = (result.max_rel_err <= 1e-4 and result.samples == 50
          and sampled_groups == all_groups and elapsed < 10.0)
    report(capsys, "gradient check",
           ok, f"max rel err = {result.max_rel_err:.3e} at "
               f"{result.worst_param}{list(result.worst_index)} over "
               f"{result.samples} coords, {len(sampled_groups)}/"
               f"{len(all_groups)} groups ({elapsed:.1f}s < 10s)")
    assert result.max_rel_err <= 1e-4
    assert result.samples == 50
    assert sampled_groups == all_groups
    assert elapsed < 10.0


def test_feature_penalty_within_unit_range(capsys):
    """Each per-view feature-network term lies in [0, 1] after scaling.

    Trials draw sparse thresholded graphs of the kind the preprocessing
    produces (10 <= p <= 50, edge density 0.1-0.5), Frobenius-normalize
    them, and project decoder columns to norm 1/sqrt(p); 100 trials.
    """
    rng = np.random.default_rng(7)
    lo, hi = np.inf, -np.inf
    for _ in range(100):
        p = int(rng.integers(10, 51))
        k = int(rng.integers(2, 9))
        density = float(rng.uniform(0.1, 0.5))
        w = np.abs(rng.normal(size=(p, p)))
        w = (w + w.T) / 2.0
        np.fill_diagonal(w, 0.0)
        cut = np.quantile(w[np.triu_indices(p, 1)], 1.0 - density)
        w = np.where(w >= cut, w, 0.0)
        net = normalize_frobenius(InteractionNetwork(w))

        dec = DecoderMatrix(rng.normal(size=(k, p)))
        project_decoder_columns(dec)
        val = feature_net_penalty([dec], [laplacian(net)]).item()
        lo, hi = min(lo, val), max(hi, val)
    ok = 0.0 <= lo and hi <= 1.0
    report(capsys, "feature-penalty range",
           ok, f"observed range [{lo:.4f}, {hi:.4f}] within [0, 1] "
               f"over 100 trials")
    assert 0.0 <= lo
    assert hi <= 1.0


def test_rank_two_factorization_recovery(capsys):
    """A planted rank-2 20x10 matrix is recovered to loss <= 1e-3.

    k=2, no ridge term, at most 5,000 Adam iterations, runtime < 30 s.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    m = rng.normal(size=(20, 2)) @ rng.normal(size=(2, 10))
    _, _, losses = fit_factorization(m, k=2, lam=0.0, iters=5000, tol=1e-3)
    elapsed = time.perf_counter() - t0
    final = losses[-1]
    ok = final <= 1e-3 and len(losses) <= 5000 and elapsed < 30.0
    report(capsys, "rank-2 recovery",
           ok, f"loss {final:.2e} after {len(losses)} iterations "
               f"({elapsed:.1f}s < 30s)")
    assert final <= 1e-3
    assert len(losses) <= 5000
    assert elapsed < 30.0


def test_auc_matches_pairwise_oracle(capsys):
    """Rank-based AUC agrees with O(n^2) pairwise counting within 1e-12.

    200 random instances with n <= 500, including tie-heavy score
    distributions (small-integer grids and rounded uniforms).
    """
    rng = np.random.default_rng(123)
    worst = 0.0
    for trial in range(200):
        n = int(rng.integers(2, 501))
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():  # force both classes present
            labels[rng.integers(n)] = 1 - labels[0]
        kind = trial % 3
        if kind == 0:
            scores = rng.integers(0, 5, size=n) / 4.0
        elif kind == 1:
            scores = np.round(rng.uniform(size=n), 1)
        else:
            scores = rng.uniform(size=n)

        pos = scores[labels == 1][:, None]
        neg = scores[labels == 0][None, :]
        oracle = ((pos > neg).sum() + 0.5 * (pos == neg).sum()) / pos.size / neg.size

        worst = max(worst, abs(auc(scores, labels) - oracle))
    ok = worst <= 1e-12
    report(capsys, "AUC oracle agreement",
           ok, f"max |rank-based - pairwise| = {worst:.3e} over 200 instances")
    assert worst <= 1e-12


def test_synthetic_end_to_end_training(capsys, tmp_path):
    """The default synthetic dataset trains to test AUC >= 0.95.

    600 samples, 3 views, 2 clusters, default noise; 1,000 iterations at
    learning rate 5e-4 dropping to 5e-5 at iteration 500, weight decay
    1e-4. The feature-network loss must also fall below 5% of its initial
    value within 500 iterations. Runtime < 2 min.
    """
    t0 = time.perf_counter()
    views, labels = synth_generate(SynthSpec())
    manifest = write_dataset(tmp_path / "synth", views, labels)
    config = RunConfig(manifest_path=str(manifest), hidden_dims=(32, 16),
                       latent_dim=16, schedule=Schedule(), eval_every=25,
                       outdir=str(tmp_path / "run"))
    result = single_run(config, seed=0)
    elapsed = time.perf_counter() - t0

    with open(tmp_path / "run" / "seed0.train.csv") as fh:
        rows = list(csv.DictReader(fh))
    feat = [(int(r["iter"]), float(r["feature_net"])) for r in rows]
    initial = feat[0][1]
    crossing = next((it for it, v in feat if v < 0.05 * initial), None)

    ok = (result["auc"] >= 0.95 and crossing is not None and crossing <= 500
          and elapsed < 120.0)
    report(capsys, "synthetic end-to-end",
           ok, f"test AUC {result['auc']:.3f} >= 0.95; feature-net loss "
               f"below 5% of initial at iteration {crossing} <= 500 "
               f"({elapsed:.0f}s < 120s)")
    assert result["auc"] >= 0.95
    assert crossing is not None and crossing <= 500
    assert elapsed < 120.0


def test_constraint_ablation_trend(capsys, tmp_path):
    """Graph constraints do not hurt mean AUC by more than 0.01.

    Ten seeds on a noisy synthetic dataset; mean AUC with both graph
    penalties on (alpha=beta=1) must be >= mean AUC with both off
    minus 0.01. Runtime < 20 min.
    """
    t0 = time.perf_counter()
    views, labels = synth_generate(SynthSpec(noise=1.5, seed=7))
    manifest = write_dataset(tmp_path / "noisy", views, labels)
    means = {}
    for arm, weight in (("on", 1.0), ("off", 0.0)):
        config = RunConfig(manifest_path=str(manifest), hidden_dims=(32, 16),
                           latent_dim=16, alpha=weight, beta=weight,
                           eval_every=25, seeds=tuple(range(10)))
        means[arm] = repeat_runs(config).mean_auc
    elapsed = time.perf_counter() - t0

    gap = means["on"] - means["off"]
    ok = means["on"] >= means["off"] - 0.01 and elapsed < 1200.0
    report(capsys, "constraint ablation trend",
           ok, f"mean AUC on = {means['on']:.4f}, off = {means['off']:.4f}, "
               f"gap {gap:+.4f} >= -0.01 over 10 seeds ({elapsed:.0f}s < 1200s)")
    assert means["on"] >= means["off"] - 0.01
    assert elapsed < 1200.0


def test_deterministic_reruns(capsys, tmp_path):
    """Identical config and seed give byte-identical artifacts.

    Two full runs must produce byte-identical checkpoints and identical
    results JSON (none of the outputs embeds a timestamp).
    """
    spec = SynthSpec(samples=60, view_dims=(8, 6), latent_dim=4,
                     noise=0.5, seed=3)
    views, labels = synth_generate(spec)
    manifest = write_dataset(tmp_path / "data", views, labels)

    def one_run(outdir):
        config = RunConfig(manifest_path=str(manifest), hidden_dims=(6,),
                           latent_dim=6, schedule=Schedule(5e-3, 40, 5e-4, 80),
                           eval_every=10, seeds=(0,), outdir=str(outdir))
        write_results(repeat_runs(config), outdir / "results.json")

    for name in ("first", "second"):
        (tmp_path / name).mkdir()
        one_run(tmp_path / name)

    ckpt_a = (tmp_path / "first" / "seed0.ckpt").read_bytes()
    ckpt_b = (tmp_path / "second" / "seed0.ckpt").read_bytes()
    json_a = (tmp_path / "first" / "results.json").read_bytes()
    json_b = (tmp_path / "second" / "results.json").read_bytes()

    ok = ckpt_a == ckpt_b and json_a == json_b
    report(capsys, "deterministic reruns",
           ok, f"checkpoints identical ({len(ckpt_a)} bytes), "
               f"results JSON identical ({len(json_a)} bytes)")
    assert ckpt_a == ckpt_b
    assert json.loads(json_a) == json.loads(json_b)
    assert json_a == json_b
