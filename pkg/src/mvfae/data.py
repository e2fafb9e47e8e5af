"""Data ingestion, preprocessing, deterministic splits, and a synthetic
multi-view generator.

File formats
------------
* Sample-feature TSV: first row = feature ids (corner cell ignored),
  first column = sample ids, numeric cells.
* Edge list TSV: ``node_a<TAB>node_b<TAB>weight`` per line, ``#`` starts
  a comment, undirected, duplicate pairs tolerated with last write wins.
* Labels TSV: ``sample_id<TAB>label`` with an optional
  ``# endpoint: NAME`` comment line.
* Dataset manifest JSON: views (name, matrix_path, network_path),
  labels_path, and preprocessing parameters; paths relative to the
  manifest location.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import (DimensionError, ParseError, StratificationError,
                     ValidationError)
from .graphs import InteractionNetwork, normalize_frobenius
from .model import substream_rng

log = logging.getLogger(__name__)


# --- domain types ---------------------------------------------------------

@dataclass(frozen=True)
class LabelVector:
    """Binary labels for one endpoint over N samples."""

    values: np.ndarray
    endpoint: str = "label"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.int64)
        if vals.ndim != 1:
            raise DimensionError(f"labels must be 1-D, got shape {vals.shape}")
        bad = set(np.unique(vals)) - {0, 1}
        if bad:
            raise ValidationError(f"labels must be in {{0,1}}, found {sorted(bad)}")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class ViewBundle:
    """One modality: a sample-feature matrix paired with its feature network."""

    name: str
    matrix: np.ndarray
    feature_ids: tuple
    network: InteractionNetwork

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        ids = tuple(self.feature_ids)
        if m.ndim != 2:
            raise DimensionError(f"view '{self.name}': matrix must be 2-D")
        if len(ids) != m.shape[1]:
            raise DimensionError(
                f"view '{self.name}': {len(ids)} feature ids for {m.shape[1]} columns")
        if self.network.feature_ids != ids:
            raise ValidationError(
                f"view '{self.name}': network feature ids disagree with matrix")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "feature_ids", ids)

    @property
    def num_samples(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_features(self) -> int:
        return self.matrix.shape[1]

    def take_rows(self, indices) -> "ViewBundle":
        return replace(self, matrix=self.matrix[np.asarray(indices)])


@dataclass(frozen=True)
class SplitSpec:
    """Train/val/test fractions plus the shuffling seed."""

    train: float = 0.70
    val: float = 0.10
    test: float = 0.20
    seed: int = 0

    def __post_init__(self):
        fr = (self.train, self.val, self.test)
        if min(fr) <= 0:
            raise ValidationError(f"split fractions must be positive, got {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ValidationError(f"split fractions must sum to 1, got {sum(fr)}")

    @property
    def fractions(self):
        return (self.train, self.val, self.test)


@dataclass(frozen=True)
class SynthSpec:
    """Knobs of the synthetic multi-view generator.

    Samples live near one of ``clusters`` well-separated latent centers;
    each view observes the latent position through a loading matrix whose
    columns follow one dominant latent driver, and the planted feature
    network connects features with correlated loadings.
    """

    samples: int = 600
    view_dims: tuple = (60, 40, 30)
    latent_dim: int = 8
    clusters: int = 2
    separation: float = 4.0
    noise: float = 1.0
    graph_density: float = 0.15
    class_of_cluster: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.clusters < 2:
            raise ValidationError(f"need at least 2 clusters, got {self.clusters}")
        if self.clusters > self.latent_dim:
            raise ValidationError(
                f"{self.clusters} clusters need latent_dim >= clusters, got {self.latent_dim}")
        if self.noise < 0:
            raise ValidationError(f"noise must be >= 0, got {self.noise}")
        if not self.view_dims:
            raise ValidationError("need at least one view")
        if self.samples < self.clusters:
            raise ValidationError("need at least one sample per cluster")
        if not 0.0 < self.graph_density <= 1.0:
            raise ValidationError(f"graph_density must be in (0,1], got {self.graph_density}")
        if self.class_of_cluster and len(self.class_of_cluster) != self.clusters:
            raise ValidationError("class_of_cluster must name every cluster")


@dataclass
class SplitData:
    """A dataset cut into train/val/test with leakage-guarded preprocessing."""

    train_views: list
    val_views: list
    test_views: list
    train_labels: np.ndarray
    val_labels: np.ndarray
    test_labels: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    endpoint: str = "label"


# --- TSV / edge-list I/O --------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def load_matrix_tsv(path):
    """Parse a sample-feature TSV; returns (matrix, sample_ids, feature_ids)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty matrix file", path=path, line=1)
    header = lines[0].split("\t")
    feature_ids = tuple(header[1:])
    if len(set(feature_ids)) != len(feature_ids):
        raise ParseError("duplicate feature ids in header", path=path, line=1)
    if not feature_ids:
        raise ParseError("header has no feature ids", path=path, line=1)
    sample_ids, rows, seen = [], [], set()
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw:
            continue
        cells = raw.split("\t")
        if len(cells) != len(feature_ids) + 1:
            raise ParseError(
                f"ragged row: expected {len(feature_ids) + 1} cells, got {len(cells)}",
                path=path, line=lineno)
        sid = cells[0]
        if sid in seen:
            raise ParseError(f"duplicate sample id '{sid}'", path=path, line=lineno)
        seen.add(sid)
        try:
            rows.append([float(c) for c in cells[1:]])
        except ValueError as exc:
            raise ParseError(f"non-numeric cell ({exc})", path=path, line=lineno) from exc
        sample_ids.append(sid)
    if not rows:
        raise ParseError("matrix file has no data rows", path=path, line=2)
    return np.asarray(rows, dtype=np.float64), tuple(sample_ids), feature_ids


def write_matrix_tsv(path, matrix, sample_ids, feature_ids) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (len(sample_ids), len(feature_ids)):
        raise DimensionError(
            f"matrix shape {matrix.shape} does not match "
            f"{len(sample_ids)} samples x {len(feature_ids)} features")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("sample_id\t" + "\t".join(feature_ids) + "\n")
        for sid, row in zip(sample_ids, matrix):
            fh.write(sid + "\t" + "\t".join(_fmt(v) for v in row) + "\n")


def load_labels_tsv(path):
    """Returns (sample_ids, LabelVector). Endpoint taken from a
    '# endpoint: NAME' comment when present."""
    endpoint = "label"
    sample_ids, values, seen = [], [], set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.lower().startswith("endpoint:"):
                    endpoint = body.split(":", 1)[1].strip()
                continue
            cells = line.split("\t")
            if len(cells) != 2:
                raise ParseError(f"expected 'sample<TAB>label', got {len(cells)} cells",
                                 path=path, line=lineno)
            sid, lab = cells
            if sid in seen:
                raise ParseError(f"duplicate sample id '{sid}'", path=path, line=lineno)
            seen.add(sid)
            try:
                values.append(int(lab))
            except ValueError as exc:
                raise ParseError(f"non-integer label '{lab}'", path=path, line=lineno) from exc
            sample_ids.append(sid)
    if not sample_ids:
        raise ParseError("labels file has no data rows", path=path, line=1)
    return tuple(sample_ids), LabelVector(np.asarray(values), endpoint)


def write_labels_tsv(path, sample_ids, labels: LabelVector) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# endpoint: {labels.endpoint}\n")
        for sid, lab in zip(sample_ids, labels.values):
            fh.write(f"{sid}\t{int(lab)}\n")


def load_edgelist(path, id_index, threshold: float = 400.0) -> InteractionNetwork:
    """Parse an undirected weighted edge list over known feature ids.

    Edges below ``threshold`` are dropped; surviving weights are rescaled
    into (0,1] by the maximum retained weight. Unknown endpoints and
    self-loops are skipped with a reported count.
    """
    ids = tuple(id_index)
    pos = {fid: i for i, fid in enumerate(ids)}
    raw_edges = {}
    skipped = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, rawline in enumerate(fh, start=1):
            line = rawline.strip()
            if not line or line.startswith("#"):
                continue
            cells = line.split("\t")
            if len(cells) != 3:
                raise ParseError(
                    f"expected 'node_a<TAB>node_b<TAB>weight', got {len(cells)} cells",
                    path=path, line=lineno)
            a, b, w_raw = cells
            try:
                w = float(w_raw)
            except ValueError as exc:
                raise ParseError(f"non-numeric weight '{w_raw}'",
                                 path=path, line=lineno) from exc
            if a not in pos or b not in pos or a == b:
                skipped += 1
                continue
            i, j = sorted((pos[a], pos[b]))
            raw_edges[(i, j)] = w
    if skipped:
        log.info("%s: skipped %d edges (unknown ids or self-loops)", path, skipped)
    kept = {pair: w for pair, w in raw_edges.items() if w >= threshold}
    weights = np.zeros((len(ids), len(ids)))
    if kept:
        top = max(kept.values())
        for (i, j), w in kept.items():
            weights[i, j] = weights[j, i] = w / top
    else:
        log.warning("%s: no edges at or above threshold %g; zero network",
                    path, threshold)
    return InteractionNetwork(weights, ids)


def write_edgelist(path, net: InteractionNetwork) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# node_a\tnode_b\tweight\n")
        rows, cols = np.nonzero(np.triu(net.weights, k=1))
        for i, j in zip(rows, cols):
            fh.write(f"{net.feature_ids[i]}\t{net.feature_ids[j]}\t"
                     f"{_fmt(net.weights[i, j])}\n")


# --- preprocessing --------------------------------------------------------

def log_transform_clip(m, clip_sigma: float = 3.0) -> np.ndarray:
    """ln(1+x), then per-column clipping to mean +/- clip_sigma*std."""
    if clip_sigma <= 0:
        raise ValidationError(f"clip_sigma must be positive, got {clip_sigma}")
    m = np.asarray(m, dtype=np.float64)
    if np.any(m < 0):
        raise ValidationError("log transform needs nonnegative entries")
    x = np.log1p(m)
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    return np.clip(x, mu - clip_sigma * sd, mu + clip_sigma * sd)


def zscore(m, stats_mask) -> np.ndarray:
    """Per-column (x - mu)/sigma using statistics of the masked rows only.

    Population (divide-by-n) convention; sigma floored at 1e-8 so columns
    constant on the masked rows map to zero there.
    """
    m = np.asarray(m, dtype=np.float64)
    mask = np.asarray(stats_mask, dtype=bool)
    if mask.shape != (m.shape[0],):
        raise DimensionError(f"mask shape {mask.shape} does not match {m.shape[0]} rows")
    if not mask.any():
        raise ValidationError("statistics mask selects no rows")
    mu = m[mask].mean(axis=0)
    sd = np.maximum(m[mask].std(axis=0), 1e-8)
    return (m - mu) / sd


def variance_filter(m, min_mean_pct: float = 0.0, min_var_pct: float = 0.0) -> np.ndarray:
    """Indices of features at or above both percentile cutoffs (mean and variance)."""
    for pct in (min_mean_pct, min_var_pct):
        if not 0.0 <= pct < 100.0:
            raise ValidationError(f"percentile must be in [0,100), got {pct}")
    m = np.asarray(m, dtype=np.float64)
    means = m.mean(axis=0)
    variances = m.var(axis=0)
    keep = ((means >= np.percentile(means, min_mean_pct))
            & (variances >= np.percentile(variances, min_var_pct)))
    if not keep.any():
        raise ValidationError("variance filter removed every feature")
    return np.flatnonzero(keep)


def filter_view(bundle: ViewBundle, min_mean_pct: float = 0.0,
                min_var_pct: float = 0.0) -> ViewBundle:
    """Apply the mean/variance filter, subsetting the network to match."""
    kept = variance_filter(bundle.matrix, min_mean_pct, min_var_pct)
    if kept.shape[0] == bundle.num_features:
        return bundle
    ids = tuple(bundle.feature_ids[i] for i in kept)
    net = InteractionNetwork(bundle.network.weights[np.ix_(kept, kept)], ids)
    return ViewBundle(bundle.name, bundle.matrix[:, kept], ids, net)


# --- splitting ------------------------------------------------------------

def _largest_remainder(total: int, fractions) -> list:
    exact = [total * f for f in fractions]
    base = [math.floor(e) for e in exact]
    order = sorted(range(len(fractions)),
                   key=lambda j: (exact[j] - base[j], -j), reverse=True)
    for j in order[: total - sum(base)]:
        base[j] += 1
    return base


def split(n: int, spec: SplitSpec, labels):
    """Stratified train/val/test index sets, deterministic per seed.

    Global sizes follow largest-remainder rounding of the fractions;
    class counts within each set are balanced the same way, with
    leftovers steered toward the set furthest below its quota.
    """
    labels = np.asarray(labels.values if isinstance(labels, LabelVector) else labels)
    if n < 10:
        raise ValidationError(f"need at least 10 samples to split, got {n}")
    if labels.shape != (n,):
        raise DimensionError(f"expected {n} labels, got shape {labels.shape}")

    quotas = _largest_remainder(n, spec.fractions)
    classes = np.unique(labels)
    counts = {c: int(np.sum(labels == c)) for c in classes}
    alloc = {}
    filled = [0, 0, 0]
    for c in classes:
        exact = [counts[c] * f for f in spec.fractions]
        alloc[c] = [math.floor(e) for e in exact]
        for j in range(3):
            filled[j] += alloc[c][j]
    for c in classes:
        exact = [counts[c] * f for f in spec.fractions]
        for _ in range(counts[c] - sum(alloc[c])):
            j = max(range(3), key=lambda b: (quotas[b] - filled[b],
                                             exact[b] - math.floor(exact[b]), -b))
            alloc[c][j] += 1
            filled[j] += 1

    for c in classes:
        if alloc[c][0] == 0:
            raise StratificationError(
                f"class {c} ({counts[c]} samples) absent from the training split")

    rng = substream_rng(spec.seed, "split")
    buckets = ([], [], [])
    for c in classes:
        idx_c = np.flatnonzero(labels == c)
        shuffled = idx_c[rng.permutation(idx_c.shape[0])]
        offset = 0
        for j in range(3):
            buckets[j].extend(shuffled[offset:offset + alloc[c][j]].tolist())
            offset += alloc[c][j]
    return tuple(np.sort(np.asarray(b, dtype=np.int64)) for b in buckets)


# --- synthetic generator --------------------------------------------------

def synth_generate(spec: SynthSpec):
    """Planted-cluster multi-view dataset; returns (views, LabelVector).

    Latent positions sit near orthogonal cluster centers; each view is a
    noisy linear readout whose loading columns follow one dominant latent
    driver, and the planted network keeps the top ``graph_density``
    fraction of |cosine| weights between loading columns.
    """
    rng = substream_rng(spec.seed, "synth")
    k, n = spec.latent_dim, spec.samples

    q, _ = np.linalg.qr(rng.normal(size=(k, k)))
    centers = spec.separation * q[: spec.clusters]
    assign = rng.permutation(np.arange(n) % spec.clusters)
    z = centers[assign] + spec.noise * rng.normal(size=(n, k))
    cluster_class = (np.asarray(spec.class_of_cluster, dtype=np.int64)
                     if spec.class_of_cluster
                     else np.arange(spec.clusters, dtype=np.int64) % 2)
    labels = LabelVector(cluster_class[assign], endpoint="synthetic")

    views = []
    for v, p in enumerate(spec.view_dims):
        drivers = rng.integers(0, k, size=p)
        loadings = 0.1 * rng.normal(size=(k, p))
        loadings[drivers, np.arange(p)] += 1.0
        matrix = z @ loadings + 0.5 * spec.noise * rng.normal(size=(n, p))

        unit = loadings / np.linalg.norm(loadings, axis=0, keepdims=True)
        w = np.abs(unit.T @ unit)
        w = (w + w.T) / 2.0
        np.fill_diagonal(w, 0.0)
        off = w[np.triu_indices(p, k=1)]
        cutoff = np.quantile(off, 1.0 - spec.graph_density)
        w[w < cutoff] = 0.0
        ids = tuple(f"v{v}_f{j}" for j in range(p))
        net = InteractionNetwork(w, ids)
        if not net.is_zero():
            net = normalize_frobenius(net)
        views.append(ViewBundle(f"view{v}", matrix, ids, net))
    return views, labels


# --- dataset manifests ----------------------------------------------------

DEFAULT_PREPROCESSING = {
    "log_transform": False,
    "clip_sigma": 3.0,
    "edge_threshold": 0.0,
    "min_mean_pct": 0.0,
    "min_var_pct": 0.0,
}


def write_dataset(directory, views, labels: LabelVector, sample_ids=None,
                  preprocessing: dict | None = None) -> str:
    """Write view matrices, edge lists, labels, and a manifest; returns
    the manifest path."""
    os.makedirs(directory, exist_ok=True)
    n = views[0].num_samples
    if sample_ids is None:
        sample_ids = tuple(f"s{i:04d}" for i in range(n))
    entries = []
    for bundle in views:
        matrix_name = f"{bundle.name}.matrix.tsv"
        network_name = f"{bundle.name}.network.tsv"
        write_matrix_tsv(os.path.join(directory, matrix_name), bundle.matrix,
                         sample_ids, bundle.feature_ids)
        write_edgelist(os.path.join(directory, network_name), bundle.network)
        entries.append({"name": bundle.name, "matrix_path": matrix_name,
                        "network_path": network_name})
    write_labels_tsv(os.path.join(directory, "labels.tsv"), sample_ids, labels)
    manifest = {
        "views": entries,
        "labels_path": "labels.tsv",
        "preprocessing": dict(DEFAULT_PREPROCESSING, **(preprocessing or {})),
    }
    manifest_path = os.path.join(directory, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


def read_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid manifest JSON ({exc})", path=path) from exc
    for key in ("views", "labels_path"):
        if key not in manifest:
            raise ParseError(f"manifest missing '{key}'", path=path)
    return manifest


def prepare_dataset(manifest_path, split_spec: SplitSpec) -> SplitData:
    """Load a manifest and run the full preprocessing pipeline.

    Per view: optional log transform with outlier clipping, mean/variance
    filtering, edge-list loading with thresholding; then a stratified
    split, z-scoring with training-row statistics only, and Frobenius
    normalization of each nonzero network.
    """
    manifest = read_manifest(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))
    prep = dict(DEFAULT_PREPROCESSING, **manifest.get("preprocessing", {}))

    label_ids, labels = load_labels_tsv(os.path.join(base, manifest["labels_path"]))
    bundles = []
    for entry in manifest["views"]:
        matrix, sample_ids, feature_ids = load_matrix_tsv(
            os.path.join(base, entry["matrix_path"]))
        if sample_ids != label_ids:
            raise ValidationError(
                f"view '{entry['name']}': sample ids disagree with the labels file")
        if prep["log_transform"]:
            matrix = log_transform_clip(matrix, prep["clip_sigma"])
        net = load_edgelist(os.path.join(base, entry["network_path"]),
                            feature_ids, threshold=prep["edge_threshold"])
        bundle = ViewBundle(entry["name"], matrix, feature_ids, net)
        bundle = filter_view(bundle, prep["min_mean_pct"], prep["min_var_pct"])
        bundles.append(bundle)

    n = len(labels)
    train_idx, val_idx, test_idx = split(n, split_spec, labels)
    mask = np.zeros(n, dtype=bool)
    mask[train_idx] = True

    processed = []
    for bundle in bundles:
        matrix = zscore(bundle.matrix, mask)
        net = bundle.network
        if not net.is_zero():
            net = normalize_frobenius(net)
        processed.append(ViewBundle(bundle.name, matrix, bundle.feature_ids, net))

    return SplitData(
        train_views=[b.take_rows(train_idx) for b in processed],
        val_views=[b.take_rows(val_idx) for b in processed],
        test_views=[b.take_rows(test_idx) for b in processed],
        train_labels=labels.values[train_idx],
        val_labels=labels.values[val_idx],
        test_labels=labels.values[test_idx],
        train_idx=train_idx, val_idx=val_idx, test_idx=test_idx,
        endpoint=labels.endpoint,
    )
