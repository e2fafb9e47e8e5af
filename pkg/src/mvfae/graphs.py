"""Feature-interaction and patient-similarity networks.

Interaction networks are symmetric, nonnegative, zero-diagonal weight
matrices over named features. Similarity networks are symmetric
matrices over samples with entries in [0, 1]. All operations are pure
functions on immutable inputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateGraphError, DimensionError, ValidationError

log = logging.getLogger(__name__)

_SYM_TOL = 1e-12


def _default_ids(prefix: str, n: int) -> tuple[str, ...]:
    return tuple(f"{prefix}{i}" for i in range(n))


def _check_square_symmetric(w: np.ndarray, tol: float, what: str) -> None:
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise DimensionError(f"{what} weights must be square, got {w.shape}")
    if np.max(np.abs(w - w.T), initial=0.0) > tol:
        raise ValidationError(f"{what} weights are not symmetric within {tol}")


@dataclass(frozen=True)
class InteractionNetwork:
    """Weighted graph over a view's features."""

    weights: np.ndarray
    feature_ids: tuple[str, ...] = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        _check_square_symmetric(w, _SYM_TOL, "interaction network")
        if np.any(w < 0):
            raise ValidationError("interaction network weights must be nonnegative")
        if np.max(np.abs(np.diag(w)), initial=0.0) > 0:
            raise ValidationError("interaction network diagonal must be zero")
        ids = self.feature_ids or _default_ids("f", w.shape[0])
        if len(ids) != w.shape[0]:
            raise ValidationError(
                f"{len(ids)} feature ids for a {w.shape[0]}-node network")
        if len(set(ids)) != len(ids):
            raise ValidationError("feature ids must be unique")
        object.__setattr__(self, "feature_ids", tuple(ids))

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    def is_zero(self) -> bool:
        return not np.any(self.weights)


@dataclass(frozen=True)
class SimilarityNetwork:
    """Symmetric sample-similarity matrix with entries in [0, 1]."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        _check_square_symmetric(w, _SYM_TOL, "similarity network")
        if np.any(w < 0) or np.any(w > 1):
            raise ValidationError("similarity entries must lie in [0, 1]")

    @property
    def size(self) -> int:
        return self.weights.shape[0]


def laplacian(net) -> np.ndarray:
    """Graph Laplacian L = D - W with D_ii = sum_j W_ij."""
    w = net.weights if hasattr(net, "weights") else np.asarray(net, dtype=np.float64)
    _check_square_symmetric(w, 1e-9, "graph")
    l = np.diag(w.sum(axis=1)) - w
    return (l + l.T) / 2.0  # exact symmetry despite summation roundoff


def normalize_frobenius(net: InteractionNetwork) -> InteractionNetwork:
    """Rescale weights so the Frobenius norm equals 1."""
    norm = float(np.linalg.norm(net.weights))
    if norm == 0.0:
        raise DegenerateGraphError("cannot normalize an all-zero network")
    return InteractionNetwork(net.weights / norm, net.feature_ids)


def random_walk_step(net: InteractionNetwork,
                     clip_percentile: float = 99.5) -> InteractionNetwork:
    """Densify by one random-walk step: W @ W, zero the diagonal, clip outliers.

    A network whose square is purely diagonal (e.g. a single edge)
    collapses to zero; that degenerate result is returned with a warning
    so callers can decide how to proceed.
    """
    w2 = net.weights @ net.weights
    w2 = (w2 + w2.T) / 2.0
    np.fill_diagonal(w2, 0.0)
    out = clip_outliers(InteractionNetwork(w2, net.feature_ids), clip_percentile)
    if out.is_zero():
        log.warning("random walk produced an all-zero network (degenerate input)")
    return out


def clip_outliers(net: InteractionNetwork, percentile: float) -> InteractionNetwork:
    """Clip entries above the given percentile of the nonzero entries.

    The cutoff is the 'lower' order statistic of the nonzero weights, so
    clipped entries land exactly on an observed value. Zero networks are
    returned unchanged.
    """
    if not 0 < percentile <= 100:
        raise ValidationError(f"percentile must be in (0, 100], got {percentile}")
    nonzero = net.weights[net.weights > 0]
    if nonzero.size == 0 or percentile == 100:
        return net
    cutoff = float(np.percentile(nonzero, percentile, method="lower"))
    return InteractionNetwork(np.minimum(net.weights, cutoff), net.feature_ids)


def bipartite_project(mapping: np.ndarray, ppi: np.ndarray,
                      feature_ids: Sequence[str] = ()) -> InteractionNetwork:
    """Project a p-node interaction network onto m mapped entities.

    Computes mapping @ ppi @ mapping.T (an m x m symmetric matrix) and
    zeroes the diagonal. ``feature_ids`` names the m rows of ``mapping``.
    """
    mapping = np.asarray(mapping, dtype=np.float64)
    ppi = np.asarray(ppi, dtype=np.float64)
    if mapping.ndim != 2 or ppi.ndim != 2:
        raise DimensionError("bipartite_project expects 2-D inputs")
    _check_square_symmetric(ppi, 1e-9, "interaction network")
    if mapping.shape[1] != ppi.shape[0]:
        raise DimensionError(
            f"mapping has {mapping.shape[1]} columns but network has {ppi.shape[0]} nodes")
    out = mapping @ ppi @ mapping.T
    out = (out + out.T) / 2.0
    np.fill_diagonal(out, 0.0)
    out = np.maximum(out, 0.0)
    return InteractionNetwork(out, tuple(feature_ids))


def cosine_similarity_network(x: np.ndarray) -> SimilarityNetwork:
    """Pairwise absolute cosine similarity of the rows of ``x``.

    S_ij = |x_i . x_j| / (||x_i|| ||x_j||). Rows with zero norm yield
    zero similarity everywhere, including the diagonal.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got {x.shape}")
    norms = np.linalg.norm(x, axis=1)
    nonzero = norms > 0
    unit = np.zeros_like(x)
    unit[nonzero] = x[nonzero] / norms[nonzero, None]
    s = np.abs(unit @ unit.T)
    s = np.clip((s + s.T) / 2.0, 0.0, 1.0)
    np.fill_diagonal(s, np.where(nonzero, 1.0, 0.0))
    return SimilarityNetwork(s)


def fuse_similarities(per_view: Sequence[SimilarityNetwork],
                      fused_latent: SimilarityNetwork) -> SimilarityNetwork:
    """Average the V per-view networks with the fused-latent network."""
    n = fused_latent.size
    for s in per_view:
        if s.size != n:
            raise DimensionError(f"similarity network sizes differ: {s.size} vs {n}")
    total = fused_latent.weights.copy()
    for s in per_view:
        total += s.weights
    return SimilarityNetwork(total / (len(per_view) + 1))
