"""The training objective: classification + eta*reconstruction +
alpha*feature-network penalty + beta*view-similarity penalty.

Reconstruction terms are divided by N*p per view so views with very
different feature counts contribute comparably. The similarity network
over samples is recomputed from the current latents on every call but
treated as a constant during backpropagation (no gradient flows through
the cosine similarities).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import graphs
from . import tensor as T
from .errors import DimensionError, ValidationError
from .model import (DecoderMatrix, MvfaeModel, classify, decode_view, encode_view,
                    fuse_latents)
from .tensor import Tape, Tensor


@dataclass(frozen=True)
class LossBreakdown:
    """Per-term values of one objective evaluation.

    ``total`` always equals classification + eta*reconstruction +
    alpha*feature_net + beta*view_sim for the weights in force.
    """

    classification: float
    reconstruction: float
    feature_net: float
    view_sim: float
    total: float

    def as_tuple(self):
        return (self.classification, self.reconstruction, self.feature_net,
                self.view_sim, self.total)


def reconstruction_loss(views: Sequence[tuple]) -> Tensor:
    """Sum over views of ||M - Z||_F^2 / (N * p)."""
    if not views:
        raise ValidationError("reconstruction_loss needs at least one view")
    terms, coeffs = [], []
    for m, z in views:
        mv = m.value if isinstance(m, Tensor) else np.asarray(m)
        zv = z.value if isinstance(z, Tensor) else np.asarray(z)
        if mv.shape != zv.shape:
            raise DimensionError(
                f"reconstruction shapes differ: {mv.shape} vs {zv.shape}")
        terms.append(T.frobenius_sq(T.sub(m, z)))
        coeffs.append(1.0 / (mv.shape[0] * mv.shape[1]))
    return T.weighted_sum(terms, coeffs)


def feature_net_penalty(decoders: Sequence, laplacians: Sequence[np.ndarray]) -> Tensor:
    """Sum over views of Trace(Y L_G Y^T)."""
    if len(decoders) != len(laplacians):
        raise DimensionError(f"{len(decoders)} decoders but {len(laplacians)} Laplacians")
    terms = []
    for dec, l in zip(decoders, laplacians):
        y = dec.y if isinstance(dec, DecoderMatrix) else dec
        terms.append(T.quad_trace_rows(y, l))
    return T.weighted_sum(terms, [1.0] * len(terms))


def view_sim_penalty(latents: Sequence, fused_laplacian: np.ndarray) -> Tensor:
    """Sum over views of Trace(X^T L_S X); L_S enters as a constant."""
    terms = [T.quad_trace_cols(x, fused_laplacian) for x in latents]
    return T.weighted_sum(terms, [1.0] * len(terms))


def fused_similarity_laplacian(latent_values: Sequence[np.ndarray]) -> np.ndarray:
    """Laplacian of the fused sample-similarity network, scaled by 1/N^2.

    Per-view cosine similarity networks and the cosine network of the
    summed latents are averaged, then turned into a Laplacian. The 1/N^2
    factor turns the resulting trace penalty (a sum over all sample
    pairs) into a mean over pairs, keeping its magnitude comparable to
    the mean-normalized classification and reconstruction terms so one
    weight setting works across sample counts.
    """
    per_view = [graphs.cosine_similarity_network(x) for x in latent_values]
    fused_latent = graphs.cosine_similarity_network(np.sum(latent_values, axis=0))
    s = graphs.fuse_similarities(per_view, fused_latent)
    n = s.weights.shape[0]
    return graphs.laplacian(s) / float(n * n)


def _feature_laplacians(views) -> list[np.ndarray]:
    return [graphs.laplacian(b.network) for b in views]


def _validate_labels(labels, n: int) -> np.ndarray:
    labs = np.asarray(labels)
    if labs.shape != (n,):
        raise DimensionError(f"expected {n} labels, got shape {labs.shape}")
    return labs


def supervised_loss(model: MvfaeModel, views, labels, tape: Tape | None = None,
                    fused_laplacian: np.ndarray | None = None) -> LossBreakdown:
    """Full four-term objective on a list of ViewBundles.

    With a tape, the total is registered as the tape's output and is
    differentiable w.r.t. every model parameter. ``fused_laplacian``
    overrides the similarity Laplacian (used to refresh it on a stride
    instead of every iteration).
    """
    n = views[0].matrix.shape[0]
    labs = _validate_labels(labels, n)

    latents = [encode_view(model, v, b.matrix, tape) for v, b in enumerate(views)]
    y_params = [tape.parameter(dec.y, f"dec{v}/Y") if tape is not None else dec.y
                for v, dec in enumerate(model.decoders)]
    zs = [decode_view(x, y) for x, y in zip(latents, y_params)]

    recon = reconstruction_loss([(b.matrix, z) for b, z in zip(views, zs)])
    feat = feature_net_penalty(y_params, _feature_laplacians(views))
    if fused_laplacian is None:
        fused_laplacian = fused_similarity_laplacian([x.value for x in latents])
    vsim = view_sim_penalty(latents, fused_laplacian)
    cls = T.softmax_cross_entropy(classify(fuse_latents(latents), model.head, tape), labs)

    total = T.weighted_sum([cls, recon, feat, vsim],
                           [1.0, model.eta, model.alpha, model.beta])
    if tape is not None:
        tape.output = total
    return LossBreakdown(cls.item(), recon.item(), feat.item(), vsim.item(),
                         total.item())


def unsupervised_loss(model: MvfaeModel, views, tape: Tape | None = None,
                      fused_laplacian: np.ndarray | None = None) -> LossBreakdown:
    """Label-free objective: reconstruction + alpha*feature_net + beta*view_sim."""
    latents = [encode_view(model, v, b.matrix, tape) for v, b in enumerate(views)]
    y_params = [tape.parameter(dec.y, f"dec{v}/Y") if tape is not None else dec.y
                for v, dec in enumerate(model.decoders)]
    zs = [decode_view(x, y) for x, y in zip(latents, y_params)]

    recon = reconstruction_loss([(b.matrix, z) for b, z in zip(views, zs)])
    feat = feature_net_penalty(y_params, _feature_laplacians(views))
    if fused_laplacian is None:
        fused_laplacian = fused_similarity_laplacian([x.value for x in latents])
    vsim = view_sim_penalty(latents, fused_laplacian)

    total = T.weighted_sum([recon, feat, vsim], [1.0, model.alpha, model.beta])
    if tape is not None:
        tape.output = total
    return LossBreakdown(0.0, recon.item(), feat.item(), vsim.item(), total.item())


def mf_loss(x, y, m, lam: float) -> Tensor:
    """Plain factorization objective ||M - XY||_F^2 + lam*(||X||_F^2 + ||Y||_F^2)."""
    if lam < 0:
        raise ValidationError(f"lambda must be >= 0, got {lam}")
    residual = T.frobenius_sq(T.sub(m, T.matmul(x, y)))
    if lam == 0.0:
        return residual
    return T.weighted_sum([residual, T.frobenius_sq(x), T.frobenius_sq(y)],
                          [1.0, lam, lam])
