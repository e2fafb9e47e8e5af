"""End-to-end gradient verification on a small fixed instance.

The instance is deliberately tiny (8 samples, two views of 6 and 5
features, hidden widths 4 then a 3-d latent, tanh) so a central
finite-difference sweep stays fast while still exercising every term of
the objective and every parameter group.
"""

from __future__ import annotations

import numpy as np

from .data import LabelVector, ViewBundle
from .graphs import InteractionNetwork, normalize_frobenius
from .model import (ClassifierHead, DecoderMatrix, EncoderParams, ModelConfig,
                    MvfaeModel, init_model, substream_rng)
from .objective import supervised_loss
from .optim import compute_fused_laplacian
from .tensor import FiniteDiffResult, Tape, backward, finite_diff_check

TINY_CONFIG = ModelConfig(views=2, input_dims=(6, 5), hidden_dims=(4, 3),
                          latent_dim=3, activation="tanh", seed=0)


def _random_network(rng, ids) -> InteractionNetwork:
    p = len(ids)
    w = np.abs(rng.normal(size=(p, p)))
    w = (w + w.T) / 2.0
    np.fill_diagonal(w, 0.0)
    return normalize_frobenius(InteractionNetwork(w, ids))


def build_tiny_instance(seed: int = 0):
    """Returns (model, views, labels) for the fixed check instance."""
    rng = substream_rng(seed, "selfcheck")
    config = ModelConfig(views=TINY_CONFIG.views, input_dims=TINY_CONFIG.input_dims,
                         hidden_dims=TINY_CONFIG.hidden_dims,
                         latent_dim=TINY_CONFIG.latent_dim,
                         activation=TINY_CONFIG.activation, seed=seed)
    n = 8
    views = []
    for v, p in enumerate(config.input_dims):
        ids = tuple(f"t{v}_f{j}" for j in range(p))
        views.append(ViewBundle(f"tiny{v}", rng.normal(size=(n, p)), ids,
                                _random_network(rng, ids)))
    labels = LabelVector(np.arange(n) % 2, endpoint="selfcheck")
    model = init_model(config, alpha=1.0, beta=1.0, eta=1.0)
    return model, views, labels.values


def assemble_model(config: ModelConfig, params: dict, *, alpha: float,
                   beta: float, eta: float, lam: float = 0.0) -> MvfaeModel:
    """Rebuild a model around externally owned parameter arrays."""
    encoders = []
    for v in range(config.views):
        weights, biases = [], []
        i = 0
        while f"enc{v}/W{i}" in params:
            weights.append(params[f"enc{v}/W{i}"])
            biases.append(params[f"enc{v}/b{i}"])
            i += 1
        encoders.append(EncoderParams(weights, biases))
    decoders = [DecoderMatrix(params[f"dec{v}/Y"]) for v in range(config.views)]
    head = ClassifierHead(params["head/W"], params["head/b"])
    return MvfaeModel(config, encoders, decoders, head,
                      alpha=alpha, beta=beta, eta=eta, lam=lam)


def run_gradient_check(epsilon: float = 1e-5, samples: int = 50, seed: int = 0,
                       corrupt_gradient=None) -> FiniteDiffResult:
    """Check analytic gradients of the full objective on the tiny instance.

    The sample-similarity Laplacian is frozen at the base parameters so
    the differentiated function matches what backpropagation computes.
    ``corrupt_gradient`` is a negative-control hook applied to the
    analytic gradients.
    """
    model, views, labels = build_tiny_instance(seed)
    fused_l = compute_fused_laplacian(model, views)
    config = model.config

    def loss_and_grad(params):
        candidate = assemble_model(config, params, alpha=model.alpha,
                                   beta=model.beta, eta=model.eta, lam=model.lam)
        tape = Tape()
        breakdown = supervised_loss(candidate, views, labels, tape,
                                    fused_laplacian=fused_l)
        grads = backward(tape)
        if corrupt_gradient is not None:
            corrupt_gradient(grads)
        return breakdown.total, grads

    return finite_diff_check(loss_and_grad, model.parameters(), epsilon=epsilon,
                             samples=samples, rng=substream_rng(seed, "gradcheck"),
                             ensure_groups=True)
