"""Multi-view architecture: per-view encoder MLPs, linear decoders,
latent fusion by summation, and a linear classifier head.

Encoders carry biases; decoders are bias-free linear maps whose columns
are kept at norm 1/sqrt(p) by projection after every optimizer step, so
the feature-network penalty stays in a fixed range.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import DimensionError, ValidationError
from .tensor import Tape, Tensor


def substream_rng(root_seed: int, name: str) -> np.random.Generator:
    """Independent, reproducible RNG stream derived from one root seed."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(root_seed, spawn_key=(key,)))


@dataclass(frozen=True)
class ModelConfig:
    views: int
    input_dims: tuple[int, ...]
    hidden_dims: tuple[int, ...] = (100, 100)
    latent_dim: int | None = None
    num_classes: int = 2
    activation: str = "tanh"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "input_dims", tuple(int(d) for d in self.input_dims))
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))
        if self.views < 1:
            raise ValidationError(f"need at least one view, got {self.views}")
        if len(self.input_dims) != self.views:
            raise ValidationError(
                f"{len(self.input_dims)} input dims for {self.views} views")
        if any(d < 1 for d in self.input_dims + self.hidden_dims):
            raise ValidationError("all dimensions must be >= 1")
        if self.latent_dim is None:
            if not self.hidden_dims:
                raise ValidationError("latent_dim is required when hidden_dims is empty")
            object.__setattr__(self, "latent_dim", self.hidden_dims[-1])
        elif self.hidden_dims and self.latent_dim != self.hidden_dims[-1]:
            raise ValidationError(
                f"latent_dim {self.latent_dim} must equal the last hidden width "
                f"{self.hidden_dims[-1]}")
        if self.latent_dim < 1 or self.num_classes < 2:
            raise ValidationError("latent_dim >= 1 and num_classes >= 2 required")
        if self.activation not in T.ACTIVATION_KINDS:
            raise ValidationError(f"unknown activation {self.activation!r}")

    def encoder_layer_dims(self, view: int) -> list[tuple[int, int]]:
        """(fan_in, fan_out) chain for one view's encoder.

        With no hidden layers the encoder is a single linear map
        straight to the latent space.
        """
        dims = [self.input_dims[view], *self.hidden_dims]
        if not self.hidden_dims:
            dims.append(self.latent_dim)
        return list(zip(dims[:-1], dims[1:]))


@dataclass
class EncoderParams:
    """Per-layer weight matrices and bias rows for one view."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class DecoderMatrix:
    """Linear decoder, latent_dim x p, columns constrained to norm 1/sqrt(p)."""

    y: np.ndarray


@dataclass
class ClassifierHead:
    weight: np.ndarray
    bias: np.ndarray


@dataclass
class MvfaeModel:
    config: ModelConfig
    encoders: list[EncoderParams]
    decoders: list[DecoderMatrix]
    head: ClassifierHead
    alpha: float = 1.0
    beta: float = 1.0
    eta: float = 1.0
    lam: float = 0.0

    def __post_init__(self):
        for hp, value in (("alpha", self.alpha), ("beta", self.beta), ("eta", self.eta),
                          ("lambda", self.lam)):
            if value < 0:
                raise ValidationError(f"hyperparameter {hp} must be >= 0, got {value}")

    def parameters(self) -> dict[str, np.ndarray]:
        """Name -> array for every trainable parameter, in a fixed order."""
        out: dict[str, np.ndarray] = {}
        for v, enc in enumerate(self.encoders):
            for i, (w, b) in enumerate(zip(enc.weights, enc.biases)):
                out[f"enc{v}/W{i}"] = w
                out[f"enc{v}/b{i}"] = b
        for v, dec in enumerate(self.decoders):
            out[f"dec{v}/Y"] = dec.y
        out["head/W"] = self.head.weight
        out["head/b"] = self.head.bias
        return out

    def decoder_names(self) -> frozenset[str]:
        return frozenset(f"dec{v}/Y" for v in range(len(self.decoders)))


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int,
            shape: tuple[int, ...]) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_model(config: ModelConfig, alpha: float = 1.0, beta: float = 1.0,
               eta: float = 1.0, lam: float = 0.0) -> MvfaeModel:
    """Fresh model with fan-based uniform weights, zero biases, and
    decoder columns projected to norm 1/sqrt(p). Deterministic per seed."""
    rng = substream_rng(config.seed, "init")
    encoders = []
    for v in range(config.views):
        weights, biases = [], []
        for fan_in, fan_out in config.encoder_layer_dims(v):
            weights.append(_glorot(rng, fan_in, fan_out, (fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        encoders.append(EncoderParams(weights, biases))
    decoders = []
    for v in range(config.views):
        p = config.input_dims[v]
        y = _glorot(rng, config.latent_dim, p, (config.latent_dim, p))
        dec = DecoderMatrix(y)
        project_decoder_columns(dec, rng=rng)
        decoders.append(dec)
    head = ClassifierHead(
        _glorot(rng, config.latent_dim, config.num_classes,
                (config.latent_dim, config.num_classes)),
        np.zeros(config.num_classes))
    return MvfaeModel(config, encoders, decoders, head,
                      alpha=alpha, beta=beta, eta=eta, lam=lam)


def encode_view(model: MvfaeModel, view_idx: int, m, tape: Tape | None = None) -> Tensor:
    """Forward one view through its encoder MLP; N x latent_dim output.

    With a tape, the view's parameters are registered on it so the pass
    is differentiable.
    """
    enc = model.encoders[view_idx]
    expected = model.config.input_dims[view_idx]
    value = m.value if isinstance(m, Tensor) else np.asarray(m)
    if value.ndim != 2 or value.shape[1] != expected:
        raise DimensionError(
            f"view {view_idx} expects N x {expected} input, got {value.shape}")
    h = m
    for i, (w, b) in enumerate(zip(enc.weights, enc.biases)):
        wt = tape.parameter(w, f"enc{view_idx}/W{i}") if tape is not None else w
        bt = tape.parameter(b, f"enc{view_idx}/b{i}") if tape is not None else b
        h = T.activation(T.add_bias(T.matmul(h, wt), bt), model.config.activation)
    return h


def decode_view(x, dec) -> Tensor:
    """Linear reconstruction Z = X Y (no bias)."""
    y = dec.y if isinstance(dec, DecoderMatrix) else dec
    return T.matmul(x, y)


def fuse_latents(xs: Sequence) -> Tensor:
    """Elementwise sum of the per-view latent matrices."""
    if not xs:
        raise ValidationError("fuse_latents needs at least one latent matrix")
    fused = xs[0]
    for x in xs[1:]:
        fused = T.add(fused, x)
    return fused if isinstance(fused, Tensor) else Tensor(np.asarray(fused, dtype=np.float64))


def classify(x_fused, head: ClassifierHead, tape: Tape | None = None) -> Tensor:
    """Logits = X C + bias."""
    w = tape.parameter(head.weight, "head/W") if tape is not None else head.weight
    b = tape.parameter(head.bias, "head/b") if tape is not None else head.bias
    return T.add_bias(T.matmul(x_fused, w), b)


def project_decoder_columns(dec: DecoderMatrix, rng=None) -> DecoderMatrix:
    """Rescale every decoder column to norm exactly 1/sqrt(p), in place.

    All-zero columns (which cannot be rescaled) are re-randomized from
    the init distribution first; idempotent otherwise, and column
    directions are preserved.
    """
    y = dec.y
    k, p = y.shape
    norms = np.linalg.norm(y, axis=0)
    dead = norms == 0.0
    if np.any(dead):
        rng = rng if rng is not None else np.random.default_rng(0)
        n_dead = int(dead.sum())
        y[:, dead] = _glorot(rng, k, p, (k, n_dead))
        norms = np.linalg.norm(y, axis=0)
    y *= (1.0 / np.sqrt(p)) / norms
    return dec


def predict_proba(model: MvfaeModel, view_mats: Sequence[np.ndarray]) -> np.ndarray:
    """Class-1 probability per sample from the fused latents."""
    latents = [encode_view(model, v, m) for v, m in enumerate(view_mats)]
    logits = classify(fuse_latents(latents), model.head)
    return T.softmax(logits.value)[:, 1]
