"""Adam with decoupled weight decay, the training loop, and checkpoints.

Weight decay multiplies parameters by (1 - lr*wd) before the moment
update and never touches the decoder matrices, whose column norms are
re-projected after every step instead. The fused sample-similarity
Laplacian is rebuilt from the current latents on a configurable stride
(default: every iteration) and is constant inside each backward pass.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import SplitData
from .errors import (BadMagicError, CheckpointError, ChecksumError,
                     NumericError, ValidationError, VersionMismatchError)
from .model import (ClassifierHead, DecoderMatrix, EncoderParams, ModelConfig,
                    MvfaeModel, classify, encode_view, fuse_latents,
                    project_decoder_columns, substream_rng)
from .objective import LossBreakdown, fused_similarity_laplacian, mf_loss, supervised_loss
from .tensor import ACTIVATION_KINDS, Tape, backward

CHECKPOINT_MAGIC = b"MVAE"
CHECKPOINT_VERSION = 1

LOG_HEADER = "iter,classification,reconstruction,feature_net,view_sim,total,val_accuracy,lr"


@dataclass
class AdamState:
    """First/second moment estimates plus the decay-exempt name set."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    exempt: frozenset = frozenset()
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Schedule:
    """Step-decay learning-rate schedule."""

    lr_initial: float = 5e-4
    drop_at: int = 500
    lr_after: float = 5e-5
    total_iters: int = 1000

    def __post_init__(self):
        if self.total_iters < 1:
            raise ValidationError(f"total_iters must be >= 1, got {self.total_iters}")
        if not 0 < self.lr_after <= self.lr_initial:
            raise ValidationError(
                f"need 0 < lr_after <= lr_initial, got {self.lr_after} / {self.lr_initial}")
        if not 0 <= self.drop_at <= self.total_iters:
            raise ValidationError(f"drop_at out of range: {self.drop_at}")


def lr_at(schedule: Schedule, iteration: int) -> float:
    if not 0 <= iteration < schedule.total_iters:
        raise ValidationError(
            f"iteration {iteration} outside schedule of {schedule.total_iters}")
    return schedule.lr_initial if iteration < schedule.drop_at else schedule.lr_after


def adam_step(params: dict, grads, state: AdamState, lr: float) -> None:
    """One in-place Adam update over a name->array parameter dict."""
    if lr < 0:
        raise ValidationError(f"learning rate must be >= 0, got {lr}")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for '{name}' at step {state.t}")
        if state.weight_decay > 0.0 and name not in state.exempt:
            p *= 1.0 - lr * state.weight_decay
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


@dataclass
class TrainOptions:
    """Loop settings that are not part of the LR schedule."""

    weight_decay: float = 1e-4
    eval_every: int = 10
    sim_refresh: int = 1
    log_path: str | None = None
    checkpoint_path: str | None = None
    corrupt_gradient: Callable[[dict], None] | None = None

    def __post_init__(self):
        if self.weight_decay < 0:
            raise ValidationError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.eval_every < 1 or self.sim_refresh < 1:
            raise ValidationError("eval_every and sim_refresh must be >= 1")


@dataclass
class TrainRecord:
    """Trajectory and outcome of one training run."""

    breakdowns: list
    val_accuracy: list
    lrs: list
    best_iter: int
    best_val_accuracy: float
    checkpoint_path: str | None = None

    def series(self, term: str) -> list:
        return [getattr(b, term) for b in self.breakdowns]


def _predict_labels(model: MvfaeModel, views) -> np.ndarray:
    latents = [encode_view(model, v, b.matrix) for v, b in enumerate(views)]
    logits = classify(fuse_latents(latents), model.head).value
    if model.config.num_classes == 2:
        shifted = logits - logits.max(axis=1, keepdims=True)
        expd = np.exp(shifted)
        prob1 = expd[:, 1] / expd.sum(axis=1)
        return (prob1 >= 0.5).astype(np.int64)
    return np.argmax(logits, axis=1).astype(np.int64)


def _accuracy(model: MvfaeModel, views, labels) -> float:
    return float(np.mean(_predict_labels(model, views) == np.asarray(labels)))


def compute_fused_laplacian(model: MvfaeModel, views) -> np.ndarray:
    latents = [encode_view(model, v, b.matrix).value for v, b in enumerate(views)]
    return fused_similarity_laplacian(latents)


def train(model: MvfaeModel, data: SplitData, schedule: Schedule | None = None,
          options: TrainOptions | None = None) -> TrainRecord:
    """Full-batch training with best-validation-accuracy selection.

    The model is left holding the parameters of the best evaluated
    iteration. A training log CSV and a checkpoint of the selected
    parameters are written when paths are set in ``options``.
    """
    schedule = schedule or Schedule()
    options = options or TrainOptions()
    if not len(data.train_labels) or not len(data.val_labels):
        raise ValidationError("training and validation splits must be non-empty")

    params = model.parameters()
    state = AdamState(weight_decay=options.weight_decay, exempt=model.decoder_names())
    record = TrainRecord([], [], [], best_iter=0, best_val_accuracy=-1.0,
                         checkpoint_path=options.checkpoint_path)
    best_params = None
    fused_l = None
    rows = []

    for i in range(schedule.total_iters):
        lr = lr_at(schedule, i)
        if fused_l is None or i % options.sim_refresh == 0:
            fused_l = compute_fused_laplacian(model, data.train_views)

        tape = Tape()
        breakdown = supervised_loss(model, data.train_views, data.train_labels,
                                    tape, fused_laplacian=fused_l)
        if not np.isfinite(breakdown.total):
            raise NumericError(f"non-finite loss at iteration {i}: {breakdown}")
        grads = backward(tape)
        if options.corrupt_gradient is not None:
            options.corrupt_gradient(grads)
        adam_step(params, grads, state, lr)
        for dec in model.decoders:
            project_decoder_columns(dec)

        if i % options.eval_every == 0 or i == schedule.total_iters - 1:
            val_acc = _accuracy(model, data.val_views, data.val_labels)
            if val_acc > record.best_val_accuracy:
                record.best_val_accuracy = val_acc
                record.best_iter = i
                best_params = {k: p.copy() for k, p in params.items()}
        else:
            val_acc = record.val_accuracy[-1]

        record.breakdowns.append(breakdown)
        record.val_accuracy.append(val_acc)
        record.lrs.append(lr)
        rows.append(f"{i},{breakdown.classification:.12g},{breakdown.reconstruction:.12g},"
                    f"{breakdown.feature_net:.12g},{breakdown.view_sim:.12g},"
                    f"{breakdown.total:.12g},{val_acc:.12g},{lr:.12g}")

    if best_params is not None:
        for name, p in params.items():
            p[...] = best_params[name]

    if options.log_path is not None:
        with open(options.log_path, "w", encoding="utf-8") as fh:
            fh.write(LOG_HEADER + "\n")
            fh.write("\n".join(rows) + "\n")
    if options.checkpoint_path is not None:
        save_checkpoint(model, options.checkpoint_path,
                        extra_meta={"best_iter": record.best_iter})
    return record


def fit_factorization(m, k: int, *, lam: float = 0.0, lr: float = 1e-2,
                      iters: int = 5000, seed: int = 0,
                      tol: float | None = None):
    """Fit M ~ X @ Y by Adam on the plain factorization objective.

    Returns (x, y, losses); stops early once the loss drops below ``tol``.
    """
    m = np.asarray(m, dtype=np.float64)
    if k < 1:
        raise ValidationError(f"rank must be >= 1, got {k}")
    rng = substream_rng(seed, "factorization")
    scale = 1.0 / np.sqrt(k)
    params = {"X": rng.normal(0.0, scale, size=(m.shape[0], k)),
              "Y": rng.normal(0.0, scale, size=(k, m.shape[1]))}
    state = AdamState()
    losses = []
    for _ in range(iters):
        tape = Tape()
        x = tape.parameter(params["X"], "X")
        y = tape.parameter(params["Y"], "Y")
        tape.output = mf_loss(x, y, m, lam)
        losses.append(tape.output.item())
        grads = backward(tape)
        adam_step(params, grads, state, lr)
        if tol is not None and losses[-1] <= tol:
            break
    return params["X"], params["Y"], losses


# --- checkpoint file format ---------------------------------------------
#
#   magic "MVAE" | version u32 | count u32
#   count x (name_len u32 | name utf-8 | rank u32 | dims u64 each)
#   payloads: little-endian float64, tensors concatenated in header order
#   crc32 u32 of the payload byte section
#
# All integers little-endian.

_ACTIVATION_CODES = {kind: i for i, kind in enumerate(ACTIVATION_KINDS)}


def write_tensor_file(path, tensors: dict) -> None:
    header = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(tensors))]
    payload = []
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype=np.float64)
        raw = name.encode("utf-8")
        header.append(struct.pack("<I", len(raw)))
        header.append(raw)
        header.append(struct.pack("<I", arr.ndim))
        header.append(struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b"")
        payload.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    blob = b"".join(payload)
    with open(path, "wb") as fh:
        fh.write(b"".join(header))
        fh.write(blob)
        fh.write(struct.pack("<I", zlib.crc32(blob) & 0xFFFFFFFF))


class _Cursor:
    def __init__(self, buf: bytes, path):
        self.buf, self.off, self.path = buf, 0, path

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.buf):
            raise ChecksumError(f"{self.path}: truncated checkpoint")
        out = self.buf[self.off:self.off + n]
        self.off += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def read_tensor_file(path) -> dict:
    with open(path, "rb") as fh:
        buf = fh.read()
    cur = _Cursor(buf, path)
    if cur.take(4) != CHECKPOINT_MAGIC:
        raise BadMagicError(f"{path}: not a checkpoint file")
    version = cur.u32()
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(
            f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    shapes = []
    for _ in range(cur.u32()):
        name = cur.take(cur.u32()).decode("utf-8")
        rank = cur.u32()
        dims = struct.unpack(f"<{rank}Q", cur.take(8 * rank)) if rank else ()
        shapes.append((name, dims))
    total = sum(int(np.prod(d, dtype=np.int64)) if d else 1 for _, d in shapes)
    blob = cur.take(8 * total)
    stored = cur.u32()
    if zlib.crc32(blob) & 0xFFFFFFFF != stored:
        raise ChecksumError(f"{path}: payload checksum mismatch")
    tensors, off = {}, 0
    for name, dims in shapes:
        count = int(np.prod(dims, dtype=np.int64)) if dims else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off)
        tensors[name] = arr.reshape(dims).astype(np.float64)
        off += 8 * count
    return tensors


def save_checkpoint(model: MvfaeModel, path, extra_meta: dict | None = None) -> None:
    tensors = dict(model.parameters())
    tensors["hyper/alpha"] = np.float64(model.alpha)
    tensors["hyper/beta"] = np.float64(model.beta)
    tensors["hyper/eta"] = np.float64(model.eta)
    tensors["hyper/lambda"] = np.float64(model.lam)
    tensors["meta/activation"] = np.float64(_ACTIVATION_CODES[model.config.activation])
    tensors["meta/seed"] = np.float64(model.config.seed)
    for key, value in (extra_meta or {}).items():
        tensors[f"meta/{key}"] = np.float64(value)
    write_tensor_file(path, tensors)


def load_checkpoint(path) -> MvfaeModel:
    tensors = read_tensor_file(path)
    try:
        views = sum(1 for name in tensors if name.startswith("dec") and name.endswith("/Y"))
        if views == 0:
            raise KeyError("dec0/Y")
        decoders = [DecoderMatrix(tensors[f"dec{v}/Y"]) for v in range(views)]
        encoders = []
        hidden = []
        for v in range(views):
            weights, biases = [], []
            i = 0
            while f"enc{v}/W{i}" in tensors:
                weights.append(tensors[f"enc{v}/W{i}"])
                biases.append(tensors[f"enc{v}/b{i}"])
                i += 1
            encoders.append(EncoderParams(weights, biases))
            if v == 0:
                hidden = [w.shape[1] for w in weights]
        head = ClassifierHead(tensors["head/W"], tensors["head/b"])
        code = int(tensors["meta/activation"])
        config = ModelConfig(
            views=views,
            input_dims=tuple(dec.y.shape[1] for dec in decoders),
            hidden_dims=tuple(hidden),
            latent_dim=decoders[0].y.shape[0],
            num_classes=head.weight.shape[1],
            activation=ACTIVATION_KINDS[code],
            seed=int(tensors["meta/seed"]),
        )
        return MvfaeModel(config, encoders, decoders, head,
                          alpha=float(tensors["hyper/alpha"]),
                          beta=float(tensors["hyper/beta"]),
                          eta=float(tensors["hyper/eta"]),
                          lam=float(tensors["hyper/lambda"]))
    except (KeyError, IndexError) as exc:
        raise CheckpointError(f"{path}: missing or inconsistent tensors ({exc})") from exc
