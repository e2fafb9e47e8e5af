"""Dense-matrix arithmetic with a minimal reverse-mode tape.

The op set is exactly what the training objective composes: matrix
product, bias add, elementwise activation, squared Frobenius norm, the
two Laplacian quadratic forms, softmax cross entropy, and weighted sums
of scalar terms. Values are float64 arrays (matrices are 2-D, scalars
0-d). Ops record onto a :class:`Tape` whenever an input is tracked;
gradients are accumulated by walking the tape in reverse creation
order, which is topological by construction. Tapes are rebuilt every
iteration, so nothing is retained between loss evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DimensionError, NumericError, ValidationError

# Alias for the universal numeric carrier: 2-D float64, row-major.
DenseMatrix = np.ndarray

SYMMETRY_TOL = 1e-9

ACTIVATION_KINDS = ("tanh", "relu", "identity")


def as_dense(values, *, check_finite=False) -> np.ndarray:
    """Coerce to a 2-D float64 array, optionally rejecting NaN/Inf."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"matrix dimensions must be >= 1, got {arr.shape}")
    if check_finite and not np.all(np.isfinite(arr)):
        raise NumericError("matrix contains non-finite entries")
    return arr


class Tensor:
    """A value node in the computation graph.

    Leaf parameters are created through :meth:`Tape.parameter`; plain
    ndarrays passed to ops are lifted to untracked constants, so
    gradients never flow into data matrices or Laplacians.
    """

    __slots__ = ("value", "tape", "inputs", "grad_fn", "name", "requires_grad")

    def __init__(self, value, tape=None, name=None, requires_grad=False,
                 inputs=(), grad_fn=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.tape = tape
        self.name = name
        self.requires_grad = requires_grad
        self.inputs: tuple[Tensor, ...] = tuple(inputs)
        self.grad_fn: Callable | None = grad_fn
        if tape is not None and requires_grad:
            tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise DimensionError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.value)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.value.shape}{label}, tracked={self.requires_grad})"


class GradientSet(dict):
    """Parameter name -> gradient array, one entry per tracked parameter."""

    def __missing__(self, key):
        raise KeyError(f"no gradient recorded for parameter {key!r}; "
                       "it was never registered on the tape")


class Tape:
    """Ordered record of one loss evaluation.

    Nodes are appended at creation time, so every input precedes its
    consumers. ``output`` is set by the loss builder to the scalar node
    the backward pass starts from.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.output: Tensor | None = None
        self._params: dict[str, Tensor] = {}

    def parameter(self, value, name: str) -> Tensor:
        """Register (or fetch) a tracked leaf for ``value`` under ``name``.

        Registering the same name twice returns the original node, so
        forward helpers can bind parameters independently.
        """
        existing = self._params.get(name)
        if existing is not None:
            return existing
        leaf = Tensor(value, tape=self, name=name, requires_grad=True)
        self._params[name] = leaf
        return leaf

    @property
    def parameters(self) -> Mapping[str, Tensor]:
        return self._params

    def backward(self) -> GradientSet:
        return backward(self)


def _lift(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _result(value, inputs: Sequence[Tensor], grad_fn) -> Tensor:
    tape = None
    tracked = False
    for t in inputs:
        if not t.requires_grad:
            continue
        tracked = True
        if t.tape is not None:
            if tape is None:
                tape = t.tape
            elif tape is not t.tape:
                raise ValidationError("operands were recorded on different tapes")
    return Tensor(value, tape=tape, requires_grad=tracked,
                  inputs=inputs, grad_fn=grad_fn if tracked else None)


def matmul(a, b) -> Tensor:
    """Standard matrix product a @ b."""
    a, b = _lift(a), _lift(b)
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2:
        raise DimensionError(f"matmul requires 2-D operands, got {av.shape} and {bv.shape}")
    if av.shape[1] != bv.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {av.shape} x {bv.shape}")

    def grad(g):
        return g @ bv.T, av.T @ g

    return _result(av @ bv, (a, b), grad)


def add(a, b) -> Tensor:
    """Elementwise sum of two same-shape matrices."""
    a, b = _lift(a), _lift(b)
    if a.value.shape != b.value.shape:
        raise DimensionError(f"add shape mismatch: {a.value.shape} vs {b.value.shape}")
    return _result(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    """Elementwise difference a - b."""
    a, b = _lift(a), _lift(b)
    if a.value.shape != b.value.shape:
        raise DimensionError(f"sub shape mismatch: {a.value.shape} vs {b.value.shape}")
    return _result(a.value - b.value, (a, b), lambda g: (g, -g))


def add_bias(m, bias) -> Tensor:
    """Add a length-cols bias row to every row of ``m``."""
    m, bias = _lift(m), _lift(bias)
    bv = bias.value
    if bv.ndim != 1 or m.value.shape[1] != bv.shape[0]:
        raise DimensionError(
            f"bias of shape {bv.shape} does not broadcast over {m.value.shape}")

    def grad(g):
        return g, g.sum(axis=0)

    return _result(m.value + bv[None, :], (m, bias), grad)


def activation(a, kind: str) -> Tensor:
    """Elementwise nonlinearity: one of tanh, relu, identity."""
    a = _lift(a)
    if kind == "tanh":
        out = np.tanh(a.value)
        return _result(out, (a,), lambda g: ((1.0 - out * out) * g,))
    if kind == "relu":
        mask = a.value > 0
        return _result(np.where(mask, a.value, 0.0), (a,), lambda g: (mask * g,))
    if kind == "identity":
        return _result(a.value.copy(), (a,), lambda g: (g,))
    raise ValidationError(f"unknown activation kind {kind!r}; expected one of {ACTIVATION_KINDS}")


def frobenius_sq(a) -> Tensor:
    """Sum of squared entries, ||A||_F^2."""
    a = _lift(a)
    av = a.value
    return _result(np.asarray(np.sum(av * av)), (a,), lambda g: (2.0 * av * g,))


def _check_symmetric(l: np.ndarray, what: str) -> None:
    if l.ndim != 2 or l.shape[0] != l.shape[1]:
        raise DimensionError(f"{what} must be square, got shape {l.shape}")
    if np.max(np.abs(l - l.T), initial=0.0) > SYMMETRY_TOL:
        raise ValidationError(f"{what} is not symmetric within {SYMMETRY_TOL}")


def quad_trace_rows(y, l) -> Tensor:
    """Trace(Y L Y^T) for symmetric constant L over the columns of Y.

    Gradient w.r.t. Y is 2*Y*L (valid for symmetric L only; asymmetric
    inputs are rejected rather than symmetrized).
    """
    y = _lift(y)
    lv = np.asarray(l, dtype=np.float64)
    _check_symmetric(lv, "quadratic-form matrix")
    if y.value.shape[1] != lv.shape[0]:
        raise DimensionError(
            f"column count {y.value.shape[1]} does not match matrix size {lv.shape[0]}")
    yl = y.value @ lv
    return _result(np.asarray(np.sum(yl * y.value)), (y,), lambda g: (2.0 * yl * g,))


def quad_trace_cols(x, l) -> Tensor:
    """Trace(X^T L X) for symmetric constant L over the rows of X.

    Gradient w.r.t. X is 2*L*X.
    """
    x = _lift(x)
    lv = np.asarray(l, dtype=np.float64)
    _check_symmetric(lv, "quadratic-form matrix")
    if x.value.shape[0] != lv.shape[0]:
        raise DimensionError(
            f"row count {x.value.shape[0]} does not match matrix size {lv.shape[0]}")
    lx = lv @ x.value
    return _result(np.asarray(np.sum(lx * x.value)), (x,), lambda g: (2.0 * lx * g,))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean over rows of -log softmax(logits)[label]."""
    logits = _lift(logits)
    lv = logits.value
    labs = np.asarray(labels)
    if lv.ndim != 2:
        raise DimensionError(f"logits must be 2-D, got {lv.shape}")
    n, c = lv.shape
    if n < 1:
        raise ValidationError("cross entropy needs at least one row")
    if labs.shape != (n,):
        raise DimensionError(f"labels of shape {labs.shape} do not match {n} logit rows")
    if not np.issubdtype(labs.dtype, np.integer):
        raise ValidationError("labels must be integers")
    if labs.min() < 0 or labs.max() >= c:
        raise ValidationError(f"label values must lie in [0, {c}), got "
                              f"range [{labs.min()}, {labs.max()}]")
    ls = log_softmax(lv)
    value = -ls[np.arange(n), labs].mean()

    def grad(g):
        d = np.exp(ls)
        d[np.arange(n), labs] -= 1.0
        return (d * (float(g) / n),)

    return _result(np.asarray(value), (logits,), grad)


def weighted_sum(terms: Sequence, coefficients: Sequence[float]) -> Tensor:
    """Scalar combination sum_i c_i * t_i of scalar tensors."""
    terms = [_lift(t) for t in terms]
    coeffs = [float(c) for c in coefficients]
    if len(terms) != len(coeffs):
        raise DimensionError(f"{len(terms)} terms but {len(coeffs)} coefficients")
    if not terms:
        raise ValidationError("weighted_sum needs at least one term")
    for t in terms:
        if t.value.size != 1:
            raise DimensionError(f"weighted_sum expects scalar terms, got shape {t.shape}")
    value = np.asarray(sum(c * float(t.value) for c, t in zip(coeffs, terms)))

    def grad(g):
        return tuple(np.asarray(c * float(g)) for c in coeffs)

    return _result(value, tuple(terms), grad)


def backward(tape: Tape) -> GradientSet:
    """Gradients of the tape's scalar output w.r.t. every registered parameter.

    Parameters that do not influence the output get zero gradients.
    """
    out = tape.output
    if out is None:
        raise ValidationError("tape has no recorded scalar output")
    if out.value.size != 1:
        raise DimensionError(f"tape output must be scalar, got shape {out.shape}")
    if not np.isfinite(out.value):
        raise NumericError("loss value is not finite; cannot backpropagate")

    grads: dict[int, np.ndarray] = {id(out): np.ones_like(out.value)}
    for node in reversed(tape.nodes):
        if node.grad_fn is None:
            continue
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.grad_fn(g)):
            if gi is None or not inp.requires_grad:
                continue
            acc = grads.get(id(inp))
            grads[id(inp)] = gi if acc is None else acc + gi

    result = GradientSet()
    for name, leaf in tape.parameters.items():
        g = grads.get(id(leaf))
        result[name] = np.zeros_like(leaf.value) if g is None else np.asarray(g)
    return result


@dataclass
class FiniteDiffResult:
    """Outcome of a central-finite-difference gradient check."""

    max_rel_err: float
    worst_param: str
    worst_index: tuple[int, ...]
    samples: int
    coords: tuple = ()


def finite_diff_check(loss_and_grad, params: Mapping[str, np.ndarray],
                      epsilon: float = 1e-5, samples: int = 50,
                      rng=None, ensure_groups: bool = False) -> FiniteDiffResult:
    """Compare analytic gradients against central finite differences.

    ``loss_and_grad(params) -> (loss, grads)`` must be a pure function of
    the parameter arrays. For each sampled coordinate the relative error
    is |a - n| / max(1e-8, |a| + |n|); the worst one is reported. With
    ``ensure_groups`` every parameter array contributes at least one
    sampled coordinate (when the budget allows).
    """
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    if samples < 1:
        raise ValidationError(f"samples must be >= 1, got {samples}")
    rng = rng if rng is not None else np.random.default_rng(0)

    loss0, grads = loss_and_grad(params)
    if not np.isfinite(loss0):
        raise NumericError("loss is not finite at the evaluation point")

    coords = [(name, idx) for name, arr in params.items()
              for idx in np.ndindex(arr.shape)]
    if samples < len(coords):
        chosen = []
        if ensure_groups and len(params) <= samples:
            for name, arr in params.items():
                flat = rng.integers(arr.size)
                chosen.append((name, np.unravel_index(flat, arr.shape)))
        pool = [c for c in coords if c not in set(chosen)]
        extra = rng.choice(len(pool), size=samples - len(chosen), replace=False)
        coords = chosen + [pool[i] for i in extra]

    visited = tuple(coords)
    worst = FiniteDiffResult(-1.0, "", (), len(coords), visited)
    for name, idx in coords:
        base = params[name][idx]
        perturbed = dict(params)
        bumped = params[name].copy()
        perturbed[name] = bumped

        bumped[idx] = base + epsilon
        f_plus, _ = loss_and_grad(perturbed)
        bumped[idx] = base - epsilon
        f_minus, _ = loss_and_grad(perturbed)
        bumped[idx] = base

        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError(f"loss is not finite near {name}{idx}")
        numeric = (f_plus - f_minus) / (2.0 * epsilon)
        analytic = float(grads[name][idx])
        rel = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
        if rel > worst.max_rel_err:
            worst = FiniteDiffResult(rel, name, idx, len(coords), visited)
    return worst
