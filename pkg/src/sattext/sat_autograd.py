"""Reverse-mode differentiation over dense float64 arrays.

A ``Tensor`` is a node of a recorded computation: it keeps its value, the
nodes it was computed from and a closure that maps the upstream gradient to
gradients for those parents. ``Parameter`` leaves own a persistent ``grad``
buffer that ``backward`` accumulates into; intermediate gradients live only
for the duration of one ``backward`` call.
"""
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .kernels import grad_kernels as K
from .sat_errors import ConfigurationError, DegenerateInputError, InputError, UsageError
from .utils.array import as_f64, check_finite, row_slice


class Tensor:
    def __init__(self, value, parents: Tuple["Tensor", ...] = (), backward_fn: Optional[Callable] = None):
        self.value = as_f64(value)
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = any(p.requires_grad for p in parents)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def item(self) -> float:
        if self.value.size != 1:
            raise UsageError(f"item() on a tensor of shape {self.shape}")
        return float(self.value.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.value

    def detach(self) -> "Tensor":
        return Tensor(self.value.copy())

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __rsub__(self, other):
        return add(other, scale(self, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        return scale(self, 1.0 / float(other))


class Parameter(Tensor):
    def __init__(self, value, name: str = ""):
        super().__init__(np.array(value, dtype=np.float64))
        self.name = name
        self.requires_grad = True
        self.grad = np.zeros_like(self.value)
        self.step_state: Optional[np.ndarray] = None  # optimizer accumulator

    def zero_grad(self):
        self.grad[...] = 0.0


def constant(value) -> Tensor:
    return Tensor(value)


def _node(value: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    check_finite(value, op)
    return Tensor(value, tuple(parents), backward_fn)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def zero_grad(params: Iterable[Parameter]):
    for p in params:
        p.zero_grad()


################ Operations ################


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ConfigurationError(f"add: shapes {a.shape} and {b.shape} do not conform")
    out = a.value + b.value

    def backward(g):
        ga = g if a.size != 1 or a.shape == g.shape else np.sum(g).reshape(a.shape)
        gb = g if b.size != 1 or b.shape == g.shape else np.sum(g).reshape(b.shape)
        return ga, gb

    return _node(out, (a, b), backward, "add")


def scale(a, k: float) -> Tensor:
    a = _lift(a)
    return _node(a.value * k, (a,), lambda g: (g * k,), "scale")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ConfigurationError(f"mul: shapes {a.shape} and {b.shape} do not conform")
    return _node(a.value * b.value, (a, b), lambda g: (g * b.value, g * a.value), "mul")


def absolute(a: Tensor) -> Tensor:
    return _node(np.abs(a.value), (a,), lambda g: (g * np.sign(a.value),), "abs")


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.value)
    return _node(y, (a,), lambda g: (K.tanh_backward(g, y),), "tanh")


def total(a: Tensor) -> Tensor:
    """Sum of all entries (scalar)."""
    return _node(np.sum(a.value), (a,), lambda g: (np.full(a.shape, float(g)),), "sum")


def mean(a: Tensor) -> Tensor:
    n = a.size
    return _node(np.sum(a.value) / n, (a,), lambda g: (np.full(a.shape, float(g) / n),), "mean")


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis."""
    widths = [p.shape[-1] for p in parts]
    out = np.concatenate([p.value for p in parts], axis=-1)
    splits = np.cumsum(widths)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=-1))

    return _node(out, tuple(parts), backward, "concat")


def stack_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack equally shaped tensors along a new leading axis."""
    out = np.stack([p.value for p in parts], axis=0)
    return _node(out, tuple(parts), lambda g: tuple(g[i] for i in range(len(parts))), "stack")


def rows(a: Tensor, begin: int, end: int) -> Tensor:
    out = row_slice(a.value, begin, end).copy()

    def backward(g):
        ga = np.zeros_like(a.value)
        ga[begin:end] = g
        return (ga,)

    return _node(out, (a,), backward, "rows")


def gather(a: Tensor, index) -> Tensor:
    """Entries ``a[index]`` (any numpy index); duplicates accumulate in the backward pass."""
    out = np.array(a.value[index], dtype=np.float64)

    def backward(g):
        ga = np.zeros_like(a.value)
        np.add.at(ga, index, g)
        return (ga,)

    return _node(out, (a,), backward, "gather")


def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``weight @ x + bias`` for a vector x, row-wise for a batch of rows."""
    x, weight, bias = _lift(x), _lift(weight), _lift(bias)
    if weight.value.ndim != 2 or bias.value.ndim != 1 or x.value.ndim not in (1, 2):
        raise ConfigurationError(
            f"affine: expected input [n] or [B, n], weight [m, n], bias [m]; got {x.shape}, {weight.shape}, {bias.shape}"
        )
    m, n = weight.shape
    if x.shape[-1] != n or bias.shape[0] != m:
        raise ConfigurationError(f"affine: shapes {x.shape}, {weight.shape}, {bias.shape} do not conform")
    out = K.affine_forward(x.value, weight.value, bias.value)

    def backward(g):
        return K.affine_backward(g, x.value, weight.value)

    return _node(out, (x, weight, bias), backward, "affine")


def matmul_t(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b.T`` for 2-D a [n, d] and b [k, d]."""
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ConfigurationError(f"matmul_t: shapes {a.shape} and {b.shape} do not conform")
    return _node(a.value @ b.value.T, (a, b), lambda g: (g @ b.value, g.T @ a.value), "matmul_t")


def bag_mean(table: Tensor, bags: Sequence[Sequence[int]]) -> Tensor:
    """Row r of the output is the mean of the table rows listed in ``bags[r]``."""
    bags = [np.asarray(ids, dtype=np.int64) for ids in bags]
    for r, ids in enumerate(bags):
        if ids.size == 0:
            raise DegenerateInputError(f"bag {r} is empty")
    out = K.bag_mean_forward(table.value, bags)
    return _node(out, (table,), lambda g: (K.bag_mean_backward(g, bags, table.shape),), "bag_mean")


def softmax(logits: Tensor) -> Tensor:
    """Row-wise softmax over the last axis; the result rows are ProbabilityVectors."""
    logits = _lift(logits)
    if logits.shape[-1] < 2:
        raise ConfigurationError(f"softmax needs at least 2 classes, got shape {logits.shape}")
    y = K.softmax_forward(logits.value)
    return _node(y, (logits,), lambda g: (K.softmax_backward(g, y),), "softmax")


def _target_distribution(target, n_rows: Optional[int], c: int) -> np.ndarray:
    if isinstance(target, Tensor):
        target = target.value
    arr = np.asarray(target)
    if np.issubdtype(arr.dtype, np.integer):
        if np.any(arr < 0) or np.any(arr >= c):
            raise InputError(f"class index out of range for {c} classes: {arr.tolist()}")
        q = np.zeros((arr.size, c), dtype=np.float64)
        q[np.arange(arr.size), arr.reshape(-1)] = 1.0
        return q[0] if n_rows is None else q
    q = as_f64(arr)
    if q.shape[-1] != c:
        raise InputError(f"target distribution has {q.shape[-1]} entries, predictions have {c}")
    return q


def cross_entropy(target, predicted: Tensor) -> Tensor:
    """``H(target, predicted)`` with predictions clamped at ``PROB_FLOOR`` before the log.

    ``target`` is a class index or a distribution (constant, never differentiated).
    For a batch [B, c] of predictions it is an index array [B] or distributions [B, c]
    and the result is the vector of per-row losses.
    """
    p = predicted.value
    n_rows = None if p.ndim == 1 else p.shape[0]
    q = _target_distribution(target, n_rows, p.shape[-1])
    if q.shape != p.shape:
        raise InputError(f"target shape {q.shape} does not match predictions {p.shape}")
    out = K.cross_entropy_forward(q, p)
    return _node(out, (predicted,), lambda g: (K.cross_entropy_backward(g, q, p),), "cross_entropy")


def l2_normalize(a: Tensor) -> Tensor:
    norms = np.linalg.norm(a.value, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise DegenerateInputError("cannot normalize a zero-norm vector")
    u, norms = K.l2_normalize_forward(a.value)
    return _node(u, (a,), lambda g: (K.l2_normalize_backward(g, u, norms),), "l2_normalize")


def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    """``a.b / (|a||b|)`` for vectors, or row-wise for two [B, d] batches."""
    a, b = _lift(a), _lift(b)
    if a.shape != b.shape:
        raise ConfigurationError(f"cosine_similarity: shapes {a.shape} and {b.shape} do not conform")
    if np.any(np.linalg.norm(a.value, axis=-1) == 0.0) or np.any(np.linalg.norm(b.value, axis=-1) == 0.0):
        raise DegenerateInputError("cosine similarity of a zero-norm vector")
    out, cache = K.cosine_forward(a.value, b.value)
    out = np.clip(out, -1.0, 1.0)
    return _node(out, (a, b), lambda g: K.cosine_backward(g, cache), "cosine_similarity")


def logsumexp(a: Tensor) -> Tensor:
    out = K.logsumexp_forward(a.value)
    return _node(out, (a,), lambda g: (K.logsumexp_backward(g, a.value, out),), "logsumexp")


################ Backward ################


def _topological_order(root: Tensor) -> List[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor):
    """Accumulate d(loss)/d(param) into ``grad`` of every Parameter reachable from ``loss``."""
    if loss.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads = {id(loss): np.ones_like(loss.value)}
    for node in reversed(_topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if isinstance(node, Parameter):
            node.grad += g.reshape(node.shape)
            continue
        if node.backward_fn is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = grads.get(id(parent))
            grads[id(parent)] = pg if prev is None else prev + pg


################ Verification ################


def finite_diff_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Parameter],
    epsilon: float = 1e-4,
    n_samples: int = 100,
    seed: int = 0,
) -> float:
    """Max over sampled coordinates of |analytic - central difference| / max(1, |analytic|).

    Leaves the parameters' values unchanged; their ``grad`` holds the analytic
    gradient afterwards.
    """
    params = list(params)
    zero_grad(params)
    backward(loss_fn())
    analytic = [p.grad.copy() for p in params]

    coords = [(i, j) for i, p in enumerate(params) for j in range(p.size)]
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(coords), size=min(n_samples, len(coords)), replace=False)

    worst = 0.0
    for k in picks:
        i, j = coords[k]
        flat = params[i].value.reshape(-1)
        orig = flat[j]
        flat[j] = orig + epsilon
        up = loss_fn().item()
        flat[j] = orig - epsilon
        down = loss_fn().item()
        flat[j] = orig
        numeric = (up - down) / (2.0 * epsilon)
        a = analytic[i].reshape(-1)[j]
        worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst
