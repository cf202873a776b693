"""Reverse-mode automatic differentiation on a recorded tape.

Values are numpy arrays (batched: rows are samples).  Every primitive below
accepts either plain arrays or tape :class:`Node` objects.  With plain arrays
it just computes; when a Node is involved the operation is appended to that
node's tape.  The vector-Jacobian products are written with the same
primitives, so running the backward pass on nodes (``create_graph=True``)
records the gradient computation itself and it can be differentiated again.
"""

import hashlib
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import InvalidInputError

LEAKY_SLOPE = 0.2
ACTIVATIONS = ("leaky_relu", "tanh")


# ---------------------------------------------------------------------------
# tape


@dataclass
class _Record:
    op: str
    parents: tuple
    fwd: Optional[Callable]
    vjp: Optional[Callable]


class Node:
    """A value recorded on a :class:`Tape`."""

    __slots__ = ("tape", "index", "value")
    __array_ufunc__ = None  # make numpy defer to the reflected operators below

    def __init__(self, tape, index, value):
        self.tape = tape
        self.index = index
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        return f"Node(#{self.index}, {self.tape.records[self.index].op}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)


class Tape:
    """Append-only list of operations; parents always precede children."""

    def __init__(self):
        self.records: List[_Record] = []
        self.values: List[np.ndarray] = []

    def __len__(self):
        return len(self.records)

    def _push(self, op, parents, value, fwd=None, vjp=None) -> Node:
        self.records.append(_Record(op, tuple(p.index for p in parents), fwd, vjp))
        self.values.append(value)
        return Node(self, len(self.records) - 1, value)

    def variable(self, value) -> Node:
        """A differentiable leaf."""
        return self._push("var", (), np.array(value, dtype=float))

    def const(self, value) -> Node:
        return self._push("const", (), np.array(value, dtype=float))

    def replay(self) -> List[np.ndarray]:
        """Recompute every value from the leaves in tape order."""
        out = []
        for rec, cached in zip(self.records, self.values):
            if rec.fwd is None:
                out.append(cached)
            else:
                out.append(rec.fwd(*[out[p] for p in rec.parents]))
        return out

    def replay_matches(self) -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.replay(), self.values))

    def digest(self) -> str:
        """Hash of ops, wiring and cached values; equal tapes give equal digests."""
        h = hashlib.sha256()
        for rec, val in zip(self.records, self.values):
            h.update(rec.op.encode())
            h.update(repr(rec.parents).encode())
            h.update(repr(val.shape).encode())
            h.update(np.ascontiguousarray(val).tobytes())
        return h.hexdigest()


def _tape_of(args) -> Optional[Tape]:
    tape = None
    for a in args:
        if isinstance(a, Node):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise InvalidInputError("operands live on different tapes")
    return tape


def _apply(op, fwd, vjp, *args):
    tape = _tape_of(args)
    if tape is None:
        return fwd(*[np.asarray(a, dtype=float) for a in args])
    nodes = [a if isinstance(a, Node) else tape.const(a) for a in args]
    return tape._push(op, nodes, fwd(*[n.value for n in nodes]), fwd, vjp)


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Node) else np.asarray(x, dtype=float)


def shape_of(x) -> tuple:
    return value_of(x).shape


# ---------------------------------------------------------------------------
# primitives


def _sum_to_np(x, shape):
    if x.shape == shape:
        return x
    lead = x.ndim - len(shape)
    if lead:
        x = x.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and x.shape[i] != 1)
    if axes:
        x = x.sum(axis=axes, keepdims=True)
    return x.reshape(shape)


def sum_to(x, shape):
    """Sum ``x`` down to ``shape`` (the adjoint of broadcasting)."""
    shape = tuple(shape)
    return _apply(
        "sum_to",
        lambda a: _sum_to_np(a, shape),
        lambda g, ins, out: (broadcast_to(g, shape_of(ins[0])),),
        x,
    )


def broadcast_to(x, shape):
    shape = tuple(shape)
    return _apply(
        "broadcast_to",
        lambda a: np.array(np.broadcast_to(a, shape)),
        lambda g, ins, out: (sum_to(g, shape_of(ins[0])),),
        x,
    )


def _unbroadcast(g, x):
    s = shape_of(x)
    return g if shape_of(g) == s else sum_to(g, s)


def add(a, b):
    return _apply(
        "add",
        np.add,
        lambda g, ins, out: (_unbroadcast(g, ins[0]), _unbroadcast(g, ins[1])),
        a,
        b,
    )


def sub(a, b):
    return _apply(
        "sub",
        np.subtract,
        lambda g, ins, out: (_unbroadcast(g, ins[0]), _unbroadcast(neg(g), ins[1])),
        a,
        b,
    )


def mul(a, b):
    return _apply(
        "mul",
        np.multiply,
        lambda g, ins, out: (_unbroadcast(g * ins[1], ins[0]), _unbroadcast(g * ins[0], ins[1])),
        a,
        b,
    )


def div(a, b):
    return _apply(
        "div",
        np.divide,
        lambda g, ins, out: (
            _unbroadcast(g / ins[1], ins[0]),
            _unbroadcast(neg(g * out / ins[1]), ins[1]),
        ),
        a,
        b,
    )


def neg(a):
    return _apply("neg", np.negative, lambda g, ins, out: (neg(g),), a)


def matmul(a, b):
    return _apply(
        "matmul",
        np.matmul,
        lambda g, ins, out: (g @ transpose(ins[1]), transpose(ins[0]) @ g),
        a,
        b,
    )


def transpose(a):
    return _apply("transpose", lambda x: x.T.copy(), lambda g, ins, out: (transpose(g),), a)


def reshape(a, shape):
    shape = tuple(shape)
    return _apply(
        "reshape",
        lambda x: x.reshape(shape),
        lambda g, ins, out: (reshape(g, shape_of(ins[0])),),
        a,
    )


def getitem(a, idx):
    return _apply(
        "getitem",
        lambda x: np.array(x[idx]),
        lambda g, ins, out: (scatter(g, idx, shape_of(ins[0])),),
        a,
    )


def scatter(g, idx, shape):
    """Zeros of ``shape`` with ``g`` added at ``idx`` (the adjoint of indexing)."""
    shape = tuple(shape)

    def fwd(x):
        z = np.zeros(shape)
        np.add.at(z, idx, x)
        return z

    return _apply("scatter", fwd, lambda gg, ins, out: (getitem(gg, idx),), g)


def sum(a, axis=None):
    """Sum over all entries (0-d result) or over ``axis`` keeping dimensions."""
    if axis is None:
        return _apply(
            "sum",
            lambda x: np.array(x.sum()),
            lambda g, ins, out: (broadcast_to(g, shape_of(ins[0])),),
            a,
        )
    return _apply(
        "sum_axis",
        lambda x: x.sum(axis=axis, keepdims=True),
        lambda g, ins, out: (broadcast_to(g, shape_of(ins[0])),),
        a,
    )


def mean(a):
    return sum(a) * (1.0 / value_of(a).size)


def tanh(a):
    return _apply("tanh", np.tanh, lambda g, ins, out: (g * (1.0 - out * out),), a)


def _sigmoid_np(x):
    return np.exp(-np.logaddexp(0.0, -x))


def sigmoid(a):
    return _apply("sigmoid", _sigmoid_np, lambda g, ins, out: (g * out * (1.0 - out),), a)


def log_sigmoid(a):
    """``-log(1 + exp(-a))``, the logistic GAN loss."""
    return _apply(
        "log_sigmoid",
        lambda x: -np.logaddexp(0.0, -x),
        lambda g, ins, out: (g * sigmoid(neg(ins[0])),),
        a,
    )


def leaky_relu(a, slope=LEAKY_SLOPE):
    """``max(t, slope*t)``.  At ``t == 0`` the derivative is 1 and the second derivative is 0 everywhere."""

    def vjp(g, ins, out):
        return (g * np.where(value_of(ins[0]) >= 0.0, 1.0, slope),)

    return _apply("leaky_relu", lambda x: np.where(x >= 0.0, x, slope * x), vjp, a)


def sqrt(a):
    return _apply("sqrt", np.sqrt, lambda g, ins, out: (g * 0.5 / out,), a)


ACTIVATION_FNS = {"leaky_relu": leaky_relu, "tanh": tanh}


# ---------------------------------------------------------------------------
# reverse accumulation


def grad(root: Node, wrt: Sequence[Node], create_graph: bool = False) -> list:
    """Gradients of the scalar ``root`` with respect to each node in ``wrt``.

    With ``create_graph`` the gradients are tape nodes that can be
    differentiated again; otherwise they are plain arrays.
    """
    if not isinstance(root, Node):
        raise InvalidInputError("grad needs a tape node as root")
    if root.value.size != 1:
        raise InvalidInputError(f"grad needs a scalar root, got shape {root.shape}")
    tape = root.tape
    for w in wrt:
        if not isinstance(w, Node) or w.tape is not tape:
            raise InvalidInputError("gradient targets must be nodes on the root's tape")
    records = tape.records
    n = root.index + 1

    needed = bytearray(n)
    for w in wrt:
        if w.index < n:
            needed[w.index] = 1
    for i in range(n):
        if not needed[i] and any(needed[p] for p in records[i].parents):
            needed[i] = 1

    if create_graph:
        lift = lambda i: Node(tape, i, tape.values[i])
        seed = tape.const(np.ones(root.shape))
    else:
        lift = lambda i: tape.values[i]
        seed = np.ones(root.shape)

    targets = {w.index for w in wrt}
    found = {}
    adj = {root.index: seed}
    for i in range(root.index, -1, -1):
        g = adj.pop(i, None)
        if g is None or not needed[i]:
            continue
        if i in targets:
            found[i] = g
        rec = records[i]
        if rec.vjp is None:
            continue
        ins = [lift(p) for p in rec.parents]
        contribs = rec.vjp(g, ins, lift(i))
        for p, c in zip(rec.parents, contribs):
            if c is None or not needed[p]:
                continue
            adj[p] = c if p not in adj else adj[p] + c

    out = []
    for w in wrt:
        g = found.get(w.index)
        if g is None:
            g = tape.const(np.zeros(w.shape)) if create_graph else np.zeros(w.shape)
        out.append(g)
    return out


# ---------------------------------------------------------------------------
# multilayer perceptrons


@dataclass(frozen=True)
class MlpParams:
    """Fully connected net: activation after every layer except the last."""

    layers: tuple
    activation: str = "leaky_relu"
    input_dim: Optional[int] = None

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise InvalidInputError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        layers = tuple((np.array(w, dtype=float), np.array(b, dtype=float)) for w, b in self.layers)
        if not layers and self.input_dim is None:
            raise InvalidInputError("a net without layers needs an explicit input_dim")
        in_dim = layers[0][0].shape[1] if layers and self.input_dim is None else self.input_dim
        prev = in_dim
        for k, (w, b) in enumerate(layers):
            if w.ndim != 2 or b.shape != (w.shape[0],) or w.shape[1] != prev:
                raise InvalidInputError(f"layer {k}: weight {w.shape} / bias {b.shape} break the shape chain")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise InvalidInputError(f"layer {k} has non-finite entries")
            prev = w.shape[0]
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "input_dim", int(in_dim))

    @classmethod
    def init(cls, sizes: Sequence[int], activation="leaky_relu", rng=None):
        """Uniform weights and biases in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``."""
        if len(sizes) < 1:
            raise InvalidInputError("sizes needs at least the input dimension")
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        layers = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            b = rng.uniform(-bound, bound, size=fan_out)
            layers.append((w, b))
        return cls(tuple(layers), activation, sizes[0])

    @property
    def output_dim(self) -> int:
        return self.layers[-1][0].shape[0] if self.layers else self.input_dim

    @property
    def sizes(self) -> tuple:
        return (self.input_dim,) + tuple(w.shape[0] for w, _ in self.layers)

    @property
    def n_params(self) -> int:
        return int(np.sum([w.size + b.size for w, b in self.layers])) if self.layers else 0

    def shapes(self) -> list:
        out = []
        for w, b in self.layers:
            out.extend([w.shape, b.shape])
        return out

    def arrays(self) -> list:
        out = []
        for w, b in self.layers:
            out.extend([w, b])
        return out

    def flatten(self) -> np.ndarray:
        """Layer-major, weight before bias, row-major within a matrix."""
        if not self.layers:
            return np.zeros(0)
        return np.concatenate([a.ravel() for a in self.arrays()])

    def from_flat(self, vec) -> "MlpParams":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.n_params,):
            raise InvalidInputError(f"expected {self.n_params} parameters, got shape {vec.shape}")
        parts = unflatten(vec, self.shapes())
        layers = tuple((parts[2 * k], parts[2 * k + 1]) for k in range(len(self.layers)))
        return MlpParams(layers, self.activation, self.input_dim)

    def with_zero_output_layer(self) -> "MlpParams":
        w, b = self.layers[-1]
        layers = self.layers[:-1] + ((np.zeros_like(w), np.zeros_like(b)),)
        return MlpParams(layers, self.activation, self.input_dim)


def unflatten(vec, shapes) -> list:
    """Split a flat vector (array or node) into pieces of the given shapes."""
    out = []
    offset = 0
    for s in shapes:
        size = int(np.prod(s))
        piece = getitem(vec, slice(offset, offset + size))
        out.append(reshape(piece, s))
        offset += size
    if offset != shape_of(vec)[0]:
        raise InvalidInputError(f"flat vector has {shape_of(vec)[0]} entries, shapes need {offset}")
    return out


def mlp_apply(arrays: Sequence, x, activation="leaky_relu"):
    """Evaluate a net given its ``[W0, b0, W1, b1, ...]`` (arrays or nodes) on a batch ``x``."""
    act = ACTIVATION_FNS[activation]
    h = x
    n_layers = len(arrays) // 2
    for k in range(n_layers):
        w, b = arrays[2 * k], arrays[2 * k + 1]
        h = h @ transpose(w) + b
        if k < n_layers - 1:
            h = act(h)
    return h


def _as_batch(p: MlpParams, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != p.input_dim:
        raise InvalidInputError(f"input of shape {x.shape} does not match input_dim={p.input_dim}")
    return xb, single


def forward(p: MlpParams, x) -> np.ndarray:
    """Plain evaluation; ``x`` is one input vector or a batch with samples as rows."""
    xb, single = _as_batch(p, x)
    out = mlp_apply(p.arrays(), xb, p.activation)
    return out[0] if single else out


@dataclass
class Recording:
    """A forward pass recorded on a tape, with leaves for parameters and inputs."""

    tape: Tape
    params: list
    x: Node
    out: Node
    single: bool = False


def record_forward(p: MlpParams, x, tape: Optional[Tape] = None) -> Recording:
    xb, single = _as_batch(p, x)
    tape = Tape() if tape is None else tape
    params = [tape.variable(a) for a in p.arrays()]
    xn = tape.variable(xb)
    out = mlp_apply(params, xn, p.activation)
    if not isinstance(out, Node):  # no layers: identity net
        out = xn
    return Recording(tape, params, xn, out, single)


def grad_params(objective: Node, rec: Recording) -> np.ndarray:
    """Flattened gradient of a scalar tape node with respect to the recorded parameters."""
    if not rec.params:
        return np.zeros(0)
    grads = grad(objective, rec.params)
    return np.concatenate([np.ravel(g) for g in grads])


def _require_scalar_output(p):
    if p.output_dim != 1:
        raise InvalidInputError(f"input gradients need a scalar-output net, output_dim={p.output_dim}")


def grad_input(p: MlpParams, x) -> np.ndarray:
    """``grad_x D(x)`` per sample (same shape as ``x``)."""
    _require_scalar_output(p)
    rec = record_forward(p, x)
    (gx,) = grad(sum(rec.out), [rec.x])
    return gx[0] if rec.single else gx


def input_grad_sqnorm(rec: Recording) -> Node:
    """Tape node for ``sum_i ||grad_x D(x_i)||^2`` over the recorded batch."""
    (gx,) = grad(sum(rec.out), [rec.x], create_graph=True)
    return sum(gx * gx)


def grad_gradnorm_params(p: MlpParams, x) -> np.ndarray:
    """Parameter gradient of ``||grad_x D(x)||^2`` (summed over a batch) by double backprop."""
    _require_scalar_output(p)
    rec = record_forward(p, x)
    return grad_params(input_grad_sqnorm(rec), rec)


def gradcheck(fn: Callable, point, eps: float = 1e-5) -> float:
    """Largest ``|AD - FD| / max(1, |FD|)`` over coordinates.

    ``fn`` maps a vector (array or tape node) to a scalar using the primitives
    of this module.  The central-difference step for coordinate ``i`` is
    ``eps * max(1, |point_i|)``.
    """
    point = np.array(point, dtype=float)
    tape = Tape()
    leaf = tape.variable(point)
    out = fn(leaf)
    if not isinstance(out, Node):  # fn ignores its argument
        ad = np.zeros_like(point)
    else:
        (ad,) = grad(out, [leaf])
    flat = point.ravel()
    ad = np.ravel(ad)
    worst = 0.0
    for i in range(flat.size):
        h = eps * max(1.0, abs(flat[i]))
        up, dn = flat.copy(), flat.copy()
        up[i] += h
        dn[i] -= h
        fd = (float(fn(up.reshape(point.shape))) - float(fn(dn.reshape(point.shape)))) / (2.0 * h)
        worst = max(worst, abs(ad[i] - fd) / max(1.0, abs(fd)))
    return worst
