"""Reverse-mode automatic differentiation on a flat scalar tape.

Every intermediate scalar is one record on a :class:`Tape`: operator kind,
operand indices, local partial derivatives, and the eagerly computed value
(plain Python floats throughout, i.e. IEEE double precision).  Values are
evaluated at construction time, so building an expression *is* the forward
pass.  :meth:`Tape.backward` then runs one reverse sweep in fixed tape
order, which makes gradient accumulation deterministic and repeatable
bit-for-bit.

Vector reductions (``dot``, ``norm``, ``vsum``) are fused primitives: one
tape node with many parents, local partials computed analytically.  This
keeps tape sizes proportional to the number of genuinely scalar
intermediates instead of every vector coordinate product.

A tape belongs to a single owner; distinct tapes are independent and may be
used from concurrent workers.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

from .errors import NumericalError

__all__ = [
    "DomainError",
    "Tape",
    "Var",
    "acosh",
    "artanh",
    "clamp_max",
    "clamp_min",
    "dot",
    "exp",
    "forward",
    "grad_check",
    "log",
    "maximum",
    "minimum",
    "norm",
    "relu",
    "sigmoid",
    "sqrt",
    "tanh",
    "vsum",
]

# Operator kinds (stored per node for introspection and error reporting;
# the backward sweep is uniform over (args, partials) and never dispatches).
OP_INPUT = 0
OP_CONST = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_DIV = 5
OP_NEG = 6
OP_POW = 7
OP_SQRT = 8
OP_TANH = 9
OP_ARTANH = 10
OP_ACOSH = 11
OP_LOG = 12
OP_EXP = 13
OP_RELU = 14
OP_SIGMOID = 15
OP_MAX = 16
OP_MIN = 17
OP_DOT = 18
OP_NORM = 19
OP_SUM = 20
OP_CUSTOM = 21

OP_NAMES = {
    OP_INPUT: "input",
    OP_CONST: "const",
    OP_ADD: "add",
    OP_SUB: "sub",
    OP_MUL: "mul",
    OP_DIV: "div",
    OP_NEG: "neg",
    OP_POW: "pow",
    OP_SQRT: "sqrt",
    OP_TANH: "tanh",
    OP_ARTANH: "artanh",
    OP_ACOSH: "acosh",
    OP_LOG: "log",
    OP_EXP: "exp",
    OP_RELU: "relu",
    OP_SIGMOID: "sigmoid",
    OP_MAX: "max",
    OP_MIN: "min",
    OP_DOT: "dot",
    OP_NORM: "norm",
    OP_SUM: "sum",
    OP_CUSTOM: "custom",
}

_EMPTY: tuple = ()


class DomainError(NumericalError):
    """A primitive was evaluated outside its domain.

    Carries the index of the offending tape node in ``node``.
    """

    def __init__(self, message: str, node: int):
        super().__init__(f"{message} (tape node {node})")
        self.node = node


class Var:
    """Handle to one scalar node of a :class:`Tape`."""

    __slots__ = ("tape", "i")

    def __init__(self, tape: "Tape", i: int):
        self.tape = tape
        self.i = i

    @property
    def value(self) -> float:
        return self.tape._vals[self.i]

    @property
    def grad(self) -> float:
        """Gradient of the last backward target w.r.t. this node."""
        grads = self.tape.grads
        if grads is None:
            raise NumericalError("backward() has not been run on this tape")
        return grads[self.i]

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Var(#{self.i}, {OP_NAMES[self.tape._ops[self.i]]}, value={self.value!r})"

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        t = self.tape
        if isinstance(other, Var):
            return t._push(OP_ADD, (self.i, other.i), (1.0, 1.0),
                           t._vals[self.i] + t._vals[other.i])
        return t._push(OP_ADD, (self.i,), (1.0,), t._vals[self.i] + other)

    __radd__ = __add__

    def __sub__(self, other):
        t = self.tape
        if isinstance(other, Var):
            return t._push(OP_SUB, (self.i, other.i), (1.0, -1.0),
                           t._vals[self.i] - t._vals[other.i])
        return t._push(OP_SUB, (self.i,), (1.0,), t._vals[self.i] - other)

    def __rsub__(self, other):
        t = self.tape
        return t._push(OP_SUB, (self.i,), (-1.0,), other - t._vals[self.i])

    def __mul__(self, other):
        t = self.tape
        if isinstance(other, Var):
            a, b = t._vals[self.i], t._vals[other.i]
            return t._push(OP_MUL, (self.i, other.i), (b, a), a * b)
        return t._push(OP_MUL, (self.i,), (other,), t._vals[self.i] * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        t = self.tape
        a = t._vals[self.i]
        if isinstance(other, Var):
            b = t._vals[other.i]
            if b == 0.0:
                raise DomainError("division by zero", len(t._vals))
            v = a / b
            return t._push(OP_DIV, (self.i, other.i), (1.0 / b, -v / b), v)
        if other == 0.0:
            raise DomainError("division by zero", len(t._vals))
        return t._push(OP_DIV, (self.i,), (1.0 / other,), a / other)

    def __rtruediv__(self, other):
        t = self.tape
        a = t._vals[self.i]
        if a == 0.0:
            raise DomainError("division by zero", len(t._vals))
        v = other / a
        return t._push(OP_DIV, (self.i,), (-v / a,), v)

    def __neg__(self):
        t = self.tape
        return t._push(OP_NEG, (self.i,), (-1.0,), -t._vals[self.i])

    def __pow__(self, k):
        if not isinstance(k, (int, float)):
            raise TypeError("exponent must be a plain number")
        t = self.tape
        a = t._vals[self.i]
        v = a ** k
        return t._push(OP_POW, (self.i,), (k * a ** (k - 1),), v)


class Tape:
    """Ordered record of scalar operations supporting one reverse sweep.

    Nodes only ever reference earlier nodes, so iterating the record in
    reverse is a valid topological order for backpropagation.
    """

    def __init__(self):
        self._ops: list[int] = []
        self._args: list[tuple] = []
        self._parts: list[tuple] = []
        self._vals: list[float] = []
        self.grads: list[float] | None = None

    def __len__(self) -> int:
        return len(self._vals)

    def _push(self, op: int, args: tuple, parts: tuple, value: float) -> Var:
        i = len(self._vals)
        self._ops.append(op)
        self._args.append(args)
        self._parts.append(parts)
        self._vals.append(value)
        return Var(self, i)

    # -- leaves -------------------------------------------------------------

    def input(self, value: float) -> Var:
        """Differentiable leaf."""
        return self._push(OP_INPUT, _EMPTY, _EMPTY, float(value))

    def const(self, value: float) -> Var:
        """Non-differentiable leaf (gradient slot exists but is never used)."""
        return self._push(OP_CONST, _EMPTY, _EMPTY, float(value))

    def inputs(self, values: Iterable[float]) -> list[Var]:
        return [self.input(v) for v in values]

    def consts(self, values: Iterable[float]) -> list[Var]:
        return [self.const(v) for v in values]

    def custom(self, parents: Sequence[Var], value: float,
               partials: Sequence[float]) -> Var:
        """Fused node with caller-supplied analytic partials.

        ``partials[k]`` must be d(value)/d(parents[k]) evaluated at the
        parents' current values.
        """
        if len(parents) != len(partials):
            raise InvalidArgs("custom node: len(parents) != len(partials)")
        args = tuple(p.i for p in parents)
        return self._push(OP_CUSTOM, args, tuple(float(p) for p in partials),
                          float(value))

    # -- backward -----------------------------------------------------------

    def backward(self, out: Var) -> None:
        """Accumulate d(out)/d(node) into ``self.grads`` for every node.

        Runs in fixed reverse tape order; repeated calls produce
        bit-identical results.
        """
        if out.tape is not self:
            raise NumericalError("output Var belongs to a different tape")
        n = len(self._vals)
        g = [0.0] * n
        g[out.i] = 1.0
        args = self._args
        parts = self._parts
        for i in range(out.i, -1, -1):
            gi = g[i]
            if gi == 0.0:
                continue
            a = args[i]
            if not a:
                continue
            p = parts[i]
            if len(a) == 2:
                g[a[0]] += gi * p[0]
                g[a[1]] += gi * p[1]
            elif len(a) == 1:
                g[a[0]] += gi * p[0]
            else:
                for j, pj in zip(a, p):
                    g[j] += gi * pj
        self.grads = g


class InvalidArgs(NumericalError):
    pass


# -- unary primitives --------------------------------------------------------

def sqrt(x: Var) -> Var:
    t = x.tape
    a = t._vals[x.i]
    if a < 0.0:
        raise DomainError(f"sqrt of negative value {a!r}", len(t._vals))
    v = math.sqrt(a)
    part = 0.5 / v if v != 0.0 else 0.0  # subgradient convention at 0
    return t._push(OP_SQRT, (x.i,), (part,), v)


def tanh(x: Var) -> Var:
    t = x.tape
    v = math.tanh(t._vals[x.i])
    return t._push(OP_TANH, (x.i,), (1.0 - v * v,), v)


def artanh(x: Var) -> Var:
    t = x.tape
    a = t._vals[x.i]
    if not -1.0 < a < 1.0:
        raise DomainError(f"artanh argument {a!r} outside (-1, 1)", len(t._vals))
    return t._push(OP_ARTANH, (x.i,), (1.0 / (1.0 - a * a),), math.atanh(a))


def acosh(x: Var) -> Var:
    t = x.tape
    a = t._vals[x.i]
    if a < 1.0:
        raise DomainError(f"acosh argument {a!r} below 1", len(t._vals))
    # subgradient 0 at the apex a == 1 where the true derivative diverges
    part = 1.0 / math.sqrt(a * a - 1.0) if a > 1.0 else 0.0
    return t._push(OP_ACOSH, (x.i,), (part,), math.acosh(a))


def log(x: Var) -> Var:
    t = x.tape
    a = t._vals[x.i]
    if a <= 0.0:
        raise DomainError(f"log argument {a!r} not positive", len(t._vals))
    return t._push(OP_LOG, (x.i,), (1.0 / a,), math.log(a))


def exp(x: Var) -> Var:
    t = x.tape
    v = math.exp(t._vals[x.i])
    return t._push(OP_EXP, (x.i,), (v,), v)


def relu(x: Var) -> Var:
    t = x.tape
    a = t._vals[x.i]
    if a > 0.0:
        return t._push(OP_RELU, (x.i,), (1.0,), a)
    return t._push(OP_RELU, (x.i,), (0.0,), 0.0)  # derivative at 0 is 0


def sigmoid(x: Var) -> Var:
    t = x.tape
    a = t._vals[x.i]
    if a >= 0.0:
        v = 1.0 / (1.0 + math.exp(-a))
    else:
        e = math.exp(a)
        v = e / (1.0 + e)
    return t._push(OP_SIGMOID, (x.i,), (v * (1.0 - v),), v)


# -- binary selections -------------------------------------------------------
# Ties route the gradient to the first argument, a fixed deterministic choice.

def maximum(x: Var, y: Var | float) -> Var:
    t = x.tape
    a = t._vals[x.i]
    if isinstance(y, Var):
        b = t._vals[y.i]
        if a >= b:
            return t._push(OP_MAX, (x.i, y.i), (1.0, 0.0), a)
        return t._push(OP_MAX, (x.i, y.i), (0.0, 1.0), b)
    if a >= y:
        return t._push(OP_MAX, (x.i,), (1.0,), a)
    return t._push(OP_MAX, (x.i,), (0.0,), float(y))


def minimum(x: Var, y: Var | float) -> Var:
    t = x.tape
    a = t._vals[x.i]
    if isinstance(y, Var):
        b = t._vals[y.i]
        if a <= b:
            return t._push(OP_MIN, (x.i, y.i), (1.0, 0.0), a)
        return t._push(OP_MIN, (x.i, y.i), (0.0, 1.0), b)
    if a <= y:
        return t._push(OP_MIN, (x.i,), (1.0,), a)
    return t._push(OP_MIN, (x.i,), (0.0,), float(y))


def clamp_max(x: Var, bound: float) -> Var:
    """min(x, bound): values past the bound propagate zero gradient."""
    return minimum(x, bound)


def clamp_min(x: Var, bound: float) -> Var:
    return maximum(x, bound)


# -- fused vector primitives --------------------------------------------------

def dot(xs: Sequence[Var], ys: Sequence[Var]) -> Var:
    """Inner product of two equal-length Var sequences as a single node."""
    if len(xs) != len(ys):
        raise InvalidArgs("dot: length mismatch")
    t = xs[0].tape
    vals = t._vals
    xv = [vals[x.i] for x in xs]
    yv = [vals[y.i] for y in ys]
    s = 0.0
    for a, b in zip(xv, yv):
        s += a * b
    args = tuple(x.i for x in xs) + tuple(y.i for y in ys)
    return t._push(OP_DOT, args, tuple(yv) + tuple(xv), s)


def norm(xs: Sequence[Var]) -> Var:
    """Euclidean norm as a single node; zero vector yields zero partials."""
    t = xs[0].tape
    vals = t._vals
    xv = [vals[x.i] for x in xs]
    s = 0.0
    for a in xv:
        s += a * a
    v = math.sqrt(s)
    args = tuple(x.i for x in xs)
    if v == 0.0:
        return t._push(OP_NORM, args, (0.0,) * len(xs), 0.0)
    return t._push(OP_NORM, args, tuple(a / v for a in xv), v)


def vsum(xs: Sequence[Var]) -> Var:
    """n-ary sum as a single node (left-to-right fixed order)."""
    t = xs[0].tape
    vals = t._vals
    s = 0.0
    for x in xs:
        s += vals[x.i]
    return t._push(OP_SUM, tuple(x.i for x in xs), (1.0,) * len(xs), s)


# -- drivers -------------------------------------------------------------------

def forward(fn: Callable[[list[Var]], Var], inputs: Sequence[float]) -> float:
    """Evaluate ``fn`` over fresh tape inputs and return the scalar value."""
    tape = Tape()
    out = fn(tape.inputs(inputs))
    return out.value


def grad_check(fn: Callable[[list[Var]], Var], point: Sequence[float],
               step: float = 1e-6) -> float:
    """Max relative error between tape gradients and central differences.

    The error for coordinate k is |analytic_k - numeric_k| / max(1, |analytic_k|).
    """
    tape = Tape()
    xs = tape.inputs(point)
    out = fn(xs)
    tape.backward(out)
    analytic = [x.grad for x in xs]

    worst = 0.0
    pt = [float(p) for p in point]
    for k in range(len(pt)):
        orig = pt[k]
        pt[k] = orig + step
        f_plus = forward(fn, pt)
        pt[k] = orig - step
        f_minus = forward(fn, pt)
        pt[k] = orig
        numeric = (f_plus - f_minus) / (2.0 * step)
        err = abs(analytic[k] - numeric) / max(1.0, abs(analytic[k]))
        if err > worst:
            worst = err
    return worst
