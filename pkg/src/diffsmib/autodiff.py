"""Scalar automatic differentiation.

Two composable pieces:

* a reverse-mode :class:`Tape` of :class:`TracedScalar` values, for gradients
  of a scalar loss with respect to many parameters, and
* forward-mode :class:`Dual` numbers, for directional derivatives with
  respect to a single input (e.g. time).

Duals may wrap traced scalars, so reverse-over-forward mixed derivatives
work (gradient of a time derivative with respect to parameters).

The module-level math functions (:func:`sin`, :func:`exp`, ...) dispatch on
the argument type and also accept plain floats and numpy arrays, so code
written against them runs unchanged on every scalar kind.
"""
from __future__ import annotations

import math

import numpy as np

__all__ = [
    "Tape",
    "TracedScalar",
    "Dual",
    "Gradients",
    "TapeMismatchError",
    "variable",
    "backward",
    "dual_lift",
    "primal_value",
    "sin",
    "cos",
    "tanh",
    "exp",
    "log",
    "sqrt",
    "softplus",
    "softplus_inverse",
    "sigmoid",
]


class TapeMismatchError(ValueError):
    """Arithmetic attempted between scalars bound to different tapes."""


class Tape:
    """Append-only record of elementary operations.

    Node ``i`` stores its primal value, the indices of its parents, and the
    local partial derivative with respect to each parent.  Parents always
    precede children, so a single reverse sweep computes all adjoints.
    """

    __slots__ = ("values", "parents", "partials", "kinds", "n_leaves")

    def __init__(self) -> None:
        self.values: list[float] = []
        self.parents: list[tuple[int, ...]] = []
        self.partials: list[tuple[float, ...]] = []
        self.kinds: list[str] = []
        self.n_leaves = 0

    def __len__(self) -> int:
        return len(self.values)

    def append(self, kind: str, parents: tuple[int, ...], partials: tuple[float, ...], value: float) -> int:
        self.values.append(value)
        self.parents.append(parents)
        self.partials.append(partials)
        self.kinds.append(kind)
        return len(self.values) - 1

    def variable(self, value: float) -> "TracedScalar":
        """Create a leaf node whose gradient slot is addressable after backward."""
        idx = self.append("leaf", (), (), float(value))
        self.n_leaves += 1
        return TracedScalar(float(value), self, idx)


def variable(tape: Tape, value: float) -> "TracedScalar":
    return tape.variable(value)


class TracedScalar:
    """A real number recorded on a :class:`Tape`.

    Constants (plain floats mixed into expressions) are not recorded and
    contribute zero to every gradient.
    """

    __slots__ = ("value", "tape", "index")

    def __init__(self, value: float, tape: Tape, index: int) -> None:
        self.value = value
        self.tape = tape
        self.index = index

    def __repr__(self) -> str:
        return f"TracedScalar({self.value!r}, node={self.index})"

    def _check(self, other: "TracedScalar") -> None:
        if other.tape is not self.tape:
            raise TapeMismatchError("operands recorded on different tapes")

    def _unary(self, kind: str, value: float, partial: float) -> "TracedScalar":
        idx = self.tape.append(kind, (self.index,), (partial,), value)
        return TracedScalar(value, self.tape, idx)

    def _binary(self, other: "TracedScalar", kind: str, value: float, da: float, db: float) -> "TracedScalar":
        self._check(other)
        idx = self.tape.append(kind, (self.index, other.index), (da, db), value)
        return TracedScalar(value, self.tape, idx)

    # arithmetic ---------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, TracedScalar):
            return self._binary(other, "add", self.value + other.value, 1.0, 1.0)
        if isinstance(other, Dual):
            return NotImplemented
        return self._unary("add", self.value + float(other), 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, TracedScalar):
            return self._binary(other, "sub", self.value - other.value, 1.0, -1.0)
        if isinstance(other, Dual):
            return NotImplemented
        return self._unary("sub", self.value - float(other), 1.0)

    def __rsub__(self, other):
        return self._unary("rsub", float(other) - self.value, -1.0)

    def __mul__(self, other):
        if isinstance(other, TracedScalar):
            return self._binary(other, "mul", self.value * other.value, other.value, self.value)
        if isinstance(other, Dual):
            return NotImplemented
        c = float(other)
        return self._unary("mul", self.value * c, c)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, TracedScalar):
            inv = 1.0 / other.value
            return self._binary(other, "div", self.value * inv, inv, -self.value * inv * inv)
        if isinstance(other, Dual):
            return NotImplemented
        c = 1.0 / float(other)
        return self._unary("div", self.value * c, c)

    def __rtruediv__(self, other):
        c = float(other)
        inv = 1.0 / self.value
        return self._unary("rdiv", c * inv, -c * inv * inv)

    def __neg__(self):
        return self._unary("neg", -self.value, -1.0)

    def __pow__(self, n):
        n = float(n)
        v = self.value ** n
        return self._unary("pow", v, n * self.value ** (n - 1.0))

    def __float__(self) -> float:
        return float(self.value)


class Gradients:
    """Adjoints of one backward pass, addressable by traced scalar."""

    __slots__ = ("tape", "adjoints")

    def __init__(self, tape: Tape, adjoints: list[float]) -> None:
        self.tape = tape
        self.adjoints = adjoints

    def __getitem__(self, ts) -> float:
        if not isinstance(ts, TracedScalar):
            return 0.0  # constants have no dependence
        if ts.tape is not self.tape:
            raise TapeMismatchError("scalar not recorded on this tape")
        return self.adjoints[ts.index]


def backward(tape: Tape, output) -> Gradients:
    """Reverse sweep: adjoint of every node with respect to ``output``.

    A constant output yields all-zero gradients.  A scalar traced on a
    different tape is an error.
    """
    n = len(tape)
    adjoints = [0.0] * n
    if not isinstance(output, TracedScalar):
        return Gradients(tape, adjoints)
    if output.tape is not tape:
        raise TapeMismatchError("output does not belong to this tape")
    adjoints[output.index] = 1.0
    parents = tape.parents
    partials = tape.partials
    for i in range(output.index, -1, -1):
        a = adjoints[i]
        if a == 0.0:
            continue
        for p, d in zip(parents[i], partials[i]):
            adjoints[p] += a * d
    return Gradients(tape, adjoints)


class Dual:
    """Forward-mode dual number: primal plus a single tangent.

    Both slots hold the same scalar kind (float, array, or TracedScalar);
    every elementary function propagates tangents by the exact chain rule.
    """

    __slots__ = ("primal", "tangent")

    # keep numpy from broadcasting Duals elementwise; reflected ops apply
    __array_ufunc__ = None

    def __init__(self, primal, tangent) -> None:
        self.primal = primal
        self.tangent = tangent

    def __repr__(self) -> str:
        return f"Dual({self.primal!r}, {self.tangent!r})"

    @staticmethod
    def _coerce(x) -> "Dual":
        if isinstance(x, Dual):
            return x
        return Dual(x, 0.0)

    def __add__(self, other):
        o = Dual._coerce(other)
        return Dual(self.primal + o.primal, self.tangent + o.tangent)

    __radd__ = __add__

    def __sub__(self, other):
        o = Dual._coerce(other)
        return Dual(self.primal - o.primal, self.tangent - o.tangent)

    def __rsub__(self, other):
        o = Dual._coerce(other)
        return Dual(o.primal - self.primal, o.tangent - self.tangent)

    def __mul__(self, other):
        o = Dual._coerce(other)
        return Dual(
            self.primal * o.primal,
            self.tangent * o.primal + self.primal * o.tangent,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = Dual._coerce(other)
        q = self.primal / o.primal
        return Dual(q, (self.tangent - q * o.tangent) / o.primal)

    def __rtruediv__(self, other):
        return Dual._coerce(other) / self

    def __neg__(self):
        return Dual(-self.primal, -self.tangent)

    def __pow__(self, n):
        n = float(n)
        return Dual(self.primal ** n, n * self.primal ** (n - 1.0) * self.tangent)


def dual_lift(x, tangent=1.0) -> Dual:
    """Seed ``x`` with a directional derivative (default 1)."""
    return Dual(x, tangent)


def primal_value(x) -> float:
    """Strip Dual/TracedScalar wrappers down to the underlying float."""
    while True:
        if isinstance(x, Dual):
            x = x.primal
        elif isinstance(x, TracedScalar):
            x = x.value
        else:
            return float(x)


# generic elementary functions ------------------------------------------


def sin(x):
    if isinstance(x, Dual):
        return Dual(sin(x.primal), cos(x.primal) * x.tangent)
    if isinstance(x, TracedScalar):
        return x._unary("sin", math.sin(x.value), math.cos(x.value))
    if isinstance(x, float):
        return math.sin(x)
    return np.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(cos(x.primal), -sin(x.primal) * x.tangent)
    if isinstance(x, TracedScalar):
        return x._unary("cos", math.cos(x.value), -math.sin(x.value))
    if isinstance(x, float):
        return math.cos(x)
    return np.cos(x)


def tanh(x):
    if isinstance(x, Dual):
        t = tanh(x.primal)
        return Dual(t, (1.0 - t * t) * x.tangent)
    if isinstance(x, TracedScalar):
        t = math.tanh(x.value)
        return x._unary("tanh", t, 1.0 - t * t)
    if isinstance(x, float):
        return math.tanh(x)
    return np.tanh(x)


def exp(x):
    if isinstance(x, Dual):
        e = exp(x.primal)
        return Dual(e, e * x.tangent)
    if isinstance(x, TracedScalar):
        e = math.exp(x.value)
        return x._unary("exp", e, e)
    if isinstance(x, float):
        return math.exp(x)
    return np.exp(x)


def log(x):
    if isinstance(x, Dual):
        return Dual(log(x.primal), x.tangent / x.primal)
    if isinstance(x, TracedScalar):
        return x._unary("log", math.log(x.value), 1.0 / x.value)
    if isinstance(x, float):
        return math.log(x)
    return np.log(x)


def sqrt(x):
    if isinstance(x, Dual):
        s = sqrt(x.primal)
        return Dual(s, 0.5 / s * x.tangent)
    if isinstance(x, TracedScalar):
        s = math.sqrt(x.value)
        return x._unary("sqrt", s, 0.5 / s)
    if isinstance(x, float):
        return math.sqrt(x)
    return np.sqrt(x)


def _softplus_float(v: float) -> float:
    # max(v, 0) + log1p(exp(-|v|)) avoids overflow for large |v|
    return max(v, 0.0) + math.log1p(math.exp(-abs(v)))


def _sigmoid_float(v: float) -> float:
    if v >= 0.0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


def softplus(x):
    """ln(1 + e^x) with the overflow-safe branch; derivative is sigmoid."""
    if isinstance(x, Dual):
        return Dual(softplus(x.primal), sigmoid(x.primal) * x.tangent)
    if isinstance(x, TracedScalar):
        return x._unary("softplus", _softplus_float(x.value), _sigmoid_float(x.value))
    if isinstance(x, float):
        return _softplus_float(x)
    xa = np.asarray(x)
    return np.maximum(xa, 0.0) + np.log1p(np.exp(-np.abs(xa)))


def sigmoid(x):
    if isinstance(x, Dual):
        s = sigmoid(x.primal)
        return Dual(s, s * (1.0 - s) * x.tangent)
    if isinstance(x, TracedScalar):
        s = _sigmoid_float(x.value)
        return x._unary("sigmoid", s, s * (1.0 - s))
    if isinstance(x, float):
        return _sigmoid_float(x)
    xa = np.asarray(x)
    out = np.empty_like(xa, dtype=float)
    pos = xa >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xa[pos]))
    e = np.exp(xa[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softplus_inverse(v: float) -> float:
    """Raw value whose softplus equals ``v`` (v > 0)."""
    if v <= 0.0:
        raise ValueError("softplus_inverse requires a positive value")
    # log(e^v - 1), stabilized for large v
    if v > 30.0:
        return v
    return math.log(math.expm1(v))
