"""Forward-mode automatic differentiation over numpy arrays.

A ``DualArray`` carries a value array of arbitrary shape together with a
stack of tangent arrays (one per differentiation direction), so one pass
through a scalar-valued chain yields the exact gradient with respect to
all seeded inputs simultaneously. The math helpers in this module
(``sin``, ``arctan2``, ``where``, ...) dispatch on their argument type:
given plain numpy input they fall through to numpy, given a ``DualArray``
they apply the chain rule. Code written against these helpers therefore
runs unchanged in a value-only mode and in a derivative-carrying mode.

Kinks (``absolute`` at 0, ``maximum``/``minimum`` at the threshold) use
the one-sided convention that the subgradient at the kink itself is the
interior/zero branch; callers that need exactness must stay off the kink.
"""

from __future__ import annotations

import numpy as np
from scipy import special as _special

__all__ = [
    "DualArray",
    "seed",
    "constant",
    "value",
    "sin",
    "cos",
    "sqrt",
    "exp",
    "log",
    "arcsin",
    "arctan2",
    "absolute",
    "erf",
    "where",
    "maximum",
    "minimum",
]

_INV_SQRT_PI = 1.0 / np.sqrt(np.pi)


class DualArray:
    """Value array plus tangents along ``n_dirs`` differentiation directions.

    ``val`` has shape S; ``dot`` has shape (n_dirs,) + S. Arithmetic with
    plain scalars/arrays treats them as constants (zero tangent).
    """

    __slots__ = ("val", "dot")
    __array_priority__ = 100  # keep numpy from hijacking ndarray <op> DualArray

    def __init__(self, val, dot):
        self.val = np.asarray(val, dtype=float)
        self.dot = np.asarray(dot, dtype=float)

    @property
    def n_dirs(self):
        return self.dot.shape[0]

    def __repr__(self):
        return f"DualArray(val={self.val!r}, dot={self.dot!r})"

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, DualArray):
            return DualArray(self.val + other.val, self.dot + other.dot)
        return DualArray(self.val + other, _bcast(self.dot, np.shape(self.val + other)))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, DualArray):
            return DualArray(self.val - other.val, self.dot - other.dot)
        return DualArray(self.val - other, _bcast(self.dot, np.shape(self.val - other)))

    def __rsub__(self, other):
        return DualArray(other - self.val, _bcast(-self.dot, np.shape(other - self.val)))

    def __mul__(self, other):
        if isinstance(other, DualArray):
            return DualArray(self.val * other.val, self.dot * other.val + other.dot * self.val)
        return DualArray(self.val * other, self.dot * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, DualArray):
            inv = 1.0 / other.val
            return DualArray(
                self.val * inv, (self.dot - other.dot * (self.val * inv)) * inv
            )
        return DualArray(self.val / other, self.dot / other)

    def __rtruediv__(self, other):
        inv = 1.0 / self.val
        val = other * inv
        return DualArray(val, -self.dot * (val * inv))

    def __neg__(self):
        return DualArray(-self.val, -self.dot)

    def __pow__(self, p):
        # constant exponent only; caller guarantees val > 0 for non-integer p
        return DualArray(self.val**p, (p * self.val ** (p - 1)) * self.dot)


def _bcast(dot, shape):
    """Broadcast tangents to (n_dirs,) + shape after a value broadcast."""
    target = (dot.shape[0],) + tuple(shape)
    if dot.shape == target:
        return dot
    return np.broadcast_to(dot, target).copy()


def seed(val, direction, n_dirs):
    """Lift ``val`` to a DualArray with a unit tangent along ``direction``."""
    val = np.asarray(val, dtype=float)
    dot = np.zeros((n_dirs,) + val.shape)
    dot[direction] = 1.0
    return DualArray(val, dot)


def constant(val, n_dirs):
    """Lift ``val`` to a DualArray with zero tangent."""
    val = np.asarray(val, dtype=float)
    return DualArray(val, np.zeros((n_dirs,) + val.shape))


def value(x):
    """Underlying value array of a DualArray, or ``x`` itself."""
    return x.val if isinstance(x, DualArray) else x


# -- dispatched elementwise functions -------------------------------------


def sin(x):
    if isinstance(x, DualArray):
        return DualArray(np.sin(x.val), np.cos(x.val) * x.dot)
    return np.sin(x)


def cos(x):
    if isinstance(x, DualArray):
        return DualArray(np.cos(x.val), -np.sin(x.val) * x.dot)
    return np.cos(x)


def sqrt(x):
    if isinstance(x, DualArray):
        root = np.sqrt(x.val)
        return DualArray(root, x.dot / (2.0 * root))
    return np.sqrt(x)


def exp(x):
    if isinstance(x, DualArray):
        e = np.exp(x.val)
        return DualArray(e, e * x.dot)
    return np.exp(x)


def log(x):
    if isinstance(x, DualArray):
        return DualArray(np.log(x.val), x.dot / x.val)
    return np.log(x)


def arcsin(x):
    if isinstance(x, DualArray):
        return DualArray(np.arcsin(x.val), x.dot / np.sqrt(1.0 - x.val * x.val))
    return np.arcsin(x)


def arctan2(y, x):
    if not isinstance(y, DualArray) and not isinstance(x, DualArray):
        return np.arctan2(y, x)
    n = y.n_dirs if isinstance(y, DualArray) else x.n_dirs
    if not isinstance(y, DualArray):
        y = constant(y, n)
    if not isinstance(x, DualArray):
        x = constant(x, n)
    denom = x.val * x.val + y.val * y.val
    return DualArray(
        np.arctan2(y.val, x.val), (x.val * y.dot - y.val * x.dot) / denom
    )


def absolute(x):
    # derivative convention: sign(0) = 0
    if isinstance(x, DualArray):
        return DualArray(np.abs(x.val), np.sign(x.val) * x.dot)
    return np.abs(x)


def erf(x):
    if isinstance(x, DualArray):
        d = 2.0 * _INV_SQRT_PI * np.exp(-x.val * x.val)
        return DualArray(_special.erf(x.val), d * x.dot)
    return _special.erf(x)


def where(cond, a, b):
    """Elementwise select; tangents follow the selected branch."""
    if not isinstance(a, DualArray) and not isinstance(b, DualArray):
        return np.where(cond, a, b)
    n = a.n_dirs if isinstance(a, DualArray) else b.n_dirs
    if not isinstance(a, DualArray):
        a = constant(np.broadcast_to(a, np.shape(cond)), n)
    if not isinstance(b, DualArray):
        b = constant(np.broadcast_to(b, np.shape(cond)), n)
    return DualArray(np.where(cond, a.val, b.val), np.where(cond, a.dot, b.dot))


def maximum(x, other):
    """max(x, other); at a tie the tangent of ``x`` is kept."""
    if isinstance(x, DualArray) or isinstance(other, DualArray):
        cond = value(x) >= value(other)
        return where(cond, x, other)
    return np.maximum(x, other)


def minimum(x, other):
    if isinstance(x, DualArray) or isinstance(other, DualArray):
        cond = value(x) <= value(other)
        return where(cond, x, other)
    return np.minimum(x, other)
