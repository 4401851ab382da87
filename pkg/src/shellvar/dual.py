"""Vectorized forward-mode dual numbers.

A :class:`Dual` carries a value array ``val`` and a stack of tangents ``tan``
with one leading axis per seeded direction, so ``tan.shape == (k,) + val.shape``
up to broadcasting. Arithmetic, ``np.sqrt``/``np.log``/... and ``np.stack`` /
``np.sum`` all propagate tangents, which lets the geometry and energy code run
unchanged on plain arrays or on duals.
"""

from __future__ import annotations

import numpy as np


def _as_tan(x, ndim):
    """Tangent of ``x`` reshaped to broadcast against a value of rank ``ndim``."""
    t = x.tan
    extra = ndim - (t.ndim - 1)
    if extra > 0:
        t = t.reshape((t.shape[0],) + (1,) * extra + t.shape[1:])
    return t


def _ndim(*xs):
    return max(np.ndim(x.val) if isinstance(x, Dual) else np.ndim(x) for x in xs)


class Dual:
    __slots__ = ("val", "tan")
    __array_priority__ = 1000

    def __init__(self, val, tan):
        self.val = np.asarray(val, dtype=float)
        self.tan = np.asarray(tan, dtype=float)

    @classmethod
    def seed(cls, val, axes=None):
        """Dual whose tangents are the unit directions of ``val``'s trailing block.

        ``axes`` counts how many trailing axes are seeded (default: all). The
        result has ``prod(val.shape[-axes:])`` directions.
        """
        val = np.asarray(val, dtype=float)
        axes = val.ndim if axes is None else axes
        block = val.shape[val.ndim - axes:]
        k = int(np.prod(block))
        eye = np.eye(k).reshape((k,) + (1,) * (val.ndim - axes) + block)
        return cls(val, np.broadcast_to(eye, (k,) + val.shape).copy())

    @property
    def shape(self):
        return self.val.shape

    @property
    def ndim(self):
        return self.val.ndim

    @property
    def ndir(self):
        return self.tan.shape[0]

    def __repr__(self):
        return f"Dual(val={self.val!r}, ndir={self.ndir})"

    # arithmetic ---------------------------------------------------------

    def __neg__(self):
        return Dual(-self.val, -self.tan)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Dual):
            n = _ndim(self, other)
            return Dual(self.val + other.val, _as_tan(self, n) + _as_tan(other, n))
        n = _ndim(self, other)
        val = self.val + other
        return Dual(val, np.broadcast_to(_as_tan(self, n), (self.ndir,) + val.shape))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        n = _ndim(self, other)
        if isinstance(other, Dual):
            tan = _as_tan(self, n) * other.val + self.val * _as_tan(other, n)
            return Dual(self.val * other.val, tan)
        other = np.asarray(other, dtype=float)
        return Dual(self.val * other, _as_tan(self, n) * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        n = _ndim(self, other)
        if isinstance(other, Dual):
            val = self.val / other.val
            tan = (_as_tan(self, n) - val * _as_tan(other, n)) / other.val
            return Dual(val, tan)
        other = np.asarray(other, dtype=float)
        return Dual(self.val / other, _as_tan(self, n) / other)

    def __rtruediv__(self, other):
        n = _ndim(self, other)
        val = np.asarray(other, dtype=float) / self.val
        return Dual(val, -val / self.val * _as_tan(self, n))

    def __pow__(self, p):
        if isinstance(p, Dual):
            raise TypeError("dual exponents are not supported")
        val = self.val ** p
        return Dual(val, p * self.val ** (p - 1) * self.tan)

    # indexing and reductions -------------------------------------------

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        if Ellipsis not in key:
            key = key + (Ellipsis,)
        tan = np.broadcast_to(self.tan, (self.ndir,) + self.val.shape)
        return Dual(self.val[key], tan[(slice(None),) + key])

    def sum(self, axis=None):
        if axis is None:
            axes = tuple(range(self.val.ndim))
        else:
            axes = (axis,) if np.isscalar(axis) else tuple(axis)
            axes = tuple(a % self.val.ndim for a in axes)
        tan = np.broadcast_to(self.tan, (self.ndir,) + self.val.shape)
        return Dual(self.val.sum(axis=axes), tan.sum(axis=tuple(a + 1 for a in axes)))

    # numpy protocol -----------------------------------------------------

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs.get("out") is not None:
            return NotImplemented
        if ufunc in _BINARY:
            a, b = inputs
            return _BINARY[ufunc](a, b)
        if ufunc in _UNARY:
            (x,) = inputs
            f, df = _UNARY[ufunc]
            return Dual(f(x.val), df(x.val) * x.tan)
        return NotImplemented

    def __array_function__(self, func, types, args, kwargs):
        if func is np.stack:
            return stack(*args, **kwargs)
        if func is np.sum:
            return args[0].sum(**kwargs)
        return NotImplemented


_BINARY = {
    np.add: lambda a, b: a + b if isinstance(a, Dual) else b + a,
    np.subtract: lambda a, b: a - b if isinstance(a, Dual) else (-b) + a,
    np.multiply: lambda a, b: a * b if isinstance(a, Dual) else b * a,
    np.true_divide: lambda a, b: a / b if isinstance(a, Dual) else b.__rtruediv__(a),
}

_UNARY = {
    np.sqrt: (np.sqrt, lambda v: 0.5 / np.sqrt(v)),
    np.log: (np.log, lambda v: 1.0 / v),
    np.exp: (np.exp, np.exp),
    np.square: (np.square, lambda v: 2.0 * v),
    np.absolute: (np.absolute, np.sign),
    np.negative: (np.negative, lambda v: -np.ones_like(v)),
}


def stack(arrays, axis=0):
    """``np.stack`` that accepts a mix of duals and plain arrays."""
    arrays = list(arrays)
    duals = [x for x in arrays if isinstance(x, Dual)]
    if not duals:
        return np.stack(arrays, axis=axis)
    k = duals[0].ndir
    vals = [x.val if isinstance(x, Dual) else np.asarray(x, dtype=float) for x in arrays]
    shape = np.broadcast_shapes(*(v.shape for v in vals))
    vals = [np.broadcast_to(v, shape) for v in vals]
    tans = []
    for x in arrays:
        if isinstance(x, Dual):
            tans.append(np.broadcast_to(_as_tan(x, len(shape)), (k,) + shape))
        else:
            tans.append(np.zeros((k,) + shape))
    ax = axis if axis < 0 else axis + 1
    return Dual(np.stack(vals, axis=axis), np.stack(tans, axis=ax))


def value(x):
    """Plain value of a dual or array."""
    return x.val if isinstance(x, Dual) else x
