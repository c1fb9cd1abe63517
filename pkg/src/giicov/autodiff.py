"""Forward-mode dual numbers vectorized over numpy arrays.

A :class:`Dual` holds a value array of shape ``S``, a gradient of shape
``S + (d,)`` and optionally a Hessian of shape ``S + (d, d)``.  The value
axes broadcast like ordinary numpy arrays, so a whole ``(n, R)`` slice of a
simulation advances with one call per elementary operation.

Every function in this module accepts either a ``Dual`` or a plain
float/ndarray and returns the same kind.  Simulation code written against
these functions therefore runs unchanged on plain reals and on duals, and
the value parts are computed by the same floating-point expressions in both
cases.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from .errors import DomainError

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


class Dual:
    """Value with first (and optionally second) derivatives in theta.

    Parameters
    ----------
    val : array_like
        Value, any shape ``S``.
    grad : array_like
        Gradient with shape ``S + (d,)``.
    hess : array_like, optional
        Hessian with shape ``S + (d, d)``.  ``None`` for first-order duals.
    """

    __slots__ = ("val", "grad", "hess")
    # make ndarray op Dual defer to the reflected Dual method
    __array_ufunc__ = None

    def __init__(self, val, grad, hess=None):
        self.val = np.asarray(val, dtype=float)
        self.grad = np.asarray(grad, dtype=float)
        self.hess = None if hess is None else np.asarray(hess, dtype=float)

    # -- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.val.shape

    @property
    def ndim(self):
        return self.val.ndim

    @property
    def nparam(self):
        return self.grad.shape[-1]

    @property
    def order(self):
        return 1 if self.hess is None else 2

    def __repr__(self):
        h = "" if self.hess is None else ", hess=..."
        return f"Dual(val={self.val!r}, grad={self.grad!r}{h})"

    def __len__(self):
        return len(self.val)

    # -- arithmetic ----------------------------------------------------
    def __neg__(self):
        return Dual(-self.val, -self.grad, None if self.hess is None else -self.hess)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Dual):
            _check_orders(self, other)
            h = None if self.hess is None else self.hess + other.hess
            return Dual(self.val + other.val, self.grad + other.grad, h)
        other = np.asarray(other, dtype=float)
        val = self.val + other
        return Dual(val, _expand(self.grad, val.shape, 1), _expand(self.hess, val.shape, 2))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            _check_orders(self, other)
            h = None if self.hess is None else self.hess - other.hess
            return Dual(self.val - other.val, self.grad - other.grad, h)
        other = np.asarray(other, dtype=float)
        val = self.val - other
        return Dual(val, _expand(self.grad, val.shape, 1), _expand(self.hess, val.shape, 2))

    def __rsub__(self, other):
        other = np.asarray(other, dtype=float)
        val = other - self.val
        return Dual(val, -_expand(self.grad, val.shape, 1),
                    None if self.hess is None else -_expand(self.hess, val.shape, 2))

    def __mul__(self, other):
        if isinstance(other, Dual):
            _check_orders(self, other)
            a, b = self, other
            val = a.val * b.val
            grad = a.grad * b.val[..., None] + b.grad * a.val[..., None]
            hess = None
            if a.hess is not None:
                hess = (a.hess * b.val[..., None, None] + b.hess * a.val[..., None, None]
                        + _outer(a.grad, b.grad) + _outer(b.grad, a.grad))
            return Dual(val, grad, hess)
        c = np.asarray(other, dtype=float)
        hess = None if self.hess is None else self.hess * c[..., None, None]
        return Dual(self.val * c, self.grad * c[..., None], hess)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            _check_orders(self, other)
            _nonzero(other.val)
            q = self.val / other.val
            inv = 1.0 / other.val
            grad = (self.grad - q[..., None] * other.grad) * inv[..., None]
            hess = None
            if self.hess is not None:
                hess = (self.hess - q[..., None, None] * other.hess
                        - _outer(grad, other.grad) - _outer(other.grad, grad)) * inv[..., None, None]
            return Dual(q, grad, hess)
        c = np.asarray(other, dtype=float)
        _nonzero(c)
        hess = None if self.hess is None else self.hess / c[..., None, None]
        return Dual(self.val / c, self.grad / c[..., None], hess)

    def __rtruediv__(self, other):
        c = np.asarray(other, dtype=float)
        _nonzero(self.val)
        x = self.val
        q = c / x
        return _chain(self, q, -q / x, 2.0 * q / (x * x))

    def __pow__(self, k):
        if isinstance(k, Dual):
            return exp(k * log(self))
        k = float(k)
        x = self.val
        if k == 2.0:
            return _chain(self, x * x, 2.0 * x, np.full_like(x, 2.0))
        return _chain(self, x ** k, k * x ** (k - 1.0), k * (k - 1.0) * x ** (k - 2.0))

    # -- comparisons act on values (used for branching, never differentiated)
    def __lt__(self, other):
        return self.val < _value(other)

    def __le__(self, other):
        return self.val <= _value(other)

    def __gt__(self, other):
        return self.val > _value(other)

    def __ge__(self, other):
        return self.val >= _value(other)

    # -- array plumbing --------------------------------------------------
    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        h = None if self.hess is None else self.hess[key + (slice(None), slice(None))]
        return Dual(self.val[key], self.grad[key + (slice(None),)], h)

    def sum(self, axis=None):
        axes = _value_axes(axis, self.val.ndim)
        h = None if self.hess is None else self.hess.sum(axis=axes)
        return Dual(self.val.sum(axis=axes), self.grad.sum(axis=axes), h)

    def mean(self, axis=None):
        axes = _value_axes(axis, self.val.ndim)
        count = 1
        for a in axes:
            count *= self.val.shape[a]
        return self.sum(axis) / float(count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        d = self.nparam
        h = None if self.hess is None else self.hess.reshape(shape + (d, d))
        return Dual(self.val.reshape(shape), self.grad.reshape(shape + (d,)), h)


# ----------------------------------------------------------------------
# helpers


def _value(x):
    return x.val if isinstance(x, Dual) else x


def _check_orders(a, b):
    if (a.hess is None) != (b.hess is None):
        raise ValueError("cannot mix first- and second-order duals")


def _expand(arr, shape, extra):
    if arr is None:
        return None
    target = tuple(shape) + arr.shape[arr.ndim - extra:]
    if arr.shape == target:
        return arr
    return np.broadcast_to(arr, target)


def _value_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def _nonzero(x):
    if np.any(x == 0.0):
        raise DomainError("division by zero", float(np.asarray(x).flat[np.argmin(np.abs(x))]))


def _chain(x, f, f1, f2):
    """Lift a scalar function with value ``f`` and derivatives ``f1``, ``f2``."""
    grad = f1[..., None] * x.grad
    hess = None
    if x.hess is not None:
        hess = f1[..., None, None] * x.hess + f2[..., None, None] * _outer(x.grad, x.grad)
    return Dual(f, grad, hess)


def _offending(x, bad):
    return float(np.asarray(x)[bad].flat[0])


# ----------------------------------------------------------------------
# constructors and projections


def seed_parameter(theta, order=1):
    """Seed a parameter vector as independent dual variables.

    Parameters
    ----------
    theta : array_like
        Point of expansion, length ``d``.
    order : {1, 2}
        Whether to carry Hessians.

    Returns
    -------
    list of Dual
        Component ``k`` has value ``theta[k]``, gradient ``e_k`` and a zero
        Hessian when ``order == 2``.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    d = theta.size
    if d < 1:
        raise ValueError("theta must have at least one component")
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    eye = np.eye(d)
    out = []
    for k in range(d):
        h = np.zeros((d, d)) if order == 2 else None
        out.append(Dual(theta[k], eye[k].copy(), h))
    return out


def constant(val, like):
    """A dual with zero derivatives, shaped for combination with ``like``."""
    val = np.asarray(val, dtype=float)
    d = like.nparam
    h = None if like.hess is None else np.zeros(val.shape + (d, d))
    return Dual(val, np.zeros(val.shape + (d,)), h)


def extract(x):
    """Return ``(value, grad, hess)``; plain inputs get ``None`` derivatives."""
    if isinstance(x, Dual):
        return x.val, x.grad, x.hess
    return np.asarray(x, dtype=float), None, None


def value(x):
    """Value part of a dual, or the input itself."""
    return x.val if isinstance(x, Dual) else np.asarray(x, dtype=float)


def is_dual(x):
    return isinstance(x, Dual)


def find_dual(*xs):
    for x in xs:
        if isinstance(x, Dual):
            return x
    return None


def stack(items, like=None):
    """Stack scalars/arrays/duals along a new trailing value axis."""
    ref = like if like is not None else find_dual(*items)
    if ref is None:
        return np.stack(np.broadcast_arrays(*[np.asarray(v, dtype=float) for v in items]), axis=-1)
    duals = [v if isinstance(v, Dual) else constant(v, ref) for v in items]
    shape = np.broadcast_shapes(*[v.shape for v in duals])
    d = ref.nparam
    val = np.stack([np.broadcast_to(v.val, shape) for v in duals], axis=-1)
    grad = np.stack([np.broadcast_to(v.grad, shape + (d,)) for v in duals], axis=-2)
    hess = None
    if ref.hess is not None:
        hess = np.stack([np.broadcast_to(v.hess, shape + (d, d)) for v in duals], axis=-3)
    return Dual(val, grad, hess)


def concatenate(items):
    """Concatenate 1-d duals (or arrays) along their value axis."""
    ref = find_dual(*items)
    if ref is None:
        return np.concatenate([np.atleast_1d(np.asarray(v, dtype=float)) for v in items])
    duals = [v if isinstance(v, Dual) else constant(np.atleast_1d(v), ref) for v in items]
    hess = None
    if ref.hess is not None:
        hess = np.concatenate([v.hess for v in duals], axis=0)
    return Dual(np.concatenate([v.val for v in duals]),
                np.concatenate([v.grad for v in duals], axis=0), hess)


def pick(grid, idx):
    """Select ``grid[..., idx]`` along the last value axis, elementwise."""
    idx = np.asarray(idx)
    if not isinstance(grid, Dual):
        return np.take_along_axis(grid, idx[..., None], axis=-1)[..., 0]
    val = np.take_along_axis(grid.val, idx[..., None], axis=-1)[..., 0]
    grad = np.take_along_axis(grid.grad, idx[..., None, None], axis=-2)[..., 0, :]
    hess = None
    if grid.hess is not None:
        hess = np.take_along_axis(grid.hess, idx[..., None, None, None], axis=-3)[..., 0, :, :]
    return Dual(val, grad, hess)


def where(cond, a, b):
    """Elementwise branch selection on values; derivatives follow the branch."""
    ref = find_dual(a, b)
    cond = np.asarray(cond, dtype=bool)
    if ref is None:
        return np.where(cond, a, b)
    a = a if isinstance(a, Dual) else constant(np.asarray(a, dtype=float), ref)
    b = b if isinstance(b, Dual) else constant(np.asarray(b, dtype=float), ref)
    val = np.where(cond, a.val, b.val)
    grad = np.where(cond[..., None], a.grad, b.grad)
    hess = None
    if ref.hess is not None:
        hess = np.where(cond[..., None, None], a.hess, b.hess)
    return Dual(val, grad, hess)


# ----------------------------------------------------------------------
# elementary functions


def exp(x):
    if isinstance(x, Dual):
        f = np.exp(x.val)
        return _chain(x, f, f, f)
    return np.exp(x)


def log(x):
    v = value(x)
    bad = ~(v > 0)
    if np.any(bad):
        raise DomainError("log of a nonpositive argument", _offending(v, bad))
    if isinstance(x, Dual):
        inv = 1.0 / v
        return _chain(x, np.log(v), inv, -inv * inv)
    return np.log(x)


def expm1(x):
    if isinstance(x, Dual):
        e = np.exp(x.val)
        return _chain(x, np.expm1(x.val), e, e)
    return np.expm1(x)


def log1p(x):
    v = value(x)
    bad = ~(v > -1.0)
    if np.any(bad):
        raise DomainError("log1p of an argument <= -1", _offending(v, bad))
    if isinstance(x, Dual):
        inv = 1.0 / (1.0 + v)
        return _chain(x, np.log1p(v), inv, -inv * inv)
    return np.log1p(x)


def sqrt(x):
    v = value(x)
    bad = ~(v >= 0)
    if np.any(bad):
        raise DomainError("sqrt of a negative argument", _offending(v, bad))
    if isinstance(x, Dual):
        s = np.sqrt(v)
        if np.any(s == 0):
            raise DomainError("sqrt is not differentiable at 0", 0.0)
        return _chain(x, s, 0.5 / s, -0.25 / (s * v))
    return np.sqrt(x)


def norm_pdf(x):
    """Standard normal density."""
    if isinstance(x, Dual):
        v = x.val
        f = _INV_SQRT_2PI * np.exp(-0.5 * v * v)
        return _chain(x, f, -v * f, (v * v - 1.0) * f)
    x = np.asarray(x, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def norm_cdf(x):
    """Standard normal CDF."""
    if isinstance(x, Dual):
        v = x.val
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * v * v)
        return _chain(x, special.ndtr(v), pdf, -v * pdf)
    return special.ndtr(x)


def norm_ppf(p):
    """Standard normal quantile; raises :class:`DomainError` outside (0, 1)."""
    v = value(p)
    bad = ~((v > 0.0) & (v < 1.0))
    if np.any(bad):
        raise DomainError("normal quantile needs 0 < p < 1", _offending(v, bad))
    q = special.ndtri(v)
    if isinstance(p, Dual):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * q * q)
        d1 = 1.0 / pdf
        return _chain(p, q, d1, q * d1 * d1)
    return q


# ----------------------------------------------------------------------
# linear algebra


def solve(a, b):
    """Solve ``a @ x = b`` for duals batched over leading axes.

    ``a`` has value shape ``(..., k, k)`` and ``b`` has ``(..., k)``.  Either
    may be a plain array.  Derivatives follow from differentiating
    ``a x = b``.
    """
    av, bv = value(a), value(b)
    x = np.linalg.solve(av, bv[..., None])[..., 0]
    ref = find_dual(a, b)
    if ref is None:
        return x
    d = ref.nparam
    ag = a.grad if isinstance(a, Dual) else np.zeros(av.shape + (d,))
    bg = b.grad if isinstance(b, Dual) else np.zeros(bv.shape + (d,))
    # rhs_k = b_k - a_k x
    rhs = bg - np.einsum("...ijk,...j->...ik", ag, x)
    xg = np.linalg.solve(av, rhs)
    hess = None
    if ref.hess is not None:
        ah = a.hess if isinstance(a, Dual) else np.zeros(av.shape + (d, d))
        bh = b.hess if isinstance(b, Dual) else np.zeros(bv.shape + (d, d))
        cross = np.einsum("...ijk,...jl->...ikl", ag, xg)
        rhs2 = bh - np.einsum("...ijkl,...j->...ikl", ah, x) - cross - np.swapaxes(cross, -1, -2)
        k = av.shape[-1]
        flat = rhs2.reshape(rhs2.shape[:-2] + (d * d,))
        hess = np.linalg.solve(av, flat).reshape(av.shape[:-2] + (k, d, d))
    return Dual(x, xg, hess)


def value_vector(theta):
    """Float vector of the values of a parameter sequence."""
    if isinstance(theta, np.ndarray) and theta.dtype != object:
        return theta.astype(float)
    return np.array([float(value(t)) for t in theta])


def broadcast_to(x, shape):
    shape = tuple(shape)
    if not isinstance(x, Dual):
        return np.broadcast_to(np.asarray(x, dtype=float), shape)
    d = x.nparam
    h = None if x.hess is None else np.broadcast_to(x.hess, shape + (d, d))
    return Dual(np.broadcast_to(x.val, shape), np.broadcast_to(x.grad, shape + (d,)), h)
