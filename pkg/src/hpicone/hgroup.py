"""Exact Heisenberg group structure and closed-form test fields.

Coordinates of H^n are ordered ``(x_1..x_n, y_1..y_n, t)``, so a point is a
vector of length ``2n+1`` and the central direction ``t`` is the last axis.
Vector-field indices ``i`` are 1-based, matching the usual ``X_1..X_n``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class GroupPoint:
    x: tuple
    y: tuple
    t: float

    def __post_init__(self):
        x = tuple(float(c) for c in np.atleast_1d(self.x))
        y = tuple(float(c) for c in np.atleast_1d(self.y))
        if len(x) != len(y) or len(x) < 1:
            raise ValueError(f"x and y must share a length n >= 1, got {len(x)} and {len(y)}")
        t = float(self.t)
        if not all(np.isfinite(c) for c in x + y + (t,)):
            raise ValueError("group coordinates must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", t)

    @property
    def n(self) -> int:
        return len(self.x)

    @classmethod
    def identity(cls, n: int = 1) -> "GroupPoint":
        return cls((0.0,) * n, (0.0,) * n, 0.0)

    @classmethod
    def from_array(cls, a) -> "GroupPoint":
        a = np.asarray(a, dtype=float)
        if a.ndim != 1 or a.size % 2 != 1:
            raise ValueError("expected a flat array of odd length 2n+1")
        n = (a.size - 1) // 2
        return cls(a[:n], a[n:2 * n], a[2 * n])

    def as_array(self) -> np.ndarray:
        return np.array(self.x + self.y + (self.t,))

    def inverse(self) -> "GroupPoint":
        return GroupPoint(tuple(-c for c in self.x), tuple(-c for c in self.y), -self.t)

    def __mul__(self, other: "GroupPoint") -> "GroupPoint":
        return group_product(self, other)


def group_product(a: GroupPoint, b: GroupPoint) -> GroupPoint:
    """(x,y,t).(x',y',t') = (x+x', y+y', t+t'+2(<y,x'> - <x,y'>))."""
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: n={a.n} vs n={b.n}")
    twist = 2.0 * (sum(yi * xj for yi, xj in zip(a.y, b.x)) - sum(xi * yj for xi, yj in zip(a.x, b.y)))
    return GroupPoint(
        tuple(p + q for p, q in zip(a.x, b.x)),
        tuple(p + q for p, q in zip(a.y, b.y)),
        a.t + b.t + twist,
    )


# ---------------------------------------------------------------------------
# closed-form fields with exact first and second derivatives
# ---------------------------------------------------------------------------

def _as_coords(q) -> np.ndarray:
    if isinstance(q, GroupPoint):
        return q.as_array()
    return np.asarray(q, dtype=float)


class AnalyticField:
    """Scalar expression in the group coordinates.

    ``jet(q, order)`` returns ``(value, gradient, hessian)`` evaluated exactly
    by the chain rule; ``q`` has shape ``(d, ...)`` and everything broadcasts
    over the trailing axes.  ``hessian`` is ``None`` when ``order == 1``.
    """

    def jet(self, q, order: int = 2):
        raise NotImplementedError

    def substitute(self, fields: Sequence["AnalyticField"]) -> "AnalyticField":
        raise NotImplementedError

    def __call__(self, q):
        return self.jet(_as_coords(q), order=0)[0]

    def gradient(self, q) -> np.ndarray:
        return self.jet(_as_coords(q), order=1)[1]

    def hessian(self, q) -> np.ndarray:
        return self.jet(_as_coords(q), order=2)[2]

    # arithmetic
    def __add__(self, other):
        return _Sum(self, as_field(other))

    __radd__ = __add__

    def __neg__(self):
        return _Prod(constant(-1.0), self)

    def __sub__(self, other):
        return _Sum(self, -as_field(other))

    def __rsub__(self, other):
        return _Sum(as_field(other), -self)

    def __mul__(self, other):
        return _Prod(self, as_field(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _Prod(self, _Pow(as_field(other), -1.0))

    def __rtruediv__(self, other):
        return _Prod(as_field(other), _Pow(self, -1.0))

    def __pow__(self, exponent):
        return _Pow(self, float(exponent))

    def exp(self) -> "AnalyticField":
        return _Exp(self)

    def abs_pow(self, exponent: float) -> "AnalyticField":
        """|f|^a, differentiable wherever f != 0 (or everywhere for a >= 2)."""
        return _AbsPow(self, float(exponent))

    def apply(self, func: Callable, dfunc: Callable, d2func: Callable | None = None) -> "AnalyticField":
        """Compose with a scalar function given together with its derivatives."""
        return _Apply(self, func, dfunc, d2func)


def as_field(value) -> AnalyticField:
    if isinstance(value, AnalyticField):
        return value
    return constant(float(value))


class _Const(AnalyticField):
    def __init__(self, c: float):
        self.c = c

    def jet(self, q, order=2):
        shape = q.shape[1:]
        d = q.shape[0]
        val = np.full(shape, self.c)
        grad = np.zeros((d,) + shape) if order >= 1 else None
        hess = np.zeros((d, d) + shape) if order >= 2 else None
        return val, grad, hess

    def substitute(self, fields):
        return self


class _Coord(AnalyticField):
    def __init__(self, k: int):
        self.k = k

    def jet(self, q, order=2):
        d = q.shape[0]
        if not 0 <= self.k < d:
            raise ValueError(f"coordinate {self.k} outside a {d}-dimensional point")
        shape = q.shape[1:]
        val = np.array(q[self.k], dtype=float)
        grad = hess = None
        if order >= 1:
            grad = np.zeros((d,) + shape)
            grad[self.k] = 1.0
        if order >= 2:
            hess = np.zeros((d, d) + shape)
        return val, grad, hess

    def substitute(self, fields):
        return fields[self.k]


class _Sum(AnalyticField):
    def __init__(self, a, b):
        self.a, self.b = a, b

    def jet(self, q, order=2):
        va, ga, ha = self.a.jet(q, order)
        vb, gb, hb = self.b.jet(q, order)
        return (
            va + vb,
            ga + gb if order >= 1 else None,
            ha + hb if order >= 2 else None,
        )

    def substitute(self, fields):
        return _Sum(self.a.substitute(fields), self.b.substitute(fields))


class _Prod(AnalyticField):
    def __init__(self, a, b):
        self.a, self.b = a, b

    def jet(self, q, order=2):
        va, ga, ha = self.a.jet(q, order)
        vb, gb, hb = self.b.jet(q, order)
        grad = hess = None
        if order >= 1:
            grad = ga * vb + va * gb
        if order >= 2:
            cross = ga[:, None] * gb[None, :]
            hess = ha * vb + hb * va + cross + np.swapaxes(cross, 0, 1)
        return va * vb, grad, hess

    def substitute(self, fields):
        return _Prod(self.a.substitute(fields), self.b.substitute(fields))


class _Unary(AnalyticField):
    """Composition phi(inner) for a scalar phi with known phi', phi''."""

    def __init__(self, inner):
        self.inner = inner

    def _phi(self, v, order):
        raise NotImplementedError

    def jet(self, q, order=2):
        v, g, h = self.inner.jet(q, order)
        f0, f1, f2 = self._phi(v, order)
        grad = hess = None
        if order >= 1:
            grad = f1 * g
        if order >= 2:
            hess = f1 * h + f2 * (g[:, None] * g[None, :])
        return f0, grad, hess


class _Exp(_Unary):
    def _phi(self, v, order):
        e = np.exp(v)
        return e, e, e

    def substitute(self, fields):
        return _Exp(self.inner.substitute(fields))


class _Pow(_Unary):
    def __init__(self, inner, a: float):
        super().__init__(inner)
        self.a = a

    def _phi(self, v, order):
        a = self.a
        if a == int(a):
            k = int(a)
            f0 = v ** k
            f1 = k * v ** (k - 1) if order >= 1 and k != 0 else np.zeros_like(v)
            f2 = k * (k - 1) * v ** (k - 2) if order >= 2 and k not in (0, 1) else np.zeros_like(v)
            return f0, f1, f2
        f0 = v ** a
        return f0, a * v ** (a - 1), a * (a - 1) * v ** (a - 2)

    def substitute(self, fields):
        return _Pow(self.inner.substitute(fields), self.a)


class _AbsPow(_Unary):
    def __init__(self, inner, a: float):
        super().__init__(inner)
        self.a = a

    def _phi(self, v, order):
        a = self.a
        m = np.abs(v)
        with np.errstate(divide="ignore", invalid="ignore"):
            f0 = m ** a
            f1 = np.where(m > 0, a * m ** (a - 2) * v, 0.0)
            f2 = np.where(m > 0, a * (a - 1) * m ** (a - 2), 0.0 if a > 2 else np.inf)
        return f0, f1, f2

    def substitute(self, fields):
        return _AbsPow(self.inner.substitute(fields), self.a)


class _Apply(_Unary):
    def __init__(self, inner, func, dfunc, d2func):
        super().__init__(inner)
        self.func, self.dfunc, self.d2func = func, dfunc, d2func

    def _phi(self, v, order):
        f1 = self.dfunc(v) if order >= 1 else None
        f2 = None
        if order >= 2:
            if self.d2func is None:
                raise ValueError("second derivative requested but not supplied")
            f2 = self.d2func(v)
        return self.func(v), f1, f2

    def substitute(self, fields):
        return _Apply(self.inner.substitute(fields), self.func, self.dfunc, self.d2func)


def constant(c: float) -> AnalyticField:
    return _Const(float(c))


def coordinate(k: int) -> AnalyticField:
    return _Coord(int(k))


def coordinates(n: int = 1):
    """Return ``(xs, ys, t)`` as fields: lists of length n plus the t field."""
    xs = [coordinate(i) for i in range(n)]
    ys = [coordinate(n + i) for i in range(n)]
    return xs, ys, coordinate(2 * n)


def left_translate(f: AnalyticField, a: GroupPoint) -> AnalyticField:
    """The field q -> f(a . q)."""
    n = a.n
    xs, ys, t = coordinates(n)
    twist = constant(a.t)
    for i in range(n):
        twist = twist + 2.0 * a.y[i] * xs[i] - 2.0 * a.x[i] * ys[i]
    image = [xs[i] + a.x[i] for i in range(n)] + [ys[i] + a.y[i] for i in range(n)] + [t + twist]
    return f.substitute(image)


def random_polynomial(rng: np.random.Generator, n: int = 1, degree: int = 2, scale: float = 1.0) -> AnalyticField:
    """Polynomial with N(0, scale^2) coefficients on all monomials up to ``degree``."""
    d = 2 * n + 1
    exps = [(0,) * d]
    level = [()]
    for _ in range(degree):
        level = [idx + (k,) for idx in level for k in range(idx[-1] if idx else 0, d)]
        exps.extend(tuple(idx.count(k) for k in range(d)) for idx in level)
    # coefficients drawn in the same order as the monomials are listed
    coeffs = scale * rng.standard_normal(len(exps))
    return _Poly(coeffs, np.array(exps, dtype=int))


class _Poly(AnalyticField):
    """sum_j c_j prod_k q_k^E[j, k], evaluated without building an expression tree."""

    def __init__(self, coeffs, exps):
        self.c = np.asarray(coeffs, dtype=float)
        self.E = np.asarray(exps, dtype=int)

    def jet(self, q, order=2):
        d = self.E.shape[1]
        if q.shape[0] != d:
            raise ValueError(f"polynomial in {d} variables evaluated at a {q.shape[0]}-dimensional point")
        top = int(self.E.max(initial=0))
        shape = q.shape[1:]
        pw = np.ones((d, top + 1) + shape)
        for e in range(1, top + 1):
            pw[:, e] = pw[:, e - 1] * q
        E = self.E
        c = self.c.reshape((-1,) + (1,) * len(shape))
        # factor[j, k] = q_k^E[j, k] and its first two derivatives in q_k
        factor = np.stack([pw[k, E[:, k]] for k in range(d)], axis=1)
        d1 = np.stack([E[:, k].reshape(c.shape) * pw[k, np.maximum(E[:, k] - 1, 0)] for k in range(d)], axis=1)
        d2 = np.stack([(E[:, k] * (E[:, k] - 1)).reshape(c.shape) * pw[k, np.maximum(E[:, k] - 2, 0)]
                       for k in range(d)], axis=1)

        def total(rep):
            f = factor.copy()
            for k, arr in rep:
                f[:, k] = arr[:, k]
            return np.sum(c * np.prod(f, axis=1), axis=0)

        val = total(())
        grad = hess = None
        if order >= 1:
            grad = np.stack([total(((k, d1),)) for k in range(d)])
        if order >= 2:
            hess = np.empty((d, d) + shape)
            for k in range(d):
                hess[k, k] = total(((k, d2),))
                for m in range(k + 1, d):
                    hess[k, m] = hess[m, k] = total(((k, d1), (m, d1)))
        return val, grad, hess

    def substitute(self, fields):
        return _Compose(self, list(fields))


class _Compose(AnalyticField):
    """outer(w_1(q), ..., w_d(q)) by the chain rule."""

    def __init__(self, outer, fields):
        self.outer, self.fields = outer, fields

    def jet(self, q, order=2):
        jets = [f.jet(q, order) for f in self.fields]
        w = np.stack([j[0] for j in jets])
        v, gw, hw = self.outer.jet(w, order)
        grad = hess = None
        if order >= 1:
            J = np.stack([j[1] for j in jets])  # J[a, k] = d w_a / d q_k
            grad = np.einsum("a...,ak...->k...", gw, J)
        if order >= 2:
            hess = np.einsum("ab...,ak...,bl...->kl...", hw, J, J)
            hess = hess + sum(gw[a] * jets[a][2] for a in range(len(jets)))
        return v, grad, hess

    def substitute(self, fields):
        return _Compose(self.outer, [f.substitute(fields) for f in self.fields])


# ---------------------------------------------------------------------------
# left-invariant vector fields
# ---------------------------------------------------------------------------

def _check_index(i: int, d: int) -> int:
    n = (d - 1) // 2
    if not 1 <= i <= n:
        raise IndexError(f"vector-field index {i} outside 1..{n}")
    return n


def _X_of_grad(i, grad, q):
    n = _check_index(i, q.shape[0])
    return grad[i - 1] + 2.0 * q[n + i - 1] * grad[2 * n]


def _Y_of_grad(i, grad, q):
    n = _check_index(i, q.shape[0])
    return grad[n + i - 1] - 2.0 * q[i - 1] * grad[2 * n]


def apply_X(i: int, f: AnalyticField, q):
    """(X_i f)(q) with X_i = d/dx_i + 2 y_i d/dt."""
    q = _as_coords(q)
    _check_index(i, q.shape[0])
    return _X_of_grad(i, f.jet(q, order=1)[1], q)


def apply_Y(i: int, f: AnalyticField, q):
    """(Y_i f)(q) with Y_i = d/dy_i - 2 x_i d/dt."""
    q = _as_coords(q)
    _check_index(i, q.shape[0])
    return _Y_of_grad(i, f.jet(q, order=1)[1], q)


def apply_T(f: AnalyticField, q):
    q = _as_coords(q)
    return f.jet(q, order=1)[1][q.shape[0] - 1]


def horizontal_gradient(f: AnalyticField, q) -> np.ndarray:
    """Exact (X_1 f, .., X_n f, Y_1 f, .., Y_n f), stacked on axis 0."""
    q = _as_coords(q)
    n = (q.shape[0] - 1) // 2
    grad = f.jet(q, order=1)[1]
    return np.stack([_X_of_grad(i, grad, q) for i in range(1, n + 1)]
                    + [_Y_of_grad(i, grad, q) for i in range(1, n + 1)])


def sub_laplacian(f: AnalyticField, q):
    """Exact sum_i X_i^2 f + Y_i^2 f."""
    q = _as_coords(q)
    n = (q.shape[0] - 1) // 2
    _, grad, hess = f.jet(q, order=2)
    tt = 2 * n
    total = 0.0
    for i in range(n):
        xi, yi = i, n + i
        # X_i^2 f = f_xx + 4 y f_xt + 4 y^2 f_tt ; Y_i^2 f = f_yy - 4 x f_yt + 4 x^2 f_tt
        total = total + hess[xi, xi] + 4 * q[yi] * hess[xi, tt] + 4 * q[yi] ** 2 * hess[tt, tt]
        total = total + hess[yi, yi] - 4 * q[xi] * hess[yi, tt] + 4 * q[xi] ** 2 * hess[tt, tt]
    return total


def _second(kind_a, i, kind_b, j, grad, hess, q):
    """(A_i B_j f)(q) for A, B in {'X', 'Y', 'T'} from the exact gradient and hessian."""
    d = q.shape[0]
    n = (d - 1) // 2
    tt = 2 * n

    def coeffs(kind, k):
        # vector field as (constant direction, index of coordinate scaling d/dt, factor)
        if kind == "X":
            return k - 1, n + k - 1, 2.0
        if kind == "Y":
            return n + k - 1, k - 1, -2.0
        return tt, None, 0.0

    a_dir, a_coef, a_fac = coeffs(kind_a, i)
    b_dir, b_coef, b_fac = coeffs(kind_b, j)
    # B f = f_{b_dir} + b_fac * q[b_coef] * f_t
    # A(Bf) = d_{a_dir}(Bf) + a_fac * q[a_coef] * d_t(Bf)
    def d_of_Bf(k):
        out = hess[k, b_dir]
        if b_coef is not None:
            out = out + b_fac * q[b_coef] * hess[k, tt]
            if k == b_coef:
                out = out + b_fac * grad[tt]
        return out

    result = d_of_Bf(a_dir)
    if a_coef is not None:
        result = result + a_fac * q[a_coef] * d_of_Bf(tt)
    return result


def commutator_check(i: int, j: int, f: AnalyticField, q, kinds: str = "XY"):
    """Return ``(lhs, rhs)`` for the bracket of two left-invariant fields on ``f``.

    ``kinds`` picks the pair: ``"XY"`` gives ``[X_i, Y_j] f`` against
    ``-4 delta_ij T f``; every other pair (``XX``, ``YY``, ``XT``, ``YT``)
    has ``rhs = 0``.
    """
    q = _as_coords(q)
    n = (q.shape[0] - 1) // 2
    a, b = kinds[0], kinds[1]
    for kind, k in ((a, i), (b, j)):
        if kind != "T":
            _check_index(k, q.shape[0])
    _, grad, hess = f.jet(q, order=2)
    lhs = _second(a, i, b, j, grad, hess, q) - _second(b, j, a, i, grad, hess, q)
    if kinds == "XY":
        rhs = -4.0 * (i == j) * grad[2 * n]
    elif kinds == "YX":
        rhs = 4.0 * (i == j) * grad[2 * n]
    else:
        rhs = np.zeros_like(lhs)
    return lhs, rhs
