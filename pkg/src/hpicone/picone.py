"""Picone-type identities and inequalities for the horizontal p-Laplacian, as computable gaps.

Pointwise quantities take gradient arrays of shape ``(2n, ...)`` so the same
formulas serve exact (closed-form) gradients and grid gradients.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .hcalc import GridFunction, h_gradient, p_sub_laplacian, weighted_sum
from .hgroup import AnalyticField, horizontal_gradient
from .reporting import dumps

TOL_MU = 1e-8
ADMISSIBLE_SLACK = 1e-12


@dataclass(frozen=True)
class GFunction:
    g: Callable
    g_prime: Callable
    label: str


def power_g(p: float) -> GFunction:
    """g(x) = x^(p-1): equality in the admissibility condition."""
    return GFunction(lambda x: x ** (p - 1), lambda x: (p - 1) * x ** (p - 2), "power")


def exponential_g(p: float) -> GFunction:
    return GFunction(lambda x: np.exp((p - 1) * x), lambda x: (p - 1) * np.exp((p - 1) * x), "exp")


def shifted_power_g(p: float, shift: float = 1.0) -> GFunction:
    return GFunction(lambda x: (x + shift) ** (p - 1), lambda x: (p - 1) * (x + shift) ** (p - 2),
                     f"shifted_power:{shift:g}")


def constant_g(c: float = 1.0) -> GFunction:
    return GFunction(lambda x: np.full(np.shape(x), c), lambda x: np.zeros(np.shape(x)), f"const:{c:g}")


def make_g(name: str, p: float) -> GFunction:
    key, _, arg = name.partition(":")
    if key == "power":
        return power_g(p)
    if key == "exp":
        return exponential_g(p)
    if key == "shifted_power":
        return shifted_power_g(p, float(arg) if arg else 1.0)
    if key == "const":
        return constant_g(float(arg) if arg else 1.0)
    raise ValueError(f"unknown weight function {name!r}")


def g_admissible(g: GFunction, p: float, samples) -> tuple[bool, float]:
    """Check g'(x) >= (p-1) g(x)^((p-2)/(p-1)) on ``samples``; returns (ok, worst margin)."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0 or np.any(x <= 0):
        raise ValueError("samples must be a nonempty subset of (0, inf)")
    gx = g.g(x)
    if np.any(gx <= 0):
        raise ValueError("g not positive")
    margin = g.g_prime(x) - (p - 1) * gx ** ((p - 2) / (p - 1))
    worst = float(np.min(margin))
    return worst >= -ADMISSIBLE_SLACK, worst


# ---------------------------------------------------------------------------
# pointwise formulas
# ---------------------------------------------------------------------------

def _powabs(x, a):
    return np.abs(x) ** a


def _flux_dot(gu, gv, p):
    """grad u . grad v |grad v|^(p-2), zero where grad v vanishes."""
    mv = np.sqrt(np.sum(gv ** 2, axis=0))
    dot = np.sum(gu * gv, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(mv > 0, dot * mv ** (p - 2), 0.0)


def picone_L_pointwise(u, gu, v, gv, g: GFunction, p: float):
    """|grad u|^p - p |u|^(p-2)u/g(v) grad u.grad v |grad v|^(p-2) + g'(v)|u|^p/g(v)^2 |grad v|^p."""
    mu = np.sqrt(np.sum(gu ** 2, axis=0))
    mv = np.sqrt(np.sum(gv ** 2, axis=0))
    gvv = g.g(v)
    signed = _powabs(u, p - 1) * np.sign(u)
    return mu ** p - p * signed / gvv * _flux_dot(gu, gv, p) + g.g_prime(v) * _powabs(u, p) / gvv ** 2 * mv ** p


def picone_R_pointwise(gu, gq, gv, p: float):
    """|grad u|^p - grad(|u|^p/g(v)) . |grad v|^(p-2) grad v, with ``gq`` the gradient of the quotient."""
    mu = np.sqrt(np.sum(gu ** 2, axis=0))
    return mu ** p - _flux_dot(gq, gv, p)


def young_margin_pointwise(u, gu, v, gv, g: GFunction, p: float):
    """RHS - LHS of p a b <= a^p + (p-1) b^(p/(p-1)) with a = |grad u|, b = |u|^(p-1)|grad v|^(p-1)/g(v)."""
    mu = np.sqrt(np.sum(gu ** 2, axis=0))
    mv = np.sqrt(np.sum(gv ** 2, axis=0))
    gvv = g.g(v)
    lhs = p * _powabs(u, p - 1) / gvv * mv ** (p - 1) * mu
    rhs = mu ** p + (p - 1) * _powabs(u, p) * mv ** p / gvv ** (p / (p - 1))
    return rhs - lhs


def modulus_margin_pointwise(u, gu, v, gv, g: GFunction, p: float):
    """|u|^(p-1)/g(v) |grad v|^(p-1)|grad u| - |u|^(p-2)u/g(v) grad u.grad v |grad v|^(p-2) (>= 0)."""
    mu = np.sqrt(np.sum(gu ** 2, axis=0))
    mv = np.sqrt(np.sum(gv ** 2, axis=0))
    gvv = g.g(v)
    signed = _powabs(u, p - 1) * np.sign(u)
    return _powabs(u, p - 1) / gvv * mv ** (p - 1) * mu - signed / gvv * _flux_dot(gu, gv, p)


# ---------------------------------------------------------------------------
# exact path on closed-form fields
# ---------------------------------------------------------------------------

def picone_exact(u: AnalyticField, v: AnalyticField, g: GFunction, p: float, points):
    """(L, R) at ``points`` (shape ``(2n+1, ...)``) from exact horizontal gradients.

    R differentiates the quotient |u|^p/g(v) as a composed field, so L = R
    checks the expansion of that gradient rather than reusing it.
    """
    q = np.asarray(points, dtype=float)
    uv, vv = u(q), v(q)
    if np.any(vv <= 0):
        raise ValueError("v must be positive a.e.")
    gu = horizontal_gradient(u, q)
    gv = horizontal_gradient(v, q)
    quotient = u.abs_pow(p) * v.apply(g.g, g.g_prime) ** -1
    gq = horizontal_gradient(quotient, q)
    return picone_L_pointwise(uv, gu, vv, gv, g, p), picone_R_pointwise(gu, gq, gv, p)


# ---------------------------------------------------------------------------
# grid path
# ---------------------------------------------------------------------------

def _interior_only(grid, values):
    return GridFunction(grid, np.where(grid.interior_mask, values, 0.0))


def _require_positive(v: GridFunction):
    if np.any(v.values[v.grid.interior_mask] <= 0):
        raise ValueError("v must be positive a.e.")


def picone_L(u: GridFunction, v: GridFunction, g: GFunction, p: float) -> GridFunction:
    """L(u, v) at interior nodes; boundary nodes carry 0."""
    _require_positive(v)
    grid = u.grid
    vsafe = np.where(grid.interior_mask, v.values, 1.0)
    L = picone_L_pointwise(u.values, h_gradient(u).components, vsafe, h_gradient(v).components, g, p)
    return _interior_only(grid, L)


def picone_R(u: GridFunction, v: GridFunction, g: GFunction, p: float) -> GridFunction:
    """R(u, v) at interior nodes, with the quotient |u|^p/g(v) formed nodewise then differentiated."""
    _require_positive(v)
    grid = u.grid
    with np.errstate(divide="ignore", invalid="ignore"):
        quotient = np.where(np.abs(u.values) > 0, _powabs(u.values, p) / g.g(v.values), 0.0)
    gq = h_gradient(GridFunction(grid, quotient)).components
    R = picone_R_pointwise(h_gradient(u).components, gq, h_gradient(v).components, p)
    return _interior_only(grid, R)


def young_step_check(u: GridFunction, v: GridFunction, g: GFunction, p: float) -> float:
    """Minimum over interior nodes of the Young-inequality margin."""
    _require_positive(v)
    grid = u.grid
    m = young_margin_pointwise(u.values, h_gradient(u).components, np.where(grid.interior_mask, v.values, 1.0),
                               h_gradient(v).components, g, p)
    return float(np.min(m[grid.interior_mask]))


def quotient_gradient(u: GridFunction, v: GridFunction) -> np.ndarray:
    """grad_H(u/v) by the quotient rule (v grad u - u grad v)/v^2 at interior nodes."""
    grid = u.grid
    vs = np.where(grid.interior_mask, v.values, 1.0)
    gq = (vs * h_gradient(u).components - u.values * h_gradient(v).components) / vs ** 2
    return np.where(grid.interior_mask, gq, 0.0)


class EqualityDiagnostic(NamedTuple):
    max_L: float
    max_quotient_gradient: float
    max_quotient_gradient_where_small: float
    small_nodes: int
    converse_c: float
    converse_max_L: float


def equality_case_probe(u: GridFunction, v: GridFunction, p: float, tol_L: float = 1e-10) -> EqualityDiagnostic:
    """Equality case with g = x^(p-1): L = 0 exactly where u/v is locally constant.

    Also evaluates the converse direction on c v with c the least-squares ratio of u to v.
    """
    grid = u.grid
    g = power_g(p)
    L = picone_L(u, v, g, p).values
    gq = np.sqrt(np.sum(quotient_gradient(u, v) ** 2, axis=0))
    interior = grid.interior_mask
    small = interior & (L <= tol_L)
    vv = weighted_sum(grid, v.values ** 2)
    c = weighted_sum(grid, u.values * v.values) / vv if vv > 0 else 1.0
    c = c if c != 0 else 1.0
    Lc = picone_L(v * c, v, g, p).values
    return EqualityDiagnostic(
        max_L=float(np.max(L[interior])),
        max_quotient_gradient=float(np.max(gq[interior])),
        max_quotient_gradient_where_small=float(np.max(gq[small])) if small.any() else 0.0,
        small_nodes=int(small.sum()),
        converse_c=float(c),
        converse_max_L=float(np.max(Lc[interior])),
    )


def sharpness_probe(g: GFunction, p: float, v_value: float, direction=(1.0, 0.0)) -> float:
    """Pointwise L for u = 1 with grad u chosen to minimize L at a node where v = ``v_value``.

    The minimum over grad u equals |grad v|^p (g' - (p-1) g^((p-2)/(p-1)))/g^2, which is
    negative exactly when g violates the admissibility condition at ``v_value``.
    """
    gv = np.asarray(direction, dtype=float).reshape(-1, 1)
    mv = float(np.linalg.norm(gv))
    b = mv ** (p - 1) / float(g.g(np.array([v_value]))[0])
    gu = gv / mv * b ** (1.0 / (p - 1))
    return float(picone_L_pointwise(np.array([1.0]), gu, np.array([v_value]), gv, g, p)[0])


# ---------------------------------------------------------------------------
# integral inequalities
# ---------------------------------------------------------------------------

def _supersolution_density(v: GridFunction, p: float, eps: float, tol_mu: float = TOL_MU) -> np.ndarray:
    mu = -p_sub_laplacian(v, p, eps).values
    if np.any(mu[v.grid.interior_mask] < -tol_mu):
        raise ValueError("v is not a supersolution")
    return mu


def _picone_gap_at_shift(u, v, g, p, mu, shift):
    grid = u.grid
    up = _powabs(u.values, p)
    with np.errstate(divide="ignore", invalid="ignore"):
        weight = np.where(up > 0, up / g.g(v.values + shift), 0.0)
    mag = np.sqrt(np.sum(h_gradient(u).components ** 2, axis=0))
    return weighted_sum(grid, mag ** p) - weighted_sum(grid, weight * mu)


def picone_inequality_detail(u: GridFunction, v: GridFunction, g: GFunction, p: float, eps: float = 0.0,
                             max_doublings: int = 40) -> tuple[float, float | None, bool]:
    """``(gap, k, stable)``: int |grad u|^p - int |u|^p/g(v) (-Delta_p v).

    Where v vanishes at interior nodes the weight uses g(v + 1/k), doubling k
    until two successive gaps agree to 1%; ``k`` is ``None`` when no lift was needed.
    """
    if np.any(v.values < 0) or not np.any(v.values != 0):
        raise ValueError("v must be nonnegative and not identically zero")
    mu = _supersolution_density(v, p, eps)
    interior = v.grid.interior_mask
    if np.all(v.values[interior] > 0):
        return _picone_gap_at_shift(u, v, g, p, mu, 0.0), None, True
    k = 1.0
    prev = _picone_gap_at_shift(u, v, g, p, mu, 1.0 / k)
    for _ in range(max_doublings):
        k *= 2
        cur = _picone_gap_at_shift(u, v, g, p, mu, 1.0 / k)
        if abs(cur - prev) <= 0.01 * max(abs(cur), 1e-300):
            return cur, k, True
        prev = cur
    return cur, k, False


def picone_inequality_gap(u: GridFunction, v: GridFunction, g: GFunction, p: float, eps: float = 0.0) -> float:
    return picone_inequality_detail(u, v, g, p, eps)[0]


class DiazSaaGap(NamedTuple):
    gap: float
    first: float
    second: float


def diaz_saa_gap(u1: GridFunction, u2: GridFunction, p: float, eps: float = 0.0) -> DiazSaaGap:
    """int (-Delta_p u1/u1^(p-1) + Delta_p u2/u2^(p-1)) (u1^p - u2^p), plus the two one-sided parts.

    ``first`` weights the bracket by u1^p and ``second`` by -u2^p, so gap = first + second.
    """
    grid = u1.grid
    interior = grid.interior_mask
    for u in (u1, u2):
        if np.any(u.values[interior] <= 0):
            raise ValueError("u1 and u2 must be positive at interior nodes")
    mu1 = _supersolution_density(u1, p, eps)
    mu2 = _supersolution_density(u2, p, eps)
    s1 = np.where(interior, u1.values, 1.0)
    s2 = np.where(interior, u2.values, 1.0)
    bracket = np.where(interior, mu1 / s1 ** (p - 1) - mu2 / s2 ** (p - 1), 0.0)
    p1 = np.where(interior, s1 ** p, 0.0)
    p2 = np.where(interior, s2 ** p, 0.0)
    return DiazSaaGap(
        gap=weighted_sum(grid, bracket * (p1 - p2)),
        first=weighted_sum(grid, bracket * p1),
        second=weighted_sum(grid, -bracket * p2),
    )


def diaz_saa_g_gap(u1: GridFunction, u2: GridFunction, g: GFunction, p: float, eps: float = 0.0) -> float:
    """The Diaz-Saa integral with u^(p-1) replaced by g(u).

    Nonnegativity is only guaranteed for g = x^(p-1); other admissible g are
    probed here as a counterexample search and nothing is asserted about them.
    """
    grid = u1.grid
    interior = grid.interior_mask
    for u in (u1, u2):
        if np.any(u.values[interior] <= 0):
            raise ValueError("u1 and u2 must be positive at interior nodes")
    mu1 = _supersolution_density(u1, p, eps)
    mu2 = _supersolution_density(u2, p, eps)
    s1 = np.where(interior, u1.values, 1.0)
    s2 = np.where(interior, u2.values, 1.0)
    bracket = np.where(interior, mu1 / g.g(s1) - mu2 / g.g(s2), 0.0)
    return weighted_sum(grid, bracket * np.where(interior, s1 ** p - s2 ** p, 0.0))


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@dataclass
class PiconeReport:
    p: float
    g: str
    residuals: dict = field(default_factory=dict)
    margins: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    passed: dict = field(default_factory=dict)
    eps: float = 0.0
    k_shift: float | None = None
    notes: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    @property
    def failing(self) -> list:
        return sorted(k for k, v in self.passed.items() if not v)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ok"] = self.ok
        out["failing"] = self.failing
        return out

    def to_json(self) -> str:
        return dumps(self.to_dict())
