"""Reaction terms f(x, r) for -Delta_{H,p} u = f(x, u) and checks of hypotheses I-III."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .hgroup import GroupPoint


@dataclass(frozen=True)
class NonlinearitySpec:
    """``f`` and ``F`` take ``(coords, r)`` with ``coords`` shaped ``(2n+1, ...)``.

    ``F`` is the antiderivative in ``r`` with ``F(x, 0) = 0``; ``C`` is the
    declared growth constant and ``a0``/``a_inf`` the limits of
    ``f / r^(p-1)`` at 0 and infinity (``math.inf`` allowed).
    """

    f: Callable
    F: Callable
    C: float
    a0: float
    a_inf: float
    label: str
    params: dict = field(default_factory=dict)

    def rhs(self, coords, r):
        """f extended by its value at 0 for negative r."""
        r = np.asarray(r, dtype=float)
        return self.f(coords, np.maximum(r, 0.0))

    def primitive(self, coords, r):
        """F extended linearly (slope f(x, 0)) for negative r."""
        r = np.asarray(r, dtype=float)
        pos = np.maximum(r, 0.0)
        neg = np.minimum(r, 0.0)
        return self.F(coords, pos) + self.f(coords, np.zeros_like(r)) * neg

    def with_limits(self, a0=None, a_inf=None) -> "NonlinearitySpec":
        return NonlinearitySpec(
            self.f, self.F, self.C,
            self.a0 if a0 is None else float(a0),
            self.a_inf if a_inf is None else float(a_inf),
            self.label, dict(self.params),
        )


def _x1(coords):
    return np.asarray(coords)[0]


def shifted_power(q: float = 0.5, weighted: bool = False) -> NonlinearitySpec:
    """f = c(x)(r+1)^q with c = 1, or c = 1 + x_1^2 when ``weighted``."""
    if weighted:
        def c(coords):
            return 1.0 + _x1(coords) ** 2
    else:
        def c(coords):
            return 1.0

    def f(coords, r):
        return c(coords) * (r + 1.0) ** q

    def F(coords, r):
        return c(coords) * ((r + 1.0) ** (q + 1) - 1.0) / (q + 1)

    # (r+1)^q <= 2 max(r, 1)^q <= 2(r^{p-1} + 1) for 0 < q <= p-1; the weight is at most 1.25 on the unit box
    label = f"{'w' if weighted else ''}rplus1:{q:g}"
    return NonlinearitySpec(f, F, C=2.0 * (1.25 if weighted else 1.0),
                            a0=math.inf, a_inf=0.0, label=label,
                            params={"q": q, "weighted": weighted})


def constant_source(value: float = 1.0) -> NonlinearitySpec:
    def f(coords, r):
        return np.full(np.shape(r), value) * np.ones(np.shape(_x1(coords)))

    def F(coords, r):
        return value * r * np.ones(np.shape(_x1(coords)))

    return NonlinearitySpec(f, F, C=abs(value), a0=math.inf, a_inf=0.0,
                            label=f"const:{value:g}", params={"value": value})


def weighted_source() -> NonlinearitySpec:
    """mu(x) = 1 + x_1^2, independent of r."""
    def f(coords, r):
        return (1.0 + _x1(coords) ** 2) * np.ones(np.shape(r))

    def F(coords, r):
        return (1.0 + _x1(coords) ** 2) * r

    return NonlinearitySpec(f, F, C=1.25, a0=math.inf, a_inf=0.0, label="quad", params={})


def homogeneous(a: float, b: float, p: float) -> NonlinearitySpec:
    """f = a r^(p-1) + b; linear in r when p = 2."""
    def f(coords, r):
        return (a * r ** (p - 1) + b) * np.ones(np.shape(_x1(coords)))

    def F(coords, r):
        return (a * r ** p / p + b * r) * np.ones(np.shape(_x1(coords)))

    return NonlinearitySpec(f, F, C=max(abs(a), abs(b)), a0=math.inf if b > 0 else a, a_inf=a,
                            label=f"hom:{a:g},{b:g}", params={"a": a, "b": b, "p": p})


def pure_power(p: float) -> NonlinearitySpec:
    def f(coords, r):
        return r ** (p - 1) * np.ones(np.shape(_x1(coords)))

    def F(coords, r):
        return r ** p / p * np.ones(np.shape(_x1(coords)))

    return NonlinearitySpec(f, F, C=1.0, a0=1.0, a_inf=1.0, label="pure", params={"p": p})


def exponential() -> NonlinearitySpec:
    def f(coords, r):
        return np.exp(r) * np.ones(np.shape(_x1(coords)))

    def F(coords, r):
        return (np.exp(r) - 1.0) * np.ones(np.shape(_x1(coords)))

    return NonlinearitySpec(f, F, C=1.0, a0=math.inf, a_inf=math.inf, label="exp", params={})


def parse_nonlinearity(text: str, p: float) -> NonlinearitySpec:
    """Build a spec from ``name[:params]``, e.g. ``rplus1:0.5`` or ``hom:40,1``."""
    name, _, arg = text.partition(":")
    args = [float(a) for a in arg.split(",") if a.strip()] if arg else []
    try:
        if name == "rplus1":
            return shifted_power(*(args or [0.5]))
        if name == "wrplus1":
            return shifted_power(*(args or [0.5]), weighted=True)
        if name == "const":
            return constant_source(*(args or [1.0]))
        if name == "quad":
            return weighted_source()
        if name == "hom":
            return homogeneous(args[0], args[1], p)
        if name == "pure":
            return pure_power(p)
        if name == "exp":
            return exponential()
    except (TypeError, IndexError) as exc:
        raise ValueError(f"bad parameters for nonlinearity {text!r}") from exc
    raise ValueError(f"unknown nonlinearity {name!r}")


@dataclass
class HypothesisReport:
    positivity: bool
    strict_decrease: bool
    growth: bool
    primitive: bool
    min_value: float
    decrease_margin: float
    growth_margin: float
    primitive_error: float

    @property
    def passed(self) -> bool:
        return self.positivity and self.strict_decrease and self.growth and self.primitive

    def to_dict(self) -> dict:
        return {
            "positivity": self.positivity, "strict_decrease": self.strict_decrease,
            "growth": self.growth, "primitive": self.primitive, "passed": self.passed,
            "min_value": self.min_value, "decrease_margin": self.decrease_margin,
            "growth_margin": self.growth_margin, "primitive_error": self.primitive_error,
        }


def default_ladder() -> np.ndarray:
    return np.logspace(-3, 3, 61)


def validate_hypotheses(spec: NonlinearitySpec, p: float, r_ladder=None,
                        x_samples: Sequence[GroupPoint] | None = None) -> HypothesisReport:
    """Sampled checks of positivity, strict decrease of f/r^(p-1), growth, and F' = f.

    Positivity is tested on ``[0] + r_ladder`` since f must be positive at r = 0 too.
    """
    r = np.asarray(default_ladder() if r_ladder is None else r_ladder, dtype=float)
    if r.ndim != 1 or np.any(r <= 0) or np.any(np.diff(r) <= 0):
        raise ValueError("r_ladder must be positive and strictly increasing")
    if x_samples is None:
        x_samples = [GroupPoint.identity(1), GroupPoint((0.5,), (-0.25,), 0.3)]
    pts = np.stack([q.as_array() for q in x_samples], axis=1)  # (d, m)
    coords = pts[:, :, None]                                  # (d, m, 1)
    rr = np.concatenate([[0.0], r])[None, :]
    with np.errstate(over="ignore", invalid="ignore"):
        return _check(spec, p, r, coords, rr)


def _check(spec, p, r, coords, rr):
    vals = spec.f(coords, rr) * np.ones((coords.shape[1], rr.shape[1]))
    min_value = float(np.min(vals))
    ratio = vals[:, 1:] / r[None, :] ** (p - 1)
    steps = ratio[:, :-1] - ratio[:, 1:]
    decrease_margin = float(np.min(steps)) if steps.size else math.inf
    growth_margin = float(np.min(spec.C * (rr ** (p - 1) + 1.0) - vals))
    # central differences on F, relative
    h = 1e-6 * np.maximum(r, 1.0)
    dF = (spec.F(coords, r[None, :] + h) - spec.F(coords, r[None, :] - h)) / (2 * h)
    rel = np.abs(dF - vals[:, 1:]) / np.maximum(np.abs(vals[:, 1:]), 1e-300)
    primitive_error = float(np.max(rel))
    return HypothesisReport(
        positivity=bool(min_value > 0),
        strict_decrease=bool(decrease_margin > 0),
        growth=bool(growth_margin >= 0),
        primitive=bool(primitive_error <= 1e-6),
        min_value=min_value,
        decrease_margin=decrease_margin,
        growth_margin=growth_margin,
        primitive_error=primitive_error,
    )
