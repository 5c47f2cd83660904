"""Energy minimization for -Delta_{H,p} u = f(x, u), u = 0 on the boundary.

Descent directions are gradients of the energy taken in the discrete
D^{1,2}_0 inner product (the stiffness matrix of the p = 2 problem), with an
Armijo backtracking line search.  For p = 2 and f independent of u this
reaches the minimizer in one step; for other p it is still plain gradient
descent, only in a better-scaled metric.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import splu

from .hcalc import (GridFunction, HGrid, flux, h_gradient, p_sub_laplacian,
                    weighted_sum)
from .nonlinearity import NonlinearitySpec

# Gauss-Legendre nodes on [0, 1] for F(u + s) - F(u) = integral of f
_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


class DivergenceError(RuntimeError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


@dataclass
class SolverConfig:
    p: float = 2.0
    eps: float | None = None
    max_iter: int = 50_000
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 80
    tol_residual: float = 1e-9
    tol_step: float = 1e-10
    init: str = "const:1"
    seed: int = 0
    metric: str = "sobolev"

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if self.tol_residual <= 0 or self.tol_step <= 0:
            raise ValueError("tolerances must be positive")
        if self.metric not in ("sobolev", "l2"):
            raise ValueError(f"unknown metric {self.metric!r}")

    def resolved_eps(self, grid: HGrid) -> float:
        if self.eps is not None:
            return float(self.eps)
        return default_eps(grid)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        return cls(**data)


def default_eps(grid: HGrid) -> float:
    return 1e-8 / grid.diameter


@dataclass
class SolveResult:
    u: GridFunction
    energy: float
    residual: float
    iterations: int
    min_interior: float
    converged: bool
    eps: float
    history: list = field(default_factory=list, repr=False)

    @property
    def positive(self) -> bool:
        return self.min_interior > 0

    def to_dict(self) -> dict:
        return {
            "energy": self.energy, "residual": self.residual, "iterations": self.iterations,
            "min_interior": self.min_interior, "positive": self.positive,
            "converged": self.converged, "eps": self.eps,
        }


@lru_cache(maxsize=8)
def _stiffness_lu(grid: HGrid):
    return splu(grid.stiffness_matrix)


# ---------------------------------------------------------------------------
# energy
# ---------------------------------------------------------------------------

def _gradient_energy_density(mag2, p, eps):
    if eps == 0.0:
        return mag2 ** (p / 2) / p
    return ((mag2 + eps * eps) ** (p / 2) - eps ** p) / p


def energy(u: GridFunction, spec: NonlinearitySpec, p: float, eps: float = 0.0) -> float:
    """(1/p) int |grad_H u|^p - int F(x, u); with eps > 0 the first term uses (|.|^2+eps^2)^(p/2) - eps^p."""
    grid = u.grid
    mag2 = np.sum(h_gradient(u).components ** 2, axis=0)
    prim = spec.primitive(grid.coords, u.values)
    return weighted_sum(grid, _gradient_energy_density(mag2, p, eps)) - weighted_sum(grid, prim)


def energy_difference(u: GridFunction, w: GridFunction, spec: NonlinearitySpec, p: float,
                      eps: float = 0.0) -> float:
    """E(w) - E(u) without the cancellation of subtracting two energies."""
    grid = u.grid
    step = w.values - u.values  # exact: w and u are close
    gu = h_gradient(u).components
    gd = (grid.gradient_matrix @ step.ravel()).reshape(gu.shape)
    a2 = np.sum(gu ** 2, axis=0) + eps * eps
    diff2 = np.sum(gd * (2.0 * gu + gd), axis=0)
    b2 = a2 + diff2
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(a2 > 0, diff2 / a2, 0.0)
        # (a2 + d)^(p/2) - a2^(p/2) = a2^(p/2) expm1((p/2) log1p(d / a2))
        grad_part = np.where(a2 > 0, a2 ** (p / 2) * np.expm1(0.5 * p * np.log1p(rel)), b2 ** (p / 2)) / p
    f_avg = sum(wt * spec.rhs(grid.coords, u.values + x * step) for x, wt in zip(_GL_X, _GL_W))
    f_part = f_avg * step
    # the extended f has a kink at r = 0; segments crossing it use the primitive directly
    cross = (u.values < 0) != (w.values < 0)
    if cross.any():
        exact = spec.primitive(grid.coords, w.values) - spec.primitive(grid.coords, u.values)
        f_part = np.where(cross, exact, f_part)
    return weighted_sum(grid, grad_part) - weighted_sum(grid, f_part)


def residual(u: GridFunction, spec: NonlinearitySpec, p: float, eps: float = 0.0) -> GridFunction:
    """-Delta_p u - f(x, u) at interior nodes (zero on the boundary)."""
    lap = p_sub_laplacian(u, p, eps)
    src = spec.rhs(u.grid.coords, u.values)
    return GridFunction(u.grid, np.where(u.grid.interior_mask, -lap.values - src, 0.0), dirichlet=True)


def first_variation(u: GridFunction, phi: GridFunction, spec: NonlinearitySpec, p: float,
                    eps: float = 0.0) -> float:
    """dE(u)[phi] = <-Delta_p u - f(., u), phi> in the quadrature inner product."""
    r = residual(u, spec, p, eps)
    return weighted_sum(u.grid, r.values * phi.values)


def l2_norm(u: GridFunction) -> float:
    return math.sqrt(weighted_sum(u.grid, u.values ** 2))


# ---------------------------------------------------------------------------
# initial guesses
# ---------------------------------------------------------------------------

def bump(grid: HGrid) -> GridFunction:
    """Product of cosines, positive inside and zero on the boundary."""
    vals = np.ones(grid.shape)
    for ax, (lo, hi) in enumerate(zip(grid.lower, grid.upper)):
        s = (grid.coords[ax] - lo) / (hi - lo)
        vals = vals * np.sin(np.pi * s)
    return GridFunction(grid, vals).with_zero_boundary()


def initial_guess(init, grid: HGrid, seed: int = 0, p: float = 2.0) -> GridFunction:
    """``const:c``, ``random[:scale]``, ``bump[:scale]``, ``eigen[:scale]`` or an explicit GridFunction."""
    if isinstance(init, GridFunction):
        return init.with_zero_boundary()
    name, _, arg = str(init).partition(":")
    scale = float(arg) if arg else 1.0
    if name == "const":
        return GridFunction(grid, np.full(grid.shape, scale)).with_zero_boundary()
    if name == "random":
        rng = np.random.default_rng(seed)
        return GridFunction(grid, scale * rng.uniform(0.05, 1.0, grid.shape)).with_zero_boundary()
    if name == "bump":
        return bump(grid) * scale
    if name == "eigen":
        from .eigen import lambda1
        _, v = lambda1(GridFunction.zeros(grid), p, SolverConfig(p=p, seed=seed), grid)
        v = v if np.sum(v.values) >= 0 else -v
        return v.normalized() * scale
    raise ValueError(f"unknown initializer {init!r}")


# ---------------------------------------------------------------------------
# descent
# ---------------------------------------------------------------------------

def solve(spec: NonlinearitySpec, config: SolverConfig, grid: HGrid, init=None) -> SolveResult:
    p = config.p
    eps = config.resolved_eps(grid)
    if p < 2 and eps == 0.0:
        raise ValueError("eps must be positive for p < 2")
    w_int = grid.weights.ravel()[grid.interior_index]
    lu = _stiffness_lu(grid) if config.metric == "sobolev" else None
    tol_res = config.tol_residual * math.sqrt(grid.volume)

    u = initial_guess(config.init if init is None else init, grid, config.seed, p)
    E = energy(u, spec, p, eps)
    history = []
    step_change = math.inf
    s_prev = 1.0
    converged = False
    it = 0
    while True:
        r = residual(u, spec, p, eps)
        res = l2_norm(r)
        if not (math.isfinite(E) and math.isfinite(res)):
            raise DivergenceError(f"divergence at iteration {it}: energy={E}, residual={res}", history)
        history.append((it, E, res, s_prev if it else 0.0))
        if res <= tol_res and step_change <= config.tol_step:
            converged = True
            break
        if it >= config.max_iter:
            break
        grad = w_int * r.interior
        direction = -lu.solve(grad) if lu is not None else -r.interior
        slope = float(grad @ direction)
        if slope >= 0:
            # zero gradient (exact stationary point) or a broken direction
            converged = res <= tol_res
            break
        s, dE, accepted = _armijo(u, direction, slope, s_prev, spec, p, eps, config)
        if not accepted:
            # rounding floor: no representable decrease left along this direction
            converged = res <= tol_res
            break
        trial = GridFunction.from_interior(grid, u.interior + s * direction)
        step_change = float(np.max(np.abs(trial.values - u.values)))
        u = trial
        E = E + dE
        s_prev = s
        it += 1

    E = energy(u, spec, p, eps)
    return SolveResult(
        u=u, energy=E, residual=res, iterations=it,
        min_interior=float(np.min(u.interior)), converged=converged, eps=eps, history=history,
    )


def _armijo(u, direction, slope, s0, spec, p, eps, config):
    """Backtracking from ``s0`` with safeguarded quadratic-interpolation steps.

    Returns ``(s, dE, accepted)``; once a step passes, one longer step from the
    quadratic model is tried and kept only if it lowers E further.
    """
    grid = u.grid

    def delta(s):
        return energy_difference(u, GridFunction.from_interior(grid, u.interior + s * direction), spec, p, eps)

    def model_min(s, dE):
        curv = dE - slope * s
        return -slope * s * s / (2.0 * curv) if curv > 0 else 4.0 * s

    s = s0
    for _ in range(config.max_backtracks):
        dE = delta(s)
        if math.isfinite(dE) and dE <= config.armijo * s * slope:
            s_q = min(model_min(s, dE), 4.0 * s)
            if s_q > 1.5 * s:
                dE_q = delta(s_q)
                if math.isfinite(dE_q) and dE_q < dE:
                    return s_q, dE_q, True
            return s, dE, True
        s_q = model_min(s, dE) if math.isfinite(dE) else 0.0
        s = min(max(s_q, 0.1 * s), config.shrink * s)
    return s, math.nan, False


def write_history(result: SolveResult, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "energy", "residual", "step"])
        for row in result.history:
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
    return path
