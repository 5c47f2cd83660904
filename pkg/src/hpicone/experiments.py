"""Multi-start uniqueness experiment for positive solutions of -Delta_{H,p} u = f(x, u)."""
from __future__ import annotations

import itertools
import math
from dataclasses import replace

import numpy as np

from .eigen import existence_check, lambda1
from .hcalc import GridFunction, HGrid, weighted_sum
from .nonlinearity import NonlinearitySpec, validate_hypotheses
from .picone import diaz_saa_gap
from .solver import DivergenceError, SolverConfig, solve

BASE_INITS = ("const:0.1", "const:1", "const:10", "random", "eigen")
GAP_TOL = 1e-10
P_RANGE = (1.5, 4.0)


def default_initializers(n_starts: int) -> list[str]:
    """The five base starts, then extra random fields; truncated to ``n_starts``."""
    extra = [f"random#{k}" for k in range(1, max(0, n_starts - len(BASE_INITS)) + 1)]
    return (list(BASE_INITS) + extra)[:n_starts]


def relative_distance(u: GridFunction, w: GridFunction) -> float:
    """max|u - w| / max(sup|u|, sup|w|), the relative sup-norm distance."""
    scale = max(u.sup(), w.sup())
    return float(np.max(np.abs(u.values - w.values)) / scale) if scale > 0 else 0.0


def contradiction_integral(spec: NonlinearitySpec, u1: GridFunction, u2: GridFunction, p: float) -> float:
    """int (f(x,u1)/u1^(p-1) - f(x,u2)/u2^(p-1))(u1^p - u2^p); nonpositive by strict decrease of f/r^(p-1)."""
    grid = u1.grid
    interior = grid.interior_mask
    s1 = np.where(interior, u1.values, 1.0)
    s2 = np.where(interior, u2.values, 1.0)
    ratio = spec.rhs(grid.coords, s1) / s1 ** (p - 1) - spec.rhs(grid.coords, s2) / s2 ** (p - 1)
    return weighted_sum(grid, np.where(interior, ratio * (s1 ** p - s2 ** p), 0.0))


def uniqueness_experiment(spec: NonlinearitySpec, p: float, config: SolverConfig, grid: HGrid,
                          n_starts: int = 5, seed: int = 0, initializers=None,
                          allow_nonpositive_f: bool = False) -> dict:
    """Solve from ``n_starts`` initializers and compare the converged solutions pairwise.

    Initializer names are those of :func:`solver.initial_guess`; ``random#k``
    is a random field drawn with seed ``seed + k`` and ``eigen`` is the
    sup-normalized first eigenfunction.  With ``allow_nonpositive_f`` a failed
    positivity hypothesis is recorded instead of raised.
    """
    if n_starts < 2:
        raise ValueError("n_starts must be at least 2")
    if not P_RANGE[0] <= p <= P_RANGE[1]:
        raise ValueError(f"p must lie in [{P_RANGE[0]:g}, {P_RANGE[1]:g}]")
    inits = list(initializers) if initializers is not None else default_initializers(n_starts)
    if len(inits) != n_starts:
        raise ValueError("need exactly n_starts initializers")
    config = replace(config, p=p, seed=seed)

    hyp = validate_hypotheses(spec, p)
    blocking = [k for k in ("strict_decrease", "growth", "primitive") if not getattr(hyp, k)]
    if not hyp.positivity and not allow_nonpositive_f:
        blocking.append("positivity")
    if blocking:
        raise ValueError(f"nonlinearity fails hypotheses: {', '.join(blocking)}")

    # max_iter caps the solves only; the eigenvalue iteration keeps its default budget
    eig_config = replace(config, max_iter=max(config.max_iter, SolverConfig().max_iter))
    eig = None
    if "eigen" in inits:
        eig = lambda1(GridFunction.zeros(grid), p, eig_config, grid)
    existence = existence_check(spec, p, eig_config, grid, base=None if eig is None else eig.value)

    runs = []
    solutions = []
    for label in inits:
        if label == "eigen":
            start = eig.eigenfunction.normalized()
        elif label.startswith("random#"):
            start = _random_start(grid, seed + int(label.split("#", 1)[1]))
        elif label == "random":
            start = _random_start(grid, seed)
        else:
            start = label
        try:
            res = solve(spec, config, grid, init=start)
        except DivergenceError as exc:
            runs.append({"init": label, "converged": False, "error": str(exc)})
            solutions.append(None)
            continue
        entry = {"init": label, **res.to_dict()}
        runs.append(entry)
        solutions.append(res.u if res.converged else None)

    converged = [(runs[i]["init"], u) for i, u in enumerate(solutions) if u is not None]
    pairs = []
    for (la, ua), (lb, ub) in itertools.combinations(converged, 2):
        ds = diaz_saa_gap(ua, ub, p, config.resolved_eps(grid)) if ua.interior.min() > 0 and ub.interior.min() > 0 else None
        pairs.append({
            "a": la, "b": lb,
            "relative_distance": relative_distance(ua, ub),
            "diaz_saa_gap": None if ds is None else ds.gap,
            "diaz_saa_first": None if ds is None else ds.first,
            "diaz_saa_second": None if ds is None else ds.second,
            "contradiction_integral": contradiction_integral(spec, ua, ub, p) if ds is not None else None,
        })

    inconclusive = len(converged) < 2
    max_dist = max((pr["relative_distance"] for pr in pairs), default=math.nan)
    gaps = [pr["diaz_saa_gap"] for pr in pairs if pr["diaz_saa_gap"] is not None]
    contra = [pr["contradiction_integral"] for pr in pairs if pr["contradiction_integral"] is not None]
    return {
        "label": spec.label,
        "p": p,
        "n_starts": n_starts,
        "seed": seed,
        "eps": config.resolved_eps(grid),
        "runs": runs,
        "pairs": pairs,
        "all_converged": all(u is not None for u in solutions),
        "all_positive": all(u.interior.min() > 0 for _, u in converged) and not inconclusive,
        "max_relative_distance": max_dist,
        "min_diaz_saa_gap": min(gaps, default=math.nan),
        "diaz_saa_ok": all(g >= -GAP_TOL for g in gaps) and len(gaps) == len(pairs),
        "max_contradiction_integral": max(contra, default=math.nan),
        "contradiction_ok": all(c <= GAP_TOL for c in contra),
        "inconclusive": inconclusive,
        "hypotheses": hyp.to_dict(),
        "existence": existence,
        "lambda1": None if eig is None else eig.value,
    }


def _random_start(grid: HGrid, seed: int) -> GridFunction:
    rng = np.random.default_rng(seed)
    return GridFunction(grid, rng.uniform(0.05, 1.0, grid.shape)).with_zero_boundary()
