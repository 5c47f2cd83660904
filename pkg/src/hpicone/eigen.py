"""First eigenvalue of -Delta_{H,p} - a|.|^{p-2}. and the sign conditions for existence.

The centered stencils couple a node only to nodes of the opposite index
parity, so the discrete Rayleigh quotient splits into two independent
problems (even and odd sublattice).  Each is minimized separately and the
smaller value is returned.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import eigsh, splu

from .hcalc import GridFunction, HGrid
from .nonlinearity import NonlinearitySpec
from .solver import SolverConfig, bump, initial_guess

LADDER = (10.0, 100.0, 1000.0)


class EigenConvergenceError(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass
class EigenResult:
    value: float
    eigenfunction: GridFunction
    iterations: int
    class_values: dict
    trace: list = field(default_factory=list, repr=False)
    start_values: list = field(default_factory=list)

    def __iter__(self):
        yield self.value
        yield self.eigenfunction


class _ParityBlock:
    """Rayleigh quotient restricted to interior nodes of one parity."""

    def __init__(self, grid: HGrid, parity: int, a_int: np.ndarray, p: float, eps: float):
        self.grid, self.p, self.eps = grid, p, eps
        par = grid.parity.ravel()[grid.interior_index]
        self.idx = np.flatnonzero(par == parity)
        self.w = grid.weights.ravel()[grid.interior_index][self.idx]
        self.a = a_int[self.idx]
        G = grid.dirichlet_gradient_matrix[:, self.idx]
        # only gradient rows touched by this block carry its energy
        rows = np.unique(G.nonzero()[0])
        self.G = G[rows].tocsr()
        self.w_rows = np.tile(grid.weights.ravel(), 2 * grid.n)[rows]
        self.n_comp = 2 * grid.n
        self.node_of_row = rows % grid.size
        A = grid.stiffness_matrix[self.idx][:, self.idx].tocsc()
        self.lu = splu(A)

    def _mag2(self, v):
        gv = self.G @ v
        mag2 = np.zeros(self.grid.size)
        np.add.at(mag2, self.node_of_row, gv ** 2)
        return gv, mag2

    def quotient(self, v):
        p, eps = self.p, self.eps
        _, mag2 = self._mag2(v)
        w_nodes = self.grid.weights.ravel()
        dens = (mag2 + eps * eps) ** (p / 2) - eps ** p
        top = math.fsum(w_nodes * dens) - math.fsum(self.w * self.a * np.abs(v) ** p)
        return top / math.fsum(self.w * np.abs(v) ** p)

    def gradient(self, v, q):
        p, eps = self.p, self.eps
        gv, mag2 = self._mag2(v)
        weight = (mag2 + eps * eps) ** ((p - 2) / 2)
        flux = weight[self.node_of_row] * gv
        vp = np.abs(v) ** (p - 2) * v if p != 2 else v
        norm = math.fsum(self.w * np.abs(v) ** p)
        return p * (self.G.T @ (self.w_rows * flux) - self.w * (self.a + q) * vp) / norm

    def normalize(self, v):
        return v / math.fsum(self.w * np.abs(v) ** self.p) ** (1.0 / self.p)

    def minimize(self, v0, max_iter, tol, trace):
        v = self.normalize(v0)
        q = self.quotient(v)
        s = 1.0
        for it in range(max_iter + 1):
            g = self.gradient(v, q)
            d = -self.lu.solve(g)
            slope = float(g @ d)
            trace.append((it, q, math.sqrt(max(-slope, 0.0)), s))
            if -slope <= tol * tol * max(1.0, abs(q)):
                return v, q, it, True
            accepted = False
            s = min(2.0 * s, 1e6)
            for _ in range(80):
                trial = self.normalize(v + s * d)
                qt = self.quotient(trial)
                if qt - q <= 1e-4 * s * slope:
                    accepted = True
                    break
                s *= 0.5
            if not accepted:
                # rounding floor on the quotient; the value error is of order -slope
                return v, q, it, -slope <= 1e-10 * max(1.0, abs(q))
            v, q = trial, qt
        return v, q, max_iter, False


def lambda1(a: GridFunction, p: float, config: SolverConfig, grid: HGrid, init=None,
            tol: float = 1e-9, extra_starts: int | None = None) -> EigenResult:
    """Minimize (int |grad_H v|^p - int a|v|^p) / int |v|^p over Dirichlet v != 0.

    ``tol`` bounds the preconditioned gradient norm at exit, relative to
    ``max(1, |lambda|)``; the eigenvalue error is of order its square.  For
    p != 2 the quotient can have local minima, so ``extra_starts`` random
    fields (default 2, or 0 when p = 2) are tried besides the primary start
    and the smallest value wins; all values are kept in ``start_values``.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    eps = config.resolved_eps(grid) if p < 2 else 0.0
    a_int = np.asarray(a.interior if isinstance(a, GridFunction) else np.broadcast_to(a, (len(grid.interior_index),)),
                       dtype=float)
    if init is None:
        primary = initial_guess(config.init, grid, config.seed, p) if config.init.startswith("random") else bump(grid)
    else:
        primary = initial_guess(init, grid, config.seed, p)
    if extra_starts is None:
        extra_starts = 0 if p == 2 else 2
    starts = [primary] + [initial_guess("random", grid, config.seed + k, p) for k in range(1, extra_starts + 1)]
    fallback = bump(grid).interior
    blocks = [_ParityBlock(grid, parity, a_int, p, eps) for parity in (0, 1)]

    best = None
    class_values = {}
    start_values = []
    trace = []
    for n_start, start in enumerate(starts):
        start_int = start.interior
        start_best = None
        for parity, block in enumerate(blocks):
            if block.idx.size == 0:
                continue
            v0 = start_int[block.idx]
            if not np.any(v0 != 0):
                v0 = fallback[block.idx]
            sub_trace = []
            v, q, its, ok = block.minimize(v0, config.max_iter, tol, sub_trace)
            trace.append({"start": n_start, "parity": parity, "history": sub_trace})
            if not ok:
                raise EigenConvergenceError(f"eigenvalue iteration did not converge on parity {parity}", trace)
            class_values[parity] = min(q, class_values.get(parity, math.inf))
            start_best = q if start_best is None else min(start_best, q)
            if best is None or q < best[0]:
                full = np.zeros(len(grid.interior_index))
                full[block.idx] = v
                best = (q, full, its)
        start_values.append(start_best)
    q, full, its = best
    if np.sum(full) < 0:
        full = -full
    return EigenResult(q, GridFunction.from_interior(grid, full), its, class_values, trace, start_values)


def linear_oracle(grid: HGrid, a: float = 0.0) -> float:
    """Smallest eigenvalue of K v = lambda W v minus ``a`` (p = 2, constant potential), via shift-invert Lanczos."""
    w = grid.weights.ravel()[grid.interior_index]
    vals = eigsh(grid.stiffness_matrix, k=1, M=sparse.diags(w).tocsc(), sigma=0.0, which="LM",
                 return_eigenvectors=False)
    return float(vals[0]) - a


def existence_check(spec: NonlinearitySpec, p: float, config: SolverConfig, grid: HGrid,
                    ladder=LADDER, tol: float = 1e-8, base: float | None = None) -> dict:
    """Sign conditions lambda1(-Delta_p - a0) < 0 and lambda1(-Delta_p - a_inf) > 0.

    Infinite limits are replaced by constants M from ``ladder``; the shifted
    values lambda1(0) - M come from the exact shift identity of the quotient.
    ``base`` may pass in an already computed lambda1(-Delta_p).
    """
    zero = GridFunction.zeros(grid)
    if base is None:
        base = lambda1(zero, p, config, grid).value
    scale = max(1.0, abs(base))

    def condition(limit, want_negative):
        if math.isinf(limit):
            values = [base - M for M in ladder]
            decreasing = all(b < a for a, b in zip(values, values[1:]))
            last = values[-1]
            if not decreasing:
                status = "indeterminate"
            elif want_negative:
                status = "satisfied" if last < 0 else "indeterminate"
            else:
                status = "unsatisfied" if last < 0 else "indeterminate"
            return {"limit": "inf", "ladder": list(ladder), "values": values, "status": status}
        value = base if limit == 0 else lambda1(zero + float(limit), p, config, grid).value
        if abs(value) <= tol * scale:
            status = "indeterminate"
        elif (value < 0) == want_negative:
            status = "satisfied"
        else:
            status = "unsatisfied"
        return {"limit": float(limit), "value": value, "shift_prediction": base - limit, "status": status}

    near_zero = condition(spec.a0, want_negative=True)
    at_infinity = condition(spec.a_inf, want_negative=False)
    statuses = {near_zero["status"], at_infinity["status"]}
    if statuses == {"satisfied"}:
        verdict = "satisfied"
    elif "unsatisfied" in statuses:
        verdict = "unsatisfied"
    else:
        verdict = "indeterminate"
    return {"lambda1": base, "p": p, "condition_a0": near_zero, "condition_a_inf": at_infinity,
            "verdict": verdict, "label": spec.label}
