"""Grid calculus on boxes in H^n.

The horizontal gradient uses centered differences in the interior and
one-sided differences on the boundary layer.  The divergence is not
discretized separately: it is the negative adjoint of the gradient under the
trapezoid quadrature, so summation by parts holds to rounding for every
Dirichlet function.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse

AXIS_NAMES = "ijklmnopqrs"


@dataclass(frozen=True)
class HGrid:
    n: int
    lower: tuple
    upper: tuple
    nodes: tuple

    def __post_init__(self):
        d = 2 * self.n + 1
        if self.n < 1:
            raise ValueError("n must be >= 1")
        lower = tuple(float(v) for v in np.broadcast_to(self.lower, (d,)))
        upper = tuple(float(v) for v in np.broadcast_to(self.upper, (d,)))
        nodes = tuple(int(v) for v in np.broadcast_to(self.nodes, (d,)))
        if any(m < 3 for m in nodes):
            raise ValueError("need at least 3 nodes per axis")
        if any(not (hi > lo) for lo, hi in zip(lower, upper)):
            raise ValueError("box must have positive extent on every axis")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def box(cls, nodes: int = 17, n: int = 1, lower: float = -0.5, upper: float = 0.5) -> "HGrid":
        return cls(n, lower, upper, nodes)

    @property
    def dim(self) -> int:
        return 2 * self.n + 1

    @property
    def shape(self) -> tuple:
        return self.nodes

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes))

    @cached_property
    def spacing(self) -> tuple:
        return tuple((hi - lo) / (m - 1) for lo, hi, m in zip(self.lower, self.upper, self.nodes))

    @property
    def volume(self) -> float:
        return float(np.prod([hi - lo for lo, hi in zip(self.lower, self.upper)]))

    @property
    def diameter(self) -> float:
        return float(np.sqrt(sum((hi - lo) ** 2 for lo, hi in zip(self.lower, self.upper))))

    @cached_property
    def axes(self) -> tuple:
        return tuple(np.linspace(lo, hi, m) for lo, hi, m in zip(self.lower, self.upper, self.nodes))

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(2n+1, *shape)``."""
        out = np.stack(np.meshgrid(*self.axes, indexing="ij"))
        out.setflags(write=False)
        return out

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for ax in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[ax] = 0
            mask[tuple(sl)] = True
            sl[ax] = -1
            mask[tuple(sl)] = True
        mask.setflags(write=False)
        return mask

    @property
    def interior_mask(self) -> np.ndarray:
        return ~self.boundary_mask

    @cached_property
    def interior_index(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask.ravel())

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid weights: product of spacings, halved per boundary layer."""
        w = np.ones(self.shape)
        for ax, h in enumerate(self.spacing):
            w1 = np.full(self.nodes[ax], h)
            w1[0] = w1[-1] = h / 2
            shape = [1] * self.dim
            shape[ax] = -1
            w = w * w1.reshape(shape)
        w.setflags(write=False)
        return w

    @cached_property
    def parity(self) -> np.ndarray:
        """Node parity (sum of indices mod 2); the centered stencils never mix parities."""
        return sum(np.indices(self.shape)) % 2

    # -- assembled operators ------------------------------------------------

    @cached_property
    def gradient_matrix(self) -> sparse.csr_matrix:
        """Sparse map from all node values to the 2n horizontal components at all nodes."""
        d, n = self.dim, self.n
        eye = [sparse.identity(m, format="csr") for m in self.nodes]

        def along(ax):
            mats = list(eye)
            mats[ax] = _diff_1d(self.nodes[ax], self.spacing[ax])
            out = mats[0]
            for m in mats[1:]:
                out = sparse.kron(out, m, format="csr")
            return out

        dt = along(d - 1)
        blocks = []
        for i in range(n):
            y = sparse.diags(self.coords[n + i].ravel())
            blocks.append(along(i) + 2.0 * y @ dt)
        for i in range(n):
            x = sparse.diags(self.coords[i].ravel())
            blocks.append(along(n + i) - 2.0 * x @ dt)
        return sparse.vstack(blocks, format="csr")

    @cached_property
    def dirichlet_gradient_matrix(self) -> sparse.csr_matrix:
        """Gradient restricted to interior unknowns (boundary values pinned to 0)."""
        return self.gradient_matrix[:, self.interior_index].tocsr()

    @cached_property
    def _divergence_matrix(self) -> sparse.csr_matrix:
        g = self.dirichlet_gradient_matrix
        w_all = np.tile(self.weights.ravel(), 2 * self.n)
        w_int = self.weights.ravel()[self.interior_index]
        return (-sparse.diags(1.0 / w_int) @ g.T @ sparse.diags(w_all)).tocsr()

    @cached_property
    def stiffness_matrix(self) -> sparse.csc_matrix:
        """Matrix of u -> integral |grad_H u|^2 on interior unknowns (symmetric, positive definite)."""
        g = self.dirichlet_gradient_matrix
        w_all = np.tile(self.weights.ravel(), 2 * self.n)
        return (g.T @ sparse.diags(w_all) @ g).tocsc()

    def sample(self, func) -> "GridFunction":
        """Sample a callable of the coordinate array (e.g. an AnalyticField)."""
        return GridFunction(self, np.asarray(func(self.coords), dtype=float) * np.ones(self.shape))

    def to_dict(self) -> dict:
        return {"n": self.n, "lower": list(self.lower), "upper": list(self.upper), "nodes": list(self.nodes)}

    @classmethod
    def from_dict(cls, data: dict) -> "HGrid":
        return cls(int(data["n"]), tuple(data["lower"]), tuple(data["upper"]), tuple(data["nodes"]))


def _diff_1d(m: int, h: float) -> sparse.csr_matrix:
    rows = np.arange(1, m - 1)
    r = np.concatenate([[0, 0], np.repeat(rows, 2), [m - 1, m - 1]])
    c = np.concatenate([[0, 1], np.ravel(np.column_stack([rows - 1, rows + 1])), [m - 2, m - 1]])
    v = np.concatenate([[-1 / h, 1 / h], np.tile([-0.5 / h, 0.5 / h], m - 2), [-1 / h, 1 / h]])
    return sparse.csr_matrix((v, (r, c)), shape=(m, m))


class GridFunction:
    """Immutable node values on an HGrid.

    ``dirichlet=True`` asserts the boundary layer is exactly zero.
    """

    __slots__ = ("grid", "values", "dirichlet")

    def __init__(self, grid: HGrid, values, dirichlet: bool = False):
        values = np.array(values, dtype=float)
        if values.shape != grid.shape:
            values = values.reshape(grid.shape)
        if dirichlet and np.any(values[grid.boundary_mask] != 0.0):
            raise ValueError("Dirichlet grid function must vanish on the boundary layer")
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dirichlet", bool(dirichlet))

    def __setattr__(self, name, value):
        raise AttributeError("GridFunction is immutable")

    @classmethod
    def zeros(cls, grid: HGrid) -> "GridFunction":
        return cls(grid, np.zeros(grid.shape), dirichlet=True)

    @classmethod
    def from_interior(cls, grid: HGrid, vec) -> "GridFunction":
        full = np.zeros(grid.size)
        full[grid.interior_index] = vec
        return cls(grid, full.reshape(grid.shape), dirichlet=True)

    def with_zero_boundary(self) -> "GridFunction":
        vals = np.where(self.grid.boundary_mask, 0.0, self.values)
        return GridFunction(self.grid, vals, dirichlet=True)

    @property
    def interior(self) -> np.ndarray:
        return self.values.ravel()[self.grid.interior_index]

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def normalized(self) -> "GridFunction":
        """Scaled to unit sup-norm."""
        s = self.sup()
        return self if s == 0 else self * (1.0 / s)

    def _combine(self, other, op):
        if isinstance(other, GridFunction):
            if other.grid != self.grid:
                raise ValueError("grid mismatch")
            return GridFunction(self.grid, op(self.values, other.values), self.dirichlet and other.dirichlet)
        return GridFunction(self.grid, op(self.values, other), False)

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, other):
        if np.isscalar(other):
            return GridFunction(self.grid, self.values * other, self.dirichlet)
        out = self._combine(other, np.multiply)
        if isinstance(other, GridFunction) and (self.dirichlet or other.dirichlet):
            return GridFunction(self.grid, out.values, True)
        return out

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values, self.dirichlet)

    def __repr__(self):
        return f"GridFunction(shape={self.grid.shape}, dirichlet={self.dirichlet})"


class HVectorField:
    """2n horizontal components per node, stored as ``(2n, *shape)``."""

    __slots__ = ("grid", "components")

    def __init__(self, grid: HGrid, components):
        comps = np.array(components, dtype=float).reshape((2 * grid.n,) + grid.shape)
        comps.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "components", comps)

    def __setattr__(self, name, value):
        raise AttributeError("HVectorField is immutable")

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.components ** 2, axis=0))

    def scaled(self, weight) -> "HVectorField":
        return HVectorField(self.grid, self.components * np.asarray(weight))


def h_gradient(u: GridFunction) -> HVectorField:
    g = u.grid
    return HVectorField(g, g.gradient_matrix @ u.values.ravel())


def h_divergence(F: HVectorField) -> GridFunction:
    """Negative adjoint of ``h_gradient``; zero on the boundary layer."""
    g = F.grid
    return GridFunction.from_interior(g, g._divergence_matrix @ F.components.ravel())


def flux(grad: HVectorField, p: float, eps: float = 0.0, check_interior: bool = True) -> HVectorField:
    """(|grad|^2 + eps^2)^((p-2)/2) grad."""
    _check_p(p)
    mag2 = np.sum(grad.components ** 2, axis=0)
    if eps == 0.0 and p < 2:
        if check_interior and np.any(mag2[grad.grid.interior_mask] == 0.0):
            raise ValueError("singular weight: zero gradient at an interior node with p < 2 and eps = 0")
        with np.errstate(divide="ignore"):
            w = np.where(mag2 > 0, mag2 ** ((p - 2) / 2), 0.0)
    else:
        w = (mag2 + eps * eps) ** ((p - 2) / 2)
    return grad.scaled(w)


def p_sub_laplacian(u: GridFunction, p: float, eps: float = 0.0) -> GridFunction:
    """Delta_{H,p} u = div((|grad_H u|^2 + eps^2)^((p-2)/2) grad_H u), interior nodes only."""
    _check_p(p)
    return h_divergence(flux(h_gradient(u), p, eps))


def _check_p(p):
    if not p > 1:
        raise ValueError("p must exceed 1")


def integrate(w) -> float:
    """Trapezoid quadrature with exactly rounded (order independent) summation."""
    if isinstance(w, GridFunction):
        return math.fsum((w.grid.weights * w.values).ravel())
    raise TypeError("integrate expects a GridFunction")


def weighted_sum(grid: HGrid, values) -> float:
    """Quadrature of raw node values (or stacked per-node components)."""
    arr = np.asarray(values)
    return math.fsum((arr * grid.weights).ravel())


def inner(u: GridFunction, v: GridFunction) -> float:
    return math.fsum((u.grid.weights * u.values * v.values).ravel())


def vector_inner(F: HVectorField, G: HVectorField) -> float:
    return math.fsum((F.grid.weights * F.components * G.components).ravel())


def d1p_norm(u: GridFunction, p: float) -> float:
    _check_p(p)
    mag = h_gradient(u).magnitude()
    return weighted_sum(u.grid, mag ** p) ** (1.0 / p)


# ---------------------------------------------------------------------------
# CSV + JSON sidecar
# ---------------------------------------------------------------------------

def _sidecar(path: Path) -> Path:
    return path.with_name(path.stem + ".grid.json")


def write_csv(u: GridFunction, path) -> Path:
    """Node-index ordered CSV plus a ``<stem>.grid.json`` sidecar describing the grid."""
    path = Path(path)
    g = u.grid
    header = list(AXIS_NAMES[: g.dim]) + ["value"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for idx in np.ndindex(*g.shape):
            w.writerow(list(idx) + [repr(float(u.values[idx]))])
    meta = g.to_dict() | {"dirichlet": u.dirichlet}
    _sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def read_csv(path) -> GridFunction:
    path = Path(path)
    meta = json.loads(_sidecar(path).read_text())
    g = HGrid.from_dict(meta)
    vals = np.full(g.shape, np.nan)
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header[-1] != "value" or len(header) != g.dim + 1:
            raise ValueError(f"unexpected header {header}")
        for row in r:
            vals[tuple(int(c) for c in row[:-1])] = float(row[-1])
    if np.isnan(vals).any():
        raise ValueError("CSV does not cover every grid node")
    return GridFunction(g, vals, dirichlet=bool(meta.get("dirichlet", False)))
