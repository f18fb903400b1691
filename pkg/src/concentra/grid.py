"""Uniform cell-centered grids on trait space: stencils, quadrature, kernel convolution.

All fields live on cell centers of a rectangular box.  The diffusion stencils
are written in conservative flux form with zero-flux boundary faces, which
makes discrete mass conservation exact and keeps the stencil symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GridError(ValueError):
    """Invalid grid construction or field data."""


@dataclass(frozen=True)
class TraitGrid:
    """Cell-centered uniform grid on a box in trait space (dimension 1 or 2).

    Node coordinates along axis j are lower[j] + (i + 1/2) * spacing[j].
    """

    dimension: int
    lower: tuple
    upper: tuple
    points_per_axis: tuple

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise GridError(f"dimension must be 1 or 2, got {self.dimension}")
        for name, tup in (("lower", self.lower), ("upper", self.upper),
                          ("points_per_axis", self.points_per_axis)):
            if len(tup) != self.dimension:
                raise GridError(f"{name} must have length {self.dimension}")
        for lo, up in zip(self.lower, self.upper):
            if not up > lo:
                raise GridError(f"degenerate box: lower={self.lower} upper={self.upper}")
        for n in self.points_per_axis:
            if n < 8:
                raise GridError(f"points_per_axis must be >= 8, got {n}")

    @property
    def spacing(self) -> tuple:
        return tuple((u - l) / n for l, u, n in
                     zip(self.lower, self.upper, self.points_per_axis))

    @property
    def shape(self) -> tuple:
        return tuple(self.points_per_axis)

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.points_per_axis))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis_coords(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        n = self.points_per_axis[axis]
        return self.lower[axis] + (np.arange(n) + 0.5) * h

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape (*shape, dimension)."""
        axes = [self.axis_coords(j) for j in range(self.dimension)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def nearest_index(self, x) -> tuple:
        """Index of the node closest to the point x."""
        x = np.asarray(x, dtype=float)
        idx = []
        for j in range(self.dimension):
            i = int(np.floor((x[j] - self.lower[j]) / self.spacing[j]))
            idx.append(min(max(i, 0), self.points_per_axis[j] - 1))
        return tuple(idx)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= np.asarray(self.lower)) and
                    np.all(x <= np.asarray(self.upper)))


def build_grid(dimension, lower, upper, points_per_axis) -> TraitGrid:
    """Build a cell-centered grid; scalars are broadcast across axes."""
    def tup(v):
        if np.isscalar(v):
            return (v,) * dimension
        return tuple(v)
    return TraitGrid(dimension, tup(lower), tup(upper), tup(points_per_axis))


@dataclass
class ScalarField:
    """Grid-sampled real function; values are stored with the grid's shape."""

    grid: TraitGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            if self.values.size == self.grid.num_nodes:
                self.values = self.values.reshape(self.grid.shape)
            else:
                raise GridError(
                    f"field has {self.values.size} values, grid has "
                    f"{self.grid.num_nodes} nodes")
        if not np.all(np.isfinite(self.values)):
            raise GridError("field contains non-finite values")


@dataclass
class DensityField(ScalarField):
    """Nonnegative population density on a grid."""

    def __post_init__(self):
        super().__post_init__()
        if np.any(self.values < 0):
            raise GridError("density field has negative entries "
                            f"(min {self.values.min():g})")


def _face_diffs(values: np.ndarray, axis: int) -> np.ndarray:
    """Differences across interior faces, zero on boundary faces (no-flux)."""
    d = np.diff(values, axis=axis)
    pad = [(0, 0)] * values.ndim
    pad[axis] = (1, 1)
    return np.pad(d, pad)


def laplacian_values(values: np.ndarray, spacing) -> np.ndarray:
    out = np.zeros_like(values)
    for ax in range(values.ndim):
        out += np.diff(_face_diffs(values, ax), axis=ax) / spacing[ax] ** 2
    return out


def laplacian(field: ScalarField, bc: str = "no-flux") -> ScalarField:
    """Second-order diffusion stencil (3-point in 1D, 5-point in 2D).

    Flux form: (f_{i+1}-f_i) - (f_i-f_{i-1}) over h^2, with zero flux on
    boundary faces.  Exact on quadratics at interior nodes.
    """
    if bc != "no-flux":
        raise GridError(f"unsupported boundary rule {bc!r}")
    return ScalarField(field.grid, laplacian_values(field.values, field.grid.spacing))


def face_coefficients(grid: TraitGrid, b_values: np.ndarray) -> list:
    """Arithmetic face averages of a node-sampled coefficient, per axis.

    Returned arrays include boundary faces (coefficient there is irrelevant
    under no-flux; set to 0).
    """
    faces = []
    for ax in range(grid.dimension):
        interior = 0.5 * (np.take(b_values, np.arange(1, grid.shape[ax]), axis=ax)
                          + np.take(b_values, np.arange(grid.shape[ax] - 1), axis=ax))
        pad = [(0, 0)] * grid.dimension
        pad[ax] = (1, 1)
        faces.append(np.pad(interior, pad))
    return faces


def div_b_grad_values(values: np.ndarray, faces: list, spacing) -> np.ndarray:
    out = np.zeros_like(values)
    for ax in range(values.ndim):
        flux = faces[ax] * _face_diffs(values, ax)
        out += np.diff(flux, axis=ax) / spacing[ax] ** 2
    return out


def div_b_grad(field: ScalarField, b, bc: str = "no-flux") -> ScalarField:
    """Conservative variable-coefficient diffusion: div(b grad f).

    `b` may be a DiffusionCoefficient-like object (with .value), a callable
    on node coordinates, or a node-sampled array.  Face coefficients are the
    arithmetic mean of the two adjacent nodes; b == 1 reproduces `laplacian`
    bitwise.
    """
    if bc != "no-flux":
        raise GridError(f"unsupported boundary rule {bc!r}")
    grid = field.grid
    if hasattr(b, "value"):
        b_nodes = np.asarray(b.value(grid.nodes()), dtype=float)
    elif callable(b):
        b_nodes = np.asarray(b(grid.nodes()), dtype=float)
    else:
        b_nodes = np.asarray(b, dtype=float)
    b_nodes = np.broadcast_to(b_nodes, grid.shape)
    if np.any(b_nodes <= 0):
        raise GridError("diffusion coefficient must be positive on the grid")
    faces = face_coefficients(grid, b_nodes)
    return ScalarField(grid, div_b_grad_values(field.values, faces, grid.spacing))


def integrate(field: ScalarField, weight=1) -> float:
    """Midpoint quadrature sum(w(x_i) f_i) * cell volume."""
    v = field.values
    if np.isscalar(weight):
        if weight == 1:
            return float(v.sum() * field.grid.cell_volume)
        return float(weight * v.sum() * field.grid.cell_volume)
    w = np.asarray(weight(field.grid.nodes()), dtype=float)
    return float((w * v).sum() * field.grid.cell_volume)


def boundary_ring_mass(density: DensityField, width: int = 2) -> float:
    """Mass carried by the outermost `width`-cell ring of the box."""
    v = density.values
    interior = v
    for ax in range(v.ndim):
        n = v.shape[ax]
        interior = np.take(interior, np.arange(width, n - width), axis=ax)
    total = v.sum()
    return float((total - interior.sum()) * density.grid.cell_volume)


def convolve_kernel(density: DensityField, kernel, chunk: int = 512) -> ScalarField:
    """Competition field x -> sum_j C(x_i, y_j) n_j * cell volume.

    Direct O(N^2) midpoint rule, evaluated in row chunks to bound memory.
    Kernels declared separable (kernel.separable with .phi/.psi) take the
    factorized fast path.
    """
    grid = density.grid
    nodes = grid.nodes().reshape(-1, grid.dimension)
    n = density.values.reshape(-1)
    vol = grid.cell_volume
    if getattr(kernel, "separable", False):
        psi_y = np.asarray(kernel.psi(nodes), dtype=float)
        total = float((psi_y * n).sum() * vol)
        out = np.asarray(kernel.phi(nodes), dtype=float) * total
        return ScalarField(grid, out.reshape(grid.shape))
    out = np.empty(nodes.shape[0])
    for start in range(0, nodes.shape[0], chunk):
        stop = min(start + chunk, nodes.shape[0])
        block = kernel(nodes[start:stop, None, :], nodes[None, :, :])
        out[start:stop] = block @ n
    out *= vol
    return ScalarField(grid, out.reshape(grid.shape))


# --- field snapshot CSV format -------------------------------------------

def write_field_csv(field: ScalarField, path) -> None:
    """Snapshot format: header comment with grid metadata, then one row per
    node `x1[,x2],value` in row-major order, 17 significant digits."""
    g = field.grid
    n = ",".join(str(k) for k in g.points_per_axis)
    lo = ",".join(f"{v:.17g}" for v in g.lower)
    up = ",".join(f"{v:.17g}" for v in g.upper)
    nodes = g.nodes().reshape(-1, g.dimension)
    vals = field.values.reshape(-1)
    with open(path, "w") as f:
        f.write(f"# grid dim={g.dimension} n={n} lower={lo} upper={up}\n")
        for x, v in zip(nodes, vals):
            coords = ",".join(f"{c:.17g}" for c in x)
            f.write(f"{coords},{v:.17g}\n")


def read_field_csv(path) -> ScalarField:
    with open(path) as f:
        header = f.readline().strip()
        if not header.startswith("# grid "):
            raise GridError(f"{path}: missing grid header")
        meta = dict(tok.split("=") for tok in header[len("# grid "):].split())
        dim = int(meta["dim"])
        npts = tuple(int(s) for s in meta["n"].split(","))
        lower = tuple(float(s) for s in meta["lower"].split(","))
        upper = tuple(float(s) for s in meta["upper"].split(","))
        grid = TraitGrid(dim, lower, upper, npts)
        vals = np.array([float(line.rsplit(",", 1)[1]) for line in f])
    return ScalarField(grid, vals.reshape(grid.shape))
