"""Q1 bilinear finite element assembly on the fine grid.

Provides the mass matrix M, stiffness A(kappa), the weighted mass S built
from the MsFEM partition-of-unity gradients, and load vectors.  kappa is
piecewise constant per fine cell; all element integrals are exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import GridHierarchy

# Reference element matrices on an h x h square, nodes counterclockwise
# from the SW corner.  Mass scales with h^2; stiffness is h-independent.
_MASS_REF = np.array([[4, 2, 1, 2],
                      [2, 4, 2, 1],
                      [1, 2, 4, 2],
                      [2, 1, 2, 4]], dtype=float) / 36.0
_STIFF_REF = np.array([[4, -1, -2, -1],
                       [-1, 4, -1, -2],
                       [-2, -1, 4, -1],
                       [-1, -2, -1, 4]], dtype=float) / 6.0


@dataclass(frozen=True)
class PermeabilityField:
    """Piecewise-constant positive kappa on fine cells, cell-id order."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("field values must be a flat per-cell array")
        if not np.all(np.isfinite(v)) or v.min() <= 0.0:
            raise ValueError("permeability values must be positive and finite")
        object.__setattr__(self, "values", v)

    @property
    def contrast(self) -> float:
        return float(self.values.max() / self.values.min())


@dataclass(frozen=True)
class WeightedField:
    """Per-fine-cell values of kappa_tilde (nonnegative)."""

    values: np.ndarray


@dataclass
class PartitionOfUnity:
    """MsFEM partition of unity: one all-node coefficient row per coarse vertex."""

    grid: GridHierarchy
    chi: sp.csr_matrix  # (n_coarse_vertices, n_nodes)


def element_mass(h: float) -> np.ndarray:
    """Exact 4x4 mass matrix of Q1 shape functions on an h x h cell."""
    if h <= 0:
        raise ValueError("h must be positive")
    return (h * h) * _MASS_REF


def element_stiffness(kappa_cell: float, h: float) -> np.ndarray:
    """Exact 4x4 stiffness of Q1 shape functions with constant kappa."""
    if kappa_cell <= 0:
        raise ValueError("kappa must be positive")
    if h <= 0:
        raise ValueError("h must be positive")
    return kappa_cell * _STIFF_REF


def _assemble_nodes(grid: GridHierarchy, cell_weights: np.ndarray,
                    elem_ref: np.ndarray) -> sp.csr_matrix:
    """Assemble sum_c w_c * elem_ref over all fine cells, on all nodes."""
    conn = grid.cell_nodes()
    nc = grid.n_cells
    blocks = cell_weights[:, None, None] * elem_ref[None, :, :]
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    K = sp.coo_matrix((blocks.ravel(), (rows, cols)),
                      shape=(grid.n_nodes, grid.n_nodes))
    return K.tocsr()


def assemble(grid: GridHierarchy, field, weight: str) -> sp.csr_matrix:
    """Assemble a global matrix on interior DOFs.

    weight is one of 'mass' (field ignored), 'stiffness' (PermeabilityField)
    or 'weighted_mass' (WeightedField, i.e. the s-bilinear form).
    """
    h = grid.h
    if weight == "mass":
        w = np.ones(grid.n_cells)
        ref = element_mass(h)
    elif weight == "stiffness":
        w = np.asarray(field.values, dtype=float)
        ref = _STIFF_REF
    elif weight == "weighted_mass":
        w = np.asarray(field.values, dtype=float)
        ref = element_mass(h)
    else:
        raise ValueError(f"unknown weight kind {weight!r}")
    if len(w) != grid.n_cells:
        raise ValueError(f"field has {len(w)} cells, grid has {grid.n_cells}")
    K = _assemble_nodes(grid, w, ref)
    idx = grid.interior_nodes()
    return K[idx][:, idx].tocsr()


def msfem_partition(grid: GridHierarchy, field: PermeabilityField) -> PartitionOfUnity:
    """kappa-harmonic partition of unity chi_i, one per coarse vertex.

    On each coarse element, chi_i solves the local Dirichlet problem with
    bilinear boundary data (1 at vertex i, 0 at the others, linear on edges).
    """
    cn = grid.coarse_n
    r = grid.refine
    nn = grid.n_nodes_side
    nvert = grid.n_coarse_vertices

    # Local node grid of one coarse element: (r+1)^2 nodes, x fastest.
    lx, ly = np.meshgrid(np.arange(r + 1), np.arange(r + 1), indexing="xy")
    lx = lx.ravel() / r
    ly = ly.ravel() / r
    on_bdy = (lx == 0) | (lx == 1) | (ly == 0) | (ly == 1)
    bdy = np.flatnonzero(on_bdy)
    inner = np.flatnonzero(~on_bdy)
    # Bilinear corner hats evaluated at local nodes; corner order SW,SE,NE,NW.
    hats = np.column_stack([(1 - lx) * (1 - ly), lx * (1 - ly), lx * ly, (1 - lx) * ly])

    # Local connectivity (cells within one coarse element).
    cX, cY = np.meshgrid(np.arange(r), np.arange(r), indexing="xy")
    c0 = cY.ravel() * (r + 1) + cX.ravel()
    conn = np.column_stack([c0, c0 + 1, c0 + r + 2, c0 + r + 1])

    rows_i = []
    rows_j = []
    rows_v = []
    for e in range(grid.n_coarse_elems):
        cells, nodes = grid.elem_maps[e]
        kap = field.values[cells]
        blocks = kap[:, None, None] * _STIFF_REF[None, :, :]
        ii = np.repeat(conn, 4, axis=1).ravel()
        jj = np.tile(conn, (1, 4)).ravel()
        Aloc = sp.coo_matrix((blocks.ravel(), (ii, jj)),
                             shape=((r + 1) ** 2, (r + 1) ** 2)).tocsc()
        lu = spla.splu(Aloc[inner][:, inner].tocsc())
        G = hats[bdy]                                 # boundary data, 4 corners
        rhs = -Aloc[inner][:, bdy] @ G
        sol = lu.solve(rhs)                           # (n_inner, 4)
        vals = np.empty(((r + 1) ** 2, 4))
        vals[bdy] = G
        vals[inner] = sol

        cy, cx = divmod(e, cn)
        corners = [cy * (cn + 1) + cx, cy * (cn + 1) + cx + 1,
                   (cy + 1) * (cn + 1) + cx + 1, (cy + 1) * (cn + 1) + cx]
        for c in range(4):
            rows_i.append(np.full(len(nodes), corners[c]))
            rows_j.append(nodes)
            rows_v.append(vals[:, c])

    chi = sp.coo_matrix((np.concatenate(rows_v),
                         (np.concatenate(rows_i), np.concatenate(rows_j))),
                        shape=(nvert, grid.n_nodes))
    # Shared element edges are written once per adjacent element with identical
    # values; average duplicates instead of summing them.
    counts = sp.coo_matrix((np.ones(chi.nnz), (chi.row, chi.col)), shape=chi.shape).tocsr()
    chi = chi.tocsr()
    chi.data /= counts.data
    return PartitionOfUnity(grid=grid, chi=chi)


def kappa_tilde(field: PermeabilityField, pou: PartitionOfUnity) -> WeightedField:
    """kappa * sum_i |grad chi_i|^2, gradients at fine-cell midpoints."""
    grid = pou.grid
    conn = grid.cell_nodes()
    h = grid.h
    total = np.zeros(grid.n_cells)
    chi = pou.chi
    for i in range(chi.shape[0]):
        row = chi.getrow(i).toarray().ravel()
        u = row[conn]                    # (n_cells, 4)
        gx = ((u[:, 1] - u[:, 0]) + (u[:, 2] - u[:, 3])) / (2 * h)
        gy = ((u[:, 3] - u[:, 0]) + (u[:, 2] - u[:, 1])) / (2 * h)
        total += gx * gx + gy * gy
    return WeightedField(values=field.values * total)


def load_vector(grid: GridHierarchy, f, t: float) -> np.ndarray:
    """(f(.,t), phi_i) on interior DOFs, f interpolated bilinearly per cell."""
    xy = grid.node_coords()
    fn = np.asarray(f(xy[:, 0], xy[:, 1], t), dtype=float)
    if fn.shape != (grid.n_nodes,):
        fn = np.broadcast_to(fn, (grid.n_nodes,)).copy()
    conn = grid.cell_nodes()
    Me = element_mass(grid.h)
    contrib = fn[conn] @ Me.T            # (n_cells, 4)
    out = np.zeros(grid.n_nodes)
    np.add.at(out, conn.ravel(), contrib.ravel())
    return out[grid.interior_nodes()]


def write_raster(path, nx: int, ny: int, values: np.ndarray) -> None:
    """Plain-text raster: 'nx ny' header then nx*ny values row-major."""
    values = np.asarray(values, dtype=float).ravel()
    if len(values) != nx * ny:
        raise ValueError(f"expected {nx * ny} values, got {len(values)}")
    with open(path, "w") as fh:
        fh.write(f"{nx} {ny}\n")
        for row in values.reshape(ny, nx):
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def read_raster(path):
    """Read a raster file; returns (nx, ny, flat values)."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}:1: expected header 'nx ny'")
        try:
            nx, ny = int(header[0]), int(header[1])
        except ValueError as exc:
            raise ValueError(f"{path}:1: malformed header {header!r}") from exc
        vals = []
        for ln, line in enumerate(fh, start=2):
            if line.strip() == "":
                continue
            try:
                vals.extend(float(tok) for tok in line.split())
            except ValueError as exc:
                raise ValueError(f"{path}:{ln}: malformed value") from exc
    vals = np.array(vals)
    if len(vals) != nx * ny:
        raise ValueError(f"{path}: expected {nx * ny} values, found {len(vals)}")
    return nx, ny, vals
