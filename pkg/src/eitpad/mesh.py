"""Structured triangular mesh of the square sensing layer with boundary
electrodes.

The sensing layer is discretized as a (divisions x divisions) grid of square
cells on [0, side] x [0, side], each cell split into two right triangles.
The split diagonal alternates with cell parity so that, for an even number
of divisions, the triangulation is invariant under 90-degree rotations of
the domain; electrode placement shares that symmetry.

Electrodes are modeled as boundary segments (gap model): each electrode owns
the ordered run of boundary edges that its contact interval overlaps.
Coordinates are millimetres throughout; conductivity is S/m.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    DimensionMismatchError,
    ElectrodeLayoutError,
    MeshResolutionError,
)

Edge = tuple[int, int]

DEFAULT_SIDE_MM = 100.0
DEFAULT_ELECTRODE_COUNT = 16
DEFAULT_ELECTRODE_WIDTH_MM = 3.0
# Data generation runs on the finer grid, reconstruction on the coarser one,
# so synthetic measurements are never inverted on their own discretization.
SIM_DIVISIONS = 64
RECON_DIVISIONS = 32

_OVERLAP_TOL = 1e-9


@dataclass(frozen=True)
class Mesh:
    """Triangulated square domain with boundary electrode segments.

    nodes: (n_nodes, 2) coordinates in mm.
    elements: (n_elements, 3) node indices, counterclockwise.
    electrodes: per electrode, the ordered tuple of boundary edges
        (node index pairs, ordered counterclockwise along the boundary).
    domain_side: side length in mm.
    """

    nodes: np.ndarray
    elements: np.ndarray
    electrodes: tuple[tuple[Edge, ...], ...]
    domain_side: float

    def __post_init__(self) -> None:
        self.nodes.setflags(write=False)
        self.elements.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def n_electrodes(self) -> int:
        return len(self.electrodes)

    @cached_property
    def element_areas(self) -> np.ndarray:
        """Signed triangle areas in mm^2 (positive for CCW elements)."""
        p = self.nodes[self.elements]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def element_centroids(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)

    @cached_property
    def mesh_id(self) -> str:
        """Content hash used as provenance reference by downstream artifacts."""
        h = hashlib.sha256()
        h.update(np.float64(self.domain_side).tobytes())
        h.update(np.ascontiguousarray(self.nodes, dtype=np.float64).tobytes())
        h.update(np.ascontiguousarray(self.elements, dtype=np.int64).tobytes())
        h.update(json.dumps(self.electrodes, sort_keys=True).encode())
        return h.hexdigest()[:12]

    def electrode_nodes(self, idx: int) -> np.ndarray:
        """Unique node indices of an electrode, in boundary order."""
        seen: dict[int, None] = {}
        for a, b in self.electrodes[idx]:
            seen.setdefault(a)
            seen.setdefault(b)
        return np.array(list(seen), dtype=int)


@dataclass(frozen=True)
class ConductivityField:
    """Piecewise-constant per-element conductivity in S/m."""

    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise DimensionMismatchError("conductivity values must be 1-D")
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0.0):
            raise ValueError("conductivity values must be finite and > 0")
        object.__setattr__(self, "values", vals)
        vals.setflags(write=False)


def build_mesh(
    side_mm: float = DEFAULT_SIDE_MM,
    divisions: int = RECON_DIVISIONS,
    electrode_count: int = DEFAULT_ELECTRODE_COUNT,
    electrode_width_mm: float = DEFAULT_ELECTRODE_WIDTH_MM,
) -> Mesh:
    """Build the structured triangulation with evenly spaced electrodes.

    Produces 2*divisions^2 CCW triangles and electrode_count electrodes,
    electrode_count/4 per side, centered evenly along each side and ordered
    counterclockwise starting from the bottom side.

    Raises ElectrodeLayoutError when electrodes cannot fit without touching,
    MeshResolutionError when the grid cannot resolve separate electrodes.
    """
    if side_mm <= 0:
        raise ValueError("side_mm must be > 0")
    if divisions < 1:
        raise ValueError("divisions must be >= 1")
    if electrode_count < 4 or electrode_count % 4 != 0:
        raise ElectrodeLayoutError(
            f"electrode_count must be a multiple of 4 and >= 4, got {electrode_count}"
        )
    if electrode_width_mm <= 0:
        raise ElectrodeLayoutError("electrode_width_mm must be > 0")
    per_side = electrode_count // 4
    if electrode_width_mm > side_mm / per_side + _OVERLAP_TOL:
        raise ElectrodeLayoutError(
            f"{per_side} electrodes of width {electrode_width_mm} mm do not fit "
            f"on a {side_mm} mm side"
        )

    nodes, elements = _structured_grid(side_mm, divisions)
    electrodes = _place_electrodes(
        side_mm, divisions, per_side, electrode_width_mm
    )
    return Mesh(nodes, elements, electrodes, float(side_mm))


def _structured_grid(side: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    coords = np.linspace(0.0, side, n + 1)
    xx, yy = np.meshgrid(coords, coords)  # index [iy, ix]
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    def nid(ix: int, iy: int) -> int:
        return iy * (n + 1) + ix

    elements = np.empty((2 * n * n, 3), dtype=np.int64)
    k = 0
    for iy in range(n):
        for ix in range(n):
            n00 = nid(ix, iy)
            n10 = nid(ix + 1, iy)
            n01 = nid(ix, iy + 1)
            n11 = nid(ix + 1, iy + 1)
            if (ix + iy) % 2 == 0:
                # diagonal from lower-left to upper-right
                elements[k] = (n00, n10, n11)
                elements[k + 1] = (n00, n11, n01)
            else:
                # diagonal from lower-right to upper-left
                elements[k] = (n00, n10, n01)
                elements[k + 1] = (n10, n11, n01)
            k += 2
    return nodes, elements


def _boundary_edges_ccw(side: float, n: int) -> list[list[Edge]]:
    """Boundary edges per side, ordered CCW from the side's start corner."""

    def nid(ix: int, iy: int) -> int:
        return iy * (n + 1) + ix

    bottom = [(nid(i, 0), nid(i + 1, 0)) for i in range(n)]
    right = [(nid(n, j), nid(n, j + 1)) for j in range(n)]
    top = [(nid(n - i, n), nid(n - i - 1, n)) for i in range(n)]
    left = [(nid(0, n - j), nid(0, n - j - 1)) for j in range(n)]
    return [bottom, right, top, left]


def _place_electrodes(
    side: float, n: int, per_side: int, width: float
) -> tuple[tuple[Edge, ...], ...]:
    h = side / n
    sides = _boundary_edges_ccw(side, n)
    electrodes: list[tuple[Edge, ...]] = []
    for edges in sides:
        for j in range(per_side):
            center = (j + 0.5) * side / per_side
            lo, hi = center - width / 2.0, center + width / 2.0
            captured = [
                edges[i]
                for i in range(n)
                if min(hi, (i + 1) * h) - max(lo, i * h) > _OVERLAP_TOL * side
            ]
            if not captured:
                raise MeshResolutionError(
                    f"electrode of width {width} mm captured no boundary edge "
                    f"(grid step {h} mm)"
                )
            electrodes.append(tuple(captured))

    claimed: set[Edge] = set()
    for segs in electrodes:
        for e in segs:
            if e in claimed:
                raise MeshResolutionError(
                    "grid step too coarse: adjacent electrodes share a "
                    "boundary edge; increase divisions"
                )
            claimed.add(e)
    return tuple(electrodes)


def uniform_field(mesh: Mesh, sigma: float) -> ConductivityField:
    """Constant conductivity field over the whole mesh."""
    if sigma <= 0:
        raise ValueError(f"conductivity must be > 0, got {sigma}")
    return ConductivityField(np.full(mesh.n_elements, float(sigma)))


def _barycentric(mesh: Mesh, points: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of each point w.r.t. every element.

    Returns (n_points, n_elements, 3).
    """
    p = mesh.nodes[mesh.elements]  # (E, 3, 2)
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (
        b[:, 1] - a[:, 1]
    )
    dx = points[:, None, 0] - a[None, :, 0]
    dy = points[:, None, 1] - a[None, :, 1]
    l1 = ((c[:, 1] - a[:, 1]) * dx - (c[:, 0] - a[:, 0]) * dy) / det
    l2 = (-(b[:, 1] - a[:, 1]) * dx + (b[:, 0] - a[:, 0]) * dy) / det
    l0 = 1.0 - l1 - l2
    return np.stack([l0, l1, l2], axis=-1)


def locate_elements(mesh: Mesh, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Element index containing each point, -1 for points outside the domain.

    Containment is boundary-inclusive; a point on a shared edge resolves to
    the lowest containing element index.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lam = _barycentric(mesh, pts)
    inside = (lam >= -tol).all(axis=-1)
    first = inside.argmax(axis=1)
    found = inside.any(axis=1)
    return np.where(found, first, -1)


def locate_element(mesh: Mesh, point: tuple[float, float]) -> int | None:
    """Index of a triangle containing the point, or None if outside."""
    idx = int(locate_elements(mesh, np.asarray([point]))[0])
    return None if idx < 0 else idx


def element_adjacency(mesh: Mesh) -> list[list[int]]:
    """Edge-adjacency lists between triangles."""
    edge_owner: dict[Edge, int] = {}
    adj: list[list[int]] = [[] for _ in range(mesh.n_elements)]
    for e, tri in enumerate(mesh.elements):
        for i in range(3):
            a, b = int(tri[i]), int(tri[(i + 1) % 3])
            key = (a, b) if a < b else (b, a)
            other = edge_owner.pop(key, None)
            if other is None:
                edge_owner[key] = e
            else:
                adj[e].append(other)
                adj[other].append(e)
    return adj


def boundary_edge_elements(mesh: Mesh) -> dict[Edge, int]:
    """Map from boundary edge (sorted node pair) to its single owner element."""
    counts: dict[Edge, list[int]] = {}
    for e, tri in enumerate(mesh.elements):
        for i in range(3):
            a, b = int(tri[i]), int(tri[(i + 1) % 3])
            key = (a, b) if a < b else (b, a)
            counts.setdefault(key, []).append(e)
    return {edge: owners[0] for edge, owners in counts.items() if len(owners) == 1}


def mesh_to_json(mesh: Mesh) -> str:
    doc = {
        "domain_side": mesh.domain_side,
        "electrodes": [[list(edge) for edge in segs] for segs in mesh.electrodes],
        "elements": mesh.elements.tolist(),
        "nodes": mesh.nodes.tolist(),
    }
    return json.dumps(doc, sort_keys=True)


def mesh_from_json(text: str) -> Mesh:
    doc = json.loads(text)
    electrodes = tuple(
        tuple((int(a), int(b)) for a, b in segs) for segs in doc["electrodes"]
    )
    return Mesh(
        nodes=np.asarray(doc["nodes"], dtype=float),
        elements=np.asarray(doc["elements"], dtype=np.int64),
        electrodes=electrodes,
        domain_side=float(doc["domain_side"]),
    )
