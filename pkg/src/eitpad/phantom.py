"""Touch phantoms and lattice conductivity patterns.

Shapes are rasterized onto the mesh by centroid membership: an element takes
a touch's conductivity level when its centroid falls inside the shape. The
lattice pattern assigns channel conductivity to elements near the gridlines
of a square lattice (plus a band along the domain boundary so every
electrode stays connected to the conductive network) and a small positive
filler conductivity elsewhere.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import LatticeConnectivityError
from .mesh import (
    ConductivityField,
    Mesh,
    boundary_edge_elements,
    element_adjacency,
)

DISC = "disc"
ANNULUS = "annulus"

# Slope of the press-depth surrogate: a 5 mm press on a 1 S/m layer reaches
# the 5 S/m level used by the deepest-press comparisons.
DEFAULT_PRESS_GAIN = 0.8

# Pitch comparable to the touch size so a press always engages several
# channels; widths quantize cleanly on the sweep grid. Channel-width
# ordering of the sensitivity statistic degrades into rasterization noise
# when the grid step cannot resolve the width differences.
DEFAULT_LATTICE_PITCH_MM = 10.0
DEFAULT_LATTICE_BACKGROUND = 1e-6
DEFAULT_LATTICE_WIDTHS_MM = (2.0, 3.0, 4.0, 6.0, 8.0)
DEFAULT_TOUCH_LEVELS = (2.0, 3.0, 4.0, 5.0)


@dataclass(frozen=True)
class TouchSpec:
    """One touch: a disc or annulus set to a conductivity level."""

    shape: str
    center: tuple[float, float]
    level: float
    radius: float | None = None
    inner_radius: float | None = None
    outer_radius: float | None = None

    def __post_init__(self) -> None:
        if self.level <= 0:
            raise ValueError("touch level must be > 0")
        if self.shape == DISC:
            if self.radius is None or self.radius <= 0:
                raise ValueError("disc requires radius > 0")
        elif self.shape == ANNULUS:
            if (
                self.inner_radius is None
                or self.outer_radius is None
                or self.inner_radius <= 0
                or self.outer_radius <= self.inner_radius
            ):
                raise ValueError("annulus requires 0 < inner_radius < outer_radius")
        else:
            raise ValueError(f"unknown touch shape {self.shape!r}")

    def contains(self, points: np.ndarray) -> np.ndarray:
        d = np.hypot(
            points[:, 0] - self.center[0], points[:, 1] - self.center[1]
        )
        if self.shape == DISC:
            return d <= self.radius
        return (d >= self.inner_radius) & (d <= self.outer_radius)


def disc(center: tuple[float, float], radius: float, level: float) -> TouchSpec:
    return TouchSpec(DISC, center, level, radius=radius)


def annulus(
    center: tuple[float, float], inner: float, outer: float, level: float
) -> TouchSpec:
    return TouchSpec(ANNULUS, center, level, inner_radius=inner, outer_radius=outer)


@dataclass(frozen=True)
class LatticeSpec:
    """Square conductive-channel lattice with insulating filler."""

    pitch: float
    channel_width: float
    background_conductivity: float = DEFAULT_LATTICE_BACKGROUND

    def __post_init__(self) -> None:
        if self.pitch <= 0:
            raise ValueError("pitch must be > 0")
        if not 0 < self.channel_width <= self.pitch:
            raise ValueError("need 0 < channel_width <= pitch")
        if self.background_conductivity <= 0:
            raise ValueError("background_conductivity must be > 0")


def apply_touches(
    field: ConductivityField, mesh: Mesh, touches: list[TouchSpec]
) -> ConductivityField:
    """Set touched elements to each touch's level; later touches win."""
    values = field.values.copy()
    centroids = mesh.element_centroids
    for touch in touches:
        values[touch.contains(centroids)] = touch.level
    return ConductivityField(values)


def apply_lattice(
    mesh: Mesh, spec: LatticeSpec, channel_conductivity: float
) -> ConductivityField:
    """Lattice conductivity pattern with a guaranteed-conductive rim.

    Raises LatticeConnectivityError if the conductive network does not join
    all electrodes (cannot happen with the rim band, but the check guards
    degenerate meshes).
    """
    if channel_conductivity <= 0:
        raise ValueError("channel_conductivity must be > 0")
    centroids = mesh.element_centroids
    half = spec.channel_width / 2.0
    x, y = centroids[:, 0], centroids[:, 1]
    side = mesh.domain_side

    def near_gridlines(t: np.ndarray) -> np.ndarray:
        offset = np.abs(t - np.rint(t / spec.pitch) * spec.pitch)
        return offset <= half

    # The electrode rim covers at least the outermost cell ring: a half-cell
    # band leaves boundary triangles joined only at corners, which would
    # disconnect the network that the physical sensor's continuous outer
    # band provides.
    divisions = round((mesh.n_elements / 2) ** 0.5)
    rim_depth = max(half, side / divisions)
    rim = (
        (x <= rim_depth)
        | (x >= side - rim_depth)
        | (y <= rim_depth)
        | (y >= side - rim_depth)
    )
    conductive = near_gridlines(x) | near_gridlines(y) | rim
    values = np.where(
        conductive, channel_conductivity, spec.background_conductivity
    )
    field = ConductivityField(values)
    _check_electrode_connectivity(mesh, conductive)
    return field


def _check_electrode_connectivity(mesh: Mesh, conductive: np.ndarray) -> None:
    """All electrodes must attach to one conductive component."""
    edge_owner = boundary_edge_elements(mesh)
    electrode_elements: list[list[int]] = []
    for segs in mesh.electrodes:
        owners = []
        for a, b in segs:
            key = (a, b) if a < b else (b, a)
            owners.append(edge_owner[key])
        electrode_elements.append(owners)

    seeds = [e for owners in electrode_elements for e in owners if conductive[e]]
    disconnected = [
        i
        for i, owners in enumerate(electrode_elements)
        if not any(conductive[e] for e in owners)
    ]
    if not disconnected:
        adjacency = element_adjacency(mesh)
        reached = np.zeros(mesh.n_elements, dtype=bool)
        queue = deque(seeds[:1])
        reached[seeds[:1]] = True
        while queue:
            e = queue.popleft()
            for nb in adjacency[e]:
                if conductive[nb] and not reached[nb]:
                    reached[nb] = True
                    queue.append(nb)
        disconnected = [
            i
            for i, owners in enumerate(electrode_elements)
            if not any(reached[e] for e in owners)
        ]
    if disconnected:
        raise LatticeConnectivityError(
            f"lattice disconnects electrodes {disconnected} from the "
            f"conductive network"
        )


def press_to_level(
    depth_mm: float, base: float = 1.0, gain: float = DEFAULT_PRESS_GAIN
) -> float:
    """Linear press-depth to conductivity surrogate, clamped below at base."""
    if depth_mm < 0:
        raise ValueError("depth_mm must be >= 0")
    return max(base, base + gain * depth_mm)
