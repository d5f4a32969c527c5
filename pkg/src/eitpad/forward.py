"""Finite-element forward model of quasistatic conduction in the sensing
layer.

The conduction equation div(sigma grad u) = 0 is discretized with linear
(P1) triangular elements and piecewise-constant conductivity. Current is
injected through electrode boundary segments (gap model): the drive current
is spread over an electrode's edges proportional to edge length, which under
P1 gives each edge endpoint half of that edge's share. Electrode voltages
are read as the edge-length-weighted (trapezoidal) average of the potential
along the electrode, i.e. with the same weights as the injection load. That
makes measurement the exact discrete adjoint of excitation, so reciprocity
holds to solver precision rather than to discretization error.

The singular Neumann system is gauge-fixed by grounding node 0; because the
load vector sums to zero the discarded equation is implied by the rest, and
the reduced solve reproduces the exact zero-gauge solution.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionMismatchError
from .mesh import ConductivityField, Mesh
from .protocol import Pattern, Protocol

DEFAULT_DRIVE_CURRENT = 1e-3  # amperes; amplitude cancels in relative metrics


@dataclass(frozen=True)
class PotentialField:
    """Nodal potentials in volts, gauge u[0] = 0."""

    node_potentials: np.ndarray


@dataclass(frozen=True)
class MeasurementFrame:
    """Protocol-ordered measurement voltages for one conductivity state."""

    voltages: np.ndarray
    protocol_id: str
    drive_current: float

    def __post_init__(self) -> None:
        v = np.asarray(self.voltages, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("frame voltages must be finite")
        object.__setattr__(self, "voltages", v)
        v.setflags(write=False)

    def __len__(self) -> int:
        return len(self.voltages)


def _p1_coefficients(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Per-element gradient coefficients (b, c) of the P1 hat functions.

    grad(phi_i) = (b_i, c_i) / (2A) with b_i = y_j - y_k, c_i = x_k - x_j
    over cyclic (i, j, k).
    """
    p = mesh.nodes[mesh.elements]  # (E, 3, 2)
    x, y = p[..., 0], p[..., 1]
    b = np.stack(
        [y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1
    )
    c = np.stack(
        [x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1
    )
    return b, c


class ConductionSystem:
    """Assembled stiffness operator plus a reusable sparse factorization."""

    def __init__(self, mesh: Mesh, field: ConductivityField):
        if len(field.values) != mesh.n_elements:
            raise DimensionMismatchError(
                f"field has {len(field.values)} values for "
                f"{mesh.n_elements} elements"
            )
        self.mesh = mesh
        self.field = field
        self.stiffness = _assemble_stiffness(mesh, field)

    @cached_property
    def _solve(self):
        """Factorized solver of the grounded (node 0) SPD system."""
        a = self.stiffness.tolil(copy=True)
        a[0, :] = 0.0
        a[:, 0] = 0.0
        a[0, 0] = 1.0
        return spla.factorized(a.tocsc())

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        b = np.asarray(rhs, dtype=float).copy()
        b[0] = 0.0
        return self._solve(b)


def _assemble_stiffness(mesh: Mesh, field: ConductivityField) -> sp.csr_matrix:
    b, c = _p1_coefficients(mesh)
    areas = mesh.element_areas
    # local K_ij = sigma (b_i b_j + c_i c_j) / (4A)
    scale = field.values / (4.0 * areas)
    local = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :])
    local = local * scale[:, None, None]
    rows = np.repeat(mesh.elements, 3, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, 3)).ravel()
    mat = sp.coo_matrix(
        (local.ravel(), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes)
    )
    return mat.tocsr()


def assemble_system(mesh: Mesh, field: ConductivityField) -> ConductionSystem:
    """Assemble the P1 stiffness system for one conductivity state."""
    return ConductionSystem(mesh, field)


def electrode_load(mesh: Mesh, electrode: int) -> np.ndarray:
    """Unit-current load vector of one electrode (weights sum to 1).

    Each electrode edge carries current proportional to its length; with P1
    elements both edge endpoints receive half of the edge share. The same
    vector doubles as the voltage-averaging functional of the electrode.
    """
    f = np.zeros(mesh.n_nodes)
    segs = mesh.electrodes[electrode]
    lengths = np.array(
        [np.linalg.norm(mesh.nodes[b] - mesh.nodes[a]) for a, b in segs]
    )
    total = lengths.sum()
    for (a, b), ell in zip(segs, lengths):
        w = ell / (2.0 * total)
        f[a] += w
        f[b] += w
    return f


def pair_load(mesh: Mesh, pair: tuple[int, int], current: float = 1.0) -> np.ndarray:
    """Signed load vector injecting +current at pair[0], -current at pair[1]."""
    return current * (electrode_load(mesh, pair[0]) - electrode_load(mesh, pair[1]))


def solve_drive(
    system: ConductionSystem,
    mesh: Mesh,
    drive_pair: tuple[int, int],
    current: float = DEFAULT_DRIVE_CURRENT,
) -> PotentialField:
    """Potential field for one drive pair at the given current."""
    rhs = pair_load(mesh, drive_pair, current)
    return PotentialField(system.solve(rhs))


def _electrode_load_matrix(mesh: Mesh) -> np.ndarray:
    """(n_nodes, n_electrodes) stack of unit electrode loads."""
    return np.column_stack(
        [electrode_load(mesh, e) for e in range(mesh.n_electrodes)]
    )


def simulate_frame(
    mesh: Mesh,
    field: ConductivityField,
    protocol: Protocol,
    current: float = DEFAULT_DRIVE_CURRENT,
) -> MeasurementFrame:
    """Simulate all protocol measurements for one conductivity state.

    One linear solve per distinct drive pair; solutions are reused across
    patterns sharing the drive pair.
    """
    if protocol.electrode_count != mesh.n_electrodes:
        raise DimensionMismatchError(
            f"protocol expects {protocol.electrode_count} electrodes, mesh "
            f"has {mesh.n_electrodes}"
        )
    system = assemble_system(mesh, field)
    loads = _electrode_load_matrix(mesh)
    solutions: dict[tuple[int, int], np.ndarray] = {}
    for pair in protocol.drive_pairs():
        rhs = current * (loads[:, pair[0]] - loads[:, pair[1]])
        solutions[pair] = system.solve(rhs)
    voltages = np.empty(len(protocol))
    for i, p in enumerate(protocol.patterns):
        u = solutions[(p.drive_pos, p.drive_neg)]
        voltages[i] = loads[:, p.meas_pos] @ u - loads[:, p.meas_neg] @ u
    return MeasurementFrame(voltages, protocol.protocol_id, current)


def add_noise(
    frame: MeasurementFrame, snr_db: float | None, seed: int
) -> MeasurementFrame:
    """Add zero-mean Gaussian noise at the requested frame SNR.

    The noise standard deviation satisfies
    10*log10(signal power / noise power) = snr_db. Passing None or +inf
    returns the frame unchanged. Deterministic for a given seed.
    """
    if snr_db is None or math.isinf(snr_db):
        return frame
    power = float(np.mean(frame.voltages**2))
    std = math.sqrt(power * 10.0 ** (-snr_db / 10.0))
    rng = np.random.default_rng(seed)
    noisy = frame.voltages + rng.normal(0.0, std, size=len(frame))
    return replace(frame, voltages=noisy)


def frame_to_csv(frame: MeasurementFrame, protocol: Protocol) -> str:
    """CSV with one row per pattern and a provenance comment header."""
    if len(frame) != len(protocol):
        raise DimensionMismatchError("frame length does not match protocol")
    out = io.StringIO()
    out.write(
        f"# protocol={frame.protocol_id} current={frame.drive_current!r}\n"
    )
    out.write("drive_pos,drive_neg,meas_pos,meas_neg,volts\n")
    for p, v in zip(protocol.patterns, frame.voltages):
        out.write(
            f"{p.drive_pos},{p.drive_neg},{p.meas_pos},{p.meas_neg},"
            f"{float(v)!r}\n"
        )
    return out.getvalue()


def frame_from_csv(text: str) -> tuple[MeasurementFrame, list[Pattern]]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0]
    if not header.startswith("# protocol="):
        raise ValueError("missing provenance header")
    fields = dict(item.split("=", 1) for item in header[2:].split())
    patterns = []
    volts = []
    for ln in lines[2:]:
        dp, dn, mp, mn, v = ln.split(",")
        patterns.append(Pattern(int(dp), int(dn), int(mp), int(mn)))
        volts.append(float(v))
    frame = MeasurementFrame(
        np.asarray(volts), fields["protocol"], float(fields["current"])
    )
    return frame, patterns
