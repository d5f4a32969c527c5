"""Linearized sensitivity of measurements to per-element conductivity.

Entries come from the adjoint identity: the derivative of a measurement with
respect to one element's conductivity equals
-area_k * (grad u_drive . grad u_meas)_k, with u_drive the drive-pair
solution at the operating current and u_meas the unit-current solution of
the measurement pair. Since the measurement functional equals the unit-
current load vector, this is the exact derivative of the discrete forward
map, so finite differences agree to rounding plus perturbation error.

Only one solve per distinct electrode pair is needed; with an adjacent
protocol that is E solves for the whole matrix.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .forward import (
    DEFAULT_DRIVE_CURRENT,
    _electrode_load_matrix,
    _p1_coefficients,
    assemble_system,
)
from .mesh import ConductivityField, Mesh
from .protocol import Protocol


@dataclass(frozen=True)
class SensitivityMatrix:
    """Dense (patterns x elements) map from conductivity change to voltage
    change, in V per (S/m), linearized at reference_field."""

    entries: np.ndarray
    reference_field: np.ndarray
    protocol_id: str
    mesh_id: str

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.entries)):
            raise ValueError("sensitivity entries must be finite")
        self.entries.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


def compute_jacobian(
    mesh: Mesh,
    field: ConductivityField,
    protocol: Protocol,
    current: float = DEFAULT_DRIVE_CURRENT,
) -> SensitivityMatrix:
    """Adjoint computation of the sensitivity matrix at the given field."""
    if protocol.electrode_count != mesh.n_electrodes:
        raise DimensionMismatchError(
            f"protocol expects {protocol.electrode_count} electrodes, mesh "
            f"has {mesh.n_electrodes}"
        )
    system = assemble_system(mesh, field)
    loads = _electrode_load_matrix(mesh)

    pairs: dict[tuple[int, int], int] = {}
    for p in protocol.patterns:
        pairs.setdefault((p.drive_pos, p.drive_neg))
        pairs.setdefault((p.meas_pos, p.meas_neg))
    pairs = {pair: i for i, pair in enumerate(pairs)}

    # unit-current solutions, one per distinct electrode pair
    solutions = np.column_stack(
        [system.solve(loads[:, a] - loads[:, b]) for a, b in pairs]
    )

    b, c = _p1_coefficients(mesh)
    areas = mesh.element_areas
    nodal = solutions[mesh.elements]  # (E, 3, n_pairs)
    gx = np.einsum("el,elp->ep", b, nodal) / (2.0 * areas)[:, None]
    gy = np.einsum("el,elp->ep", c, nodal) / (2.0 * areas)[:, None]

    qd = np.array([pairs[(p.drive_pos, p.drive_neg)] for p in protocol.patterns])
    qm = np.array([pairs[(p.meas_pos, p.meas_neg)] for p in protocol.patterns])
    entries = -current * areas[None, :] * (
        gx[:, qd].T * gx[:, qm].T + gy[:, qd].T * gy[:, qm].T
    )
    return SensitivityMatrix(
        entries=entries,
        reference_field=field.values.copy(),
        protocol_id=protocol.protocol_id,
        mesh_id=mesh.mesh_id,
    )


def predict_delta(jacobian: SensitivityMatrix, delta_sigma: np.ndarray) -> np.ndarray:
    """Predicted voltage changes for a conductivity change (J @ dsigma)."""
    ds = np.asarray(delta_sigma, dtype=float)
    if ds.shape != (jacobian.shape[1],):
        raise DimensionMismatchError(
            f"delta_sigma has shape {ds.shape}, expected ({jacobian.shape[1]},)"
        )
    return jacobian.entries @ ds


def jacobian_to_json(jac: SensitivityMatrix) -> str:
    doc = {
        "entries_row_major": jac.entries.ravel().tolist(),
        "mesh_id": jac.mesh_id,
        "protocol_id": jac.protocol_id,
        "reference_field": jac.reference_field.tolist(),
        "shape": list(jac.shape),
    }
    return json.dumps(doc, sort_keys=True)


def jacobian_from_json(text: str) -> SensitivityMatrix:
    doc = json.loads(text)
    shape = tuple(doc["shape"])
    return SensitivityMatrix(
        entries=np.asarray(doc["entries_row_major"], dtype=float).reshape(shape),
        reference_field=np.asarray(doc["reference_field"], dtype=float),
        protocol_id=doc["protocol_id"],
        mesh_id=doc["mesh_id"],
    )


def jacobian_to_csv(jac: SensitivityMatrix) -> str:
    out = io.StringIO()
    out.write(
        f"# protocol={jac.protocol_id} mesh={jac.mesh_id} "
        f"rows={jac.shape[0]} cols={jac.shape[1]}\n"
    )
    for row in jac.entries:
        out.write(",".join(repr(float(v)) for v in row))
        out.write("\n")
    return out.getvalue()
