"""Regularized reconstruction of conductivity changes from voltage changes.

Two solvers for the linearized problem J dsigma = dV:

- Tikhonov: closed-form solution of (J^T J + lambda_eff I) x = J^T dV.
- L1: iterative shrinkage-thresholding (ISTA) on
  0.5 ||J x - dV||^2 + lambda_eff ||x||_1, fixed iteration count,
  step 1/L with L the largest eigenvalue of J^T J from power iteration.

lambda_eff is the raw factor under "absolute" scaling, or the factor times
the largest diagonal entry of J^T J under "spectral" scaling (default), so
the same nominal factor behaves consistently across mesh resolutions and
drive currents.

Solvers never clip: sign-faithful estimates go in, and postprocess() applies
the clamp-negatives-then-normalize step separately.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatchError, IllPosedError
from .mesh import Mesh, locate_elements
from .sensitivity import SensitivityMatrix

TIKHONOV = "tikhonov"
L1 = "l1"

_POWER_ITERATIONS = 50
_POWER_TOL = 1e-6


@dataclass(frozen=True)
class ReconstructionParams:
    method: str = TIKHONOV
    lam: float = 0.01
    iterations: int = 200
    lambda_scaling: str = "spectral"  # or "absolute"

    def __post_init__(self) -> None:
        if self.method not in (TIKHONOV, L1):
            raise ValueError(f"unknown method {self.method!r}")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.lambda_scaling not in ("absolute", "spectral"):
            raise ValueError(f"unknown lambda_scaling {self.lambda_scaling!r}")


@dataclass(frozen=True)
class ReconstructionImage:
    """Per-element conductivity-change estimate in S/m.

    raw_peak carries the pre-normalization positive peak once postprocessed,
    so downstream consumers can threshold on physical magnitude while the
    normalized values stay comparable across frames.
    """

    values: np.ndarray
    mesh_id: str
    postprocessed: bool = False
    raw_peak: float | None = None

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        v.setflags(write=False)


def effective_lambda(jacobian: SensitivityMatrix, params: ReconstructionParams) -> float:
    if params.lambda_scaling == "absolute":
        return params.lam
    diag = np.einsum("ij,ij->j", jacobian.entries, jacobian.entries)
    return params.lam * float(diag.max())


def _check_delta(jacobian: SensitivityMatrix, delta_v: np.ndarray) -> np.ndarray:
    dv = np.asarray(delta_v, dtype=float)
    if dv.shape != (jacobian.shape[0],):
        raise DimensionMismatchError(
            f"delta_v has shape {dv.shape}, expected ({jacobian.shape[0]},)"
        )
    return dv


def tikhonov_reconstruct(
    jacobian: SensitivityMatrix,
    delta_v: np.ndarray,
    params: ReconstructionParams = ReconstructionParams(),
) -> ReconstructionImage:
    """Solve the normal equations (J^T J + lambda_eff I) x = J^T dV.

    Uses the equivalent dual form J^T (J J^T + lambda_eff I)^{-1} dV when the
    system is underdetermined, which is cheaper and algebraically identical.
    """
    if params.method != TIKHONOV:
        raise ValueError("params.method must be 'tikhonov'")
    dv = _check_delta(jacobian, delta_v)
    j = jacobian.entries
    m, n = j.shape
    lam_eff = effective_lambda(jacobian, params)
    if lam_eff == 0.0:
        if np.linalg.matrix_rank(j) < n:
            raise IllPosedError(
                "lambda_eff = 0 with rank-deficient sensitivity matrix"
            )
        x = scipy.linalg.solve(j.T @ j, j.T @ dv, assume_a="pos")
    elif m < n:
        y = scipy.linalg.solve(
            j @ j.T + lam_eff * np.eye(m), dv, assume_a="pos"
        )
        x = j.T @ y
    else:
        x = scipy.linalg.solve(
            j.T @ j + lam_eff * np.eye(n), j.T @ dv, assume_a="pos"
        )
    return ReconstructionImage(x, jacobian.mesh_id)


def soft_threshold(values: np.ndarray, threshold: float) -> np.ndarray:
    """Proximal operator of the L1 norm."""
    return np.sign(values) * np.maximum(np.abs(values) - threshold, 0.0)


def largest_eigenvalue(
    jacobian_entries: np.ndarray,
    iterations: int = _POWER_ITERATIONS,
    tol: float = _POWER_TOL,
) -> float:
    """Largest eigenvalue of J^T J by power iteration."""
    j = jacobian_entries
    v = np.ones(j.shape[1]) / np.sqrt(j.shape[1])
    estimate = 0.0
    for _ in range(iterations):
        w = j.T @ (j @ v)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        previous, estimate = estimate, norm
        v = w / norm
        if abs(estimate - previous) <= tol * estimate:
            break
    return estimate


def l1_reconstruct(
    jacobian: SensitivityMatrix,
    delta_v: np.ndarray,
    params: ReconstructionParams = ReconstructionParams(method=L1),
    objective_trace: list[float] | None = None,
) -> ReconstructionImage:
    """ISTA with zero initialization and exactly params.iterations steps.

    When objective_trace is given, the objective value is appended before the
    first step and after every step (iterations + 1 entries).
    """
    if params.method != L1:
        raise ValueError("params.method must be 'l1'")
    dv = _check_delta(jacobian, delta_v)
    j = jacobian.entries
    lam_eff = effective_lambda(jacobian, params)
    lipschitz = largest_eigenvalue(j)
    if lipschitz == 0.0:
        return ReconstructionImage(np.zeros(j.shape[1]), jacobian.mesh_id)
    # tiny inflation keeps the descent guarantee when power iteration
    # converges from below
    step = 1.0 / (lipschitz * (1.0 + 1e-9))

    def objective(x: np.ndarray) -> float:
        r = j @ x - dv
        return 0.5 * float(r @ r) + lam_eff * float(np.abs(x).sum())

    x = np.zeros(j.shape[1])
    if objective_trace is not None:
        objective_trace.append(objective(x))
    for _ in range(params.iterations):
        grad = j.T @ (j @ x - dv)
        x = soft_threshold(x - step * grad, step * lam_eff)
        if objective_trace is not None:
            objective_trace.append(objective(x))
    return ReconstructionImage(x, jacobian.mesh_id)


def reconstruct(
    jacobian: SensitivityMatrix,
    delta_v: np.ndarray,
    params: ReconstructionParams,
) -> ReconstructionImage:
    """Dispatch on params.method."""
    if params.method == TIKHONOV:
        return tikhonov_reconstruct(jacobian, delta_v, params)
    return l1_reconstruct(jacobian, delta_v, params)


def postprocess(image: ReconstructionImage) -> ReconstructionImage:
    """Clamp negatives to zero, then normalize the maximum to 1.

    An all-nonpositive image becomes all-zero. The positive peak before
    normalization is kept as raw_peak.
    """
    if image.postprocessed:
        raise ValueError("image is already postprocessed")
    clamped = np.maximum(image.values, 0.0)
    peak = float(clamped.max()) if clamped.size else 0.0
    values = clamped / peak if peak > 0.0 else clamped
    return ReconstructionImage(
        values=values, mesh_id=image.mesh_id, postprocessed=True, raw_peak=peak
    )


def image_to_csv(image: ReconstructionImage, mesh: Mesh) -> str:
    """Per-element CSV: element index, centroid, value."""
    cent = mesh.element_centroids
    out = io.StringIO()
    out.write(f"# mesh={image.mesh_id} postprocessed={image.postprocessed}\n")
    out.write("element,cx_mm,cy_mm,value\n")
    for i, v in enumerate(image.values):
        out.write(
            f"{i},{float(cent[i, 0])!r},{float(cent[i, 1])!r},{float(v)!r}\n"
        )
    return out.getvalue()


def raster_grid(
    image: ReconstructionImage, mesh: Mesh, resolution: int = 64
) -> np.ndarray:
    """Nearest-element sampling of the image on a square pixel grid.

    Row 0 is the top of the domain (image convention); pixel centers sample
    element values, so the grid needs no interpolation machinery.
    """
    side = mesh.domain_side
    centers = (np.arange(resolution) + 0.5) * side / resolution
    xs, ys = np.meshgrid(centers, centers[::-1])
    pts = np.column_stack([xs.ravel(), ys.ravel()])
    idx = locate_elements(mesh, pts)
    vals = np.where(idx >= 0, image.values[np.clip(idx, 0, None)], 0.0)
    return vals.reshape(resolution, resolution)


def image_to_pgm(
    image: ReconstructionImage, mesh: Mesh, resolution: int = 64
) -> str:
    """Plain (P2) 8-bit PGM raster, values scaled so the image peak is 255."""
    grid = raster_grid(image, mesh, resolution)
    grid = np.maximum(grid, 0.0)
    peak = grid.max()
    if peak > 0:
        grid = grid / peak
    pixels = np.rint(grid * 255).astype(int)
    lines = ["P2", f"# mesh={image.mesh_id}", f"{resolution} {resolution}", "255"]
    for row in pixels:
        lines.append(" ".join(str(v) for v in row))
    return "\n".join(lines) + "\n"
