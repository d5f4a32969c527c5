"""Sensitivity and reconstruction-quality metrics.

The sensitivity statistic is the mean absolute per-measurement relative
voltage change between a reference frame and a touched frame. Localization
quality is measured through connected-component blobs of thresholded
reconstruction images and their matched distances to ground-truth centers.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import BlobCountMismatchError, DimensionMismatchError
from .forward import MeasurementFrame
from .inverse import ReconstructionImage
from .mesh import Mesh, element_adjacency

ZERO_REFERENCE_TOL = 1e-12
DEFAULT_BLOB_THRESHOLD = 0.3


@dataclass(frozen=True)
class SensitivityReport:
    """Mean absolute relative voltage change for one configuration.

    per_measurement_changes holds NaN where the reference voltage was below
    ZERO_REFERENCE_TOL; excluded_count tallies those entries.
    """

    mean_relative_change: float
    per_measurement_changes: np.ndarray
    config_label: str
    excluded_count: int


@dataclass(frozen=True)
class Blob:
    centroid: tuple[float, float]
    area: float
    peak: float
    elements: tuple[int, ...]


@dataclass(frozen=True)
class BlobReport:
    blobs: tuple[Blob, ...]
    threshold: float


def mean_relative_change(
    reference: MeasurementFrame,
    touched: MeasurementFrame,
    config_label: str = "",
) -> SensitivityReport:
    """Average of |touched - reference| / |reference| over measurements."""
    if reference.protocol_id != touched.protocol_id or len(reference) != len(
        touched
    ):
        raise DimensionMismatchError("frames come from different protocols")
    ref = reference.voltages
    changes = np.abs(touched.voltages - ref) / np.abs(ref)
    tiny = np.abs(ref) < ZERO_REFERENCE_TOL
    changes = np.where(tiny, np.nan, changes)
    excluded = int(tiny.sum())
    mean = float(np.nanmean(changes)) if excluded < len(ref) else 0.0
    return SensitivityReport(mean, changes, config_label, excluded)


def detect_blobs(
    image: ReconstructionImage,
    mesh: Mesh,
    threshold: float = DEFAULT_BLOB_THRESHOLD,
) -> BlobReport:
    """Connected components of the superlevel set at threshold * max.

    Components use triangle edge-adjacency; each blob reports its
    area-weighted centroid, total area, and peak value. Blobs are ordered by
    their lowest element index, so output order is deterministic.
    """
    if not image.postprocessed:
        raise ValueError("detect_blobs expects a postprocessed image")
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must be in (0, 1)")
    values = image.values
    peak = float(values.max()) if values.size else 0.0
    if peak <= 0.0:
        return BlobReport((), threshold)
    mask = values >= threshold * peak
    adjacency = element_adjacency(mesh)
    areas = mesh.element_areas
    centroids = mesh.element_centroids

    visited = np.zeros(mesh.n_elements, dtype=bool)
    blobs: list[Blob] = []
    for start in range(mesh.n_elements):
        if not mask[start] or visited[start]:
            continue
        component = []
        queue = deque([start])
        visited[start] = True
        while queue:
            e = queue.popleft()
            component.append(e)
            for nb in adjacency[e]:
                if mask[nb] and not visited[nb]:
                    visited[nb] = True
                    queue.append(nb)
        idx = np.array(component)
        w = areas[idx]
        cx = float((centroids[idx, 0] * w).sum() / w.sum())
        cy = float((centroids[idx, 1] * w).sum() / w.sum())
        blobs.append(
            Blob(
                centroid=(cx, cy),
                area=float(w.sum()),
                peak=float(values[idx].max()),
                elements=tuple(int(i) for i in idx),
            )
        )
    return BlobReport(tuple(blobs), threshold)


def dominant_blob(report: BlobReport) -> Blob | None:
    """Blob with the largest peak; first one on ties."""
    if not report.blobs:
        return None
    return max(report.blobs, key=lambda b: b.peak)


def localization_error(
    report: BlobReport, truth: list[tuple[float, float]]
) -> list[float]:
    """Minimum-cost one-to-one blob/truth matching distances, in truth order."""
    if len(report.blobs) != len(truth):
        raise BlobCountMismatchError(
            f"{len(report.blobs)} blobs vs {len(truth)} true centers"
        )
    if not truth:
        return []
    t = np.asarray(truth, dtype=float)
    b = np.asarray([blob.centroid for blob in report.blobs], dtype=float)
    cost = np.hypot(
        t[:, None, 0] - b[None, :, 0], t[:, None, 1] - b[None, :, 1]
    )
    rows, cols = linear_sum_assignment(cost)
    distances = np.empty(len(truth))
    distances[rows] = cost[rows, cols]
    return [float(d) for d in distances]


def report_to_json(report: BlobReport) -> str:
    doc = {
        "blobs": [
            {
                "area_mm2": blob.area,
                "centroid_mm": list(blob.centroid),
                "element_count": len(blob.elements),
                "peak": blob.peak,
            }
            for blob in report.blobs
        ],
        "threshold": report.threshold,
    }
    return json.dumps(doc, sort_keys=True)
