"""Touch event extraction and touch-to-action mapping.

Reconstructed frames are reduced to touch states (active flag + dominant
blob centroid), a debounced event engine turns state streams into
press_start/press_end events, and a region layout maps release events to
named actions whose amplitude depends on press duration.

Activation thresholds compare against the raw (pre-normalization)
reconstruction peak: normalized images always peak at 1, so only the raw
magnitude can distinguish a touch from noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .inverse import ReconstructionImage
from .mesh import Mesh
from .metrics import DEFAULT_BLOB_THRESHOLD, detect_blobs, dominant_blob

PRESS_START = "press_start"
PRESS_END = "press_end"

LOW = "low"
HIGH = "high"

DEFAULT_FRAME_RATE = 20.0
DEFAULT_DURATION_THRESHOLD_FRAMES = 6  # 300 ms at 20 fps
DEFAULT_DEBOUNCE_FRAMES = 1


@dataclass(frozen=True)
class TouchState:
    """Per-frame touch summary; intensity is the raw reconstruction peak."""

    active: bool
    centroid: tuple[float, float] | None
    intensity: float
    frame_index: int


@dataclass(frozen=True)
class TouchEvent:
    kind: str
    centroid: tuple[float, float]
    duration_frames: int | None = None
    region_label: str = ""


@dataclass(frozen=True)
class Action:
    name: str
    amplitude: str  # LOW or HIGH


@dataclass(frozen=True)
class Region:
    label: str
    rect: tuple[float, float, float, float]  # x0, y0, x1, y1
    action: str

    def contains(self, point: tuple[float, float]) -> bool:
        x0, y0, x1, y1 = self.rect
        return x0 <= point[0] <= x1 and y0 <= point[1] <= y1


@dataclass(frozen=True)
class ActionConfig:
    regions: tuple[Region, ...]
    duration_threshold_frames: int = DEFAULT_DURATION_THRESHOLD_FRAMES
    frame_rate: float = DEFAULT_FRAME_RATE

    def __post_init__(self) -> None:
        if self.duration_threshold_frames < 1:
            raise ValueError("duration_threshold_frames must be >= 1")
        for i, a in enumerate(self.regions):
            for b in self.regions[i + 1 :]:
                if _rects_overlap(a.rect, b.rect):
                    raise ValueError(
                        f"regions {a.label!r} and {b.label!r} overlap"
                    )

    def region_at(self, point: tuple[float, float]) -> Region | None:
        for region in self.regions:
            if region.contains(point):
                return region
        return None


def _rects_overlap(a, b) -> bool:
    """Positive-area intersection; shared edges do not count."""
    return (
        min(a[2], b[2]) > max(a[0], b[0]) and min(a[3], b[3]) > max(a[1], b[1])
    )


def default_action_config(side_mm: float = 100.0) -> ActionConfig:
    """Left half advances, right half jumps."""
    return ActionConfig(
        regions=(
            Region("left", (0.0, 0.0, side_mm / 2, side_mm), "advance"),
            Region("right", (side_mm / 2, 0.0, side_mm, side_mm), "jump"),
        )
    )


def classify_frame(
    image: ReconstructionImage,
    mesh: Mesh,
    activation_threshold: float,
    frame_index: int,
    blob_threshold: float = DEFAULT_BLOB_THRESHOLD,
) -> TouchState:
    """Touch state of one postprocessed frame.

    Active when the raw peak reaches activation_threshold; the centroid is
    the area-weighted centroid of the dominant (largest-peak) blob.
    """
    if not image.postprocessed or image.raw_peak is None:
        raise ValueError("classify_frame expects a postprocessed image")
    raw_peak = image.raw_peak
    if raw_peak < activation_threshold or raw_peak <= 0.0:
        return TouchState(False, None, raw_peak, frame_index)
    blob = dominant_blob(detect_blobs(image, mesh, blob_threshold))
    return TouchState(True, blob.centroid, raw_peak, frame_index)


class EventEngine:
    """Debounced press_start/press_end extraction from touch-state streams.

    A press opens once `debounce_frames` consecutive active frames are seen
    and closes on the first inactive frame. press_end durations count every
    active frame of the press including the debounce ramp, so durations add
    up to total active time. One engine instance serves one session.
    """

    def __init__(
        self,
        debounce_frames: int = DEFAULT_DEBOUNCE_FRAMES,
        config: ActionConfig | None = None,
    ):
        if debounce_frames < 1:
            raise ValueError("debounce_frames must be >= 1")
        self.debounce_frames = debounce_frames
        self.config = config
        self._active_run = 0
        self._press_open = False
        self._last_centroid: tuple[float, float] | None = None
        self._last_index: int | None = None

    def _label(self, centroid: tuple[float, float]) -> str:
        if self.config is None:
            return ""
        region = self.config.region_at(centroid)
        return region.label if region else ""

    def update(self, state: TouchState) -> TouchEvent | None:
        """Consume the next frame's state; return an emitted event, if any."""
        if self._last_index is not None and state.frame_index != self._last_index + 1:
            raise ValueError(
                f"frame indices must be consecutive "
                f"(got {state.frame_index} after {self._last_index})"
            )
        self._last_index = state.frame_index

        if state.active:
            self._active_run += 1
            self._last_centroid = state.centroid
            if not self._press_open and self._active_run >= self.debounce_frames:
                self._press_open = True
                return TouchEvent(
                    PRESS_START, state.centroid, region_label=self._label(state.centroid)
                )
            return None

        event = None
        if self._press_open:
            centroid = self._last_centroid
            event = TouchEvent(
                PRESS_END,
                centroid,
                duration_frames=self._active_run,
                region_label=self._label(centroid),
            )
        self._active_run = 0
        self._press_open = False
        return event


def map_action(event: TouchEvent, config: ActionConfig) -> Action | None:
    """Region action for a press_end event; None when outside all regions.

    Duration exactly at the threshold maps to the high amplitude.
    """
    if event.kind != PRESS_END:
        raise ValueError("map_action expects a press_end event")
    region = config.region_at(event.centroid)
    if region is None:
        return None
    amplitude = (
        HIGH
        if event.duration_frames >= config.duration_threshold_frames
        else LOW
    )
    return Action(region.action, amplitude)


def action_config_to_json(config: ActionConfig) -> str:
    doc = {
        "duration_threshold_frames": config.duration_threshold_frames,
        "frame_rate": config.frame_rate,
        "regions": [
            {"action": r.action, "label": r.label, "rect": list(r.rect)}
            for r in config.regions
        ],
    }
    return json.dumps(doc, sort_keys=True)


def action_config_from_json(text: str) -> ActionConfig:
    doc = json.loads(text)
    return ActionConfig(
        regions=tuple(
            Region(r["label"], tuple(r["rect"]), r["action"])
            for r in doc["regions"]
        ),
        duration_threshold_frames=int(doc["duration_threshold_frames"]),
        frame_rate=float(doc["frame_rate"]),
    )


def event_to_record(event: TouchEvent, action: Action | None = None) -> dict:
    """JSON-serializable log record for one event (and mapped action)."""
    record = {
        "kind": event.kind,
        "centroid": list(event.centroid),
        "duration_frames": event.duration_frames,
        "region_label": event.region_label,
    }
    if action is not None:
        record["action"] = action.name
        record["amplitude"] = action.amplitude
    return record
