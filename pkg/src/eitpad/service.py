"""Interactive touchpad service.

Speaks newline-free JSON messages over a persistent WebSocket. Clients send
touch geometry ({type: touch_down|touch_move|touch_up|tick, x, y, radius});
every message advances the session by one frame through the full physics
loop: touch geometry -> conductivity field -> forward solve -> voltage
difference -> regularized reconstruction -> postprocess -> touch state ->
debounced events -> mapped action. Replies carry a rasterized image grid,
the touch state, and any action emitted on that frame.

Heavy shared state (meshes, protocol, reference frame, sensitivity matrix)
is computed once at startup and only read afterwards; per-session state is
confined to the session object, and each session's messages are processed
strictly in arrival order.
"""

from __future__ import annotations

import asyncio
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .forward import MeasurementFrame, add_noise, simulate_frame
from .hmi import PRESS_END, EventEngine, classify_frame, map_action
from .inverse import postprocess, reconstruct
from .mesh import build_mesh, locate_elements, uniform_field
from .phantom import apply_touches, disc
from .protocol import generate_adjacent_protocol
from .runner import derive_seed
from .sensitivity import compute_jacobian

logger = logging.getLogger(__name__)

CLIENT_MESSAGE_TYPES = ("touch_down", "touch_move", "touch_up", "tick")


@dataclass
class Session:
    """Mutable per-connection state."""

    engine: EventEngine
    frame_index: int = 0
    touch: tuple[float, float, float] | None = None  # x, y, radius
    cached_key: tuple | None = None
    cached_delta: np.ndarray | None = None
    events: list = field(default_factory=list)


class TouchpadService:
    """Shared pipeline state plus the per-message frame step."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.serve_settings = config.serve
        self.fine_mesh = build_mesh(
            config.side_mm,
            config.sim_divisions,
            config.electrode_count,
            config.electrode_width_mm,
        )
        self.coarse_mesh = build_mesh(
            config.side_mm,
            config.recon_divisions,
            config.electrode_count,
            config.electrode_width_mm,
        )
        self.protocol = generate_adjacent_protocol(
            config.electrode_count, config.reciprocity_reduced
        )
        self.background = uniform_field(
            self.fine_mesh, config.background_conductivity
        )
        self.reference = simulate_frame(
            self.fine_mesh, self.background, self.protocol, config.drive_current
        )
        self.jacobian = compute_jacobian(
            self.coarse_mesh,
            uniform_field(self.coarse_mesh, config.background_conductivity),
            self.protocol,
            config.drive_current,
        )
        self.params = config.recon.params(self.serve_settings.method)
        self._pixel_elements = self._pixel_element_map(
            self.serve_settings.raster_resolution
        )

    def _pixel_element_map(self, resolution: int) -> np.ndarray:
        side = self.coarse_mesh.domain_side
        centers = (np.arange(resolution) + 0.5) * side / resolution
        xs, ys = np.meshgrid(centers, centers[::-1])
        pts = np.column_stack([xs.ravel(), ys.ravel()])
        return locate_elements(self.coarse_mesh, pts).reshape(
            resolution, resolution
        )

    def new_session(self) -> Session:
        return Session(
            engine=EventEngine(
                self.serve_settings.debounce_frames,
                self.serve_settings.action_config,
            )
        )

    def _delta_for_touch(
        self, session: Session
    ) -> np.ndarray:
        """Voltage difference for the session's current touch, cached while
        the touch geometry stays put."""
        if session.touch is None:
            return np.zeros(len(self.protocol))
        key = tuple(round(v, 6) for v in session.touch)
        if key == session.cached_key and session.cached_delta is not None:
            return session.cached_delta
        x, y, radius = session.touch
        level = self.serve_settings.touch_level
        field_touched = apply_touches(
            self.background, self.fine_mesh, [disc((x, y), radius, level)]
        )
        frame = simulate_frame(
            self.fine_mesh, field_touched, self.protocol, self.config.drive_current
        )
        delta = frame.voltages - self.reference.voltages
        session.cached_key = key
        session.cached_delta = delta
        return delta

    def handle_message(self, session: Session, raw: str | bytes) -> dict:
        """One frame step; always returns a reply document."""
        try:
            message = json.loads(raw)
            kind = message["type"]
            if kind not in CLIENT_MESSAGE_TYPES:
                raise ValueError(f"unknown message type {kind!r}")
            if kind in ("touch_down", "touch_move"):
                radius = float(
                    message.get(
                        "radius", self.serve_settings.default_touch_radius_mm
                    )
                )
                session.touch = (
                    float(message["x"]),
                    float(message["y"]),
                    radius,
                )
            elif kind == "touch_up":
                session.touch = None
        except (ValueError, KeyError, TypeError) as exc:
            return {"type": "error", "message": f"malformed message: {exc}"}
        return self._step(session)

    def _step(self, session: Session) -> dict:
        delta = self._delta_for_touch(session)
        delta_frame = MeasurementFrame(
            delta, self.protocol.protocol_id, self.config.drive_current
        )
        delta_frame = add_noise(
            delta_frame,
            self.serve_settings.snr_db,
            derive_seed(self.config.seed, f"serve:{session.frame_index}"),
        )
        image = postprocess(
            reconstruct(self.jacobian, delta_frame.voltages, self.params)
        )
        state = classify_frame(
            image,
            self.coarse_mesh,
            self.serve_settings.activation_threshold,
            session.frame_index,
            self.config.recon.blob_threshold,
        )
        event = session.engine.update(state)
        session.frame_index += 1

        grid = np.where(
            self._pixel_elements >= 0,
            image.values[np.clip(self._pixel_elements, 0, None)],
            0.0,
        )
        reply = {
            "type": "frame",
            "frame_index": state.frame_index,
            "active": state.active,
            "centroid": list(state.centroid) if state.centroid else None,
            "raw_peak": image.raw_peak,
            "grid": np.round(grid, 6).tolist(),
        }
        if event is not None:
            session.events.append(event)
            reply["event"] = event.kind
            if event.kind == PRESS_END:
                reply["duration_frames"] = event.duration_frames
                action = map_action(event, self.serve_settings.action_config)
                if action is not None:
                    reply["action"] = action.name
                    reply["amplitude"] = action.amplitude
        return reply


async def _serve_async(service: TouchpadService, host: str, port: int) -> None:
    from websockets.asyncio.server import serve as ws_serve

    async def handler(websocket):
        session = service.new_session()
        logger.info("session opened")
        async for raw in websocket:
            reply = await asyncio.to_thread(
                service.handle_message, session, raw
            )
            await websocket.send(json.dumps(reply))
        logger.info("session closed")

    async with ws_serve(handler, host, port) as server:
        logger.info("touchpad service listening on ws://%s:%d", host, port)
        await server.serve_forever()


def serve(
    config: ExperimentConfig,
    port: int | None = None,
    host: str = "127.0.0.1",
) -> None:
    """Run the touchpad service until interrupted."""
    service = TouchpadService(config)
    asyncio.run(_serve_async(service, host, port or config.serve.port))
