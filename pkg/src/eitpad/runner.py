"""Batch experiment execution: sensitivity sweeps, reconstruction runs, and
event-log replay.

All outputs are plain text (CSV, PGM, JSON) and byte-deterministic for a
given config and seed: float fields are written with repr, JSON with sorted
keys, and every stochastic step derives its RNG seed from the config seed
plus a stable label.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .forward import MeasurementFrame, add_noise, simulate_frame
from .hmi import EventEngine, TouchState, event_to_record, map_action
from .inverse import (
    L1,
    TIKHONOV,
    image_to_csv,
    image_to_pgm,
    postprocess,
    reconstruct,
)
from .mesh import Mesh, build_mesh, mesh_to_json, uniform_field
from .metrics import detect_blobs, mean_relative_change, report_to_json
from .phantom import LatticeSpec, apply_lattice, apply_touches, disc
from .protocol import generate_adjacent_protocol
from .sensitivity import compute_jacobian


def derive_seed(base_seed: int, label: str) -> int:
    """Stable per-step seed from the config seed and a step label."""
    digest = hashlib.sha256(f"{base_seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def _sim_mesh(config: ExperimentConfig) -> Mesh:
    return build_mesh(
        config.side_mm,
        config.sim_divisions,
        config.electrode_count,
        config.electrode_width_mm,
    )


def _recon_mesh(config: ExperimentConfig) -> Mesh:
    return build_mesh(
        config.side_mm,
        config.recon_divisions,
        config.electrode_count,
        config.electrode_width_mm,
    )


def export_mesh(config: ExperimentConfig, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "mesh.json"
    path.write_text(mesh_to_json(_sim_mesh(config)))
    return path


def sweep_configurations(config: ExperimentConfig) -> list[tuple[str, float | None]]:
    """(label, channel width) pairs: lattices by width plus the uniform field."""
    configs: list[tuple[str, float | None]] = [
        (f"lattice_w{width:g}", width)
        for width in config.sweep.lattice_widths_mm
    ]
    if config.sweep.include_uniform:
        configs.append(("uniform", None))
    return configs


def run_sweep(config: ExperimentConfig, out_dir: str | Path) -> Path:
    """Mean relative voltage change per (lattice config x level x phantom).

    Writes sweep.csv with one row per combination. The reference frame of
    each lattice configuration is simulated once and shared across rows.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sweep = config.sweep
    mesh = build_mesh(
        config.side_mm,
        sweep.divisions,
        config.electrode_count,
        config.electrode_width_mm,
    )
    protocol = generate_adjacent_protocol(
        config.electrode_count, config.reciprocity_reduced
    )

    rows: list[str] = []
    header = (
        "config_label,channel_width_mm,phantom,level_s_per_m,"
        "mean_relative_change,excluded,pattern_count"
    )
    for label, width in sweep_configurations(config):
        if width is None:
            base = uniform_field(mesh, config.background_conductivity)
        else:
            spec = LatticeSpec(
                sweep.lattice_pitch_mm, width, sweep.lattice_background
            )
            base = apply_lattice(mesh, spec, config.background_conductivity)
        reference = simulate_frame(mesh, base, protocol, config.drive_current)
        reference = add_noise(
            reference, sweep.snr_db, derive_seed(config.seed, f"{label}:ref")
        )
        for phantom_name, centers in sweep.phantoms.items():
            for level in sweep.touch_levels:
                touches = [
                    disc(tuple(c), sweep.touch_radius_mm, level)
                    for c in centers
                ]
                touched_field = apply_touches(base, mesh, touches)
                touched = simulate_frame(
                    mesh, touched_field, protocol, config.drive_current
                )
                touched = add_noise(
                    touched,
                    sweep.snr_db,
                    derive_seed(
                        config.seed, f"{label}:{phantom_name}:{level!r}"
                    ),
                )
                report = mean_relative_change(reference, touched, label)
                rows.append(
                    f"{label},{'' if width is None else repr(width)},"
                    f"{phantom_name},{level!r},"
                    f"{report.mean_relative_change!r},"
                    f"{report.excluded_count},{len(protocol)}"
                )
    path = out / "sweep.csv"
    path.write_text(header + "\n" + "".join(r + "\n" for r in rows))
    return path


def run_reconstruction(config: ExperimentConfig, out_dir: str | Path) -> dict:
    """Simulate, reconstruct, and export every configured phantom.

    Per phantom and method, writes <phantom>_<method>.pgm / .csv and
    <phantom>_<method>_blobs.json; a failing phantom is recorded in
    summary.json without aborting the rest of the batch.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    settings = config.recon

    fine = _sim_mesh(config)
    coarse = _recon_mesh(config)
    protocol = generate_adjacent_protocol(
        config.electrode_count, config.reciprocity_reduced
    )
    background_fine = uniform_field(fine, config.background_conductivity)
    reference = simulate_frame(
        fine, background_fine, protocol, config.drive_current
    )
    jacobian = compute_jacobian(
        coarse,
        uniform_field(coarse, config.background_conductivity),
        protocol,
        config.drive_current,
    )

    summary: dict[str, dict] = {}
    for name, touches in settings.phantoms().items():
        try:
            touched_field = apply_touches(background_fine, fine, touches)
            touched = simulate_frame(
                fine, touched_field, protocol, config.drive_current
            )
            delta = MeasurementFrame(
                touched.voltages - reference.voltages,
                protocol.protocol_id,
                config.drive_current,
            )
            delta = add_noise(
                delta, settings.snr_db, derive_seed(config.seed, f"recon:{name}")
            )
            entry: dict[str, dict] = {"status": "ok", "methods": {}}
            for method in (TIKHONOV, L1):
                image = reconstruct(
                    jacobian, delta.voltages, settings.params(method)
                )
                image = postprocess(image)
                blobs = detect_blobs(image, coarse, settings.blob_threshold)
                stem = f"{name}_{method}"
                (out / f"{stem}.pgm").write_text(
                    image_to_pgm(image, coarse, settings.raster_resolution)
                )
                (out / f"{stem}.csv").write_text(image_to_csv(image, coarse))
                (out / f"{stem}_blobs.json").write_text(report_to_json(blobs))
                entry["methods"][method] = {
                    "blob_count": len(blobs.blobs),
                    "raw_peak": image.raw_peak,
                }
            summary[name] = entry
        except Exception as exc:  # isolate phantom failures
            summary[name] = {"status": "error", "message": str(exc)}
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2))
    return summary


def replay_session(
    lines: list[str], config: ExperimentConfig
) -> list[dict]:
    """Re-run a recorded state stream through the event engine.

    Each input line is a JSON object {"active": bool, "x": mm, "y": mm,
    "intensity": raw peak}. Returns one record per emitted event, with the
    mapped action attached to press_end records.
    """
    serve = config.serve
    engine = EventEngine(serve.debounce_frames, serve.action_config)
    records: list[dict] = []
    for index, line in enumerate(lines):
        data = json.loads(line)
        active = bool(data["active"])
        centroid = (
            (float(data["x"]), float(data["y"])) if active else None
        )
        state = TouchState(
            active=active,
            centroid=centroid,
            intensity=float(data.get("intensity", 1.0 if active else 0.0)),
            frame_index=index,
        )
        event = engine.update(state)
        if event is None:
            continue
        action = (
            map_action(event, serve.action_config)
            if event.kind == "press_end"
            else None
        )
        records.append(event_to_record(event, action))
    return records


def replay_file(
    log_path: str | Path, config: ExperimentConfig, out_path: str | Path | None = None
) -> list[dict]:
    lines = [
        ln for ln in Path(log_path).read_text().splitlines() if ln.strip()
    ]
    records = replay_session(lines, config)
    text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
    if out_path is not None:
        Path(out_path).write_text(text)
    else:
        print(text, end="")
    return records
