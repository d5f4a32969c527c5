"""Acceptance criteria, one test per criterion, at the stated tolerances.

Each test prints a single PASS/FAIL line (run with -s to see them inline).
Criteria run against the shipped defaults: 100 mm / 16-electrode sensor,
reciprocity-reduced adjacent protocol, 64/32 data-vs-reconstruction meshes,
Tikhonov and L1 factors of 0.01 with 200 L1 iterations.
"""

import asyncio
import csv
import json
import socket
import threading
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from eitpad.config import paper_default_config
from eitpad.forward import (
    MeasurementFrame,
    add_noise,
    pair_load,
    simulate_frame,
)
from eitpad.hmi import HIGH, LOW
from eitpad.inverse import (
    ReconstructionParams,
    l1_reconstruct,
    postprocess,
    reconstruct,
    tikhonov_reconstruct,
)
from eitpad.mesh import ConductivityField, build_mesh, uniform_field
from eitpad.metrics import detect_blobs, localization_error
from eitpad.protocol import generate_adjacent_protocol, reciprocal
from eitpad.runner import replay_session, run_reconstruction, run_sweep
from eitpad.sensitivity import SensitivityMatrix, compute_jacobian
from eitpad.service import TouchpadService


@contextmanager
def criterion(name: str, budget_s: float | None = None):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"{name}: FAIL")
        raise
    elapsed = time.perf_counter() - start
    if budget_s is not None and elapsed > budget_s:
        print(f"{name}: FAIL (runtime {elapsed:.1f}s > {budget_s}s)")
        raise AssertionError(f"{name} exceeded runtime budget")
    print(f"{name}: PASS ({elapsed:.1f}s)")


@pytest.fixture(scope="module")
def config():
    return paper_default_config()


@pytest.fixture(scope="module")
def fine_mesh(config):
    return build_mesh(
        config.side_mm,
        config.sim_divisions,
        config.electrode_count,
        config.electrode_width_mm,
    )


@pytest.fixture(scope="module")
def coarse_mesh(config):
    return build_mesh(
        config.side_mm,
        config.recon_divisions,
        config.electrode_count,
        config.electrode_width_mm,
    )


@pytest.fixture(scope="module")
def protocol():
    return generate_adjacent_protocol(16, True)


@pytest.fixture(scope="module")
def recon_outputs(config, tmp_path_factory):
    out = tmp_path_factory.mktemp("recon")
    summary = run_reconstruction(config, out)
    return out, summary


def test_p1_protocol_counts():
    with criterion("P1 protocol counts (104 reduced / 208 full)", budget_s=1.0):
        assert len(generate_adjacent_protocol(16, True)) == 104
        assert len(generate_adjacent_protocol(16, False)) == 208


def test_p2_reciprocity(coarse_mesh):
    with criterion("P2 reciprocity <= 1e-9 on 5 random fields", budget_s=30.0):
        full = generate_adjacent_protocol(16, False)
        index = {p: i for i, p in enumerate(full.patterns)}
        for seed in range(5):
            rng = np.random.default_rng(seed)
            field = ConductivityField(
                rng.uniform(0.5, 5.0, coarse_mesh.n_elements)
            )
            frame = simulate_frame(coarse_mesh, field, full)
            for i, p in enumerate(full.patterns):
                v1 = frame.voltages[i]
                v2 = frame.voltages[index[reciprocal(p)]]
                assert abs(v1 - v2) <= 1e-9 * max(abs(v1), abs(v2))


def test_p3_conservation_and_zero_baseline(coarse_mesh, protocol):
    with criterion("P3 current conservation and zero baseline"):
        current = 1e-3
        for e in range(16):
            load = pair_load(coarse_mesh, (e, (e + 1) % 16), current)
            assert abs(load.sum()) < 1e-12 * current
        field = uniform_field(coarse_mesh, 1.0)
        f1 = simulate_frame(coarse_mesh, field, protocol)
        f2 = simulate_frame(coarse_mesh, field, protocol)
        assert np.all(f1.voltages - f2.voltages == 0.0)


def test_p4_jacobian_finite_difference(coarse_mesh, protocol):
    with criterion("P4 Jacobian vs finite differences < 1e-3", budget_s=60.0):
        field = uniform_field(coarse_mesh, 1.0)
        jac = compute_jacobian(coarse_mesh, field, protocol)
        rng = np.random.default_rng(0)
        eps = 1e-4
        for k in rng.choice(coarse_mesh.n_elements, 20, replace=False):
            vp, vm = field.values.copy(), field.values.copy()
            vp[k] += eps
            vm[k] -= eps
            fp = simulate_frame(coarse_mesh, ConductivityField(vp), protocol)
            fm = simulate_frame(coarse_mesh, ConductivityField(vm), protocol)
            fd = (fp.voltages - fm.voltages) / (2 * eps)
            col = jac.entries[:, k]
            mask = np.abs(col) > 1e-12
            rel = np.abs(col[mask] - fd[mask]) / np.abs(fd[mask])
            assert rel.max() < 1e-3


def test_p5_solver_closed_forms_and_monotone_objective():
    with criterion("P5 solver closed forms + ISTA monotone objective"):
        identity = SensitivityMatrix(np.eye(2), np.ones(2), "p", "m")
        absolute = lambda method, lam: ReconstructionParams(
            method, lam, 200, "absolute"
        )
        x = tikhonov_reconstruct(
            identity, np.array([1.0, 0.0]), absolute("tikhonov", 0.0)
        ).values
        assert np.abs(x - [1.0, 0.0]).max() < 1e-10
        x = tikhonov_reconstruct(
            identity, np.array([1.0, 0.0]), absolute("tikhonov", 1.0)
        ).values
        assert np.abs(x - [0.5, 0.0]).max() < 1e-10
        x = l1_reconstruct(
            identity, np.array([1.0, 0.005]), absolute("l1", 0.01)
        ).values
        assert np.abs(x - [0.99, 0.0]).max() < 1e-10

        for seed in (11, 22, 33):
            rng = np.random.default_rng(seed)
            jac = SensitivityMatrix(
                rng.normal(size=(40, 120)), np.ones(120), "p", "m"
            )
            trace: list[float] = []
            l1_reconstruct(
                jac,
                rng.normal(size=40),
                ReconstructionParams("l1", 0.01, iterations=200),
                objective_trace=trace,
            )
            assert len(trace) == 201
            assert all(b <= a for a, b in zip(trace, trace[1:]))


def _sweep_table(path: Path):
    table = {}
    with path.open() as fh:
        for row in csv.DictReader(fh):
            key = (
                row["config_label"],
                row["phantom"],
                float(row["level_s_per_m"]),
            )
            table[key] = float(row["mean_relative_change"])
    return table


def test_p6_sweep_trends(config, tmp_path_factory):
    with criterion("P6 sweep trends (level up, lattice > uniform, width down)", budget_s=600.0):
        out = tmp_path_factory.mktemp("sweep")
        path = run_sweep(config, out)
        table = _sweep_table(path)
        widths = list(config.sweep.lattice_widths_mm)
        labels = [f"lattice_w{w:g}" for w in widths]
        levels = list(config.sweep.touch_levels)
        phantoms = list(config.sweep.phantoms)
        assert len(table) == (len(labels) + 1) * len(levels) * len(phantoms)
        for c in labels + ["uniform"]:
            for p in phantoms:
                for a, b in zip(levels, levels[1:]):
                    assert table[(c, p, a)] < table[(c, p, b)]
        for c in labels:
            for p in phantoms:
                for l in levels:
                    assert table[(c, p, l)] > table[("uniform", p, l)]
        for narrow, wide in zip(labels, labels[1:]):
            for p in phantoms:
                for l in levels:
                    assert table[(narrow, p, l)] >= table[(wide, p, l)]


def test_p7_localization(config, coarse_mesh, recon_outputs):
    with criterion("P7 localization: blob counts and centroid error < 10 mm", budget_s=300.0):
        out, summary = recon_outputs
        for name, centers in config.recon.phantom_centers.items():
            assert summary[name]["status"] == "ok"
            for method in ("tikhonov", "l1"):
                doc = json.loads((out / f"{name}_{method}_blobs.json").read_text())
                assert doc["threshold"] == 0.3
                blobs = doc["blobs"]
                assert len(blobs) == len(centers), (name, method, len(blobs))
                found = [tuple(b["centroid_mm"]) for b in blobs]
                cost = np.array(
                    [
                        [np.hypot(fx - tx, fy - ty) for fx, fy in found]
                        for tx, ty in centers
                    ]
                )
                from scipy.optimize import linear_sum_assignment

                rows, cols = linear_sum_assignment(cost)
                assert cost[rows, cols].max() < 10.0, (name, method)


def test_p8_annulus_topology(config, coarse_mesh, recon_outputs):
    with criterion("P8 annulus ring coverage >= 60%, clean center"):
        out, _ = recon_outputs
        values = np.zeros(coarse_mesh.n_elements)
        with (out / "annular_l1.csv").open() as fh:
            for row in csv.DictReader(
                (ln for ln in fh if not ln.startswith("#"))
            ):
                values[int(row["element"])] = float(row["value"])
        ann = config.recon.annulus
        cx, cy = ann["center"]
        centroids = coarse_mesh.element_centroids
        d = np.hypot(centroids[:, 0] - cx, centroids[:, 1] - cy)
        true_ring = (d >= ann["inner"]) & (d <= ann["outer"])
        central = d <= ann["inner"] / 2.0
        above = values >= 0.5 * values.max()
        coverage = (above & true_ring).sum() / true_ring.sum()
        assert coverage >= 0.6, f"ring coverage {coverage:.2f}"
        assert not np.any(above & central), "central disc contaminated"


def test_p9_deterministic_outputs(config, tmp_path_factory, recon_outputs):
    with criterion("P9 byte-identical sweep and recon reruns"):
        sweep_a = tmp_path_factory.mktemp("sweep_a")
        sweep_b = tmp_path_factory.mktemp("sweep_b")
        pa = run_sweep(config, sweep_a)
        pb = run_sweep(config, sweep_b)
        assert pa.read_bytes() == pb.read_bytes()

        recon_dir, _ = recon_outputs
        rerun = tmp_path_factory.mktemp("recon_rerun")
        run_reconstruction(config, rerun)
        names = sorted(p.name for p in recon_dir.iterdir())
        assert names == sorted(p.name for p in rerun.iterdir())
        for name in names:
            assert (recon_dir / name).read_bytes() == (rerun / name).read_bytes()


def test_p10_event_algebra(config):
    with criterion("P10 replayed sessions: alternation, durations, actions"):
        threshold = config.serve.action_config.duration_threshold_frames
        sessions = {
            "short_left": ([("press", 25.0, 50.0, 3)], [("advance", LOW)]),
            "long_right": ([("press", 75.0, 50.0, 10)], [("jump", HIGH)]),
            "boundary": ([("press", 75.0, 50.0, threshold)], [("jump", HIGH)]),
            "just_below": (
                [("press", 75.0, 50.0, threshold - 1)],
                [("jump", LOW)],
            ),
            "mixed": (
                [
                    ("press", 25.0, 50.0, 2),
                    ("press", 75.0, 50.0, 8),
                    ("press", 25.0, 50.0, threshold),
                ],
                [("advance", LOW), ("jump", HIGH), ("advance", HIGH)],
            ),
        }
        for name, (presses, expected) in sessions.items():
            lines = []
            for _, x, y, frames in presses:
                lines += [
                    json.dumps({"active": True, "x": x, "y": y})
                ] * frames
                lines.append(json.dumps({"active": False}))
            records = replay_session(lines, config)
            kinds = [r["kind"] for r in records]
            assert kinds == ["press_start", "press_end"] * len(presses), name
            ends = [r for r in records if r["kind"] == "press_end"]
            for (_, _, _, frames), end, (action, amplitude) in zip(
                presses, ends, expected
            ):
                assert end["duration_frames"] == frames, name
                assert end["action"] == action, name
                assert end["amplitude"] == amplitude, name


@pytest.fixture(scope="module")
def live_service(config):
    from websockets.asyncio.server import serve as ws_serve

    service = TouchpadService(config)
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]

    holder: dict = {"ready": threading.Event()}

    async def run_server():
        async def handler(websocket):
            session = service.new_session()
            async for raw in websocket:
                reply = await asyncio.to_thread(
                    service.handle_message, session, raw
                )
                await websocket.send(json.dumps(reply))

        async with ws_serve(handler, "127.0.0.1", port):
            holder["loop"] = asyncio.get_running_loop()
            holder["stop"] = asyncio.Event()
            holder["ready"].set()
            await holder["stop"].wait()

    thread = threading.Thread(target=lambda: asyncio.run(run_server()), daemon=True)
    thread.start()
    assert holder["ready"].wait(30)
    yield port
    holder["loop"].call_soon_threadsafe(holder["stop"].set)
    thread.join(timeout=10)


def _scripted_press(port, x, y, frames, resolution):
    from websockets.sync.client import connect

    script = [{"type": "touch_down", "x": x, "y": y, "radius": 10.0}]
    script += [{"type": "tick"}] * (frames - 1)
    script += [{"type": "touch_up"}]
    replies, latencies = [], []
    with connect(f"ws://127.0.0.1:{port}") as ws:
        for msg in script:
            start = time.perf_counter()
            ws.send(json.dumps(msg))
            reply = json.loads(ws.recv(timeout=10))
            latencies.append(time.perf_counter() - start)
            assert reply["type"] == "frame"
            grid = reply["grid"]
            assert len(grid) == resolution and len(grid[0]) == resolution
            replies.append(reply)
    return replies, latencies


def test_s1_service_round_trip(config, live_service):
    with criterion("S1 live press at (25,50) x3 -> advance/low within 200 ms"):
        replies, latencies = _scripted_press(
            live_service, 25.0, 50.0, 3, config.serve.raster_resolution
        )
        assert max(latencies) < 0.2, f"worst latency {max(latencies):.3f}s"
        last = replies[-1]
        assert last["action"] == "advance" and last["amplitude"] == LOW
        assert last["duration_frames"] == 3
        active_grid = np.asarray(replies[0]["grid"])
        assert active_grid.max() > 0  # heatmap has content to render


def test_s2_duration_split(config, live_service):
    with criterion("S2 presses of 3 and 10 frames -> jump/low then jump/high"):
        short, _ = _scripted_press(
            live_service, 75.0, 50.0, 3, config.serve.raster_resolution
        )
        long_, _ = _scripted_press(
            live_service, 75.0, 50.0, 10, config.serve.raster_resolution
        )
        assert short[-1]["action"] == "jump" and short[-1]["amplitude"] == LOW
        assert long_[-1]["action"] == "jump" and long_[-1]["amplitude"] == HIGH
