"""Session-oriented simulation service.

One full-duplex web socket per client at `/sim` carries UTF-8 JSON control
messages (first byte '{') and binary frames (first byte 0x01). The static
UI bundle, when present, is served at `/`. Each session has exactly one
writer (its stepping task on the event loop); frames go through a one-slot
latest-wins buffer so a slow client never stalls or bloats the simulation.
"""

from __future__ import annotations

import asyncio
import base64
import json
import struct
import time
import uuid
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import HTMLResponse
from fastapi.staticfiles import StaticFiles

from .errors import (BadParameter, BusySolving, InvalidMaterial, MagsimError,
                     UnknownModel)
from .fem import MaterialParams
from .mesh_io import embed_surface, parse_msh, parse_stl
from .models import (Model, build_model, builtin_models_dir, load_descriptor,
                     load_model, list_model_names)
from .simulation import Simulation
from .solver import ConstraintSet, SolverConfig

FRAME_TYPE = 0x01
MAX_FRAME_RATE = 60.0

MODE_IDLE = "idle"
MODE_RUNNING = "running"
MODE_PAUSED = "paused"
MODE_BUSY = "quasistatic_busy"


# ---------------------------------------------------------------------------
# Frame codec
# ---------------------------------------------------------------------------

def encode_frame(frame_index: int, sim_time: float, positions: np.ndarray,
                 von_mises: np.ndarray, vm_min: float, vm_max: float) -> bytes:
    """Binary frame, little-endian, 21 + 16*vertex_count bytes.

    u8 type, u32 frame, f32 sim_time, u32 vertex_count, 3*count f32
    positions, count f32 von Mises, f32 min, f32 max.
    """
    pos = np.ascontiguousarray(positions.reshape(-1, 3), dtype="<f4")
    vm = np.ascontiguousarray(von_mises, dtype="<f4")
    count = len(pos)
    if len(vm) != count:
        raise ValueError("positions/scalars length mismatch")
    return (struct.pack("<BIfI", FRAME_TYPE, frame_index & 0xFFFFFFFF,
                        sim_time, count)
            + pos.tobytes() + vm.tobytes()
            + struct.pack("<ff", vm_min, vm_max))


def decode_frame(data: bytes) -> dict:
    """Inverse of encode_frame; raises ValueError on malformed input."""
    if len(data) < 13:
        raise ValueError("frame shorter than header")
    ftype, frame, sim_time, count = struct.unpack_from("<BIfI", data, 0)
    if ftype != FRAME_TYPE:
        raise ValueError(f"not a frame message (type {ftype})")
    expected = 21 + 16 * count
    if len(data) != expected:
        raise ValueError(f"frame length {len(data)} != {expected}")
    off = 13
    pos = np.frombuffer(data, dtype="<f4", count=3 * count,
                        offset=off).reshape(count, 3)
    off += 12 * count
    vm = np.frombuffer(data, dtype="<f4", count=count, offset=off)
    off += 4 * count
    vm_min, vm_max = struct.unpack_from("<ff", data, off)
    return {"frame": frame, "sim_time": sim_time, "vertex_count": count,
            "positions": pos.copy(), "von_mises": vm.copy(),
            "vm_min": vm_min, "vm_max": vm_max}


# ---------------------------------------------------------------------------
# Sessions
# ---------------------------------------------------------------------------

class Outbox:
    """Outgoing buffer: events queue up, frames occupy a single slot that
    newer frames overwrite (latest wins, bounded memory). Single consumer,
    producers on the same event loop."""

    def __init__(self):
        self._events: list = []
        self._frame: Optional[bytes] = None
        self._wake = asyncio.Event()

    def put_event(self, event: dict):
        self._events.append(event)
        self._wake.set()

    def put_frame(self, payload: bytes):
        self._frame = payload
        self._wake.set()

    async def get(self):
        while True:
            if self._events:
                return self._events.pop(0)
            if self._frame is not None:
                frame, self._frame = self._frame, None
                return frame
            self._wake.clear()
            await self._wake.wait()


class Session:
    """State machine wrapping one Simulation for one connected client."""

    def __init__(self, models_dir: Optional[Path] = None):
        self.id = uuid.uuid4().hex
        self.models_dir = Path(models_dir) if models_dir else \
            builtin_models_dir()
        self.sim: Optional[Simulation] = None
        self.mode = MODE_IDLE
        self.frame_counter = 0
        self.uploaded: dict[str, Model] = {}
        self.outbox = Outbox()
        self._pending_params: list = []

    # -- control ---------------------------------------------------------

    def handle_control(self, message) -> dict:
        """Process one decoded control message; always returns exactly one
        response object."""
        if not isinstance(message, dict) or "cmd" not in message:
            return _err("MalformedMessage", "expected {\"cmd\": ...}")
        cmd = message["cmd"]
        handler = getattr(self, f"_cmd_{cmd}", None)
        if handler is None or not isinstance(cmd, str):
            return _err("UnknownCommand", f"unknown cmd {cmd!r}", cmd=cmd)
        try:
            response = handler(message)
        except BusySolving as exc:
            return _err("BusySolving", str(exc), cmd=cmd)
        except BadParameter as exc:
            return _err("BadParameter", str(exc), cmd=cmd, path=exc.path)
        except UnknownModel as exc:
            return _err("UnknownModel", str(exc), cmd=cmd)
        except MagsimError as exc:
            return _err(type(exc).__name__, str(exc), cmd=cmd)
        except (KeyError, TypeError, ValueError) as exc:
            return _err("MalformedMessage", f"{type(exc).__name__}: {exc}",
                        cmd=cmd)
        response.setdefault("ok", True)
        response.setdefault("cmd", cmd)
        if "id" in message:
            response["id"] = message["id"]
        return response

    def _require_sim(self) -> Simulation:
        if self.sim is None:
            raise BadParameter("model", "no model loaded")
        return self.sim

    def _reject_busy(self):
        if self.mode == MODE_BUSY:
            raise BusySolving("quasi-static solve in flight")

    def _cmd_list_models(self, _msg) -> dict:
        names = list_model_names(self.models_dir) + sorted(self.uploaded)
        return {"models": names}

    def _cmd_load_model(self, msg) -> dict:
        self._reject_busy()
        if "descriptor" in msg:
            desc = load_descriptor(json.dumps(msg["descriptor"]))
            model = build_model(desc, base_dir=self.models_dir)
        else:
            name = msg["name"]
            if name in self.uploaded:
                model = self.uploaded[name]
            else:
                model = load_model(name, self.models_dir)
        self.sim = Simulation(model)
        self.mode = MODE_IDLE
        self.frame_counter = 0
        pos, _scal, _lo, _hi = self.sim.frame_arrays()
        return {
            "model": {
                "name": model.name,
                "node_count": model.mesh.node_count,
                "tet_count": model.mesh.tet_count,
                "vertex_count": len(pos),
                "triangles": self.sim.render_triangles().tolist(),
                "positions": np.asarray(pos, dtype=np.float64)
                .ravel().tolist(),
                "material": _material_json(self.sim.material),
                "field": self.sim.magnetics.field.tolist(),
                "fixed_nodes": model.constraints.fixed_nodes.tolist(),
            }
        }

    def _cmd_set_material(self, msg) -> dict:
        sim = self._require_sim()
        current = _material_json(sim.material)
        patch = msg["material"]
        if not isinstance(patch, dict):
            raise BadParameter("material", "expected an object")
        for key, value in patch.items():
            if key not in current:
                raise BadParameter(f"material.{key}", "unknown field")
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise BadParameter(f"material.{key}", "expected a number")
            current[key] = float(value)
        try:
            material = MaterialParams(**current)
        except InvalidMaterial as exc:
            key = "poisson_ratio" if "poisson" in str(exc) else \
                str(exc).split()[0]
            raise BadParameter(f"material.{key}", str(exc)) from None
        self._apply_between_steps(lambda: self.sim.set_material(material))
        return {"material": current}

    def _cmd_set_field(self, msg) -> dict:
        sim = self._require_sim()
        direction = np.asarray(msg["direction"], dtype=np.float64).reshape(3)
        magnitude = float(msg["magnitude"])
        norm = np.linalg.norm(direction)
        if not np.isfinite(direction).all() or norm == 0.0:
            raise BadParameter("field.direction", "must be a nonzero vector")
        if not np.isfinite(magnitude):
            raise BadParameter("field.magnitude", "must be finite")
        field = direction / norm * magnitude
        self._apply_between_steps(lambda: self.sim.set_field(field))
        return {"field": field.tolist()}

    def _cmd_set_solver(self, msg) -> dict:
        sim = self._require_sim()
        cfg = sim.config
        merged = {
            "dt": cfg.dt, "cg_max_iters": cfg.cg_max_iters,
            "cg_tolerance": cfg.cg_tolerance,
            "newton_max_iters": cfg.newton_max_iters,
            "newton_tolerance": cfg.newton_tolerance,
            "ramp_steps": cfg.ramp_steps, "gravity": cfg.gravity,
        }
        patch = msg["solver"]
        if not isinstance(patch, dict):
            raise BadParameter("solver", "expected an object")
        for key, value in patch.items():
            if key not in merged:
                raise BadParameter(f"solver.{key}", "unknown field")
            if key == "gravity":
                merged[key] = tuple(
                    np.asarray(value, dtype=np.float64).reshape(3))
            elif key in ("cg_max_iters", "newton_max_iters", "ramp_steps"):
                merged[key] = int(value)
            else:
                merged[key] = float(value)
        try:
            config = SolverConfig(**merged)
        except ValueError as exc:
            raise BadParameter("solver", str(exc)) from None
        self._apply_between_steps(lambda: self.sim.set_solver(config))
        return {"solver": {k: (list(v) if k == "gravity" else v)
                           for k, v in merged.items()}}

    def _cmd_start(self, _msg) -> dict:
        self._reject_busy()
        self._require_sim()
        self.mode = MODE_RUNNING
        return {"mode": self.mode}

    def _cmd_pause(self, _msg) -> dict:
        self._reject_busy()
        self._require_sim()
        if self.mode == MODE_RUNNING:
            self.mode = MODE_PAUSED
        return {"mode": self.mode}

    def _cmd_reset(self, _msg) -> dict:
        self._reject_busy()
        sim = self._require_sim()
        sim.reset()
        self.mode = MODE_IDLE
        self.push_frame()
        return {"mode": self.mode}

    def _cmd_solve_quasistatic(self, _msg) -> dict:
        self._reject_busy()
        self._require_sim()
        self.mode = MODE_BUSY
        return {"mode": self.mode, "started": True}

    def _cmd_upload_mesh(self, msg) -> dict:
        self._reject_busy()
        name = msg["name"]
        if not isinstance(name, str) or not name:
            raise BadParameter("name", "required non-empty string")
        msh = parse_msh(base64.b64decode(msg["msh_base64"]))
        surface = None
        if "stl_base64" in msg:
            surface = parse_stl(base64.b64decode(msg["stl_base64"]))
            surface = embed_surface(surface, msh)
        self.uploaded[name] = Model(
            name=name, mesh=msh, material=MaterialParams(1e6, 0.45, 1200.0),
            remanence=np.zeros((msh.tet_count, 3)),
            default_field=np.zeros(3),
            constraints=ConstraintSet.from_nodes([]),
            solver=SolverConfig(), surface=surface)
        return {"model": name, "node_count": msh.node_count,
                "tet_count": msh.tet_count}

    def _apply_between_steps(self, thunk):
        """Parameter changes never land mid-step: while a quasi-static
        solve owns the state they queue up; otherwise the event loop only
        runs us between steps, so applying immediately is safe."""
        if self.mode == MODE_BUSY:
            self._pending_params.append(thunk)
        else:
            thunk()

    def drain_pending(self):
        for thunk in self._pending_params:
            thunk()
        self._pending_params.clear()

    # -- frames ------------------------------------------------------------

    def push_frame(self):
        """Encode the current state into the latest-wins frame slot."""
        if self.sim is None:
            return
        pos, scal, lo, hi = self.sim.frame_arrays()
        payload = encode_frame(self.frame_counter, self.sim.state.time,
                               pos, scal, lo, hi)
        self.frame_counter += 1
        self.outbox.put_frame(payload)

    def push_event(self, event: dict):
        self.outbox.put_event(event)

    async def run_loop(self):
        """Stepping task: drains the parameter mailbox, advances the
        simulation at the configured wall rate (capped at 60 frames/s) and
        emits a frame per step."""
        next_deadline = time.monotonic()
        while True:
            if self.mode != MODE_RUNNING or self.sim is None:
                await asyncio.sleep(0.02)
                next_deadline = time.monotonic()
                continue
            self.drain_pending()
            report = self.sim.step()
            if not report.ok:
                self.mode = MODE_PAUSED
                self.push_event({"event": "step_failed",
                                 "message": "non-finite state; paused"})
                continue
            self.push_frame()
            interval = max(self.sim.config.dt, 1.0 / MAX_FRAME_RATE)
            next_deadline += interval
            delay = next_deadline - time.monotonic()
            if delay > 0:
                await asyncio.sleep(delay)
            else:
                # running slower than real time; do not accumulate debt
                next_deadline = time.monotonic()
                await asyncio.sleep(0)

    async def run_quasistatic(self):
        """Runs the solve in a worker thread so control stays responsive;
        progress events stream back through the event queue."""
        sim = self.sim
        loop = asyncio.get_running_loop()

        def progress(stage, stages, iters, residual):
            loop.call_soon_threadsafe(self.push_event, {
                "event": "quasistatic_progress", "stage": stage,
                "stages": stages, "newton_iters": iters,
                "residual": residual})

        try:
            report = await asyncio.to_thread(sim.solve_static, 0.0, progress)
            self.push_event({"event": "quasistatic_done",
                             "converged": report.converged,
                             "newton_iters": report.total_newton_iters,
                             "residual": report.final_residual})
        except MagsimError as exc:
            self.push_event({"event": "quasistatic_failed",
                             "error": type(exc).__name__,
                             "message": str(exc)})
        finally:
            self.mode = MODE_PAUSED
            self.drain_pending()
            self.push_frame()


def _err(code: str, message: str, **extra) -> dict:
    out = {"ok": False, "error": {"code": code, "message": message}}
    out.update(extra)
    return out


def _material_json(m: MaterialParams) -> dict:
    return {"young_modulus": m.young_modulus,
            "poisson_ratio": m.poisson_ratio,
            "density": m.density,
            "rayleigh_mass": m.rayleigh_mass,
            "rayleigh_stiffness": m.rayleigh_stiffness}


# ---------------------------------------------------------------------------
# App
# ---------------------------------------------------------------------------

_PLACEHOLDER = """<!doctype html>
<html><head><title>magsim</title></head>
<body><h1>magsim service</h1>
<p>The simulation socket is at <code>/sim</code>. Build the browser UI
(<code>frontend/</code>, see README) to get the interactive client.</p>
</body></html>"""


def create_app(models_dir: Optional[Path] = None,
               ui_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="magsim")

    @app.websocket("/sim")
    async def sim_socket(ws: WebSocket):
        await ws.accept()
        session = Session(models_dir)
        await ws.send_text(json.dumps({"event": "session",
                                       "id": session.id}))
        stepper = asyncio.create_task(session.run_loop())
        sender = asyncio.create_task(_sender(ws, session))
        solver_task = None
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    message = json.loads(raw)
                except json.JSONDecodeError as exc:
                    await ws.send_text(json.dumps(_err(
                        "MalformedMessage", f"invalid JSON: {exc}")))
                    continue
                response = session.handle_control(message)
                await ws.send_text(json.dumps(response))
                if response.get("ok") and response.get("started"):
                    solver_task = asyncio.create_task(
                        session.run_quasistatic())
        except WebSocketDisconnect:
            pass
        finally:
            stepper.cancel()
            sender.cancel()
            if solver_task is not None:
                solver_task.cancel()

    async def _sender(ws: WebSocket, session: Session):
        while True:
            item = await session.outbox.get()
            if isinstance(item, dict):
                await ws.send_text(json.dumps(item))
            else:
                await ws.send_bytes(item)

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True),
                  name="ui")
    else:
        @app.get("/")
        async def index() -> HTMLResponse:
            return HTMLResponse(_PLACEHOLDER)

    return app


def default_ui_dir() -> Optional[Path]:
    """frontend/dist next to an editable checkout, if it exists."""
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return candidate if candidate.is_dir() else None
