"""HTTP + event-stream boundary for the companion UI and CLI.

Handlers are stateless forwarders into the session's ordered queue; state
snapshots are immutable copies, and the event stream mirrors the session
log in order with strictly increasing sequence numbers so clients can
resume from any point after a reconnect.
"""

from __future__ import annotations

import io
import json
import pathlib
import threading
import time

from fastapi import FastAPI, Form, Response, UploadFile
from fastapi.responses import FileResponse, JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image

from .audio import encode_wav
from .captions import CaptureFrame
from .mixing import TooFewSections, UploadFailed
from .prompts import InstrumentCapViolation, InstrumentSelection
from .session import CaptureBacklogFull, Session, SessionNotActive


class SessionRuntime:
    """Session plus the lock and clock pump that drive it under a server."""

    def __init__(self, session: Session, realtime: bool = False):
        self.session = session
        self.lock = threading.RLock()
        self.started = False
        self._event_signal = threading.Condition(self.lock)
        self._pump: threading.Thread | None = None
        self._stop = threading.Event()
        self._t0: float | None = None
        session.add_listener(self._on_event)
        if realtime:
            self.start_pump()

    def _on_event(self, event) -> None:
        with self._event_signal:
            self._event_signal.notify_all()

    def start_pump(self) -> None:
        if self._pump is not None:
            return
        self._t0 = time.monotonic()
        self._pump = threading.Thread(target=self._run_pump, daemon=True)
        self._pump.start()

    def stop_pump(self) -> None:
        self._stop.set()
        if self._pump is not None:
            self._pump.join(timeout=2.0)
            self._pump = None

    def _run_pump(self) -> None:
        while not self._stop.is_set():
            with self.lock:
                self.session.advance(time.monotonic() - self._t0)
            time.sleep(0.01)

    def pump_once(self) -> None:
        """Drain all due virtual work (used when no realtime pump runs)."""
        with self.lock:
            self.session.run_until_idle()


def _frame_from_upload(data: bytes, captured_at: float) -> CaptureFrame:
    with Image.open(io.BytesIO(data)) as img:
        width, height = img.size
    return CaptureFrame(image_bytes=data, width=width, height=height, captured_at=captured_at)


def create_app(runtime: SessionRuntime, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="sceneloop")
    session = runtime.session

    if static_dir is not None:
        root = pathlib.Path(static_dir)
        index = root / "index.html"
        if index.exists():

            @app.get("/")
            def console_page():
                return FileResponse(index)

        if (root / "dist").exists():
            app.mount("/dist", StaticFiles(directory=root / "dist"), name="console")

    @app.post("/capture", status_code=202)
    async def capture(image: UploadFile, instruments: str = Form(...)):
        data = await image.read()
        try:
            sel = InstrumentSelection.parse(instruments)
        except InstrumentCapViolation as exc:
            return JSONResponse({"error": "InstrumentCapViolation", "detail": str(exc)}, 400)
        with runtime.lock:
            try:
                frame = _frame_from_upload(data, session.now)
            except (ValueError, OSError) as exc:
                return JSONResponse({"error": "BadImage", "detail": str(exc)}, 400)
            try:
                handle = session.handle_capture(frame, sel)
            except CaptureBacklogFull as exc:
                return JSONResponse({"error": "CaptureBacklogFull", "detail": str(exc)}, 409)
            except SessionNotActive as exc:
                return JSONResponse({"error": "SessionNotActive", "detail": str(exc)}, 409)
            runtime.started = True
        return {"handle": handle}

    @app.get("/state")
    def state():
        with runtime.lock:
            if not runtime.started:
                return JSONResponse({"error": "NoSession"}, 404)
            return session.state_snapshot()

    @app.get("/events")
    def events(since: int = 0, follow: bool = False, timeout: float = 10.0):
        if not runtime.started:
            return JSONResponse({"error": "NoSession"}, 404)

        def stream():
            cursor = since
            deadline = time.monotonic() + timeout
            while True:
                with runtime.lock:
                    backlog = session.events[cursor:]
                for event in backlog:
                    cursor = event.seq + 1
                    yield json.dumps(event.as_record()) + "\n"
                if not follow:
                    return
                if time.monotonic() > deadline:
                    return
                with runtime._event_signal:
                    runtime._event_signal.wait(timeout=0.25)

        return StreamingResponse(stream(), media_type="application/x-ndjson")

    @app.post("/control")
    def control(body: dict):
        op = body.get("op")
        with runtime.lock:
            if not runtime.started:
                return JSONResponse({"error": "NoSession"}, 409)
            if op == "toggle_auto_mix":
                enabled = session.toggle_auto_mix(body.get("enabled"))
                return {"ok": True, "auto_mix": enabled}
            if op == "select_instruments":
                try:
                    sel = InstrumentSelection(tuple(body.get("instruments", ())))
                except InstrumentCapViolation as exc:
                    return JSONResponse(
                        {"error": "InstrumentCapViolation", "detail": str(exc)}, 400
                    )
                session.select_instruments(sel)
                return {"ok": True, "instruments": list(sel.instruments)}
            if op == "request_master":
                try:
                    job = session.request_master()
                except (TooFewSections, UploadFailed) as exc:
                    return JSONResponse({"error": type(exc).__name__, "detail": str(exc)}, 409)
                return {"ok": True, "task_id": job.task_id}
            if op == "export":
                if session.timeline is None or not session.timeline.sections:
                    return JSONResponse({"error": "NothingToExport"}, 409)
                wav = encode_wav(session.render())
                return Response(content=wav, media_type="audio/wav")
            return JSONResponse({"error": "UnknownOp", "detail": str(op)}, 400)

    @app.post(session.config.webhook_path)
    def mix_webhook(body: dict):
        with runtime.lock:
            if not runtime.started:
                return JSONResponse({"error": "NoSession"}, 404)
            session.webhook_mix_ready(str(body.get("task_id", "")))
        return {"ok": True}

    return app
