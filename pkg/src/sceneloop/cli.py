"""Command line entry points: serve, headless compose, replay render, simulator."""

from __future__ import annotations

import json
import pathlib
import sys

import click

from .audio import encode_wav
from .captions import CaptureFrame, HttpCaptionBackend
from .config import load_config
from .generation import HttpGenerationBackend
from .mixing import HttpMixBackend
from .prompts import InstrumentSelection
from .service import SessionRuntime, create_app
from .session import CaptureBacklogFull, Session


def _build_session(config) -> Session:
    kwargs = {}
    if config.caption_backend == "live":
        kwargs["caption_backend"] = HttpCaptionBackend(
            config.caption_api_url, config.caption_api_key, config.caption_timeout
        )
    if config.generation_backend == "live":
        kwargs["generation_backend"] = HttpGenerationBackend(
            config.generation_api_url, config.generation_api_key
        )
    if config.mix_backend == "live":
        kwargs["mix_backend"] = HttpMixBackend(config.mix_api_url, config.mix_api_key)
    return Session(config=config, **kwargs)


@click.group()
def main():
    """Vision-steered loop composition engine."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
@click.option(
    "--ui",
    "ui_dir",
    type=click.Path(exists=True),
    default=None,
    help="serve the browser console from this directory (autodetects ./frontend)",
)
def run(config_path, host, port, ui_dir):
    """Serve the HTTP API (and the browser console) with a wall-clock session."""
    import uvicorn

    config = load_config(config_path)
    if ui_dir is None and pathlib.Path("frontend/index.html").exists():
        ui_dir = "frontend"
    runtime = SessionRuntime(_build_session(config), realtime=True)
    app = create_app(runtime, static_dir=ui_dir)
    try:
        uvicorn.run(app, host=host, port=port)
    finally:
        runtime.stop_pump()


def load_frame(path: str, captured_at: float = 0.0) -> CaptureFrame:
    with open(path, "rb") as fh:
        data = fh.read()
    import io

    from PIL import Image

    with Image.open(io.BytesIO(data)) as img:
        width, height = img.size
    return CaptureFrame(image_bytes=data, width=width, height=height, captured_at=captured_at)


@main.command()
@click.argument("image_args", nargs=-1, type=click.Path(exists=True))
@click.option("--images", multiple=True, type=click.Path(exists=True))
@click.option("--instruments", default="keys,guitar", show_default=True)
@click.option("-o", "--output", default="session.wav", show_default=True)
@click.option("--log", "log_path", default=None, help="write the session event log here")
@click.option(
    "--latency-profile",
    type=click.Choice(["zero", "paper"]),
    default="zero",
    show_default=True,
    help="mock latencies: zero for instant runs, paper for the measured service averages",
)
@click.option("--auto-mix/--no-auto-mix", default=False, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def compose(image_args, images, instruments, output, log_path, latency_profile, auto_mix, config_path):
    """Headless scripted session: capture each image in order, render a WAV.

    Images can be given as `--images a.jpg b.jpg` or as plain arguments.
    """
    images = list(images) + list(image_args)
    if not images:
        raise click.UsageError("no images given")
    config = load_config(config_path)
    if latency_profile == "zero":
        config = config.zero_latency()
    config.auto_mix = auto_mix
    session = _build_session(config)
    sel = InstrumentSelection.parse(instruments)

    for path in images:
        while True:
            try:
                session.handle_capture(load_frame(path, session.now), sel)
                break
            except CaptureBacklogFull:
                if not session.advance_next():
                    raise
    session.run_until_idle()

    rendered = session.render()
    with open(output, "wb") as fh:
        fh.write(encode_wav(rendered))
    if log_path:
        session.write_event_log(log_path)

    report = session.latency_report()
    report["output"] = output
    report["duration_seconds"] = rendered.duration
    click.echo(json.dumps(report, indent=2))


@main.command()
@click.option("--log", "log_path", required=True, type=click.Path(exists=True))
@click.option("-o", "--output", default="replay.wav", show_default=True)
def render(log_path, output):
    """Replay a recorded event log against the mocks and render it."""
    with open(log_path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    session = Session.replay(lines)
    rendered = session.render()
    with open(output, "wb") as fh:
        fh.write(encode_wav(rendered))
    click.echo(
        json.dumps(
            {
                "output": output,
                "duration_seconds": rendered.duration,
                "sections": len(session.timeline.sections),
            }
        )
    )


@main.command("simulate-device")
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8774, type=int)
@click.option(
    "--script",
    "script_path",
    type=click.Path(exists=True),
    default=None,
    help="raw edge list: '<ms> <button> <d|u>' per line, played on connect",
)
def simulate_device(host, port, script_path):
    """Run the controller firmware simulator on a local socket."""
    from .device import serve_simulator

    script = None
    if script_path:
        script = []
        with open(script_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                ms, button, edge = line.split()
                script.append((int(ms), button, edge == "d"))
    click.echo(f"simulator listening on {host}:{port}", err=True)
    serve_simulator(host=host, port=port, script=script, max_connections=sys.maxsize)


if __name__ == "__main__":
    main()
