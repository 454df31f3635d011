"""Line protocol for the five-button controller, plus a firmware simulator.

The wire format is newline-terminated ASCII at 115200 baud:

    B <button_index> <d|u> <ms>          button edge, device -> host
    D <bpm> <role> <level> <led_hex> <genre>   display update, host -> device
    A                                    ack, device -> host

Button indices follow the panel order keys, guitar, bass, percussion,
capture. The simulator reproduces the firmware's finite-state behavior:
30 ms debounce, instrument buttons toggle their LED, the capture button
only emits an event, and the host stays authoritative for LED state
(local toggles are reconciled on the next display line).
"""

from __future__ import annotations

import socket
import threading
from dataclasses import dataclass, field

from .prompts import ROLES

BUTTONS = ("keys", "guitar", "bass", "percussion", "capture")
CAPTURE_INDEX = 4

DEBOUNCE_MS = 30
GENRE_MAX_CHARS = 16
MAX_LEVEL = 15


class ProtocolError(ValueError):
    """Line does not parse under the wire protocol."""


@dataclass(frozen=True)
class DeviceEvent:
    kind: str  # button_down | button_up
    button: str
    at_ms: int


@dataclass(frozen=True)
class DisplayAck:
    pass


@dataclass(frozen=True)
class DisplayState:
    tempo: float
    genre: str
    section_role: str
    audio_level: int
    led_mask: int

    def __post_init__(self):
        if self.section_role not in ROLES:
            raise ValueError(f"unknown section role {self.section_role!r}")
        if not (0 <= self.audio_level <= MAX_LEVEL):
            raise ValueError("audio_level must be 0..15")
        if not (0 <= self.led_mask < 1 << len(BUTTONS)):
            raise ValueError("led_mask must fit 5 bits")


def led_bit(button: str) -> int:
    return 1 << BUTTONS.index(button)


def encode_display(state: DisplayState) -> str:
    """One display line; genre truncated to 16 chars."""
    genre = state.genre[:GENRE_MAX_CHARS]
    return (
        f"D {round(state.tempo)} {state.section_role} "
        f"{state.audio_level} {state.led_mask:02x} {genre}\n"
    )


def encode_event(event: DeviceEvent) -> str:
    edge = "d" if event.kind == "button_down" else "u"
    return f"B {BUTTONS.index(event.button)} {edge} {event.at_ms}\n"


def parse_line(line: str):
    """Parse one protocol line into a DeviceEvent, DisplayState, or DisplayAck."""
    if not line.endswith("\n"):
        raise ProtocolError("line must end with newline")
    body = line[:-1]
    if body == "A":
        return DisplayAck()
    opcode, _, rest = body.partition(" ")
    if opcode == "B":
        fields = rest.split(" ")
        if len(fields) != 3:
            raise ProtocolError(f"B line needs 3 fields, got {len(fields)}")
        idx_s, edge, ms_s = fields
        try:
            idx, ms = int(idx_s), int(ms_s)
        except ValueError as exc:
            raise ProtocolError(f"bad B line numbers: {rest!r}") from exc
        if not (0 <= idx < len(BUTTONS)):
            raise ProtocolError(f"button index {idx} out of range")
        if edge not in ("d", "u"):
            raise ProtocolError(f"bad edge {edge!r}")
        if ms < 0:
            raise ProtocolError("negative timestamp")
        kind = "button_down" if edge == "d" else "button_up"
        return DeviceEvent(kind=kind, button=BUTTONS[idx], at_ms=ms)
    if opcode == "D":
        fields = rest.split(" ", 4)
        if len(fields) != 5:
            raise ProtocolError(f"D line needs 5 fields, got {len(fields)}")
        bpm_s, role, level_s, led_s, genre = fields
        try:
            tempo = int(bpm_s)
            level = int(level_s)
            mask = int(led_s, 16)
        except ValueError as exc:
            raise ProtocolError(f"bad D line numbers: {rest!r}") from exc
        try:
            return DisplayState(
                tempo=tempo,
                genre=genre,
                section_role=role,
                audio_level=level,
                led_mask=mask,
            )
        except ValueError as exc:
            raise ProtocolError(str(exc)) from exc
    raise ProtocolError(f"unknown opcode {opcode!r}")


@dataclass
class FirmwareSimulator:
    """Finite-state loop: debounce, LED toggles, display echo.

    Stateless beyond display/LED responsibilities — capture presses only
    emit events; all playback logic stays host-side.
    """

    debounce_ms: int = DEBOUNCE_MS
    led_state: int = 0
    display: DisplayState | None = None
    _last_edge_ms: dict[str, int] = field(default_factory=dict)
    _toggles_since_display: int = 0

    def feed_edge(self, at_ms: int, button: str, pressed: bool) -> DeviceEvent | None:
        """Process one raw (possibly bouncing) switch edge."""
        if button not in BUTTONS:
            raise ProtocolError(f"unknown button {button!r}")
        last = self._last_edge_ms.get(button)
        if last is not None and at_ms - last < self.debounce_ms:
            return None
        self._last_edge_ms[button] = at_ms
        kind = "button_down" if pressed else "button_up"
        event = DeviceEvent(kind=kind, button=button, at_ms=at_ms)
        if pressed and button != "capture":
            bit = led_bit(button)
            self.led_state ^= bit
            self._toggles_since_display ^= bit
        return event

    def handle_line(self, line: str) -> str:
        """Host -> device line; returns the device's reply line."""
        message = parse_line(line)
        if isinstance(message, DisplayState):
            # host is authoritative: reconcile optimistic local toggles
            self.display = message
            self.led_state = message.led_mask
            self._toggles_since_display = 0
            return "A\n"
        raise ProtocolError("device only accepts display lines")


def simulate_firmware(
    edges: list[tuple[int, str, bool]], debounce_ms: int = DEBOUNCE_MS
) -> tuple[list[DeviceEvent], FirmwareSimulator]:
    """Run a time-ordered raw edge list through a fresh simulator."""
    sim = FirmwareSimulator(debounce_ms=debounce_ms)
    events = []
    for at_ms, button, pressed in edges:
        event = sim.feed_edge(at_ms, button, pressed)
        if event is not None:
            events.append(event)
    return events, sim


def serve_simulator(
    host: str = "127.0.0.1",
    port: int = 8774,
    script: list[tuple[int, str, bool]] | None = None,
    ready: threading.Event | None = None,
    max_connections: int = 1,
):
    """Expose the simulator's byte stream on a local socket (UI development).

    The device side of the protocol: emits any scripted button events once
    a client connects, acks display lines.
    """
    sim = FirmwareSimulator()
    server = socket.create_server((host, port))
    server.settimeout(1.0)
    if ready is not None:
        ready.set()
    try:
        for _ in range(max_connections):
            try:
                conn, _addr = server.accept()
            except socket.timeout:
                continue
            with conn:
                if script:
                    for at_ms, button, pressed in script:
                        event = sim.feed_edge(at_ms, button, pressed)
                        if event is not None:
                            conn.sendall(encode_event(event).encode("ascii"))
                reader = conn.makefile("r", encoding="ascii", newline="\n")
                for line in reader:
                    try:
                        reply = sim.handle_line(line if line.endswith("\n") else line + "\n")
                    except ProtocolError:
                        break
                    conn.sendall(reply.encode("ascii"))
    finally:
        server.close()
