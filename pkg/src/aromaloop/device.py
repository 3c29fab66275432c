"""12-channel dispenser simulator behind a line-based TCP protocol.

Protocol (newline-terminated ASCII, one command per line):

    HELLO                       -> OK HELLO 12
    STATUS                      -> OK IDLE | OK DISPENSING <ch> <remaining_ms>
    DISPENSE <ch> <ms>          -> DONE <ch> <start> <end>
                                 | ABORTED <ch> <start> <end>
                                 | ERR BUSY ... | ERR RANGE ...
    ABORT                       -> OK ABORTED <ch> | OK IDLE
    anything else               -> ERR SYNTAX ...

Only one channel dispenses at a time; the core records every dispensed
interval in a trace so the exclusivity invariant can be audited. Timing
runs against an injectable clock so tests execute 60-second cycles
instantly.
"""

from __future__ import annotations

import socket
import socketserver
import threading
import time
from dataclasses import dataclass
from typing import List, Optional, Tuple

from .composition import DispenseSchedule

NUM_CHANNELS = 12


class DeviceError(Exception):
    pass


class DeviceBusyError(DeviceError):
    pass


class Clock:
    """Millisecond clock; real in production, virtual in tests."""

    def now_ms(self) -> int:
        raise NotImplementedError

    def sleep(self, ms: int) -> None:
        raise NotImplementedError

    def wait(self, ms: int, event: threading.Event) -> bool:
        """Sleep up to `ms`; True if `event` interrupted the wait."""
        raise NotImplementedError


class RealClock(Clock):
    def __init__(self):
        self._start = time.monotonic()

    def now_ms(self) -> int:
        return int((time.monotonic() - self._start) * 1000)

    def sleep(self, ms: int) -> None:
        if ms > 0:
            time.sleep(ms / 1000)

    def wait(self, ms: int, event: threading.Event) -> bool:
        return event.wait(ms / 1000)


class VirtualClock(Clock):
    """Advances instantly and deterministically; thread-safe."""

    def __init__(self):
        self._time_ms = 0
        self._lock = threading.Lock()

    def now_ms(self) -> int:
        with self._lock:
            return self._time_ms

    def sleep(self, ms: int) -> None:
        with self._lock:
            self._time_ms += max(ms, 0)

    def wait(self, ms: int, event: threading.Event) -> bool:
        if event.is_set():
            return True
        self.sleep(ms)
        return event.is_set()


@dataclass(frozen=True)
class StepReport:
    channel: int
    requested_ms: int
    started_at_ms: int
    ended_at_ms: int


@dataclass
class DispenseReport:
    steps: List[StepReport]
    completed: bool
    aborted_at_step: Optional[int] = None  # 1-based step number

    @property
    def total_ms(self) -> int:
        return sum(s.ended_at_ms - s.started_at_ms for s in self.steps)


class DeviceCore:
    """Channel state machine shared by all connections."""

    def __init__(self, clock: Clock):
        self.clock = clock
        self._lock = threading.Lock()
        self._dispensing: Optional[Tuple[int, int, int]] = None  # ch, start, end
        self._abort = threading.Event()
        self.trace: List[Tuple[int, int, int]] = []  # (channel, start, end)

    def status(self) -> str:
        with self._lock:
            if self._dispensing is None:
                return "OK IDLE"
            ch, _start, end = self._dispensing
            remaining = max(end - self.clock.now_ms(), 0)
            return f"OK DISPENSING {ch} {remaining}"

    def abort(self) -> str:
        with self._lock:
            if self._dispensing is None:
                return "OK IDLE"
            self._abort.set()
            return f"OK ABORTED {self._dispensing[0]}"

    def dispense(self, channel: int, duration_ms: int) -> str:
        if not 0 <= channel < NUM_CHANNELS:
            return f"ERR RANGE channel {channel} out of 0..{NUM_CHANNELS - 1}"
        if duration_ms <= 0:
            return f"ERR RANGE duration must be positive, got {duration_ms}"
        with self._lock:
            if self._dispensing is not None:
                return "ERR BUSY a dispense cycle is running"
            start = self.clock.now_ms()
            self._dispensing = (channel, start, start + duration_ms)
            self._abort.clear()
        interrupted = self.clock.wait(duration_ms, self._abort)
        with self._lock:
            end = self.clock.now_ms()
            self._dispensing = None
            self._abort.clear()
            self.trace.append((channel, start, end))
        if interrupted:
            return f"ABORTED {channel} {start} {end}"
        return f"DONE {channel} {start} {end}"

    def handle_line(self, line: str) -> str:
        parts = line.strip().split()
        if not parts:
            return "ERR SYNTAX empty command"
        command, args = parts[0].upper(), parts[1:]
        if command == "HELLO":
            return f"OK HELLO {NUM_CHANNELS}"
        if command == "STATUS":
            return self.status()
        if command == "ABORT":
            return self.abort()
        if command == "DISPENSE":
            if len(args) != 2:
                return "ERR SYNTAX usage: DISPENSE <channel> <ms>"
            try:
                channel, duration = int(args[0]), int(args[1])
            except ValueError:
                return "ERR SYNTAX channel and ms must be integers"
            return self.dispense(channel, duration)
        return f"ERR SYNTAX unknown command {command}"


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        core: DeviceCore = self.server.core  # type: ignore[attr-defined]
        while True:
            raw = self.rfile.readline()
            if not raw:
                return
            try:
                line = raw.decode("ascii")
            except UnicodeDecodeError:
                self.wfile.write(b"ERR SYNTAX non-ascii command\n")
                continue
            reply = core.handle_line(line)
            self.wfile.write(reply.encode("ascii") + b"\n")


class _Server(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class DeviceSimulator:
    """TCP front end over a DeviceCore."""

    def __init__(self, clock: Optional[Clock] = None, host="127.0.0.1", port=0):
        self.core = DeviceCore(clock or RealClock())
        self._server = _Server((host, port), _Handler)
        self._server.core = self.core  # type: ignore[attr-defined]
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> Tuple[str, int]:
        return self._server.server_address[:2]

    def start(self):
        self._thread = threading.Thread(
            target=self._server.serve_forever, kwargs={"poll_interval": 0.01},
            daemon=True,
        )
        self._thread.start()
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def serve(listen: Tuple[str, int], clock: Optional[Clock] = None) -> DeviceSimulator:
    """Start a simulator on `listen` (host, port); returns the running
    instance."""
    try:
        sim = DeviceSimulator(clock=clock, host=listen[0], port=listen[1])
    except OSError as exc:
        raise DeviceError(f"cannot bind {listen[0]}:{listen[1]}: {exc}") from exc
    return sim.start()


class DeviceClient:
    """Line-protocol client used by the service layer."""

    def __init__(self, address: Tuple[str, int], timeout: float = 120.0):
        try:
            self._sock = socket.create_connection(address, timeout=timeout)
        except OSError as exc:
            raise DeviceError(
                f"cannot connect to device at {address[0]}:{address[1]}: {exc}"
            ) from exc
        self._reader = self._sock.makefile("r", encoding="ascii", newline="\n")

    def close(self):
        self._reader.close()
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def command(self, line: str) -> str:
        self._sock.sendall(line.encode("ascii") + b"\n")
        reply = self._reader.readline()
        if not reply:
            raise DeviceError("connection closed by simulator")
        return reply.rstrip("\n")

    def play_schedule(self, schedule: DispenseSchedule) -> DispenseReport:
        """Drive one full cycle, one DISPENSE per step, awaiting completion
        between steps."""
        if not schedule.steps:
            raise DeviceError("empty schedule")
        report = DispenseReport(steps=[], completed=False)
        for number, step in enumerate(schedule.steps, start=1):
            try:
                reply = self.command(f"DISPENSE {step.channel} {step.duration_ms}")
            except DeviceError:
                report.aborted_at_step = number
                return report
            parts = reply.split()
            if parts[0] == "ERR":
                if parts[1] == "BUSY":
                    raise DeviceBusyError(reply)
                raise DeviceError(reply)
            _kind, _ch, start, end = parts[0], int(parts[1]), int(parts[2]), int(parts[3])
            report.steps.append(
                StepReport(step.channel, step.duration_ms, start, end)
            )
            if parts[0] == "ABORTED":
                report.aborted_at_step = number
                return report
        report.completed = True
        return report


def play_schedule(address: Tuple[str, int], schedule: DispenseSchedule) -> DispenseReport:
    with DeviceClient(address) as client:
        return client.play_schedule(schedule)


def parse_address(value: str) -> Tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"address must be host:port, got {value!r}")
    return host, int(port)
