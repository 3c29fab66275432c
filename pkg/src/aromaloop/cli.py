"""Command-line surface mirroring the HTTP API flows.

Session state persists through the JSONL log: each invocation replays the
log, applies its operation, and appends the new events.
"""

from __future__ import annotations

import json
import sys

import click

from . import device as device_mod
from .analysis import AnalysisError, convergence_stats, load_ratings, ratings_summary
from .composition import active_odorants, to_schedule
from .gateway import GatewayError, UserInput
from .palette import default_palette, load_palette
from .providers import make_provider
from .session import SessionError, SessionStore


def _load_palette(path):
    if path is None:
        return default_palette()
    with open(path, "rb") as fh:
        return load_palette(fh)


def _store(palette_path, provider_name, log_path) -> SessionStore:
    return SessionStore(
        palette=_load_palette(palette_path),
        provider=make_provider(provider_name),
        log_path=log_path,
    )


def _fail(code: str, message: str):
    click.echo(f"error [{code}]: {message}", err=True)
    sys.exit(1)


def _print_turn(store: SessionStore, session):
    turn = session.latest
    click.echo(f"session {session.id} turn {turn.index}")
    schedule = to_schedule(turn.ratios, store.palette)
    durations = {s.odorant_name: s.duration_ms for s in schedule.steps}
    click.echo(f"{'odorant':<16} {'ratio':>6} {'duration':>10}")
    for name, ratio in active_odorants(turn.ratios, store.palette):
        click.echo(f"{name:<16} {ratio:>6.2f} {durations[name] / 1000:>8.1f} s")
    click.echo(f"justification: {turn.justification}")
    if turn.changes_made:
        click.echo(f"changes: {turn.changes_made}")


common_options = [
    click.option("--palette", "palette_path", type=click.Path(exists=True),
                 default=None, help="palette JSON file (default: bundled)"),
    click.option("--provider", "provider_name",
                 type=click.Choice(["mock", "http"]), default="mock"),
    click.option("--log", "log_path", type=click.Path(), default="sessions.jsonl",
                 help="session JSONL log path"),
]


def with_common(func):
    for option in reversed(common_options):
        func = option(func)
    return func


@click.group()
def main():
    """Closed-loop aroma composition toolkit."""


@main.command()
@click.option("--text", default=None)
@click.option("--image", type=click.Path(exists=True), default=None)
@click.option("--audio", type=click.Path(exists=True), default=None)
@with_common
def generate(text, image, audio, palette_path, provider_name, log_path):
    """Zero-shot composition from a description; starts a session."""
    store = _store(palette_path, provider_name, log_path)
    image_description = None
    transcript = None
    if image:
        image_description = store.provider.describe_image(open(image, "rb").read())
    if audio:
        transcript = store.provider.transcribe(open(audio, "rb").read())
    try:
        user_input = UserInput(
            text=text, image_description=image_description, transcript=transcript
        )
    except ValueError as exc:
        _fail("validation", str(exc))
    try:
        session = store.start_session(user_input)
    except GatewayError as exc:
        _fail("gateway", str(exc))
    _print_turn(store, session)


@main.command()
@click.argument("session_id")
@click.option("--feedback", required=True)
@with_common
def refine(session_id, feedback, palette_path, provider_name, log_path):
    """Revise a session's composition from natural-language feedback."""
    store = _store(palette_path, provider_name, log_path)
    try:
        session = store.refine_session(session_id, feedback)
    except (SessionError, GatewayError, ValueError) as exc:
        _fail("refine", str(exc))
    _print_turn(store, session)


@main.command()
@click.argument("session_id")
@click.option("--device", "device_addr", default="127.0.0.1:7500",
              help="simulator address host:port")
@with_common
def play(session_id, device_addr, palette_path, provider_name, log_path):
    """Dispense the session's latest composition on the device."""
    store = _store(palette_path, provider_name, log_path)
    try:
        session = store.get(session_id)
        schedule = to_schedule(session.latest.ratios, store.palette)
        address = device_mod.parse_address(device_addr)
        report = device_mod.play_schedule(address, schedule)
    except (SessionError, device_mod.DeviceError, ValueError) as exc:
        _fail("play", str(exc))
    for number, step in enumerate(report.steps, start=1):
        click.echo(
            f"step {number}: channel {step.channel} "
            f"[{step.started_at_ms}, {step.ended_at_ms}) ms"
        )
    if report.completed:
        click.echo(f"cycle complete: {report.total_ms} ms")
    else:
        _fail("aborted", f"cycle aborted at step {report.aborted_at_step}")


@main.command()
@click.argument("session_id")
@with_common
def satisfied(session_id, palette_path, provider_name, log_path):
    """Mark a session as satisfied (converged)."""
    store = _store(palette_path, provider_name, log_path)
    try:
        session = store.mark_satisfied(session_id)
    except SessionError as exc:
        _fail("satisfied", str(exc))
    click.echo(
        f"session {session.id} satisfied after "
        f"{session.refinement_turns} refinement turn(s)"
    )


@main.command("simulate-device")
@click.option("--listen", default="127.0.0.1:7500", help="bind address host:port")
def simulate_device(listen):
    """Run the 12-channel dispenser simulator until interrupted."""
    try:
        address = device_mod.parse_address(listen)
        sim = device_mod.serve(address)
    except (ValueError, device_mod.DeviceError) as exc:
        _fail("device", str(exc))
    host, port = sim.address
    click.echo(f"dispenser simulator listening on {host}:{port}")
    try:
        while True:
            sim._thread.join(timeout=1)
    except KeyboardInterrupt:
        sim.stop()


@main.command()
@click.option("--log", "log_path", type=click.Path(exists=True), required=True)
@click.option("--ratings", "ratings_path", type=click.Path(exists=True), default=None)
@click.option("--json", "as_json", is_flag=True, help="emit the JSON summary only")
def analyze(log_path, ratings_path, as_json):
    """Convergence statistics (and optional ratings analysis) for a log."""
    try:
        stats = convergence_stats(log_path)
    except AnalysisError as exc:
        _fail("analyze", str(exc))
    summary = {
        "sessions_satisfied": stats.n_sessions,
        "per_session_refinement_turns": stats.per_session,
        "mean_refinement_turns": stats.mean,
        "sd_refinement_turns": stats.sd,
        "fraction_within": {str(k): v for k, v in stats.fraction_within.items()},
    }
    if ratings_path:
        try:
            summary["ratings"] = ratings_summary(load_ratings(ratings_path))
        except AnalysisError as exc:
            _fail("analyze", str(exc))
    if as_json:
        click.echo(json.dumps(summary, indent=2))
        return
    click.echo(f"satisfied sessions: {stats.n_sessions}")
    if stats.mean is not None:
        click.echo(
            f"mean refinement turns (sessions with feedback): {stats.mean:.2f}"
            + (f" (SD = {stats.sd:.2f})" if stats.sd is not None else "")
        )
    for k in (0, 1, 2):
        frac = stats.fraction_within[k]
        if frac is not None:
            click.echo(f"converged within {k} refinement turn(s): {frac:.0%}")
    if "ratings" in summary:
        click.echo(json.dumps(summary["ratings"], indent=2))


@main.command()
@click.option("--listen", default="127.0.0.1:8000", help="bind address host:port")
@click.option("--device", "device_addr", default=None,
              help="simulator address host:port")
@with_common
def serve(listen, device_addr, palette_path, provider_name, log_path):
    """Start the HTTP API."""
    import uvicorn

    from .api import create_app

    store = _store(palette_path, provider_name, log_path)
    address = device_mod.parse_address(device_addr) if device_addr else None
    app = create_app(store, device_address=address)
    host, port = device_mod.parse_address(listen)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
