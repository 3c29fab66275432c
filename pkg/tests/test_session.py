import json
import threading

import pytest

from aromaloop.composition import RatioVector, repair_ratios
from aromaloop.gateway import UnrepairableOutputError, UserInput
from aromaloop.providers import MockProvider, ScriptedProvider
from aromaloop.session import (
    SessionConflictError,
    SessionStateError,
    SessionStore,
    replay_log,
    turn_diff,
)


@pytest.fixture
def store(palette, tmp_path):
    return SessionStore(palette, MockProvider(), tmp_path / "sessions.jsonl")


class TestLifecycle:
    def test_start_creates_turn_zero(self, store):
        session = store.start_session(UserInput(text="a slice of pizza"))
        assert len(session.turns) == 1
        assert session.turns[0].index == 0
        assert session.turns[0].feedback is None
        assert session.status == "active"

    def test_image_only_modalities(self, store):
        session = store.start_session(UserInput(image_description="a pizza"))
        assert session.turns[0].modalities == frozenset({"image"})

    def test_provider_failure_creates_nothing(self, palette, tmp_path):
        log = tmp_path / "log.jsonl"
        store = SessionStore(palette, ScriptedProvider(["garbage"]), log)
        with pytest.raises(UnrepairableOutputError):
            store.start_session(UserInput(text="x"))
        assert store.sessions() == []
        assert not log.exists()

    def test_refinement_appends_turns(self, store):
        session = store.start_session(UserInput(text="pizza"))
        store.refine_session(session.id, "less savory")
        store.refine_session(session.id, "more smoky")
        assert [t.index for t in session.turns] == [0, 1, 2]
        assert session.turns[1].feedback == "less savory"
        assert session.history() == [
            (t.feedback, t.changes_made) for t in session.turns[1:]
        ]

    def test_history_passed_in_order(self, store, monkeypatch):
        from aromaloop import session as session_mod

        captured = []
        real = session_mod.gateway.refine

        def spy(provider, palette, original, current, history, feedback):
            captured.append(list(history))
            return real(provider, palette, original, current, history, feedback)

        monkeypatch.setattr(session_mod.gateway, "refine", spy)
        session = store.start_session(UserInput(text="pizza"))
        store.refine_session(session.id, "first")
        store.refine_session(session.id, "second")
        store.refine_session(session.id, "third")
        assert [len(h) for h in captured] == [0, 1, 2]
        assert [f for f, _ in captured[2]] == ["first", "second"]

    def test_refine_after_satisfied_rejected(self, store):
        session = store.start_session(UserInput(text="pizza"))
        store.mark_satisfied(session.id)
        with pytest.raises(SessionStateError):
            store.refine_session(session.id, "more")

    def test_satisfy_twice_rejected(self, store):
        session = store.start_session(UserInput(text="pizza"))
        store.mark_satisfied(session.id)
        with pytest.raises(SessionStateError):
            store.mark_satisfied(session.id)

    def test_satisfy_at_zero_shot(self, store):
        session = store.start_session(UserInput(text="pizza"))
        store.mark_satisfied(session.id)
        assert session.refinement_turns == 0

    def test_satisfy_after_two_refinements(self, store):
        session = store.start_session(UserInput(text="pizza"))
        store.refine_session(session.id, "less savory")
        store.refine_session(session.id, "more smoky")
        store.mark_satisfied(session.id)
        assert session.refinement_turns == 2

    def test_failed_refinement_leaves_session_unchanged(self, palette, tmp_path):
        valid = MockProvider().complete("You are AromaAI, a food smell recreator", "pizza")
        store = SessionStore(
            palette, ScriptedProvider([valid, "garbage"]), tmp_path / "log.jsonl"
        )
        session = store.start_session(UserInput(text="pizza"))
        with pytest.raises(UnrepairableOutputError):
            store.refine_session(session.id, "less savory")
        assert len(session.turns) == 1


class TestTurnDiff:
    def test_identity_empty(self, palette):
        r = repair_ratios({"Strawberry": 0.5, "Onion": 0.5}, palette)
        assert turn_diff(r, r) == []

    def test_classification_and_zero_sum(self, palette):
        a = repair_ratios({"Strawberry": 0.40, "Onion": 0.60}, palette)
        b = repair_ratios({"Strawberry": 0.25, "Onion": 0.60, "Thyme": 0.15}, palette)
        diff = {e.name: e for e in turn_diff(a, b)}
        assert diff["Strawberry"].kind == "decreased"
        assert diff["Strawberry"].delta == pytest.approx(-0.15)
        assert diff["Thyme"].kind == "introduced"
        assert diff["Thyme"].delta == pytest.approx(0.15)
        assert sum(e.delta for e in diff.values()) == pytest.approx(0.0)

    def test_zeroed_classification(self, palette):
        a = repair_ratios({"Onion": 0.10, "Strawberry": 0.90}, palette)
        b = repair_ratios({"Strawberry": 1.00}, palette)
        diff = {e.name: e for e in turn_diff(a, b)}
        assert diff["Onion"].kind == "zeroed"


class TestLogReplay:
    def test_replay_reconstructs_session(self, store):
        session = store.start_session(UserInput(text="spiced chai latte"))
        store.refine_session(session.id, "less sweet")
        store.mark_satisfied(session.id)
        replayed = replay_log(store.log_path)
        assert replayed[session.id] == session

    def test_log_records_have_contract_fields(self, store):
        session = store.start_session(UserInput(text="pizza"))
        store.refine_session(session.id, "less savory")
        records = [
            json.loads(line)
            for line in store.log_path.read_text().splitlines()
        ]
        events = [r["event"] for r in records]
        assert events == ["created", "turn", "turn"]
        turn = records[2]
        for key in ("session_id", "turn_index", "ratios", "feedback",
                    "changes_made", "justification", "latency_ms", "repaired",
                    "modalities", "timestamp"):
            assert key in turn
        assert all(len(v.split(".")[1]) == 2 for v in turn["ratios"].values())

    def test_store_reloads_existing_log(self, palette, store):
        session = store.start_session(UserInput(text="pizza"))
        store.refine_session(session.id, "less savory")
        reloaded = SessionStore(palette, MockProvider(), store.log_path)
        assert reloaded.get(session.id) == session
        reloaded.refine_session(session.id, "more smoky")
        assert len(reloaded.get(session.id).turns) == 3


class TestConcurrency:
    def test_concurrent_refinement_conflicts(self, palette, tmp_path):
        release = threading.Event()
        inner = MockProvider()

        class SlowProvider(MockProvider):
            def complete(self, system, user):
                if system.startswith("You are AromaAI in REVISION"):
                    release.wait(timeout=5)
                return inner.complete(system, user)

        store = SessionStore(palette, SlowProvider(), tmp_path / "log.jsonl")
        session = store.start_session(UserInput(text="pizza"))
        errors = []

        def refine_slow():
            store.refine_session(session.id, "less savory")

        t = threading.Thread(target=refine_slow)
        t.start()
        import time

        deadline = time.monotonic() + 5
        conflicted = False
        while time.monotonic() < deadline and not conflicted:
            try:
                store.refine_session(session.id, "more smoky")
            except SessionConflictError:
                conflicted = True
        release.set()
        t.join(timeout=5)
        assert conflicted
