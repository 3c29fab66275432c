import threading
from fractions import Fraction
from pathlib import Path

import pytest

from aromaloop.device import VirtualClock
from aromaloop.palette import default_palette

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def palette():
    return default_palette()


class GateClock(VirtualClock):
    """Virtual clock whose waits park until released, so tests can act
    while a dispense step is provably in flight."""

    def __init__(self):
        super().__init__()
        self.step_started = threading.Event()
        self.release = threading.Event()

    def wait(self, ms, event):
        self.step_started.set()
        while not self.release.is_set():
            if event.wait(timeout=0.005):
                return True
        self.sleep(ms)
        return event.is_set()


def apportion_oracle(raw, palette):
    """Brute-force largest-remainder oracle.

    Searches hundredth assignments for the minimum L1 distance to the
    renormalized exact vector; among ties, prefers the assignment that is
    lexicographically greatest in channel-ascending order (equivalent to
    the ascending-channel tie-break of the implementation). Assignments
    outside floor(x)-2 .. floor(x)+3 are provably dominated, so the scan
    window is restricted to keep enumeration tractable.
    """
    clamped = {name: max(Fraction(str(v)), Fraction(0)) for name, v in raw.items()}
    total = sum(clamped.values())
    assert total > 0
    order = [n for n in palette.names]
    exact = {n: clamped.get(n, Fraction(0)) * 100 / total for n in order}
    active = [n for n in order if exact[n] > 0]
    zero_l1 = Fraction(0)  # inactive names contribute 0 at value 0

    best = {}
    best_l1 = [None]

    def rec(i, remaining, acc, l1):
        if best_l1[0] is not None and l1 >= best_l1[0]:
            return
        if i == len(active):
            if remaining == 0:
                best.clear()
                best.update(acc)
                best_l1[0] = l1
            return
        name = active[i]
        floor = int(exact[name])
        max_rest = sum(
            min(100, int(exact[n]) + 3) for n in active[i + 1:]
        )
        for v in range(min(100, floor + 3), max(0, floor - 2) - 1, -1):
            if v > remaining or remaining - v > max_rest:
                continue
            acc[name] = v
            rec(i + 1, remaining - v, acc, l1 + abs(exact[name] - v))
            del acc[name]

    rec(0, 100, {}, zero_l1)
    assert best_l1[0] is not None
    return {n: best.get(n, 0) for n in order}
