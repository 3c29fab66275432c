import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aromaloop.composition import (
    CompositionError,
    RatioVector,
    active_odorants,
    repair_ratios,
    to_schedule,
)
from aromaloop.palette import default_palette, odorant_by_name

from conftest import apportion_oracle

PALETTE = default_palette()
NAMES = list(PALETTE.names)


def vector(**kwargs):
    hundredths = {name: 0 for name in NAMES}
    hundredths.update(kwargs)
    return RatioVector(hundredths={n.replace("_", " "): v for n, v in hundredths.items()})


class TestRatioVector:
    def test_sum_must_be_exact(self):
        with pytest.raises(CompositionError, match="sum to exactly 1.00"):
            RatioVector(hundredths={"Strawberry": 99})

    def test_negative_rejected(self):
        with pytest.raises(CompositionError):
            RatioVector(hundredths={"Strawberry": 120, "Onion": -20})

    def test_decimal_strings(self):
        r = RatioVector(hundredths={"Strawberry": 50, "Onion": 50})
        assert r.as_decimal_strings() == {"Strawberry": "0.50", "Onion": "0.50"}


class TestRepairRatios:
    def test_already_valid_unchanged(self):
        raw = {name: 0.0 for name in NAMES}
        raw["Strawberry"] = 0.5
        raw["Onion"] = 0.5
        result = repair_ratios(raw, PALETTE)
        assert result.hundredths["Strawberry"] == 50
        assert result.hundredths["Onion"] == 50
        assert sum(result.hundredths.values()) == 100

    def test_thirds_match_bruteforce_oracle(self):
        raw = {"Cumin": 1 / 3, "Sage": 1 / 3, "Thyme": 1 / 3}
        result = repair_ratios(raw, PALETTE)
        assert result.hundredths == apportion_oracle(raw, PALETTE)
        # extra hundredth lands on the lowest channel among tied remainders
        assert result.hundredths["Cumin"] == 34
        assert result.hundredths["Sage"] == 33
        assert result.hundredths["Thyme"] == 33

    def test_negative_clamped_then_renormalized(self):
        result = repair_ratios({"Cumin": -0.2, "Onion": 0.6}, PALETTE)
        assert result.hundredths["Cumin"] == 0
        assert result.hundredths["Onion"] == 100

    def test_unknown_key_rejected_by_name(self):
        with pytest.raises(CompositionError, match="Garlic"):
            repair_ratios({"Garlic": 1.0}, PALETTE)

    def test_all_nonpositive_degenerate(self):
        with pytest.raises(CompositionError, match="degenerate"):
            repair_ratios({"Cumin": 0, "Onion": -1}, PALETTE)

    def test_empty_mapping_rejected(self):
        with pytest.raises(CompositionError, match="empty"):
            repair_ratios({}, PALETTE)

    def test_missing_keys_filled_with_zero(self):
        result = repair_ratios({"Strawberry": 1.0}, PALETTE)
        assert set(result.hundredths) == set(NAMES)
        assert result.hundredths["Strawberry"] == 100

    @given(st.dictionaries(
        st.sampled_from(NAMES),
        st.floats(min_value=-1, max_value=2, allow_nan=False),
        min_size=1, max_size=12,
    ))
    @settings(max_examples=200, deadline=None)
    def test_idempotent_and_exact(self, raw):
        try:
            first = repair_ratios(raw, PALETTE)
        except CompositionError:
            return
        assert sum(first.hundredths.values()) == 100
        second = repair_ratios(first.as_floats(), PALETTE)
        assert second == first


class TestActiveOdorants:
    def test_single_active(self):
        assert active_odorants(vector(Strawberry=100), PALETTE) == [("Strawberry", 1.0)]

    def test_order_ratio_then_channel(self):
        r = vector(Cumin=25, Sage=25, Onion=30, Thyme=20)
        names = [name for name, _ in active_odorants(r, PALETTE)]
        assert names == ["Onion", "Cumin", "Sage", "Thyme"]

    def test_twelve_way_split_counts_all(self):
        hundredths = {name: 8 for name in NAMES}
        for name in NAMES[:4]:
            hundredths[name] = 9
        r = RatioVector(hundredths=hundredths)
        assert len(active_odorants(r, PALETTE)) == 12


class TestToSchedule:
    def test_reference_three_step(self):
        r = RatioVector(hundredths={"Isovaleric Acid": 50, "Onion": 25, "Strawberry": 25})
        schedule = to_schedule(r, PALETTE)
        assert [(s.odorant_name, s.duration_ms) for s in schedule.steps] == [
            ("Isovaleric Acid", 30000), ("Onion", 15000), ("Strawberry", 15000),
        ]
        assert schedule.total_ms == 60000

    def test_single_odorant_full_cycle(self):
        schedule = to_schedule(vector(Strawberry=100), PALETTE)
        assert len(schedule.steps) == 1
        assert schedule.steps[0].duration_ms == 60000

    def test_volatility_tie_broken_by_channel(self):
        r = RatioVector(hundredths={"Cumin": 33, "Ylang Ylang": 33, "Sichuan Oil": 34})
        schedule = to_schedule(r, PALETTE)
        # Cumin and Ylang Ylang share volatility 6; Cumin sits on channel 0
        assert [s.odorant_name for s in schedule.steps] == [
            "Cumin", "Ylang Ylang", "Sichuan Oil",
        ]
        assert [s.duration_ms for s in schedule.steps] == [19800, 19800, 20400]

    def test_zero_ratios_omitted(self):
        schedule = to_schedule(vector(Strawberry=60, Onion=40), PALETTE)
        assert len(schedule.steps) == 2

    @given(st.lists(st.sampled_from(NAMES), min_size=1, max_size=12, unique=True),
           st.data())
    @settings(max_examples=200, deadline=None)
    def test_invariants(self, names, data):
        weights = [data.draw(st.integers(min_value=1, max_value=50)) for _ in names]
        raw = dict(zip(names, weights))
        r = repair_ratios(raw, PALETTE)
        schedule = to_schedule(r, PALETTE)
        assert sum(s.duration_ms for s in schedule.steps) == 60000
        assert all(s.duration_ms > 0 for s in schedule.steps)
        channels = [s.channel for s in schedule.steps]
        assert len(set(channels)) == len(channels)
        vols = [odorant_by_name(PALETTE, s.odorant_name).volatility
                for s in schedule.steps]
        for i in range(len(schedule.steps) - 1):
            assert vols[i] > vols[i + 1] or (
                vols[i] == vols[i + 1]
                and schedule.steps[i].channel < schedule.steps[i + 1].channel
            )
