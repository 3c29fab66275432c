"""Study statistics: descriptor distances, nonparametric tests, convergence.

The Wilcoxon signed-rank p-value is computed exactly, by the permutation
distribution of the positive-rank sum over all sign assignments
(conditioned on the observed ranks, average ranks for ties, zero
differences dropped). The normal approximation is used only for the
Z-based effect size r = |Z| / sqrt(N).
"""

from __future__ import annotations

import csv
import json
import math
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from scipy.stats import chi2 as _chi2

DESCRIPTOR_DIMENSIONS = (
    "sweet", "savory", "sour", "burnt_smoked", "fresh", "chemical_artificial",
)

EXACT_LIMIT = 25  # beyond this the sign-assignment space is impractical


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class DescriptorRating:
    sweet: int
    savory: int
    sour: int
    burnt_smoked: int
    fresh: int
    chemical_artificial: int

    def __post_init__(self):
        for dim in DESCRIPTOR_DIMENSIONS:
            value = getattr(self, dim)
            if not isinstance(value, int) or not 1 <= value <= 10:
                raise AnalysisError(f"{dim} rating out of 1..10: {value!r}")

    def as_tuple(self):
        return tuple(getattr(self, dim) for dim in DESCRIPTOR_DIMENSIONS)


def descriptor_distance(a: DescriptorRating, b: DescriptorRating) -> float:
    """Euclidean distance in the six-dimensional descriptor space."""
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a.as_tuple(), b.as_tuple())))


def _signed_ranks(pairs) -> List[Tuple[Fraction, int]]:
    """(rank, sign) for non-zero differences, average ranks for ties.

    Ranks are Fractions so tied average ranks stay exact.
    """
    diffs = [a - b for a, b in pairs]
    diffs = [d for d in diffs if d != 0]
    if not diffs:
        raise AnalysisError("degenerate sample: all differences are zero")
    ordered = sorted(range(len(diffs)), key=lambda i: abs(diffs[i]))
    ranks: List[Optional[Fraction]] = [None] * len(diffs)
    position = 0
    while position < len(ordered):
        block_end = position
        while (
            block_end + 1 < len(ordered)
            and abs(diffs[ordered[block_end + 1]]) == abs(diffs[ordered[position]])
        ):
            block_end += 1
        avg = Fraction(position + 1 + block_end + 1, 2)
        for k in range(position, block_end + 1):
            ranks[ordered[k]] = avg
        position = block_end + 1
    return [(ranks[i], 1 if diffs[i] > 0 else -1) for i in range(len(diffs))]


def _exact_two_sided_p(ranks: Sequence[Fraction], w_plus: Fraction) -> Fraction:
    """P(|W+ - S/2| >= |w_plus - S/2|) over all 2^n sign assignments.

    Computed by dynamic programming over doubled ranks (integers).
    """
    doubled = [int(r * 2) for r in ranks]
    counts = Counter({0: 1})
    for r in doubled:
        nxt = Counter()
        for total, c in counts.items():
            nxt[total] += c
            nxt[total + r] += c
        counts = nxt
    s = sum(doubled)
    observed = abs(int(w_plus * 2) * 2 - s)  # |2*W+ - S| in doubled units
    favorable = sum(c for total, c in counts.items() if abs(2 * total - s) >= observed)
    return Fraction(favorable, 2 ** len(doubled))


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # W = min(W+, W-)
    pvalue: float
    z: float
    effect_r: float
    n: int  # non-zero pairs used


def wilcoxon_signed_rank(pairs: Sequence[Tuple[float, float]]) -> WilcoxonResult:
    if len(pairs) < 2:
        raise AnalysisError("need at least 2 pairs")
    signed = _signed_ranks(pairs)
    n = len(signed)
    if n > EXACT_LIMIT:
        raise AnalysisError(f"exact mode limited to n <= {EXACT_LIMIT}, got {n}")
    ranks = [r for r, _ in signed]
    w_plus = sum(r for r, sign in signed if sign > 0)
    w_minus = sum(r for r, sign in signed if sign < 0)
    pvalue = _exact_two_sided_p(ranks, Fraction(w_plus))

    # Normal approximation, used only for the effect size.
    mean = Fraction(sum(ranks), 2)
    variance = sum(r * r for r in ranks) / Fraction(4)
    z = float(w_plus - mean) / math.sqrt(float(variance))
    return WilcoxonResult(
        statistic=float(min(w_plus, w_minus)),
        pvalue=float(pvalue),
        z=z,
        effect_r=abs(z) / math.sqrt(n),
        n=n,
    )


@dataclass(frozen=True)
class FriedmanResult:
    statistic: float
    df: int
    pvalue: float


def _row_ranks(row: Sequence[float]) -> List[float]:
    order = sorted(range(len(row)), key=lambda j: row[j])
    ranks = [0.0] * len(row)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and row[order[j + 1]] == row[order[i]]:
            j += 1
        avg = (i + 1 + j + 1) / 2
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def friedman_test(matrix: Sequence[Sequence[float]]) -> FriedmanResult:
    """Tie-corrected Friedman test on an n-subjects x k-conditions matrix."""
    n = len(matrix)
    if n < 2:
        raise AnalysisError("need at least 2 subjects")
    k = len(matrix[0])
    if k < 3 or any(len(row) != k for row in matrix):
        raise AnalysisError("need a rectangular matrix with at least 3 conditions")

    rank_rows = [_row_ranks(row) for row in matrix]
    column_sums = [sum(row[j] for row in rank_rows) for j in range(k)]
    sum_r2 = sum(r * r for row in rank_rows for r in row)
    numerator = (k - 1) * (
        sum(rj * rj for rj in column_sums) - n * n * k * (k + 1) ** 2 / 4
    )
    denominator = sum_r2 - n * k * (k + 1) ** 2 / 4
    if denominator == 0:
        raise AnalysisError("degenerate matrix: every row is fully tied")
    statistic = numerator / denominator
    df = k - 1
    return FriedmanResult(statistic=statistic, df=df, pvalue=float(_chi2.sf(statistic, df)))


def fdr_correct(pvalues: Sequence[float]) -> List[float]:
    """Benjamini-Hochberg step-up adjusted p-values."""
    for p in pvalues:
        if not 0 <= p <= 1:
            raise AnalysisError(f"p-value outside [0, 1]: {p}")
    m = len(pvalues)
    order = sorted(range(m), key=lambda i: pvalues[i])
    adjusted = [0.0] * m
    running = 1.0
    for rank_from_top in range(m, 0, -1):
        i = order[rank_from_top - 1]
        running = min(running, pvalues[i] * m / rank_from_top)
        adjusted[i] = running
    return adjusted


@dataclass
class ConvergenceStats:
    per_session: Dict[str, int]  # satisfied session id -> refinement turns
    mean: Optional[float]  # over sessions with >= 1 refinement
    sd: Optional[float]  # sample SD over the same subset
    fraction_within: Dict[int, Optional[float]]  # k -> fraction <= k, all satisfied

    @property
    def n_sessions(self) -> int:
        return len(self.per_session)


def convergence_stats(log_path) -> ConvergenceStats:
    """Refinement-turn statistics over satisfied sessions in a JSONL log."""
    max_turn: Dict[str, int] = defaultdict(int)
    satisfied: List[str] = []
    path = Path(log_path)
    if path.exists():
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise AnalysisError(f"bad log line {lineno}: {exc}") from exc
                sid = record.get("session_id")
                if record.get("event") == "turn":
                    max_turn[sid] = max(max_turn[sid], record.get("turn_index", 0))
                elif record.get("event") == "satisfied":
                    satisfied.append(sid)

    per_session = {sid: max_turn.get(sid, 0) for sid in satisfied}
    refined = [t for t in per_session.values() if t > 0]
    mean = statistics.fmean(refined) if refined else None
    sd = statistics.stdev(refined) if len(refined) > 1 else None
    total = len(per_session)
    fraction_within = {
        k: (sum(1 for t in per_session.values() if t <= k) / total if total else None)
        for k in (0, 1, 2)
    }
    return ConvergenceStats(
        per_session=per_session, mean=mean, sd=sd, fraction_within=fraction_within
    )


# --- ratings CSV (participant,condition,<6 descriptors>,similarity) ---------

RATINGS_HEADER = [
    "participant", "condition", "sweet", "savory", "sour",
    "burnt_smoked", "fresh", "chemical_artificial", "similarity",
]


def load_ratings(path) -> List[dict]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(RATINGS_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise AnalysisError(f"ratings CSV missing columns: {sorted(missing)}")
        for row in reader:
            rows.append({
                "participant": row["participant"],
                "condition": row["condition"],
                "rating": DescriptorRating(**{
                    dim: int(row[dim]) for dim in DESCRIPTOR_DIMENSIONS
                }),
                "similarity": float(row["similarity"]),
            })
    return rows


def ratings_summary(rows: List[dict], reference: str = "Real") -> dict:
    """Per-condition similarity medians, distances to the reference
    condition, and the Friedman + pairwise-Wilcoxon (FDR) machinery."""
    by_participant: Dict[str, Dict[str, dict]] = defaultdict(dict)
    for row in rows:
        by_participant[row["participant"]][row["condition"]] = row

    conditions = sorted(
        {row["condition"] for row in rows if row["condition"] != reference}
    )
    distances: Dict[str, List[float]] = defaultdict(list)
    similarity: Dict[str, List[float]] = defaultdict(list)
    complete_participants = []
    for participant, per_condition in sorted(by_participant.items()):
        if reference not in per_condition:
            continue
        ref = per_condition[reference]["rating"]
        if all(c in per_condition for c in conditions):
            complete_participants.append(participant)
        for condition in conditions:
            if condition in per_condition:
                distances[condition].append(
                    descriptor_distance(per_condition[condition]["rating"], ref)
                )
                similarity[condition].append(per_condition[condition]["similarity"])

    summary = {
        "conditions": {
            c: {
                "similarity_median": statistics.median(similarity[c]),
                "distance_to_real_median": statistics.median(distances[c]),
                "n": len(similarity[c]),
            }
            for c in conditions
            if similarity[c]
        }
    }

    if len(conditions) >= 3 and len(complete_participants) >= 2:
        matrix = [
            [by_participant[p][c]["similarity"] for c in conditions]
            for p in complete_participants
        ]
        try:
            friedman = friedman_test(matrix)
            summary["friedman_similarity"] = {
                "chi2": friedman.statistic, "df": friedman.df, "p": friedman.pvalue,
            }
        except AnalysisError:
            pass
        raw_p = []
        pair_keys = []
        for i in range(len(conditions)):
            for j in range(i + 1, len(conditions)):
                a, b = conditions[i], conditions[j]
                pairs = [
                    (by_participant[p][a]["similarity"], by_participant[p][b]["similarity"])
                    for p in complete_participants
                ]
                try:
                    result = wilcoxon_signed_rank(pairs)
                except AnalysisError:
                    continue
                pair_keys.append(f"{a} vs {b}")
                raw_p.append(result.pvalue)
        if raw_p:
            adjusted = fdr_correct(raw_p)
            summary["pairwise_similarity"] = {
                key: {"p_raw": raw, "p_fdr": adj}
                for key, raw, adj in zip(pair_keys, raw_p, adjusted)
            }
    return summary
