"""Strong stationary time stopping rules.

Each rule object watches one chain. ``update(trace, deck_before)`` must be
called with the deck as it was *before* the step described by ``trace`` is
applied, and returns whether the rule has stopped after counting that step.
Rules also expose ``copy()`` and a hashable ``key()`` so the exact dynamic
program in :mod:`sstperm.analysis` can branch on them.
"""

from __future__ import annotations

import enum
import itertools

from .errors import InvalidPairing, KindMismatch
from .shuffles import Permutation, ShuffleKind, StepTrace

__all__ = [
    "RuleKind",
    "BottomCardTracker",
    "CheckedSet",
    "KlzMarkState",
    "PairSeparationState",
    "VALID_PAIRS",
    "make_rule",
    "check_pairing",
]

_TRANSPOSITIONS = (ShuffleKind.RANDOM_TRANSPOSITIONS, ShuffleKind.CYCLIC_TO_RANDOM)


class RuleKind(enum.Enum):
    BOTTOM_CARD = "bottom"
    MIRONOV = "mironov"
    KLZ = "klz"
    PAIR_SEPARATION = "pairs"

    @classmethod
    def parse(cls, text: str | RuleKind) -> RuleKind:
        if isinstance(text, cls):
            return text
        t = text.lower().replace("-", "_")
        for kind in cls:
            if t in (kind.value, kind.name.lower()):
                return kind
        raise ValueError(f"unknown stopping rule {text!r}")


# Only combinations proven to be strong stationary times.
VALID_PAIRS: dict[ShuffleKind, frozenset[RuleKind]] = {
    ShuffleKind.TOP_TO_RANDOM: frozenset({RuleKind.BOTTOM_CARD}),
    ShuffleKind.RANDOM_TRANSPOSITIONS: frozenset({RuleKind.MIRONOV, RuleKind.KLZ}),
    ShuffleKind.CYCLIC_TO_RANDOM: frozenset({RuleKind.MIRONOV, RuleKind.KLZ}),
    ShuffleKind.RIFFLE_INVERSE: frozenset({RuleKind.PAIR_SEPARATION}),
}


def check_pairing(kind: ShuffleKind, rule: RuleKind) -> None:
    if rule not in VALID_PAIRS[kind]:
        raise InvalidPairing(f"{rule.name} is not a strong stationary time for {kind.name}")


def _expect(trace: StepTrace, kinds: tuple[ShuffleKind, ...]) -> None:
    if trace.kind not in kinds:
        raise KindMismatch(f"rule cannot consume a {trace.kind.name} step")


class BottomCardTracker:
    """Top-to-random: stop one step after the initially-bottom card is on top."""

    def __init__(self, n: int, bottom_label: int | None = None):
        self.n = n
        self.bottom_label = n - 1 if bottom_label is None else bottom_label
        self.reached_top_at: int | None = None
        self.stopped = False
        self.rounds = 0

    def update(self, trace: StepTrace, deck_before: Permutation) -> bool:
        _expect(trace, (ShuffleKind.TOP_TO_RANDOM,))
        if not self.stopped and deck_before[0] == self.bottom_label:
            self.reached_top_at = self.rounds
            self.stopped = True
        self.rounds += 1
        return self.stopped

    def copy(self) -> BottomCardTracker:
        other = BottomCardTracker(self.n, self.bottom_label)
        other.reached_top_at = self.reached_top_at
        other.stopped = self.stopped
        other.rounds = self.rounds
        return other

    def key(self) -> tuple:
        # the decision depends only on the current deck
        return (self.stopped,)


class CheckedSet:
    """Mironov's checking rule for the transposition chains.

    Card ``n-1`` starts checked. Before the swap of positions ``i`` and
    ``j``, the card at ``i`` becomes checked if it is unchecked and either
    ``i == j`` or the card at ``j`` is checked.
    """

    def __init__(self, n: int):
        self.n = n
        self.checked = [False] * n
        self.checked[n - 1] = True
        self.count = 1

    @property
    def stopped(self) -> bool:
        return self.count == self.n

    def update(self, trace: StepTrace, deck_before: Permutation) -> bool:
        _expect(trace, _TRANSPOSITIONS)
        if self.count < self.n:
            a = deck_before[trace.i]
            if not self.checked[a] and (trace.i == trace.j or self.checked[deck_before[trace.j]]):
                self.checked[a] = True
                self.count += 1
        return self.count == self.n

    def copy(self) -> CheckedSet:
        other = CheckedSet.__new__(CheckedSet)
        other.n, other.checked, other.count = self.n, self.checked[:], self.count
        return other

    def key(self) -> tuple:
        return tuple(self.checked)


class KlzMarkState:
    """The two-phase marking rule with threshold ``d = ceil((n-1)/2)``.

    Phase 1 (fewer than ``d`` marked): mark the card at ``r`` when both it
    and the card at ``j`` are unmarked. Phase 2: mark the card at ``r`` when
    it is unmarked and either the card at ``j`` is marked or ``r == j``.
    """

    def __init__(self, n: int):
        self.n = n
        self.marked = [False] * n
        self.count = 0
        self.threshold = n // 2  # == ceil((n - 1) / 2)

    @property
    def phase(self) -> int:
        return 1 if self.count < self.threshold else 2

    @property
    def stopped(self) -> bool:
        return self.count == self.n

    def update(self, trace: StepTrace, deck_before: Permutation) -> bool:
        _expect(trace, _TRANSPOSITIONS)
        if self.count < self.n:
            r, j = trace.i, trace.j
            a = deck_before[r]
            if not self.marked[a]:
                other = self.marked[deck_before[j]]
                if self.count < self.threshold:
                    hit = not other
                else:
                    hit = other or r == j
                if hit:
                    self.marked[a] = True
                    self.count += 1
        return self.count == self.n

    def copy(self) -> KlzMarkState:
        other = KlzMarkState.__new__(KlzMarkState)
        other.n, other.marked, other.count = self.n, self.marked[:], self.count
        other.threshold = self.threshold
        return other

    def key(self) -> tuple:
        return tuple(self.marked)


class PairSeparationState:
    """Pair-marking rule for the inverse riffle, kept as a partition.

    Two cards are still unseparated iff they received identical bits at
    every step so far. Such cards always occupy a contiguous run of
    positions (each step is a stable partition), so the partition is stored
    as the run lengths in top-to-bottom order and refined from the trace
    bits alone.
    """

    def __init__(self, n: int):
        self.n = n
        self.sizes: list[int] = [n] if n else []

    @property
    def blocks_remaining(self) -> int:
        return len(self.sizes)

    @property
    def stopped(self) -> bool:
        return len(self.sizes) == self.n

    def update(self, trace: StepTrace, deck_before: Permutation | None = None) -> bool:
        _expect(trace, (ShuffleKind.RIFFLE_INVERSE,))
        bits = trace.bits
        assert bits is not None and len(bits) == self.n
        zeros: list[int] = []
        ones: list[int] = []
        cum = [0, *itertools.accumulate(bits)]
        p = 0
        for size in self.sizes:
            z = size - (cum[p + size] - cum[p])
            if z:
                zeros.append(z)
            if z != size:
                ones.append(size - z)
            p += size
        self.sizes = zeros + ones
        return self.stopped

    def blocks(self, deck: Permutation) -> list[list[int]]:
        """Current blocks as groups of card labels, given the current deck."""
        out, p = [], 0
        for size in self.sizes:
            out.append(sorted(deck.deck[p : p + size]))
            p += size
        return out

    def copy(self) -> PairSeparationState:
        other = PairSeparationState.__new__(PairSeparationState)
        other.n, other.sizes = self.n, self.sizes[:]
        return other

    def key(self) -> tuple:
        return tuple(self.sizes)


_RULES = {
    RuleKind.BOTTOM_CARD: BottomCardTracker,
    RuleKind.MIRONOV: CheckedSet,
    RuleKind.KLZ: KlzMarkState,
    RuleKind.PAIR_SEPARATION: PairSeparationState,
}


def make_rule(rule: RuleKind, n: int):
    return _RULES[rule](n)


def t2r_update(state: BottomCardTracker, trace: StepTrace, deck_before: Permutation) -> bool:
    return state.update(trace, deck_before)


def mironov_update(state: CheckedSet, trace: StepTrace, deck_before: Permutation) -> bool:
    return state.update(trace, deck_before)


def klz_update(state: KlzMarkState, trace: StepTrace, deck_before: Permutation) -> bool:
    return state.update(trace, deck_before)


def riffle_update(state: PairSeparationState, trace: StepTrace) -> bool:
    return state.update(trace)
