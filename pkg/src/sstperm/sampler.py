"""KSA*, KSA** and keyed permutation generation.

``ksa_star`` runs a fixed number of shuffle steps (RC4's idealized KSA when
the kind is cyclic-to-random and ``steps == n``). ``ksa_double_star`` runs
until a strong stationary time fires, so its output is an exact uniform
sample whenever the bits are truly random, and the number of steps it took
carries no information about the output deck.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import CapExceeded, KeyExhausted
from .randomness import BitSource
from .rules import RuleKind, check_pairing, make_rule
from .shuffles import Permutation, ShuffleKind, apply_step, draw_step

__all__ = [
    "StopReason",
    "SampleResult",
    "Scheme",
    "ksa_star",
    "ksa_double_star",
    "generate_permutation",
]


class StopReason(enum.Enum):
    FIXED_STEPS = "fixed_steps"
    SST_RULE = "sst_rule"
    KEY_EXHAUSTED = "key_exhausted"


@dataclass
class SampleResult:
    deck: Permutation
    steps: int
    bits_used: int
    stopped_by: StopReason
    # step at which the rule fired; differs from ``steps`` only with min_steps
    sst_steps: int | None = None

    def to_dict(self) -> dict:
        return {
            "deck": self.deck.deck,
            "steps": self.steps,
            "bits_used": self.bits_used,
            "stopped_by": self.stopped_by.value,
            "sst_steps": self.sst_steps,
        }


class Scheme(enum.Enum):
    RIFFLE_SST = ("riffle", ShuffleKind.RIFFLE_INVERSE, RuleKind.PAIR_SEPARATION)
    CTRT_KLZ = ("ctrt-klz", ShuffleKind.CYCLIC_TO_RANDOM, RuleKind.KLZ)
    RTRT_KLZ = ("rtrt-klz", ShuffleKind.RANDOM_TRANSPOSITIONS, RuleKind.KLZ)
    T2R = ("t2r", ShuffleKind.TOP_TO_RANDOM, RuleKind.BOTTOM_CARD)
    CTRT_MIRONOV = ("ctrt-mironov", ShuffleKind.CYCLIC_TO_RANDOM, RuleKind.MIRONOV)
    RTRT_MIRONOV = ("rtrt-mironov", ShuffleKind.RANDOM_TRANSPOSITIONS, RuleKind.MIRONOV)

    def __init__(self, label: str, kind: ShuffleKind, rule: RuleKind):
        self.label = label
        self.kind = kind
        self.rule = rule

    @classmethod
    def parse(cls, text: str | Scheme) -> Scheme:
        if isinstance(text, cls):
            return text
        t = text.lower().replace("_", "-")
        for s in cls:
            if t in (s.label, s.name.lower().replace("_", "-")):
                return s
        raise ValueError(f"unknown scheme {text!r}")


_BLOCK = 512


def ksa_star(kind: ShuffleKind | str, n: int, steps: int, src: BitSource) -> SampleResult:
    """Run exactly ``steps`` shuffle steps from the identity deck."""
    kind = ShuffleKind.parse(kind)
    if steps < 0:
        raise ValueError("steps must be non-negative")
    start = src.consumed
    deck = list(range(n))
    if kind is ShuffleKind.RIFFLE_INVERSE:
        S = Permutation.wrap(deck)
        for t in range(steps):
            apply_step(S, draw_step(kind, n, t, src))
        deck = S.deck
    else:
        # the draw count is fixed, so all indices come out in one vectorized read
        per = 2 if kind is ShuffleKind.RANDOM_TRANSPOSITIONS else 1
        idx = src.uniform_indices(n, per * steps).tolist()
        if kind is ShuffleKind.CYCLIC_TO_RANDOM:
            for t, j in enumerate(idx):
                i = t % n
                deck[i], deck[j] = deck[j], deck[i]
        elif kind is ShuffleKind.RANDOM_TRANSPOSITIONS:
            for a in range(0, len(idx), 2):
                i, j = idx[a], idx[a + 1]
                deck[i], deck[j] = deck[j], deck[i]
        else:
            for j in idx:
                deck.insert(j, deck.pop(0))
    return SampleResult(Permutation(deck, check=False), steps, src.consumed - start, StopReason.FIXED_STEPS)


def ksa_double_star(
    kind: ShuffleKind | str,
    rule: RuleKind | str,
    n: int,
    src: BitSource,
    max_steps: int | None = None,
    min_steps: int = 0,
    allow_partial: bool = False,
    reference: bool = False,
) -> SampleResult:
    """Shuffle from the identity until the stopping rule fires.

    ``min_steps`` keeps shuffling after the rule fires until at least that
    many steps were made, hiding short runs; the deck stays uniform.
    ``allow_partial`` turns a :class:`KeyExhausted` into a result with
    ``stopped_by=KEY_EXHAUSTED`` (that deck is *not* a uniform sample).
    ``reference`` forces the generic step/rule path instead of the fast
    kernel for the transposition chains; both give identical results.
    """
    kind = ShuffleKind.parse(kind)
    rule = RuleKind.parse(rule)
    check_pairing(kind, rule)
    if n < 1:
        raise ValueError("n must be at least 1")
    if max_steps is not None and max_steps < min_steps:
        raise ValueError("max_steps must be at least min_steps")
    if kind in (ShuffleKind.CYCLIC_TO_RANDOM, ShuffleKind.RANDOM_TRANSPOSITIONS) and not reference:
        run = _transposition_kernel
    else:
        run = _generic_run
    start = src.consumed
    deck: list[int] = list(range(n))
    state = {"t": 0, "sst": None}
    try:
        run(kind, rule, n, src, deck, state, max_steps)
        t = state["t"]
        if max_steps is not None and state["sst"] is None:
            raise CapExceeded(f"rule did not fire within {max_steps} steps")
        if t < min_steps:
            S = Permutation.wrap(deck)
            for t in range(t, min_steps):
                apply_step(S, draw_step(kind, n, t, src))
            state["t"] = min_steps
    except KeyExhausted:
        if not allow_partial:
            raise
        return SampleResult(
            Permutation(deck, check=False), state["t"], src.consumed - start,
            StopReason.KEY_EXHAUSTED, state["sst"],
        )
    return SampleResult(
        Permutation(deck, check=False), state["t"], src.consumed - start,
        StopReason.SST_RULE, state["sst"],
    )


def _generic_run(kind, rule, n, src, deck, state, max_steps):
    S = Permutation.wrap(deck)
    r = make_rule(rule, n)
    t = 0
    stopped = r.stopped
    while not stopped:
        if max_steps is not None and t >= max_steps:
            return
        trace = draw_step(kind, n, t, src)
        stopped = r.update(trace, S)
        apply_step(S, trace)
        t += 1
        state["t"] = t
    state["sst"] = t


def _transposition_kernel(kind, rule, n, src, deck, state, max_steps):
    # Marks are tracked by position (swapped along with the cards), which is
    # all either rule needs. Indices are peeked in blocks and only the bits of
    # the steps actually taken are consumed.
    mp = [False] * n
    if rule is RuleKind.MIRONOV:
        mp[n - 1] = True
        count, threshold = 1, 0
    else:
        count, threshold = 0, n // 2
    t = 0
    cyclic = kind is ShuffleKind.CYCLIC_TO_RANDOM
    per = 1 if cyclic else 2
    if count == n:
        state["sst"] = 0
        return
    while True:
        want = _BLOCK if max_steps is None else min(_BLOCK, max_steps - t)
        if want <= 0:
            return
        values, ends = src.peek_indices(n, per * want)
        vals = values.tolist()
        usable = len(vals) // per
        done = False
        u = 0
        while u < usable:
            if cyclic:
                r = t % n
                j = vals[u]
            else:
                r = vals[2 * u]
                j = vals[2 * u + 1]
            if not mp[r]:
                if count < threshold:
                    hit = not mp[j]
                else:
                    hit = mp[j] or r == j
                if hit:
                    mp[r] = True
                    count += 1
            deck[r], deck[j] = deck[j], deck[r]
            mp[r], mp[j] = mp[j], mp[r]
            t += 1
            u += 1
            if count == n:
                done = True
                break
        if u:
            src.skip(int(ends[per * u - 1]))
        state["t"] = t
        if done:
            state["sst"] = t
            return
        if usable < want:
            raise KeyExhausted(f"bit source ran dry after {t} steps")


def generate_permutation(
    n: int,
    key: bytes,
    scheme: Scheme | str = Scheme.RIFFLE_SST,
    label: int = 0,
    max_bits: int | None = None,
    min_steps: int = 0,
) -> SampleResult:
    """Deterministic SST sample driven by a key stream derived from ``key``."""
    scheme = Scheme.parse(scheme)
    src = BitSource.from_key(key, label, max_bits=max_bits)
    return ksa_double_star(scheme.kind, scheme.rule, n, src, min_steps=min_steps)
