"""One-step kernels for the four card-shuffling chains plus the literal RC4 KSA.

Conventions: positions and labels are 0-based, position 0 is the top of the
deck and ``deck[p]`` is the card at position ``p``. Each chain has a
``draw_*`` function that samples the step's randomness into a
:class:`StepTrace` without touching the deck, and :func:`apply_step` which
performs it; ``step_*`` does both. Stopping rules observe the deck between
the two calls, i.e. before the move.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

from .randomness import BitSource

__all__ = [
    "Permutation",
    "ShuffleKind",
    "StepTrace",
    "draw_step",
    "apply_step",
    "step",
    "step_t2r",
    "step_rtrt",
    "step_ctrt",
    "step_riffle_inverse",
    "rc4_ksa",
    "bits_per_step",
]

# When set, every applied step re-validates the bijection invariant.
CHECK_INVARIANTS = os.environ.get("SSTPERM_DEBUG", "") not in ("", "0")


class Permutation:
    """A deck of ``n`` distinct cards labelled ``0..n-1``."""

    __slots__ = ("deck",)

    def __init__(self, deck: Iterable[int], check: bool = True):
        self.deck = list(deck)
        if check:
            self.check()

    @classmethod
    def wrap(cls, deck: list[int]) -> Permutation:
        """Wrap an existing list without copying or validating it."""
        S = cls.__new__(cls)
        S.deck = deck
        return S

    @classmethod
    def identity(cls, n: int) -> Permutation:
        return cls(range(n), check=False)

    def check(self) -> None:
        n = len(self.deck)
        if sorted(self.deck) != list(range(n)):
            raise ValueError(f"not a permutation of 0..{n - 1}: {self.deck}")

    def __len__(self) -> int:
        return len(self.deck)

    def __getitem__(self, p: int) -> int:
        return self.deck[p]

    def __iter__(self):
        return iter(self.deck)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Permutation):
            return self.deck == other.deck
        if isinstance(other, (list, tuple)):
            return self.deck == list(other)
        return NotImplemented

    def __hash__(self) -> int:
        return hash(tuple(self.deck))

    def __repr__(self) -> str:
        return f"Permutation({self.deck})"

    def copy(self) -> Permutation:
        return Permutation(self.deck, check=False)

    def key(self) -> tuple[int, ...]:
        return tuple(self.deck)

    def positions(self) -> list[int]:
        """Inverse map: ``positions()[c]`` is the position of card ``c``."""
        pos = [0] * len(self.deck)
        for p, c in enumerate(self.deck):
            pos[c] = p
        return pos

    def sign(self) -> int:
        """+1 for even permutations, -1 for odd ones (cycle count parity)."""
        n = len(self.deck)
        seen = [False] * n
        cycles = 0
        for start in range(n):
            if not seen[start]:
                cycles += 1
                p = start
                while not seen[p]:
                    seen[p] = True
                    p = self.deck[p]
        return -1 if (n - cycles) & 1 else 1

    def to_line(self) -> str:
        return " ".join(map(str, self.deck))

    @classmethod
    def from_line(cls, line: str) -> Permutation:
        return cls(int(tok) for tok in line.split())


class ShuffleKind(enum.Enum):
    TOP_TO_RANDOM = "t2r"
    RANDOM_TRANSPOSITIONS = "rtrt"
    CYCLIC_TO_RANDOM = "ctrt"
    RIFFLE_INVERSE = "riffle"

    @classmethod
    def parse(cls, text: str | ShuffleKind) -> ShuffleKind:
        if isinstance(text, cls):
            return text
        t = text.lower().replace("-", "_")
        for kind in cls:
            if t in (kind.value, kind.name.lower()):
                return kind
        raise ValueError(f"unknown shuffle kind {text!r}")


@dataclass(slots=True)
class StepTrace:
    """The randomness of one shuffle step.

    ``i``/``j`` are positions for the transposition chains (``i`` is the
    cyclic position for CTRT, the first draw for RTRT); T2R uses ``j`` only;
    the riffle step stores one bit per position in ``bits``.
    """

    kind: ShuffleKind
    round: int
    i: int = 0
    j: int = 0
    bits: tuple[int, ...] | None = None


def bits_per_step(kind: ShuffleKind, n: int) -> int | None:
    """Bits one step consumes, or ``None`` when rejection makes it variable."""
    k = (n - 1).bit_length()
    pow2 = n == 1 << k
    if kind is ShuffleKind.RIFFLE_INVERSE:
        return n
    if not pow2:
        return None
    if kind is ShuffleKind.RANDOM_TRANSPOSITIONS:
        return 2 * k
    return k


def draw_step(kind: ShuffleKind, n: int, t: int, src: BitSource) -> StepTrace:
    if kind is ShuffleKind.CYCLIC_TO_RANDOM:
        return StepTrace(kind, t, t % n, src.uniform_index(n))
    if kind is ShuffleKind.RANDOM_TRANSPOSITIONS:
        i = src.uniform_index(n)
        return StepTrace(kind, t, i, src.uniform_index(n))
    if kind is ShuffleKind.TOP_TO_RANDOM:
        return StepTrace(kind, t, 0, src.uniform_index(n))
    return StepTrace(kind, t, bits=tuple(src.next_bits(n).tolist()))


def riffle_partition(deck: list[int], bits: Sequence[int]) -> list[int]:
    """Stable partition: cards whose position got bit 0 go on top."""
    return [c for c, b in zip(deck, bits) if not b] + [c for c, b in zip(deck, bits) if b]


def apply_step(S: Permutation, trace: StepTrace) -> None:
    deck = S.deck
    kind = trace.kind
    if kind is ShuffleKind.TOP_TO_RANDOM:
        deck.insert(trace.j, deck.pop(0))
    elif kind is ShuffleKind.RIFFLE_INVERSE:
        assert trace.bits is not None and len(trace.bits) == len(deck)
        deck[:] = riffle_partition(deck, trace.bits)
    else:
        i, j = trace.i, trace.j
        deck[i], deck[j] = deck[j], deck[i]
    if CHECK_INVARIANTS:
        S.check()


def step(kind: ShuffleKind, S: Permutation, t: int, src: BitSource) -> StepTrace:
    trace = draw_step(kind, len(S), t, src)
    apply_step(S, trace)
    return trace


def step_t2r(S: Permutation, src: BitSource, t: int = 0) -> StepTrace:
    """Move the top card to a uniform position."""
    return step(ShuffleKind.TOP_TO_RANDOM, S, t, src)


def step_rtrt(S: Permutation, src: BitSource, t: int = 0) -> StepTrace:
    """Swap the cards at two independent uniform positions."""
    return step(ShuffleKind.RANDOM_TRANSPOSITIONS, S, t, src)


def step_ctrt(S: Permutation, t: int, src: BitSource) -> StepTrace:
    """Swap the card at position ``t mod n`` with a uniformly chosen one."""
    return step(ShuffleKind.CYCLIC_TO_RANDOM, S, t, src)


def step_riffle_inverse(S: Permutation, src: BitSource, t: int = 0) -> StepTrace:
    """Time-reversed riffle: one bit per position, stable 0-above-1 partition."""
    return step(ShuffleKind.RIFFLE_INVERSE, S, t, src)


def rc4_ksa(key: bytes | Sequence[int], n: int = 256) -> Permutation:
    """RC4's key scheduling loop over ``Z_n`` with the key cycled."""
    key = list(key)
    if n < 1:
        raise ValueError("n must be at least 1")
    if not key:
        raise ValueError("key must be non-empty")
    S = list(range(n))
    j = 0
    klen = len(key)
    for i in range(n):
        j = (j + S[i] + key[i % klen]) % n
        S[i], S[j] = S[j], S[i]
    return Permutation(S, check=False)


def random_permutation(n: int, src: BitSource) -> Permutation:
    """Reference uniform permutation by Fisher-Yates over rejection indices."""
    deck = list(range(n))
    for i in range(n - 1, 0, -1):
        j = src.uniform_index(i + 1)
        deck[i], deck[j] = deck[j], deck[i]
    return Permutation(deck, check=False)
