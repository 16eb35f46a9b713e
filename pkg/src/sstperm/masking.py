"""Key-derived bit permutations wrapped around a block transform.

A block of ``n_bits`` bits is a deck of cards: bit ``i`` of a byte string is
bit ``i & 7`` of byte ``i >> 3``. A :class:`BitPermutation` sends input bit
``i`` to output bit ``map[i]``. Encryption computes ``g2(F(g1(x)))`` where
``g1`` and ``g2`` are sampled by the inverse riffle until its stopping rule
fires, so they are exactly uniform and the sampling time says nothing about
them. The time is paid once per key, never per block.

The fast path writes a permutation as ``lg n_bits`` stable partitions and
runs each one as two bit compressions over 64-bit words, vectorized over a
batch of blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .errors import SizeMismatch
from .randomness import BitSource, KeyStream
from .rules import RuleKind
from .sampler import SampleResult, ksa_double_star
from .shuffles import Permutation, ShuffleKind, riffle_partition

__all__ = [
    "BitPermutation",
    "RiffleDecomposition",
    "apply_bits",
    "decompose_to_riffle_rounds",
    "apply_bits_fast",
    "apply_bits_fast_many",
    "permutation_from_source",
    "derive_permutations",
    "derive_subkeys",
    "BlockTransform",
    "IdentityTransform",
    "XorTransform",
    "MaskedCipher",
    "mask_encrypt",
    "mask_decrypt",
]

MAX_BLOCK_BITS = 1024

# stream labels; distinct labels give unrelated streams from one key
_LABEL_KG, _LABEL_KF, _LABEL_KM = 0x6B67, 0x6B66, 0x6B6D
_LABEL_G1, _LABEL_G2 = 1, 2


def _check_block_bits(n_bits: int) -> None:
    if n_bits < 8 or n_bits > MAX_BLOCK_BITS or n_bits & (n_bits - 1):
        raise ValueError(f"block size must be a power of two in [8, {MAX_BLOCK_BITS}], got {n_bits}")


class BitPermutation:
    """Bijection on bit positions: output bit ``map[i]`` is input bit ``i``."""

    def __init__(self, mapping, n_bits: int | None = None):
        self.map = np.asarray(mapping, dtype=np.int64)
        self.n_bits = len(self.map) if n_bits is None else n_bits
        if len(self.map) != self.n_bits:
            raise SizeMismatch("map length differs from n_bits")
        if not np.array_equal(np.sort(self.map), np.arange(self.n_bits)):
            raise ValueError("map is not a bijection")

    @classmethod
    def identity(cls, n_bits: int) -> BitPermutation:
        return cls(np.arange(n_bits))

    @classmethod
    def from_deck(cls, deck: Permutation | list[int]) -> BitPermutation:
        """Card ``c`` at position ``p`` means input bit ``c`` lands on bit ``p``."""
        return cls(Permutation(deck).positions())

    def to_deck(self) -> Permutation:
        return Permutation(self.inverse().map.tolist(), check=False)

    def inverse(self) -> BitPermutation:
        inv = np.empty_like(self.map)
        inv[self.map] = np.arange(self.n_bits)
        return BitPermutation(inv)

    def then(self, other: BitPermutation) -> BitPermutation:
        """Apply ``self`` first, then ``other``."""
        return BitPermutation(other.map[self.map])

    def __eq__(self, other: object) -> bool:
        return isinstance(other, BitPermutation) and np.array_equal(self.map, other.map)

    def __repr__(self) -> str:
        return f"BitPermutation(n_bits={self.n_bits})"


def _check_block(n_bits: int, block: bytes) -> None:
    if len(block) * 8 != n_bits:
        raise SizeMismatch(f"block has {len(block) * 8} bits, expected {n_bits}")


def apply_bits(perm: BitPermutation, block: bytes) -> bytes:
    """Reference bit-by-bit permutation of one block."""
    _check_block(perm.n_bits, block)
    out = bytearray(len(block))
    mapping = perm.map.tolist()
    for i in range(perm.n_bits):
        if (block[i >> 3] >> (i & 7)) & 1:
            d = mapping[i]
            out[d >> 3] |= 1 << (d & 7)
    return bytes(out)


# -- multiword helpers over (batch, words) uint64 arrays ----------------------

_U64 = np.uint64


def _int_to_words(v: int, words: int) -> np.ndarray:
    return np.frombuffer(v.to_bytes(8 * words, "little"), dtype="<u8").astype(np.uint64)


def _shr(x: np.ndarray, s: int) -> np.ndarray:
    # toward lower bit indices
    q, r = divmod(s, 64)
    w = x.shape[1]
    out = np.zeros_like(x)
    if q >= w:
        return out
    src = x[:, q:]
    out[:, : w - q] = src >> _U64(r)
    if r and w - q > 1:
        out[:, : w - q - 1] |= src[:, 1:] << _U64(64 - r)
    return out


def _shl(x: np.ndarray, s: int) -> np.ndarray:
    q, r = divmod(s, 64)
    w = x.shape[1]
    out = np.zeros_like(x)
    if q >= w:
        return out
    src = x[:, : w - q]
    out[:, q:] = src << _U64(r)
    if r and w - q > 1:
        out[:, q + 1 :] |= src[:, :-1] >> _U64(64 - r)
    return out


def _compress_masks(m: int, width: int) -> list[int]:
    """Stage masks for gathering the bits selected by ``m`` to the low end.

    The parallel-suffix construction from Hacker's Delight: stage ``i``
    moves the selected bits whose count of unselected bits below them has
    bit ``i`` set by ``2**i`` places.
    """
    full = (1 << width) - 1
    mk = (~m << 1) & full
    masks = []
    s = 1
    while s < width:
        mp = mk ^ (mk << 1) & full
        sh = 2
        while sh < width:
            mp = (mp ^ (mp << sh)) & full
            sh <<= 1
        mv = mp & m
        masks.append(mv)
        m = (m ^ mv) | (mv >> s)
        mk = mk & ~mp & full
        s <<= 1
    return masks


@dataclass
class _RoundPlan:
    zero_sel: int
    one_sel: int
    zero_stages: list[int]
    one_stages: list[int]
    zeros: int


@dataclass
class _WordPlan:
    zero_sel: np.ndarray
    one_sel: np.ndarray
    zero_stages: list[np.ndarray]
    one_stages: list[np.ndarray]
    zeros: int


@dataclass
class RiffleDecomposition:
    """``lg n_bits`` inverse-riffle rounds; ``rounds[s][p]`` is the bit for position ``p``."""

    n_bits: int
    rounds: np.ndarray
    _plan: list[_RoundPlan] | None = field(default=None, repr=False, compare=False)
    _words: list[_WordPlan] | None = field(default=None, repr=False, compare=False)

    def replay(self) -> Permutation:
        """Apply the rounds to the identity deck."""
        deck = list(range(self.n_bits))
        for bits in self.rounds.tolist():
            deck = riffle_partition(deck, bits)
        return Permutation(deck, check=False)

    def permutation(self) -> BitPermutation:
        return BitPermutation.from_deck(self.replay())

    def plan(self) -> list[_RoundPlan]:
        """Per-round selection and compression masks as Python ints."""
        if self._plan is None:
            width = 64 * max(1, self.n_bits // 64)
            valid = (1 << self.n_bits) - 1
            plan = []
            for bits in self.rounds.tolist():
                ones = sum(1 << p for p, b in enumerate(bits) if b)
                zeros_mask = valid & ~ones
                plan.append(_RoundPlan(
                    zeros_mask, ones,
                    _compress_masks(zeros_mask, width), _compress_masks(ones, width),
                    zeros_mask.bit_count(),
                ))
            self._plan = plan
        return self._plan

    def word_plan(self) -> list[_WordPlan]:
        """The same masks split into 64-bit words for batched application."""
        if self._words is None:
            words = max(1, self.n_bits // 64)
            self._words = [
                _WordPlan(
                    _int_to_words(rp.zero_sel, words),
                    _int_to_words(rp.one_sel, words),
                    [_int_to_words(v, words) for v in rp.zero_stages],
                    [_int_to_words(v, words) for v in rp.one_stages],
                    rp.zeros,
                )
                for rp in self.plan()
            ]
        return self._words


def decompose_to_riffle_rounds(perm: BitPermutation) -> RiffleDecomposition:
    """Radix decomposition, least significant destination bit first.

    Round ``s`` tags the card at each position with bit ``s`` of the card's
    destination. Stable partitions by successive bits sort the cards by
    destination, which is exactly ``perm``.
    """
    n = perm.n_bits
    k = n.bit_length() - 1
    if n < 1 or n != 1 << k:
        raise ValueError("n_bits must be a power of two")
    deck = list(range(n))
    dest = perm.map.tolist()
    rounds = np.zeros((k, n), dtype=np.uint8)
    for s in range(k):
        bits = [(dest[c] >> s) & 1 for c in deck]
        rounds[s] = bits
        deck = riffle_partition(deck, bits)
    dec = RiffleDecomposition(n, rounds)
    if dec.replay() != perm.to_deck():
        raise AssertionError("riffle decomposition does not reproduce the permutation")
    return dec


def _blocks_to_words(blocks: np.ndarray, n_bits: int) -> np.ndarray:
    nbytes = n_bits // 8
    if n_bits >= 64:
        return blocks.reshape(-1, nbytes).copy().view("<u8").astype(np.uint64)
    padded = np.zeros((blocks.shape[0], 8), dtype=np.uint8)
    padded[:, :nbytes] = blocks
    return padded.view("<u8").astype(np.uint64)


def _words_to_blocks(words: np.ndarray, n_bits: int) -> np.ndarray:
    raw = words.astype("<u8").view(np.uint8).reshape(words.shape[0], -1)
    return raw[:, : n_bits // 8]


def _compress(x: np.ndarray, sel: np.ndarray, stages: list[np.ndarray]) -> np.ndarray:
    x = x & sel
    s = 1
    for mv in stages:
        t = x & mv
        x = (x ^ t) | _shr(t, s)
        s <<= 1
    return x


def _compress_int(x: int, sel: int, stages: list[int]) -> int:
    x &= sel
    s = 1
    for mv in stages:
        t = x & mv
        x = (x ^ t) | (t >> s)
        s <<= 1
    return x


def apply_bits_fast_many(dec: RiffleDecomposition, blocks: np.ndarray) -> np.ndarray:
    """Permute a ``(batch, n_bits/8)`` uint8 array of blocks."""
    blocks = np.asarray(blocks, dtype=np.uint8)
    if blocks.ndim != 2 or blocks.shape[1] * 8 != dec.n_bits:
        raise SizeMismatch(f"expected blocks of {dec.n_bits // 8} bytes")
    x = _blocks_to_words(blocks, dec.n_bits)
    for rp in dec.word_plan():
        low = _compress(x, rp.zero_sel, rp.zero_stages)
        high = _compress(x, rp.one_sel, rp.one_stages)
        x = low | _shl(high, rp.zeros)
    return _words_to_blocks(x, dec.n_bits)


def apply_bits_fast(dec: RiffleDecomposition, block: bytes) -> bytes:
    """Same result as :func:`apply_bits` on the decomposed permutation."""
    _check_block(dec.n_bits, block)
    x = int.from_bytes(block, "little")
    for rp in dec.plan():
        low = _compress_int(x, rp.zero_sel, rp.zero_stages)
        high = _compress_int(x, rp.one_sel, rp.one_stages)
        x = low | (high << rp.zeros)
    return x.to_bytes(dec.n_bits // 8, "little")


# -- key-derived permutations --------------------------------------------------


def permutation_from_source(src: BitSource, n_bits: int) -> tuple[BitPermutation, SampleResult]:
    """Feed inverse riffle rounds from ``src`` until its stopping rule fires."""
    res = ksa_double_star(ShuffleKind.RIFFLE_INVERSE, RuleKind.PAIR_SEPARATION, n_bits, src)
    return BitPermutation.from_deck(res.deck), res


def derive_permutations(key: bytes, n_bits: int = 128, max_bits: int | None = None):
    """``(g1, g2)`` from two domain-separated streams of ``key``.

    ``max_bits`` bounds each stream, raising :class:`KeyExhausted` when the
    stopping rule needs more.
    """
    _check_block_bits(n_bits)
    if not key:
        raise ValueError("key must be non-empty")
    g1, _ = permutation_from_source(BitSource.from_key(key, _LABEL_G1, max_bits), n_bits)
    g2, _ = permutation_from_source(BitSource.from_key(key, _LABEL_G2, max_bits), n_bits)
    return g1, g2


def derive_subkeys(key: bytes, size: int = 32) -> tuple[bytes, bytes, bytes]:
    """Independent ``(k_g, k_f, k_m)`` for the permutations, the transform and a MAC."""
    if not key:
        raise ValueError("key must be non-empty")
    return tuple(KeyStream(key, label)(size) for label in (_LABEL_KG, _LABEL_KF, _LABEL_KM))


class BlockTransform(Protocol):
    def encrypt(self, block: bytes) -> bytes: ...

    def decrypt(self, block: bytes) -> bytes: ...


class IdentityTransform:
    def encrypt(self, block: bytes) -> bytes:
        return bytes(block)

    def decrypt(self, block: bytes) -> bytes:
        return bytes(block)


class XorTransform:
    """Toy keyed transform: XOR with a fixed pad expanded from the key."""

    def __init__(self, key: bytes, block_bytes: int):
        self._pad = np.frombuffer(KeyStream(key, 0)(block_bytes), dtype=np.uint8)

    def encrypt(self, block: bytes) -> bytes:
        return (np.frombuffer(bytes(block), dtype=np.uint8) ^ self._pad).tobytes()

    decrypt = encrypt


class MaskedCipher:
    """``y = g2(F(g1(x)))`` with ``g1, g2`` fixed per key.

    The permutations, their inverses and their decompositions are built once
    here. ``setup_steps`` and ``setup_bits`` record the sampling work, which
    depends on the key only.
    """

    def __init__(self, key: bytes, block_bits: int = 128, transform: str | BlockTransform = "xor"):
        _check_block_bits(block_bits)
        self.block_bits = block_bits
        self.block_bytes = block_bits // 8
        k_g, k_f, k_m = derive_subkeys(key)
        self.mac_key = k_m
        g1, r1 = permutation_from_source(BitSource.from_key(k_g, _LABEL_G1), block_bits)
        g2, r2 = permutation_from_source(BitSource.from_key(k_g, _LABEL_G2), block_bits)
        self.g1, self.g2 = g1, g2
        self.setup_steps = (r1.steps, r2.steps)
        self.setup_bits = (r1.bits_used, r2.bits_used)
        self._fwd = (decompose_to_riffle_rounds(g1), decompose_to_riffle_rounds(g2))
        self._inv = (decompose_to_riffle_rounds(g1.inverse()), decompose_to_riffle_rounds(g2.inverse()))
        if transform == "xor":
            self.f: BlockTransform = XorTransform(k_f, self.block_bytes)
        elif transform == "identity":
            self.f = IdentityTransform()
        elif isinstance(transform, str):
            raise ValueError(f"unknown transform {transform!r}")
        else:
            self.f = transform

    def encrypt_block(self, x: bytes) -> bytes:
        _check_block(self.block_bits, x)
        y1 = apply_bits_fast(self._fwd[0], x)
        return apply_bits_fast(self._fwd[1], self.f.encrypt(y1))

    def decrypt_block(self, y: bytes) -> bytes:
        _check_block(self.block_bits, y)
        y2 = apply_bits_fast(self._inv[1], y)
        return apply_bits_fast(self._inv[0], self.f.decrypt(y2))

    def _many(self, data: bytes, forward: bool) -> bytes:
        if len(data) % self.block_bytes:
            raise SizeMismatch(f"input length {len(data)} is not a multiple of {self.block_bytes} bytes")
        if not data:
            return b""
        blocks = np.frombuffer(bytes(data), dtype=np.uint8).reshape(-1, self.block_bytes)
        first, second = (self._fwd[0], self._fwd[1]) if forward else (self._inv[1], self._inv[0])
        mid = apply_bits_fast_many(first, blocks)
        op = self.f.encrypt if forward else self.f.decrypt
        mid = np.stack([np.frombuffer(op(row.tobytes()), dtype=np.uint8) for row in mid])
        return apply_bits_fast_many(second, mid).tobytes()

    def encrypt(self, data: bytes) -> bytes:
        """Encrypt a whole number of blocks."""
        return self._many(data, True)

    def decrypt(self, data: bytes) -> bytes:
        return self._many(data, False)


def mask_encrypt(mc: MaskedCipher, x: bytes) -> bytes:
    return mc.encrypt_block(x)


def mask_decrypt(mc: MaskedCipher, y: bytes) -> bytes:
    return mc.decrypt_block(y)
