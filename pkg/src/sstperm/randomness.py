"""Bit sources: true randomness, seeded streams, key streams and recorded tapes.

Every consumer in the package draws bits through :class:`BitSource`, which
keeps an exact count of the raw bits handed out (rejected chunks included).
Bits are read most-significant-first from each byte of the underlying
stream, so a tape ``"101"`` read as a 3-bit integer yields 5.
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .errors import KeyExhausted

__all__ = [
    "BitSource",
    "KeyStream",
    "SeededStream",
    "load_tape",
    "save_tape",
    "parse_key_hex",
]

# Producers return up to ``nbytes`` bytes; fewer (or empty) means end of stream.
Producer = Callable[[int], bytes]

_CHUNK = 4096


class KeyStream:
    """Deterministic byte stream expanded from a key under a domain label.

    Block ``c`` is ``BLAKE2b(label || c, key=key)`` with a 64-byte digest.
    Distinct labels give unrelated streams from the same key. Keys longer
    than 64 bytes are hashed down first. ``max_bytes`` makes the stream
    finite; reads past it come back short and the owning
    :class:`BitSource` raises :class:`KeyExhausted`.
    """

    def __init__(self, key: bytes, label: int = 0, max_bytes: int | None = None):
        key = bytes(key)
        if not key:
            raise ValueError("key must be non-empty")
        if label < 0:
            raise ValueError("label must be a non-negative integer")
        self.key = key
        self.label = label
        self.position = 0
        self.max_bytes = max_bytes
        self._mac_key = key if len(key) <= 64 else hashlib.blake2b(key).digest()
        self._prefix = label.to_bytes(8, "little")
        self._pending = b""
        self._counter = 0

    def __call__(self, nbytes: int) -> bytes:
        if self.max_bytes is not None:
            nbytes = min(nbytes, self.max_bytes - self.position)
        out = [self._pending]
        have = len(self._pending)
        while have < nbytes:
            block = hashlib.blake2b(
                self._prefix + self._counter.to_bytes(16, "little"),
                key=self._mac_key,
                digest_size=64,
            ).digest()
            self._counter += 1
            out.append(block)
            have += 64
        data = b"".join(out)
        self._pending = data[nbytes:]
        self.position += nbytes
        return data[:nbytes]


class SeededStream:
    """Byte stream from numpy's PCG64 seeded through a ``SeedSequence``.

    ``spawn_key`` gives the splittable counter construction used for
    per-trial seeds: ``SeededStream(seed, (trial,))`` depends only on the
    pair, never on scheduling order.
    """

    def __init__(self, seed: int, spawn_key: Iterable[int] = ()):
        self.seed = int(seed)
        self.spawn_key = tuple(int(k) for k in spawn_key)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def __call__(self, nbytes: int) -> bytes:
        return self._gen.bytes(nbytes)


def _system_producer(nbytes: int) -> bytes:
    return os.urandom(nbytes)


class BitSource:
    """Single-consumer supplier of bits with a consumed-bits counter.

    ``limit`` caps the total number of bits the source will ever hand out
    (used for tapes whose length is not a multiple of 8 and for finite keys).
    """

    def __init__(self, producer: Producer, limit: int | None = None):
        self._producer = producer
        self._limit = limit
        self._buf = b""
        self._bitpos = 0  # next unread bit inside _buf
        self._eof = False
        self.consumed = 0

    # -- construction helpers ------------------------------------------------

    @classmethod
    def system(cls) -> BitSource:
        """Operating-system randomness (``os.urandom``)."""
        return cls(_system_producer)

    @classmethod
    def from_seed(cls, seed: int, *spawn_key: int) -> BitSource:
        return cls(SeededStream(seed, spawn_key))

    @classmethod
    def from_key(cls, key: bytes, label: int = 0, max_bits: int | None = None) -> BitSource:
        max_bytes = None if max_bits is None else (max_bits + 7) // 8
        return cls(KeyStream(key, label, max_bytes), limit=max_bits)

    @classmethod
    def from_bytes(cls, data: bytes, nbits: int | None = None) -> BitSource:
        """Finite source reading the raw bits of ``data`` (no expansion)."""
        data = bytes(data)
        if nbits is None:
            nbits = 8 * len(data)
        if nbits > 8 * len(data):
            raise ValueError("nbits exceeds the data length")
        remaining = [data]

        def produce(nbytes: int) -> bytes:
            chunk, remaining[0] = remaining[0][:nbytes], remaining[0][nbytes:]
            return chunk

        return cls(produce, limit=nbits)

    @classmethod
    def from_tape(cls, bits: str | Iterable[int]) -> BitSource:
        """Finite source replaying a recorded tape of '0'/'1' (whitespace ignored)."""
        if isinstance(bits, str):
            cleaned = "".join(bits.split())
            if set(cleaned) - {"0", "1"}:
                raise ValueError("tape may contain only '0', '1' and whitespace")
            arr = np.frombuffer(cleaned.encode(), dtype=np.uint8) - ord("0")
        else:
            arr = np.asarray(list(bits), dtype=np.uint8)
            if arr.size and arr.max() > 1:
                raise ValueError("tape bits must be 0 or 1")
        return cls.from_bytes(np.packbits(arr).tobytes(), nbits=int(arr.size))

    # -- buffer management ---------------------------------------------------

    def available(self) -> int | None:
        """Bits remaining for finite sources, ``None`` when unbounded."""
        if self._limit is None:
            return None
        return self._limit - self.consumed

    def _ensure(self, nbits: int) -> int:
        """Make up to ``nbits`` unread bits resident; return how many are."""
        if self._limit is not None:
            nbits = min(nbits, self._limit - self.consumed)
        have = 8 * len(self._buf) - self._bitpos
        if have >= nbits:
            return nbits
        drop = self._bitpos >> 3
        parts = [self._buf[drop:]]
        self._bitpos -= 8 * drop
        while have < nbits and not self._eof:
            want = max(_CHUNK, (nbits - have + 7) // 8)
            chunk = self._producer(want)
            if not chunk:
                self._eof = True
                break
            parts.append(chunk)
            have += 8 * len(chunk)
        self._buf = b"".join(parts)
        return min(have, nbits)

    def _read_int(self, k: int) -> int:
        # caller guarantees k bits are resident
        pos = self._bitpos
        start = pos >> 3
        off = pos & 7
        nbytes = (off + k + 7) >> 3
        v = int.from_bytes(self._buf[start : start + nbytes], "big")
        v = (v >> (8 * nbytes - off - k)) & ((1 << k) - 1)
        self._bitpos = pos + k
        self.consumed += k
        return v

    def _unpacked(self, nbits: int) -> np.ndarray:
        # view of the next nbits resident bits as a 0/1 array, not consumed
        start = self._bitpos >> 3
        off = self._bitpos & 7
        nbytes = (off + nbits + 7) >> 3
        raw = np.frombuffer(self._buf, dtype=np.uint8, count=nbytes, offset=start)
        return np.unpackbits(raw)[off : off + nbits]

    # -- public draws --------------------------------------------------------

    def next_bits(self, m: int) -> np.ndarray:
        """Return ``m`` bits as a uint8 array of 0/1 values."""
        if m < 0:
            raise ValueError("m must be non-negative")
        if m == 0:
            return np.zeros(0, dtype=np.uint8)
        if self._ensure(m) < m:
            raise KeyExhausted(f"requested {m} bits, only {self.available()} left")
        bits = self._unpacked(m).copy()
        self._bitpos += m
        self.consumed += m
        return bits

    def next_int(self, k: int) -> int:
        """Read ``k`` bits as an unsigned integer, first bit most significant."""
        if k == 0:
            return 0
        if self._ensure(k) < k:
            raise KeyExhausted(f"requested {k} bits, only {self.available()} left")
        return self._read_int(k)

    def uniform_index(self, n: int) -> int:
        """Uniform value in ``[0, n)`` by rejection on ceil(lg n)-bit chunks."""
        if n < 1:
            raise ValueError("n must be at least 1")
        k = (n - 1).bit_length()
        if k == 0:
            return 0
        while True:
            short = 8 * len(self._buf) - self._bitpos < k or self._limit is not None
            if short and self._ensure(k) < k:
                raise KeyExhausted(f"need {k} bits for an index in [0, {n})")
            v = self._read_int(k)
            if v < n:
                return v

    def peek_indices(self, n: int, count: int) -> tuple[np.ndarray, np.ndarray]:
        """Look ahead at the next ``count`` uniform indices without consuming.

        Returns ``(values, ends)`` where ``ends[i]`` is the number of bits a
        sequence of ``i + 1`` :meth:`uniform_index` calls would consume.
        Fewer than ``count`` values come back when a finite source runs dry.
        """
        k = (n - 1).bit_length()
        if k == 0:
            return np.zeros(count, dtype=np.int64), np.zeros(count, dtype=np.int64)
        # power-of-two n never rejects; otherwise acceptance is above 1/2
        want = count * k if n == 1 << k else 2 * count * k + 64
        while True:
            got = self._ensure(want)
            chunks = got // k
            bits = self._unpacked(chunks * k).reshape(chunks, k).astype(np.int64)
            values = bits @ (1 << np.arange(k - 1, -1, -1, dtype=np.int64))
            accepted = np.flatnonzero(values < n)
            if accepted.size >= count or got < want:
                accepted = accepted[:count]
                return values[accepted], (accepted + 1) * k
            want *= 2

    def skip(self, nbits: int) -> None:
        """Consume ``nbits`` bits previously inspected with :meth:`peek_indices`."""
        if self._ensure(nbits) < nbits:
            raise KeyExhausted(f"cannot skip {nbits} bits")
        self._bitpos += nbits
        self.consumed += nbits

    def uniform_indices(self, n: int, count: int) -> np.ndarray:
        """``count`` successive :meth:`uniform_index` draws, vectorized."""
        if count == 0:
            return np.zeros(0, dtype=np.int64)
        values, ends = self.peek_indices(n, count)
        if values.size < count:
            raise KeyExhausted(f"stream ran out after {values.size} of {count} indices")
        self.skip(int(ends[-1]))
        return values


def parse_key_hex(text: str) -> bytes:
    """Decode a hexadecimal key, tolerating an ``0x`` prefix and separators."""
    cleaned = text.strip().lower().removeprefix("0x").replace(":", "").replace(" ", "")
    key = bytes.fromhex(cleaned)
    if not key:
        raise ValueError("key must be non-empty")
    return key


def load_tape(path: str | Path) -> BitSource:
    return BitSource.from_tape(Path(path).read_text())


def save_tape(path: str | Path, bits: Iterable[int], width: int = 64) -> None:
    s = "".join("1" if b else "0" for b in bits)
    lines = [s[i : i + width] for i in range(0, len(s), width)]
    Path(path).write_text("\n".join(lines) + "\n")
