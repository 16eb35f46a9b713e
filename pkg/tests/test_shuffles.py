from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from sstperm.randomness import BitSource
from sstperm.sampler import ksa_star
from sstperm.shuffles import (
    Permutation,
    ShuffleKind,
    StepTrace,
    apply_step,
    bits_per_step,
    draw_step,
    rc4_ksa,
    riffle_partition,
    step_ctrt,
    step_riffle_inverse,
    step_rtrt,
    step_t2r,
)


def tape_for_indices(indices, width):
    return "".join(format(v, f"0{width}b") for v in indices)


def test_t2r_examples():
    S = Permutation([0])
    step_t2r(S, BitSource.from_tape(""))
    assert S == [0]
    S = Permutation([0, 1, 2])
    step_t2r(S, BitSource.from_tape("00"))
    assert S == [0, 1, 2]
    S = Permutation([0, 1, 2])
    step_t2r(S, BitSource.from_tape("10"))
    assert S == [1, 2, 0]


@settings(max_examples=100, deadline=None)
@given(deck=st.permutations(list(range(7))), j=st.integers(0, 6))
def test_t2r_matches_insert_oracle(deck, j):
    S = Permutation(deck)
    apply_step(S, StepTrace(ShuffleKind.TOP_TO_RANDOM, 0, 0, j))
    ref = list(deck[1:])
    ref.insert(j, deck[0])
    assert S == ref


def test_rtrt_examples():
    S = Permutation([0, 1, 2])
    trace = step_rtrt(S, BitSource.from_tape(tape_for_indices([1, 1], 2)))
    assert (trace.i, trace.j) == (1, 1)
    assert S == [0, 1, 2]
    S = Permutation([0, 1, 2])
    step_rtrt(S, BitSource.from_tape(tape_for_indices([0, 2], 2)))
    assert S == [2, 1, 0]


def test_rtrt_chi_square_over_all_decks():
    src = BitSource.from_seed(21)
    idx = src.uniform_indices(4, 2 * 100_000).reshape(-1, 2)
    deck = [0, 1, 2, 3]
    decks = {p: k for k, p in enumerate(itertools.permutations(range(4)))}
    counts = np.zeros(24, dtype=int)
    # consecutive states of one chain: thin heavily so samples are nearly independent
    for step, (i, j) in enumerate(idx.tolist()):
        deck[i], deck[j] = deck[j], deck[i]
        if step % 20 == 19:
            counts[decks[tuple(deck)]] += 1
    assert stats.chisquare(counts).pvalue > 0.001


def test_ctrt_examples():
    S = Permutation([0, 1, 2, 3])
    step_ctrt(S, 0, BitSource.from_tape("00"))
    assert S == [0, 1, 2, 3]
    S = Permutation([0, 1, 2, 3])
    trace = step_ctrt(S, 2, BitSource.from_tape("00"))
    assert (trace.i, trace.j) == (2, 0)
    assert S == [2, 1, 0, 3]


def test_ctrt_steps_equal_straight_line_ksa_star():
    n = 256
    tape = BitSource.from_seed(9).next_bits(8 * n)
    S = Permutation.identity(n)
    src = BitSource.from_tape(tape)
    for t in range(n):
        step_ctrt(S, t, src)
    # independent straight-line loop over the same tape
    js = [int("".join(map(str, tape[8 * t : 8 * t + 8])), 2) for t in range(n)]
    ref = list(range(n))
    for i in range(n):
        ref[i], ref[js[i]] = ref[js[i]], ref[i]
    assert S == ref
    assert ksa_star("ctrt", n, n, BitSource.from_tape(tape)).deck == ref


def test_riffle_example_run():
    S = Permutation.identity(8)
    src = BitSource.from_tape("00001111" "00110011" "01010101")
    step_riffle_inverse(S, src)
    assert S == list(range(8))
    step_riffle_inverse(S, src)
    assert S == [0, 1, 4, 5, 2, 3, 6, 7]
    step_riffle_inverse(S, src)
    assert S == [0, 4, 2, 6, 1, 5, 3, 7]
    # the figure's 1-based labels
    assert [c + 1 for c in S] == [1, 5, 3, 7, 2, 6, 4, 8]


@pytest.mark.parametrize("bit", ["0", "1"])
def test_riffle_constant_bits_keep_deck(bit):
    S = Permutation([3, 1, 0, 2])
    step_riffle_inverse(S, BitSource.from_tape(bit * 4))
    assert S == [3, 1, 0, 2]


@settings(max_examples=100, deadline=None)
@given(data=st.data(), n=st.integers(1, 20))
def test_riffle_is_stable_partition(data, n):
    deck = data.draw(st.permutations(list(range(n))))
    bits = data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    out = riffle_partition(deck, bits)
    tag = dict(zip(deck, bits))
    zeros = [c for c in out if tag[c] == 0]
    assert out == zeros + [c for c in out if tag[c] == 1]
    for b in (0, 1):
        assert [c for c in out if tag[c] == b] == [c for c in deck if tag[c] == b]


@settings(max_examples=50, deadline=None)
@given(kind=st.sampled_from(list(ShuffleKind)), n=st.integers(1, 12), seed=st.integers(0, 10**6))
def test_steps_preserve_bijection_and_sign_rule(kind, n, seed):
    src = BitSource.from_seed(seed)
    S = Permutation.identity(n)
    for t in range(30):
        before = S.sign()
        trace = draw_step(kind, n, t, src)
        apply_step(S, trace)
        S.check()
        if kind in (ShuffleKind.RANDOM_TRANSPOSITIONS, ShuffleKind.CYCLIC_TO_RANDOM):
            assert (S.sign() != before) == (trace.i != trace.j)


def test_bits_per_step_accounting():
    assert bits_per_step(ShuffleKind.RIFFLE_INVERSE, 256) == 256
    assert bits_per_step(ShuffleKind.RANDOM_TRANSPOSITIONS, 256) == 16
    assert bits_per_step(ShuffleKind.CYCLIC_TO_RANDOM, 256) == 8
    assert bits_per_step(ShuffleKind.TOP_TO_RANDOM, 6) is None


def test_sign_and_positions():
    S = Permutation([1, 2, 0, 3])
    assert S.sign() == 1
    assert Permutation([1, 0, 2]).sign() == -1
    assert S.positions() == [2, 0, 1, 3]
    assert Permutation.from_line(S.to_line()) == S


def test_permutation_rejects_duplicates():
    with pytest.raises(ValueError):
        Permutation([0, 0, 1])


def test_rc4_ksa_small_cases():
    assert rc4_ksa([0, 0, 0, 0], 4) == [0, 2, 3, 1]
    assert rc4_ksa(b"\x07", 1) == [0]


def _prga(S, count):
    S = list(S)
    i = j = 0
    out = []
    for _ in range(count):
        i = (i + 1) % 256
        j = (j + S[i]) % 256
        S[i], S[j] = S[j], S[i]
        out.append(S[(S[i] + S[j]) % 256])
    return bytes(out)


@pytest.mark.parametrize(
    "key, expected",
    [
        (b"Key", "eb9f7781b734ca72a719"),
        (b"Wiki", "6044db6d41b7"),
        (bytes.fromhex("0102030405"), "b2396305f03dc027"),
    ],
)
def test_rc4_ksa_matches_published_keystreams(key, expected):
    stream = _prga(rc4_ksa(key, 256), len(expected) // 2)
    assert stream.hex() == expected


def test_rc4_ksa_matches_cryptography_arc4():
    algorithms = pytest.importorskip("cryptography.hazmat.decrepit.ciphers.algorithms")
    from cryptography.hazmat.primitives.ciphers import Cipher

    key = bytes(range(1, 17))
    enc = Cipher(algorithms.ARC4(key), mode=None).encryptor()
    assert enc.update(bytes(64)) == _prga(rc4_ksa(key, 256), 64)
