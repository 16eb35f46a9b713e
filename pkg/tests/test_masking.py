from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sstperm.analysis import conditional_uniformity
from sstperm.errors import KeyExhausted, SizeMismatch
from sstperm import masking
from sstperm.masking import (
    BitPermutation,
    IdentityTransform,
    MaskedCipher,
    apply_bits,
    apply_bits_fast,
    apply_bits_fast_many,
    decompose_to_riffle_rounds,
    derive_permutations,
    derive_subkeys,
    mask_decrypt,
    mask_encrypt,
    permutation_from_source,
)
from sstperm.randomness import BitSource

SIZES = [8, 16, 32, 64, 128, 256, 512, 1024]


def set_bits(block: bytes) -> list[int]:
    return [i for i in range(8 * len(block)) if (block[i >> 3] >> (i & 7)) & 1]


def test_identity_map():
    block = bytes(range(16))
    assert apply_bits(BitPermutation.identity(128), block) == block


def test_swap_first_and_last_bit():
    mapping = list(range(128))
    mapping[0], mapping[127] = 127, 0
    block = bytes([1]) + bytes(15)
    assert set_bits(apply_bits(BitPermutation(mapping), block)) == [127]


def test_bit_addressing_is_little_endian_in_byte():
    # input bit 3 (byte 0, mask 0x08) goes to output bit 9 (byte 1, mask 0x02)
    mapping = list(range(16))
    mapping[3], mapping[9] = 9, 3
    assert apply_bits(BitPermutation(mapping), bytes([0x08, 0])) == bytes([0, 0x02])


def test_popcount_preserved():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        perm = BitPermutation(rng.permutation(128))
        block = rng.bytes(16)
        assert len(set_bits(apply_bits(perm, block))) == len(set_bits(block))


def test_size_mismatch():
    with pytest.raises(SizeMismatch):
        apply_bits(BitPermutation.identity(128), bytes(15))
    dec = decompose_to_riffle_rounds(BitPermutation.identity(128))
    with pytest.raises(SizeMismatch):
        apply_bits_fast(dec, bytes(17))


def test_not_a_bijection():
    with pytest.raises(ValueError):
        BitPermutation([0, 0, 1, 2, 3, 4, 5, 6])


def test_inverse_map():
    rng = np.random.default_rng(1)
    perm = BitPermutation(rng.permutation(256))
    inv = perm.inverse()
    assert np.array_equal(inv.map[perm.map], np.arange(256))
    block = rng.bytes(32)
    assert apply_bits(inv, apply_bits(perm, block)) == block


def test_identity_decomposition():
    dec = decompose_to_riffle_rounds(BitPermutation.identity(8))
    assert dec.rounds.shape == (3, 8)
    assert dec.replay() == list(range(8))
    assert apply_bits_fast(dec, b"\xa5") == b"\xa5"


def test_example_deck_decomposes_to_example_tape():
    g = BitPermutation.from_deck([0, 4, 2, 6, 1, 5, 3, 7])
    dec = decompose_to_riffle_rounds(g)
    assert dec.rounds.shape[0] == 3
    assert ["".join(map(str, r)) for r in dec.rounds.tolist()] == ["00001111", "00110011", "01010101"]


def test_decomposition_roundtrip_many():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        perm = BitPermutation(rng.permutation(128))
        dec = decompose_to_riffle_rounds(perm)
        assert dec.permutation() == perm


@pytest.mark.parametrize("n_bits", SIZES)
def test_fast_matches_slow_all_sizes(n_bits):
    rng = np.random.default_rng(n_bits)
    for _ in range(40):
        perm = BitPermutation(rng.permutation(n_bits))
        dec = decompose_to_riffle_rounds(perm)
        blocks = rng.integers(0, 256, size=(5, n_bits // 8), dtype=np.uint8)
        batch = apply_bits_fast_many(dec, blocks)
        for row, out in zip(blocks, batch):
            ref = apply_bits(perm, row.tobytes())
            assert out.tobytes() == ref
            assert apply_bits_fast(dec, row.tobytes()) == ref


@settings(max_examples=100, deadline=None)
@given(data=st.data())
def test_fast_matches_slow_property(data):
    perm = BitPermutation(data.draw(st.permutations(list(range(64)))))
    block = data.draw(st.binary(min_size=8, max_size=8))
    assert apply_bits_fast(decompose_to_riffle_rounds(perm), block) == apply_bits(perm, block)


def test_example_tape_gives_example_g1():
    g1, res = permutation_from_source(BitSource.from_tape("00001111" "00110011" "01010101"), 8)
    assert g1 == BitPermutation.from_deck([0, 4, 2, 6, 1, 5, 3, 7])
    assert res.steps == 3


def test_derive_permutations_deterministic():
    a = derive_permutations(b"some key", 128)
    b = derive_permutations(b"some key", 128)
    assert a[0] == b[0] and a[1] == b[1]


def test_g1_g2_differ_across_keys():
    rng = np.random.default_rng(5)
    same = sum(g1 == g2 for g1, g2 in (derive_permutations(rng.bytes(16), 128) for _ in range(1000)))
    assert same == 0


def test_derive_permutations_finite_key():
    with pytest.raises(KeyExhausted):
        derive_permutations(b"k", 128, max_bits=128 * 5)


def test_subkeys_are_distinct():
    kg, kf, km = derive_subkeys(b"master")
    assert len({kg, kf, km}) == 3


def test_identity_pipeline():
    mc = MaskedCipher(b"key", 128, transform="identity")
    I = BitPermutation.identity(128)
    mc.g1 = mc.g2 = I
    dec = decompose_to_riffle_rounds(I)
    mc._fwd = mc._inv = (dec, dec)
    x = bytes(range(16))
    assert mc.encrypt_block(x) == x


def test_identity_transform_is_composition():
    mc = MaskedCipher(b"another", 128, transform=IdentityTransform())
    rng = np.random.default_rng(6)
    both = mc.g1.then(mc.g2)
    for _ in range(100):
        x = rng.bytes(16)
        assert mask_encrypt(mc, x) == apply_bits(both, x)


def test_roundtrip_random_keys_and_blocks():
    rng = np.random.default_rng(7)
    for _ in range(200):
        mc = MaskedCipher(rng.bytes(16))
        for _ in range(5):
            x = rng.bytes(16)
            assert mask_decrypt(mc, mask_encrypt(mc, x)) == x


@pytest.mark.parametrize("bits", [8, 64, 256, 1024])
def test_roundtrip_other_block_sizes(bits):
    mc = MaskedCipher(b"size test", bits)
    data = np.random.default_rng(bits).bytes(bits // 8 * 20)
    assert mc.decrypt(mc.encrypt(data)) == data


def test_bulk_matches_per_block():
    mc = MaskedCipher(b"bulk")
    data = np.random.default_rng(9).bytes(16 * 30)
    per = b"".join(mc.encrypt_block(data[i : i + 16]) for i in range(0, len(data), 16))
    assert mc.encrypt(data) == per


def test_partial_block_rejected():
    with pytest.raises(SizeMismatch):
        MaskedCipher(b"k").encrypt(bytes(20))


def test_bad_block_size():
    with pytest.raises(ValueError):
        MaskedCipher(b"k", 96)
    with pytest.raises(ValueError):
        MaskedCipher(b"k", 2048)


def test_permutation_work_is_per_key_not_per_block(monkeypatch):
    calls = []
    real = masking.permutation_from_source

    def counting(src, n_bits):
        calls.append(n_bits)
        return real(src, n_bits)

    monkeypatch.setattr(masking, "permutation_from_source", counting)
    mc = MaskedCipher(b"fixed key")
    assert len(calls) == 2
    steps = mc.setup_steps
    rng = np.random.default_rng(10)
    for _ in range(50):
        mc.decrypt_block(mc.encrypt_block(rng.bytes(16)))
    mc.encrypt(rng.bytes(16 * 10))
    assert len(calls) == 2
    assert mc.setup_steps == steps
    assert MaskedCipher(b"fixed key").setup_steps == steps


@pytest.mark.parametrize("n", [3, 4])
def test_sampling_time_carries_no_information(n):
    assert conditional_uniformity("riffle", "pairs", n) < 1e-12
