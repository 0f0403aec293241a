import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kraken_sim.codec import (
    HEADER,
    TernaryTensor,
    pack_flat,
    pack_tensor,
    pack_trits,
    packed_size_bits,
    unpack_flat,
    unpack_tensor,
    unpack_trits,
)
from kraken_sim.errors import InvalidEncoding, ParseError


@pytest.mark.parametrize(
    "trits, byte",
    [([-1] * 5, 0), ([0] * 5, 121), ([1] * 5, 242), ([1, 0, 0, 0, 0], 122), ([1, -1, -1, -1, -1], 2), ([-1, 1, -1, -1, -1], 6)],
)
def test_pack_trits_known(trits, byte):
    assert pack_trits(trits) == byte
    assert unpack_trits(byte) == trits


@pytest.mark.parametrize("byte", [243, 250, 255])
def test_unpack_rejects_out_of_range(byte):
    with pytest.raises(InvalidEncoding):
        unpack_trits(byte)


def test_pack_trits_arity():
    with pytest.raises(ValueError):
        pack_trits([0, 0, 0, 0])


def test_exhaustive_bijection():
    seen = set()
    for tup in itertools.product((-1, 0, 1), repeat=5):
        b = pack_trits(list(tup))
        assert 0 <= b <= 242
        assert unpack_trits(b) == list(tup)
        seen.add(b)
    assert seen == set(range(243))
    for b in range(243):
        assert pack_trits(unpack_trits(b)) == b


def test_vectorized_matches_scalar():
    all_tuples = np.array(list(itertools.product((-1, 0, 1), repeat=5)), dtype=np.int8)
    packed = pack_flat(all_tuples.reshape(-1))
    assert list(packed) == [pack_trits(list(t)) for t in all_tuples]
    assert np.array_equal(unpack_flat(packed, all_tuples.size), all_tuples.reshape(-1))


@pytest.mark.parametrize("numel, bits", [(0, 0), (1, 8), (5, 8), (6, 16), (585000, 936000), (585005, 936008)])
def test_packed_size_bits(numel, bits):
    assert packed_size_bits(numel) == bits


def test_density_is_1_6_bits():
    for n in (5, 50, 5000, 585000):
        assert packed_size_bits(n) / n == pytest.approx(1.6, abs=0)


def test_pack_tensor_examples():
    zeros = TernaryTensor.zeros(1, 1, 5)
    assert pack_tensor(zeros)[HEADER.size:] == bytes([121])
    # [+1] pads to [+1, 0, 0, 0, 0]: 2 + 1*3 + 1*9 + 1*27 + 1*81
    one = TernaryTensor(np.array([[[1]]]))
    assert pack_tensor(one)[HEADER.size:] == bytes([122])
    empty = TernaryTensor.zeros(0, 3, 2)
    blob = pack_tensor(empty)
    assert len(blob) == HEADER.size
    assert unpack_tensor(blob) == empty


def test_header_layout():
    blob = pack_tensor(TernaryTensor.zeros(2, 3, 4))
    assert blob[:4] == b"KTT1"
    assert blob[4:16] == (2).to_bytes(4, "little") + (3).to_bytes(4, "little") + (4).to_bytes(4, "little")
    assert len(blob) == 16 + 5  # 24 trits -> 5 blocks


@settings(max_examples=200, deadline=None)
@given(
    st.tuples(st.integers(0, 7), st.integers(0, 7), st.integers(0, 7)).flatmap(
        lambda d: st.tuples(st.just(d), st.lists(st.sampled_from([-1, 0, 1]), min_size=d[0] * d[1] * d[2], max_size=d[0] * d[1] * d[2]))
    )
)
def test_tensor_round_trip(case):
    dims, flat = case
    t = TernaryTensor.from_flat(dims, flat)
    blob = pack_tensor(t)
    assert len(blob) == HEADER.size + packed_size_bits(t.numel) // 8
    assert unpack_tensor(blob) == t


def test_unpack_tensor_errors():
    good = pack_tensor(TernaryTensor.zeros(1, 1, 7))
    with pytest.raises(ParseError):
        unpack_tensor(b"XXXX" + good[4:])
    with pytest.raises(ParseError):
        unpack_tensor(good[:-1])
    with pytest.raises(ParseError):
        unpack_tensor(good[:10])
    with pytest.raises(InvalidEncoding):
        unpack_tensor(good[:-1] + bytes([250]))


def test_nonzero_padding_rejected():
    # 1 trit + padding digit 2 (trit +1) in position 1
    with pytest.raises(InvalidEncoding):
        unpack_flat(bytes([1 + 2 * 3 + 9 + 27 + 81]), 1)


def test_tensor_rejects_non_trits():
    with pytest.raises(ValueError):
        TernaryTensor(np.full((1, 1, 1), 2))
