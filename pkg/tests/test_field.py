import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from compsecagg.field import (MAX_MODULUS, FieldVector, FixedPointParams, as_field,
                              bits_per_element, fp_decode, fp_encode, make_shares, pack_bits,
                              sample_uniform, sum_mod, unpack_bits, vec_add_mod, vec_sub_mod)
from compsecagg.rng import make_rng

moduli = st.one_of(st.integers(2, 300), st.integers(2, MAX_MODULUS),
                   st.sampled_from([2**32, 2**63, 2**64 - 59, 2**64]))


@st.composite
def vectors(draw, n_max=40, m=None):
    m = draw(moduli) if m is None else m
    n = draw(st.integers(0, n_max))
    vals = draw(st.lists(st.integers(0, m - 1), min_size=n, max_size=n))
    return FieldVector(m, vals)


def test_bits_per_element():
    assert [bits_per_element(m) for m in (2, 3, 4, 5, 11, 2**32, 2**64)] == [1, 2, 2, 3, 4, 32, 64]
    with pytest.raises(ValueError):
        bits_per_element(1)


class TestFieldVector:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            FieldVector(5, [5])
        with pytest.raises(ValueError):
            FieldVector(5, [-1])
        with pytest.raises(ValueError):
            FieldVector(1, [])
        with pytest.raises(ValueError):
            FieldVector(2**64 + 1, [])

    def test_immutable(self):
        v = as_field([1, 2], 7)
        with pytest.raises(ValueError):
            v.elems[0] = 3


class TestFixedPoint:
    p = FixedPointParams()

    def test_hand_values(self):
        assert fp_encode(0.0, self.p) == 0
        assert fp_encode(1.5, self.p) == 98304
        assert fp_decode(0, self.p) == 0.0
        assert fp_decode(98304, self.p) == 1.5

    def test_overflow_at_boundary(self):
        with pytest.raises(OverflowError):
            fp_encode(2.0 ** (32 - 16), self.p)
        assert fp_encode(math.nextafter(2.0**16, 0), self.p) == 2**32 - 1

    @pytest.mark.parametrize("bad", [-1.0, float("nan"), float("inf")])
    def test_rejects_non_encodable(self, bad):
        with pytest.raises(ValueError):
            fp_encode(bad, self.p)

    def test_roundtrip_error(self):
        xs = make_rng(1).random(10_000) * 1000
        err = max(abs(fp_decode(fp_encode(x, self.p), self.p) - x) for x in xs)
        assert err <= 2.0**-16

    @given(st.floats(0, 2**16, exclude_max=True))
    def test_decode_never_exceeds(self, x):
        y = fp_decode(fp_encode(x, self.p), self.p)
        assert 0 <= x - y <= 2.0**-16

    def test_params(self):
        with pytest.raises(ValueError):
            FixedPointParams(32, 32)
        with pytest.raises(ValueError):
            FixedPointParams(65, 16)


class TestSampling:
    def test_empty(self):
        assert sample_uniform(0, 7, make_rng(0)).n == 0

    def test_binary_mean(self):
        v = sample_uniform(100_000, 2, make_rng(2)).elems.astype(float)
        sigma = math.sqrt(0.25 / v.size)
        assert abs(v.mean() - 0.5) < 3 * sigma

    def test_chi_square_m11(self):
        v = sample_uniform(100_000, 11, make_rng(3)).elems
        counts = np.bincount(v.astype(np.int64), minlength=11)
        assert stats.chisquare(counts).pvalue > 0.01

    def test_large_modulus_in_range(self):
        for m in (2**64, 2**64 - 59, 2**33 + 1):
            v = sample_uniform(1000, m, make_rng(4))
            assert all(0 <= int(e) < m for e in v.elems)


class TestArithmetic:
    def test_hand_sum(self):
        assert vec_add_mod(as_field([4, 3], 5), as_field([2, 4], 5)).tolist() == [1, 2]

    def test_identity(self):
        a = as_field([4, 0, 3], 5)
        assert vec_add_mod(a, FieldVector.zeros(3, 5)) == a

    def test_mismatch(self):
        with pytest.raises(ValueError):
            vec_add_mod(as_field([1], 5), as_field([1], 7))
        with pytest.raises(ValueError):
            vec_add_mod(as_field([1], 5), as_field([1, 2], 5))

    def test_associativity_random_triples(self):
        rng = make_rng(5)
        for _ in range(100):
            m = int(rng.integers(2, 2**63)) * 2
            n = int(rng.integers(0, 8))
            a, b, c = (sample_uniform(n, m, rng) for _ in range(3))
            assert vec_add_mod(vec_add_mod(a, b), c) == vec_add_mod(a, vec_add_mod(b, c))

    @given(st.data())
    def test_matches_python_ints(self, data):
        m = data.draw(moduli)
        a = data.draw(vectors(m=m, n_max=10))
        b = FieldVector(m, data.draw(st.lists(st.integers(0, m - 1), min_size=a.n, max_size=a.n)))
        assert vec_add_mod(a, b).tolist() == [(x + y) % m for x, y in zip(a.tolist(), b.tolist())]
        assert vec_sub_mod(a, b).tolist() == [(x - y) % m for x, y in zip(a.tolist(), b.tolist())]

    def test_sum_mod_empty(self):
        with pytest.raises(ValueError):
            sum_mod([])


class TestShares:
    def test_zero_input_two_shares_negate(self):
        x = FieldVector.zeros(6, 13)
        b = make_shares(x, 2, make_rng(0))
        s0, s1 = b.shares
        assert vec_add_mod(s0, s1) == x

    def test_reconstruction_random(self):
        rng = make_rng(6)
        for _ in range(1000):
            m = int(rng.integers(2, 2**32 + 1))
            x = sample_uniform(int(rng.integers(0, 6)), m, rng)
            S = int(rng.integers(2, 5))
            b = make_shares(x, S, rng)
            assert len(b.shares) == S
            assert b.reconstruct() == x

    def test_seeded_reproducible(self):
        x = as_field([1, 2, 3], 11)
        a = make_shares(x, 3, make_rng(9)).shares
        b = make_shares(x, 3, make_rng(9)).shares
        assert [pack_bits(s) for s in a] == [pack_bits(s) for s in b]

    def test_needs_two_servers(self):
        with pytest.raises(ValueError):
            make_shares(as_field([1], 5), 1, make_rng(0))


class TestPacking:
    def test_empty(self):
        assert pack_bits(FieldVector.zeros(0, 11)) == b""

    def test_hand_layout(self):
        v = as_field([1, 2, 3, 4], 11)
        data = pack_bits(v)
        assert data.hex() == "2143"
        assert len(data) * 8 == 16 == v.bit_size

    @given(vectors(n_max=200))
    def test_roundtrip(self, v):
        data = pack_bits(v)
        assert len(data) == math.ceil(v.bit_size / 8)
        assert unpack_bits(data, v.n, v.modulus) == v

    def test_roundtrip_random_pairs(self):
        rng = make_rng(7)
        for _ in range(1000):
            m = int(rng.integers(2, 2**63)) if rng.random() < 0.5 else int(rng.integers(2, 64))
            v = sample_uniform(int(rng.integers(0, 300)), m, rng)
            assert unpack_bits(pack_bits(v), v.n, m) == v

    def test_rejects_malformed(self):
        with pytest.raises(ValueError):
            unpack_bits(b"\x21", 4, 11)
        with pytest.raises(ValueError):
            unpack_bits(b"\x0f", 1, 11)  # 15 >= 11
        with pytest.raises(ValueError):
            unpack_bits(b"\xf1", 1, 11)  # padding bits set
