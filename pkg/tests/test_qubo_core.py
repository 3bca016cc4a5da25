from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import vehicle
from evqubo.qubo import (FixedValue, OneHotEncoding, QuboProblem, dumps_qubo, loads_qubo,
                         make_power_encoding, make_soc_encoding, qubo_energy, read_qubo, write_qubo)


def qubos(max_bits=6):
    @st.composite
    def build(draw):
        n = draw(st.integers(1, max_bits))
        pairs = [(i, j) for i in range(n) for j in range(i, n)]
        coefs = draw(st.lists(st.floats(-10, 10, allow_nan=False), min_size=len(pairs), max_size=len(pairs)))
        offset = draw(st.floats(-5, 5))
        return QuboProblem(n, dict(zip(pairs, coefs)), offset)
    return build()


class TestPowerEncoding:
    def test_five_levels(self):
        e = make_power_encoding(10.0, 5)
        assert e.step == 2.0
        assert e.values == (0.0, 2.0, 4.0, 6.0, 8.0)
        assert e.n_bits == 4

    def test_two_levels(self):
        assert make_power_encoding(10.0, 2).values == (0.0, 5.0)

    def test_one_level_rejected(self):
        with pytest.raises(ValueError):
            make_power_encoding(10.0, 1)

    def test_nonpositive_max_rejected(self):
        with pytest.raises(ValueError):
            make_power_encoding(0.0, 3)


class TestSocEncoding:
    def test_five_levels(self):
        e = make_soc_encoding(vehicle(soc_min=2.0, soc_max=10.0, soc_init=2.0), 5)
        assert e.step == 2.0 and e.values == (2.0, 4.0, 6.0, 8.0, 10.0)

    def test_two_levels(self):
        assert make_soc_encoding(vehicle(soc_min=3.0, soc_max=7.0, soc_init=3.0), 2).values == (3.0, 7.0)

    def test_all_zero_is_min(self):
        e = make_soc_encoding(vehicle(soc_min=2.0, soc_max=10.0, soc_init=2.0), 5)
        assert e.decode((0, 0, 0, 0)) == (2.0, False)

    def test_degenerate_range_rejected(self):
        with pytest.raises(ValueError):
            make_soc_encoding(vehicle(soc_min=4.0, soc_max=4.0, soc_init=4.0), 3)


class TestDecodeLevels:
    e = make_power_encoding(10.0, 5)

    def test_level_three(self):
        assert self.e.decode((0, 0, 1, 0)) == (6.0, False)

    def test_no_bits(self):
        assert self.e.decode((0, 0, 0, 0)) == (0.0, False)

    def test_multi_hot_takes_lowest(self):
        assert self.e.decode((1, 0, 1, 0)) == (2.0, True)

    def test_unrepresentable(self):
        with pytest.raises(ValueError):
            self.e.encode(3.0)

    def test_fixed_value(self):
        f = FixedValue(4.5)
        assert f.n_bits == 0 and f.encode(4.5) == () and f.decode(()) == (4.5, False)


@given(st.floats(0.1, 100), st.integers(2, 9), st.floats(0.1, 50))
def test_encoding_round_trip(p_max, K, soc_min):
    encs = [make_power_encoding(p_max, K),
            make_soc_encoding(vehicle(soc_min=soc_min, soc_max=soc_min + p_max, soc_init=soc_min), K),
            OneHotEncoding.from_values(sorted({round(p_max * k / 7, 6) for k in range(K)} | {-1.0}))]
    for e in encs:
        for v in e.values:
            bits = e.encode(v)
            assert len(bits) == e.n_bits and sum(bits) <= 1
            assert e.decode(bits) == (v, False)


class TestQuboEnergy:
    q = QuboProblem(2, {(0, 0): 1.0, (1, 1): 3.0, (0, 1): -2.0}, 0.5)

    def test_both_on(self):
        assert qubo_energy(self.q, [1, 1]) == 2.5

    def test_all_zero(self):
        assert qubo_energy(self.q, [0, 0]) == 0.5

    def test_first_on(self):
        assert qubo_energy(self.q, [1, 0]) == 1.5

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            qubo_energy(self.q, [1])


class TestQuboProblem:
    def test_lower_triangle_rejected(self):
        with pytest.raises(ValueError, match="below"):
            QuboProblem(2, {(1, 0): 1.0})

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            QuboProblem(2, {(0, 2): 1.0})

    def test_zero_entries_dropped(self):
        assert dict(QuboProblem(2, {(0, 1): 0.0, (0, 0): 1.0}).coefficients) == {(0, 0): 1.0}

    def test_header_errors(self):
        with pytest.raises(ValueError, match="line 1"):
            loads_qubo("0 0 1.0\n")
        with pytest.raises(ValueError, match="line 3"):
            loads_qubo("#bits 2 offset 0.0\n0 0 1.0\n1 0 2.0\n")


@given(qubos())
def test_export_round_trip_bit_exact(q):
    back = loads_qubo(dumps_qubo(q))
    assert back == q
    assert dumps_qubo(back) == dumps_qubo(q)


def test_file_round_trip(tmp_path):
    q = QuboProblem(3, {(0, 0): 0.1, (0, 2): -1 / 3, (2, 2): 1e-17}, 2 / 7)
    write_qubo(q, tmp_path / "q.txt")
    assert read_qubo(tmp_path / "q.txt") == q


@given(qubos())
def test_energy_matches_dense_form(q):
    up = q.upper()
    for bits in itertools.product((0, 1), repeat=q.num_bits):
        b = np.array(bits, dtype=float)
        assert qubo_energy(q, bits) == pytest.approx(b @ up @ b + q.constant_offset, abs=1e-9)
