import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qmit.errors import ContractError, ModeMismatchError
from qmit.noise_model import MultiQubitNoiseModel, ResponseFunction
from qmit.tally import (
    bits_to_strings,
    empirical_frequencies,
    merge_tallies,
    read_shots,
    strings_to_bits,
    tally_counts,
    tally_file,
    tally_shots,
    threshold_tally,
    write_shots,
)

from conftest import uniform_model

RF4 = ResponseFunction([0.0, 1.0, 2.0, 3.0, 4.0], np.full((2, 4), 0.25))
ANALOG2 = MultiQubitNoiseModel((RF4, RF4))


class TestTallyShots:
    def test_counting(self):
        t = tally_shots(["01", "01", "11"], uniform_model(2, 0.9))
        assert t.as_dict() == {"01": 2, "11": 1}
        assert t.m == 2 and t.n_shots == 3

    def test_single_key(self):
        t = tally_shots(["0" * 12] * 1000, uniform_model(12, 0.9))
        assert t.n_groups == 1 and t.m == 1 and t.n_shots == 1000

    def test_analog_groups_and_threshold(self):
        shots = np.array([[0.5, 3.5], [0.2, 3.9], [1.5, 2.5]])
        t = tally_shots(shots, ANALOG2)
        assert t.keys.tolist() == [[0, 3], [1, 2]]
        assert t.n_groups == 2
        assert t.active == ["01"] and t.active_counts.tolist() == [3]

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            tally_shots(["010"], uniform_model(2, 0.9))

    def test_mode_mismatch(self):
        with pytest.raises(ModeMismatchError):
            tally_shots(np.array([[0.1, 0.2]]), uniform_model(2, 0.9))
        with pytest.raises(ModeMismatchError):
            tally_shots(["01"], ANALOG2)

    def test_weighted_rows(self):
        t = tally_shots(["0", "1", "0"], uniform_model(1, 0.9), counts=[2, 5, 1])
        assert t.as_dict() == {"0": 3, "1": 5}

    def test_no_shots(self):
        with pytest.raises(ContractError):
            tally_shots([], uniform_model(1, 0.9))

    @given(st.lists(st.text("01", min_size=3, max_size=3), min_size=1, max_size=60), st.randoms())
    def test_order_invariance(self, shots, rnd):
        model = uniform_model(3, 0.9)
        shuffled = list(shots)
        rnd.shuffle(shuffled)
        a, b = tally_shots(shots, model), tally_shots(shuffled, model)
        assert a.as_dict() == b.as_dict()
        assert np.array_equal(a.active_bits, b.active_bits)

    @given(st.lists(st.text("01", min_size=4, max_size=4), min_size=1, max_size=60))
    def test_expand_round_trip(self, shots):
        model = uniform_model(4, 0.9)
        t = tally_shots(shots, model)
        again = tally_shots(t.expand(), model)
        assert again.as_dict() == t.as_dict()

    @given(st.lists(st.lists(st.floats(-1, 5), min_size=2, max_size=2), min_size=1, max_size=80))
    def test_group_bounds(self, shots):
        t = tally_shots(np.array(shots), ANALOG2)
        assert t.m <= t.n_groups <= len(shots)
        assert t.n_shots == len(shots)


class TestEmpiricalFrequencies:
    def test_fractions(self):
        r = empirical_frequencies(tally_counts({"01": 2, "11": 1}, uniform_model(2, 0.9)))
        assert np.allclose(r, [2 / 3, 1 / 3])

    def test_single_key(self):
        assert empirical_frequencies(tally_counts({"1": 7}, uniform_model(1, 0.9))).tolist() == [1.0]

    def test_uniform(self):
        r = empirical_frequencies(tally_counts({"00": 5, "01": 5, "10": 5, "11": 5}, uniform_model(2, 0.9)))
        assert np.allclose(r, 0.25)

    @given(st.lists(st.integers(1, 10**6), min_size=1, max_size=30))
    def test_sum_is_exactly_one(self, counts):
        names = [format(k, "05b") for k in range(len(counts))]
        r = empirical_frequencies(tally_counts(dict(zip(names, counts)), uniform_model(5, 0.9)))
        assert r.sum() == pytest.approx(1.0, abs=1e-15)


class TestMerge:
    @given(st.lists(st.text("01", min_size=2, max_size=2), min_size=2, max_size=40), st.integers(1, 39))
    def test_merge_equals_whole(self, shots, cut):
        cut = min(cut, len(shots) - 1)
        model = uniform_model(2, 0.9)
        merged = merge_tallies(tally_shots(shots[:cut], model), tally_shots(shots[cut:], model), model)
        assert merged.as_dict() == tally_shots(shots, model).as_dict()


class TestThresholdTally:
    def test_binary_view_consistency(self):
        t = tally_shots(np.array([[0.5, 3.5], [3.0, 1.0], [2.5, 0.2]]), ANALOG2)
        tb = threshold_tally(t, ANALOG2)
        assert tb.as_dict() == {"01": 1, "10": 2}

    def test_binary_passthrough(self):
        model = uniform_model(1, 0.9)
        t = tally_shots(["0"], model)
        assert threshold_tally(t, model) is t


class TestShotFiles:
    def test_bits_with_counts(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text('{"bits": "01", "count": 3}\n\n{"bits": "11"}\n')
        sf = read_shots(path)
        t = tally_file(sf, uniform_model(2, 0.9))
        assert t.as_dict() == {"01": 3, "11": 1}

    def test_analog_round_trip(self, tmp_path, rng):
        q = rng.normal(size=(5, 2))
        path = tmp_path / "q.jsonl"
        write_shots(q, path)
        sf = read_shots(path)
        assert sf.mode == "analog" and np.array_equal(sf.rows, q)

    def test_binary_round_trip(self, tmp_path):
        path = tmp_path / "b.jsonl"
        write_shots(strings_to_bits(["010", "111"]), path)
        assert [json.loads(x)["bits"] for x in path.read_text().splitlines()] == ["010", "111"]

    def test_mixed_file_rejected(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text('{"bits": "0"}\n{"q": [0.1]}\n')
        with pytest.raises(ContractError):
            read_shots(path)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "x.jsonl"
        path.write_text("{not json\n")
        with pytest.raises(ContractError):
            read_shots(path)

    def test_mode_mismatch(self, tmp_path):
        path = tmp_path / "b.jsonl"
        path.write_text('{"bits": "01"}\n')
        with pytest.raises(ModeMismatchError):
            tally_file(read_shots(path), ANALOG2)


def test_bit_string_conversion():
    assert bits_to_strings(strings_to_bits(["0110", "1000"])) == ["0110", "1000"]
    with pytest.raises(ContractError):
        strings_to_bits(["012"])
