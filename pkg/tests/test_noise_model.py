import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qmit.errors import ContractError, ModeMismatchError
from qmit.noise_model import (
    ANALOG,
    BINARY,
    MultiQubitNoiseModel,
    ResponseFunction,
    SingleQubitConfusion,
    bin_index,
    confusion_from_response,
    likelihood_entry,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
)

from conftest import confusion, identity_model


LAM = SingleQubitConfusion([[0.9, 0.2], [0.1, 0.8]])
RF = ResponseFunction([-1.0, 0.0, 1.0], [[0.8, 0.2], [0.1, 0.9]])

fidelity = st.floats(0.55, 0.999)


class TestSingleQubitConfusion:
    def test_columns_must_sum_to_one(self):
        with pytest.raises(ContractError):
            SingleQubitConfusion([[0.9, 0.2], [0.2, 0.8]])

    def test_entries_in_unit_interval(self):
        with pytest.raises(ContractError):
            SingleQubitConfusion([[1.1, 0.0], [-0.1, 1.0]])

    def test_shape(self):
        with pytest.raises(ContractError):
            SingleQubitConfusion(np.eye(3))

    def test_immutable(self):
        with pytest.raises(ValueError):
            LAM.entries[0, 0] = 0.5

    def test_emission_is_transpose(self):
        assert LAM.emission()[0, 1] == pytest.approx(0.1)
        assert LAM.emission()[1, 0] == pytest.approx(0.2)


class TestResponseFunction:
    def test_edges_ascending(self):
        with pytest.raises(ContractError):
            ResponseFunction([0.0, 0.0, 1.0], [[0.5, 0.5], [0.5, 0.5]])

    def test_rows_sum_to_one(self):
        with pytest.raises(ContractError):
            ResponseFunction([0.0, 0.5, 1.0], [[0.5, 0.6], [0.5, 0.5]])

    def test_lambda_shape_matches_bins(self):
        with pytest.raises(ContractError):
            ResponseFunction([0.0, 0.5, 1.0], [[1.0], [1.0]])

    def test_median_edge(self):
        rf = ResponseFunction(np.linspace(0, 1, 11), np.full((2, 10), 0.1))
        assert rf.median_edge_index == 5


class TestLikelihoodEntry:
    def test_two_qubit_product(self):
        model = MultiQubitNoiseModel((LAM, LAM))
        assert likelihood_entry(model, "01", "00") == pytest.approx(0.9 * 0.1, abs=1e-15)

    def test_identity(self):
        assert likelihood_entry(identity_model(3), "101", "101") == 1.0

    def test_analog_lookup(self):
        assert likelihood_entry(MultiQubitNoiseModel((RF,)), [1], "0") == 0.2

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            likelihood_entry(MultiQubitNoiseModel((LAM, LAM)), "011", "00")

    def test_bin_out_of_range(self):
        with pytest.raises(ContractError):
            likelihood_entry(MultiQubitNoiseModel((RF,)), [2], "0")

    def test_character_k_is_qubit_k(self):
        model = MultiQubitNoiseModel((confusion(0.9, 0.9), confusion(0.6, 0.6)))
        assert likelihood_entry(model, "10", "00") == pytest.approx(0.1 * 0.6)
        assert likelihood_entry(model, "01", "00") == pytest.approx(0.9 * 0.4)

    @given(st.lists(st.tuples(fidelity, fidelity), min_size=1, max_size=4), st.data())
    def test_columns_normalised(self, fids, data):
        model = MultiQubitNoiseModel(tuple(confusion(a, b) for a, b in fids))
        n = len(fids)
        true = data.draw(st.text("01", min_size=n, max_size=n))
        total = 0.0
        for key in itertools.product("01", repeat=n):
            p = likelihood_entry(model, "".join(key), true)
            assert 0.0 < p <= 1.0
            total += p
        assert total == pytest.approx(1.0, abs=1e-9)

    @given(
        st.lists(st.tuples(fidelity, fidelity), min_size=1, max_size=3),
        st.lists(st.tuples(fidelity, fidelity), min_size=1, max_size=3),
        st.data(),
    )
    def test_tensor_factorisation(self, left, right, data):
        a = MultiQubitNoiseModel(tuple(confusion(*f) for f in left))
        b = MultiQubitNoiseModel(tuple(confusion(*f) for f in right))
        ab = MultiQubitNoiseModel(a.per_qubit + b.per_qubit)
        na, nb = len(left), len(right)
        key_a, true_a = (data.draw(st.text("01", min_size=na, max_size=na)) for _ in range(2))
        key_b, true_b = (data.draw(st.text("01", min_size=nb, max_size=nb)) for _ in range(2))
        whole = likelihood_entry(ab, key_a + key_b, true_a + true_b)
        parts = likelihood_entry(a, key_a, true_a) * likelihood_entry(b, key_b, true_b)
        assert whole == pytest.approx(parts, rel=1e-12)

    @given(st.lists(st.tuples(st.floats(0.05, 0.95), st.floats(0.05, 0.95)), min_size=1, max_size=4), st.data())
    def test_two_bins_match_induced_confusion(self, masses, data):
        rfs = tuple(ResponseFunction([-1.0, 0.0, 1.0], [[a, 1 - a], [b, 1 - b]]) for a, b in masses)
        analog = MultiQubitNoiseModel(rfs)
        binary = analog.binary_view()
        n = len(masses)
        key = data.draw(st.text("01", min_size=n, max_size=n))
        true = data.draw(st.text("01", min_size=n, max_size=n))
        assert likelihood_entry(analog, [int(c) for c in key], true) == likelihood_entry(binary, key, true)

    def test_table_agrees_with_entries(self, rng):
        model = MultiQubitNoiseModel(tuple(confusion(*rng.uniform(0.7, 0.99, 2)) for _ in range(5)))
        keys = rng.integers(0, 2, size=(7, 5))
        bits = rng.integers(0, 2, size=(4, 5))
        table = model.likelihood_table(keys, bits)
        for g, k in itertools.product(range(7), range(4)):
            assert table[g, k] == likelihood_entry(model, keys[g], bits[k])


class TestMultiQubitModel:
    def test_mixed_modes_rejected(self):
        with pytest.raises(ModeMismatchError):
            MultiQubitNoiseModel((LAM, RF))

    def test_mode(self):
        assert MultiQubitNoiseModel((LAM,)).mode == BINARY
        assert MultiQubitNoiseModel((RF,)).mode == ANALOG

    def test_threshold_keys(self):
        rf = ResponseFunction([0, 1, 2, 3, 4], np.full((2, 4), 0.25))
        model = MultiQubitNoiseModel((rf, rf))
        assert model.threshold_keys(np.array([[0, 3], [1, 2], [2, 1]])).tolist() == [[0, 1], [0, 1], [1, 0]]


class TestBinIndex:
    @pytest.mark.parametrize("q, expected", [(-0.5, 0), (2.3, 1), (0.0, 1), (-7.0, 0), (1.0, 1)])
    def test_examples(self, q, expected):
        assert bin_index(RF, q) == expected

    @given(st.floats(-1e6, 1e6))
    def test_half_open_membership(self, q):
        rf = ResponseFunction(np.linspace(-2, 2, 9), np.full((2, 8), 1 / 8))
        b = bin_index(rf, q)
        edges = rf.bin_edges
        assert 0 <= b < 8
        if edges[0] <= q < edges[-1]:
            assert edges[b] <= q < edges[b + 1]


class TestConfusionFromResponse:
    def test_mass_aggregation(self):
        out = confusion_from_response(RF, 0.0)
        assert np.allclose(out.entries, [[0.8, 0.1], [0.2, 0.9]], atol=1e-15)

    def test_separated_clouds(self):
        rf = ResponseFunction([-1.0, 0.0, 1.0], [[1.0, 0.0], [0.0, 1.0]])
        assert np.array_equal(confusion_from_response(rf, 0.0).entries, np.eye(2))

    def test_uniform(self):
        rf = ResponseFunction([-1.0, 0.0, 1.0], [[0.5, 0.5], [0.5, 0.5]])
        assert np.allclose(confusion_from_response(rf, 0.0).entries, 0.5)

    def test_snaps_to_nearest_edge(self):
        rf = ResponseFunction([0.0, 1.0, 2.0, 3.0], [[0.5, 0.3, 0.2], [0.1, 0.2, 0.7]])
        assert np.allclose(confusion_from_response(rf, 1.9).entries, [[0.8, 0.3], [0.2, 0.7]])

    def test_threshold_outside_range(self):
        with pytest.raises(ContractError):
            confusion_from_response(RF, 1.5)


class TestSerialisation:
    def test_round_trip_is_bit_exact(self, tmp_path, rng):
        lam = rng.dirichlet(np.ones(7), size=2)
        model = MultiQubitNoiseModel(
            (ResponseFunction(np.sort(rng.normal(size=8)), lam),) * 2, qubit_ids=(3, 8)
        )
        path = tmp_path / "det.json"
        save_model(model, path)
        back = load_model(path)
        assert back.qubit_ids == (3, 8)
        for a, b in zip(model.per_qubit, back.per_qubit):
            assert np.array_equal(a.bin_edges, b.bin_edges)
            assert np.array_equal(a.lam, b.lam)

    def test_binary_round_trip(self):
        model = MultiQubitNoiseModel((confusion(0.1 + 0.2, 0.7),))
        back = model_from_dict(json.loads(json.dumps(model_to_dict(model))))
        assert np.array_equal(back.per_qubit[0].entries, model.per_qubit[0].entries)

    def test_unknown_schema(self):
        doc = model_to_dict(MultiQubitNoiseModel((LAM,)))
        doc["schema_version"] = 99
        with pytest.raises(ContractError):
            model_from_dict(doc)
