import json

import numpy as np
import pytest

from gridlyap.model import (
    BUILTIN_CASES,
    GeneratorParams,
    NetworkError,
    builtin_case,
    make_network,
    parse_network,
    serialize_network,
)


def _doc(**overrides):
    doc = {
        "generators": [
            {"id": 1, "m": 1.0, "d": 1.0, "v": 1.0, "p": 0.4},
            {"id": 2, "m": 0.0, "d": 0.0, "v": 1.0, "p": 0.0},
        ],
        "infinite_bus": 2,
        "edges": [{"k": 1, "j": 2, "b": 0.8}],
    }
    doc.update(overrides)
    return doc


class TestParse:
    def test_two_bus_document(self):
        net = parse_network(json.dumps(_doc()))
        assert net.n == 1
        assert net.infinite_bus == 2
        assert net.edge_weights() == pytest.approx([0.8])
        assert net.power() == pytest.approx([0.4])

    def test_negative_susceptance_rejected(self):
        with pytest.raises(NetworkError, match="nonpositive susceptance"):
            parse_network(json.dumps(_doc(edges=[{"k": 1, "j": 2, "b": -0.5}])))

    def test_table_powers_accepted(self):
        gens = [
            {"id": i + 1, "m": 2.0, "d": 1.0, "v": 1.0, "p": p}
            for i, p in enumerate((-0.2464, 0.2086, 0.0378))
        ]
        edges = [{"k": 1, "j": 2, "b": 1.0}, {"k": 2, "j": 3, "b": 1.0}]
        net = parse_network(json.dumps({"generators": gens, "infinite_bus": None, "edges": edges}))
        assert abs(net.power().sum()) < 1e-9

    def test_imbalance_rejected(self):
        gens = [{"id": 1, "m": 1, "d": 1, "v": 1, "p": 0.1}, {"id": 2, "m": 1, "d": 1, "v": 1, "p": 0.0}]
        doc = {"generators": gens, "infinite_bus": None, "edges": [{"k": 1, "j": 2, "b": 1.0}]}
        with pytest.raises(NetworkError, match="imbalance"):
            parse_network(json.dumps(doc))

    def test_disconnected_rejected(self):
        gens = [{"id": i, "m": 1, "d": 1, "v": 1, "p": 0.0} for i in (1, 2, 3)]
        doc = {"generators": gens, "infinite_bus": None, "edges": [{"k": 1, "j": 2, "b": 1.0}]}
        with pytest.raises(NetworkError, match="disconnected"):
            parse_network(json.dumps(doc))

    @pytest.mark.parametrize("field,value", [("m", 0.0), ("d", -1.0), ("v", 0.0)])
    def test_nonpositive_parameters_rejected(self, field, value):
        doc = _doc()
        doc["generators"][0][field] = value
        with pytest.raises(NetworkError, match="nonpositive"):
            parse_network(json.dumps(doc))

    def test_schema_violations(self):
        with pytest.raises(NetworkError):
            parse_network("not json")
        with pytest.raises(NetworkError):
            parse_network(json.dumps({"generators": []}))
        doc = _doc()
        doc["generators"][0]["extra"] = 1
        with pytest.raises(NetworkError, match="exactly the keys"):
            parse_network(json.dumps(doc))

    def test_duplicate_edge_rejected(self):
        with pytest.raises(NetworkError, match="duplicate"):
            parse_network(json.dumps(_doc(edges=[{"k": 1, "j": 2, "b": 1.0}, {"k": 2, "j": 1, "b": 1.0}])))


class TestBuiltins:
    def test_two_bus(self):
        net = builtin_case("two_bus")
        assert net.n == 1 and net.n_edges == 1
        assert net.edge_weights() == pytest.approx([0.8])
        assert net.generator(1).power_p == 0.4

    def test_nine_bus(self):
        net = builtin_case("nine_bus")
        assert net.n_edges == 3
        assert dict(zip(net.edges, net.susceptance_b))[(1, 3)] == 1.0958
        assert all(g.inertia_m == 2.0 and g.damping_d == 1.0 for g in net.generators)
        assert abs(net.power().sum()) <= 1e-9

    def test_nine_bus_susceptances_match_admittance_magnitudes(self):
        net = builtin_case("nine_bus")
        table = {(1, 2): 0.138 + 0.726j, (1, 3): 0.191 + 1.079j, (2, 3): 0.199 + 1.229j}
        for edge, b in zip(net.edges, net.susceptance_b):
            assert abs(abs(table[edge]) - b) < 1e-3

    def test_tabulated_powers_balance(self):
        assert abs(-0.2464 + 0.2086 + 0.0378) < 1e-4

    def test_new_england(self):
        net = builtin_case("new_england_39")
        assert net.n == 10 and net.n_edges == 45
        assert net.infinite_bus is None
        assert abs(net.power().sum()) <= 1e-9

    def test_unknown_case(self):
        with pytest.raises(NetworkError, match="unknown case"):
            builtin_case("ieee_118")


class TestSerialize:
    @pytest.mark.parametrize("name", BUILTIN_CASES)
    def test_round_trip(self, name):
        net = builtin_case(name)
        again = parse_network(serialize_network(net))
        assert again.generators == net.generators
        assert again.edges == net.edges
        assert again.susceptance_b == net.susceptance_b
        assert again.infinite_bus == net.infinite_bus

    def test_edges_ascending(self):
        doc = json.loads(serialize_network(builtin_case("nine_bus")))
        pairs = [(e["k"], e["j"]) for e in doc["edges"]]
        assert pairs == [(1, 2), (1, 3), (2, 3)]

    def test_unordered_edge_canonicalized(self):
        gens = [GeneratorParams(1, 1, 1, 1, 0.0), GeneratorParams(2, 1, 1, 1, 0.0)]
        net = make_network(gens, [(2, 1, 1.5)])
        doc = json.loads(serialize_network(net))
        assert (doc["edges"][0]["k"], doc["edges"][0]["j"]) == (1, 2)

    def test_incidence_rows(self):
        e = builtin_case("nine_bus").incidence()
        assert np.array_equal(e, [[1, -1, 0], [1, 0, -1], [0, 1, -1]])
        assert np.array_equal(builtin_case("two_bus").incidence(), [[1.0]])
