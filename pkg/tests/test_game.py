import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from repgame.errors import InvalidSpec, ParameterOutOfRange, QROrderViolated, UnknownType
from repgame.game import (GameSpec, Monitoring, StageGame, TypeSpace, builtin_consultant,
                          builtin_product_choice, load_spec, rank_monitoring, require_valid,
                          stage_nash, validate)


def codes(spec):
    return [v.code for v in validate(spec)]


def test_product_choice_payoffs(pc):
    st_ = pc.stage
    assert st_.u1[0, 0] == 2 and st_.u1[1, 0] == 3 and st_.u2[0, 0] == 3
    assert st_.u1.tolist() == [[2, 0], [3, 1]]
    assert st_.u2.tolist() == [[3, 2], [0, 1]]
    assert pc.types.names == ("always-H", "normal")
    assert np.array_equal(pc.monitoring.rho2, np.eye(2))
    assert np.array_equal(pc.monitoring.rho1, np.eye(4))


@pytest.mark.parametrize("mu, d", [(0.2, 0.9), (0.5, 0.5), (0.01, 0.999)])
def test_product_choice_valid_and_stage_nash(mu, d):
    spec = builtin_product_choice(mu, d)
    assert validate(spec) == []
    i, j = stage_nash(spec.stage)
    assert (spec.stage.a1_labels[i], spec.stage.a2_labels[j]) == ("L", "l")
    assert (spec.stage.u1[i, j], spec.stage.u2[i, j]) == (1, 1)


def test_consultant_fixture(cons):
    assert np.allclose(cons.monitoring.rho2, [[0.8, 0.2], [0.2, 0.8]])
    assert cons.stage.u1[1, 0] == 2 and cons.stage.u2[1, 0] == -2
    assert validate(cons) == []


def test_consultant_order_errors():
    with pytest.raises(QROrderViolated):
        builtin_consultant(0.8, 0.6, 0.9)
    with pytest.raises(ParameterOutOfRange):
        builtin_consultant(p=0.5)
    with pytest.raises(ParameterOutOfRange):
        builtin_product_choice(mu_commit=0.0)


def test_uninformative_consultant_is_rank_deficient():
    spec = builtin_consultant(p=0.5, allow_uninformative=True)
    assert rank_monitoring(spec) == {"rank": 1, "full_rank": False}


def test_rank_examples(pc, cons):
    assert rank_monitoring(pc) == {"rank": 2, "full_rank": True}
    assert rank_monitoring(cons) == {"rank": 2, "full_rank": True}


@given(st.floats(0.51, 0.99))
def test_rank_invariant_under_signal_relabeling(p):
    spec = builtin_consultant(p=p)
    mon = spec.monitoring
    flipped = Monitoring(mon.rho2[:, ::-1], mon.rho1, mon.z1_labels, mon.z2_labels[::-1])
    other = GameSpec(spec.stage, spec.types, flipped, spec.mu0, spec.delta)
    assert rank_monitoring(other) == rank_monitoring(spec)


def test_prior_without_full_support(pc):
    assert codes(pc.with_prior([0.0, 1.0])) == ["PriorNotFullSupport"]


def test_kernel_row_not_stochastic(pc):
    mon = pc.monitoring
    rho2 = np.array([[0.9, 0.0], [0.0, 1.0]])
    bad = GameSpec(pc.stage, pc.types, Monitoring(rho2, mon.rho1, mon.z1_labels, mon.z2_labels),
                   pc.mu0, pc.delta)
    assert codes(bad) == ["KernelRowNotStochastic"]


def test_many_violations_reported_together(pc):
    stage = StageGame(("H", "L"), ("h", "l"), [[1, np.nan], [0, 0]], [[0, 0, 0], [0, 0, 0]])
    types = TypeSpace((("x", [0.7, 0.7]), ("x", [1.0, 0.0])))
    bad = GameSpec(stage, types, pc.monitoring, [0.5, 0.5], 1.0)
    found = set(codes(bad))
    assert {"NonFiniteEntry", "PayoffShapeMismatch", "DuplicateTypeName", "MixedActionInvalid",
            "PriorShapeMismatch", "DiscountOutOfRange"} <= found
    with pytest.raises(InvalidSpec) as info:
        require_valid(bad)
    assert {v.code for v in info.value.violations} == found


finite = st.one_of(st.floats(-1e6, 1e6), st.sampled_from([np.nan, np.inf, -np.inf]))


@given(u=st.lists(finite, min_size=4, max_size=4), rho=st.lists(finite, min_size=4, max_size=4),
       mu=st.lists(finite, min_size=2, max_size=2), delta=finite)
def test_validate_is_total_and_idempotent(u, rho, mu, delta):
    stage = StageGame(("a", "b"), ("c", "d"), np.reshape(u, (2, 2)), np.reshape(u, (2, 2)))
    mon = Monitoring(np.reshape(rho, (2, 2)), np.eye(4), ("w", "x", "y", "z"), ("p", "q"))
    spec = GameSpec(stage, TypeSpace((("t", [1.0, 0.0]),)), mon, mu, delta)
    first = codes(spec)
    assert codes(spec) == first


def test_json_roundtrip(tmp_path, cons):
    path = tmp_path / "c.json"
    cons.to_json(path)
    back = load_spec(str(path))
    assert back.to_dict() == cons.to_dict()
    d = json.loads(path.read_text())
    assert set(d) >= {"a1", "a2", "z1", "z2", "u1", "u2", "commitment_types", "rho1", "rho2",
                      "mu0", "delta"}


def test_json_without_timing_field_defaults_to_observed_signal(pc):
    d = pc.to_dict()
    del d["p2_observes_current_signal"]
    assert GameSpec.from_dict(d).p2_observes_current_signal is True


def test_type_lookup(pc):
    assert pc.types.index("normal") == pc.types.normal_index == 1
    with pytest.raises(UnknownType):
        pc.types.get("normal")
    with pytest.raises(UnknownType):
        pc.types.index("always-L")


def test_arrays_are_read_only(pc):
    with pytest.raises(ValueError):
        pc.stage.u1[0, 0] = 5
