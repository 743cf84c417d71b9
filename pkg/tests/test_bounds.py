import csv
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import geometric_discount

from repgame.bounds import (BR_LOCK, CRITERION_HIT, TauSample, abelian_sweep, best_lower_bound,
                            bounds_report, estimate_tail, likelihood_threshold, lower_bound_L,
                            mimic_batch, payoff_gap_epsilon, tau_from_trace, tau_samples,
                            upper_bound, verify_mimic_optimality)
from repgame.errors import (FullRankRequired, HorizonTooShort, InsufficientSamples,
                            NoCommitmentTypes, NonDecayingTail, NoPositiveEpsilon,
                            ParameterOutOfRange, UnknownType)
from repgame.game import (CommitmentType, GameSpec, StageGame, TypeSpace, builtin_consultant,
                          builtin_product_choice)
from repgame.simulate import FixedMixed, MimicType, SimConfig, run_episode
from repgame.solver import evaluate_policy

ALWAYS_L = FixedMixed((0.0, 1.0))


def constant_game(spec, c):
    st_ = spec.stage
    return GameSpec(StageGame(st_.a1_labels, st_.a2_labels, np.full((2, 2), c), st_.u2),
                    spec.types, spec.monitoring, spec.mu0, spec.delta,
                    spec.p2_observes_current_signal)


def two_type_pc(delta=0.9):
    pc = builtin_product_choice(0.2, delta)
    types = TypeSpace((CommitmentType("always-H", [1.0, 0.0]), CommitmentType("always-L", [0.0, 1.0])))
    return GameSpec(pc.stage, types, pc.monitoring, [0.2, 0.2, 0.6], delta,
                    pc.p2_observes_current_signal)


# -- epsilon and threshold ------------------------------------------------------

def test_epsilon_and_threshold(pc, cons):
    assert payoff_gap_epsilon(pc.stage) == pytest.approx(0.25)
    assert likelihood_threshold(2, 0.25) == pytest.approx(6.0)
    assert payoff_gap_epsilon(cons.stage) == pytest.approx(0.5)
    assert likelihood_threshold(2, 0.5) == pytest.approx(2.0)


def test_epsilon_errors(pc):
    flat = StageGame(("H", "L"), ("h", "l"), pc.stage.u1, np.zeros((2, 2)))
    with pytest.raises(NoPositiveEpsilon):
        payoff_gap_epsilon(flat)
    one = StageGame(("H", "L"), ("h",), [[1.0], [2.0]], [[1.0], [0.0]])
    with pytest.raises(NoPositiveEpsilon):
        payoff_gap_epsilon(one)
    with pytest.raises(ParameterOutOfRange):
        likelihood_threshold(1, 0.3)
    with pytest.raises(ParameterOutOfRange):
        likelihood_threshold(2, 1.0)


@given(M=st.integers(2, 20), a=st.floats(1e-3, 0.999), b=st.floats(1e-3, 0.999))
def test_threshold_decreasing_in_epsilon_and_linear_in_M(M, a, b):
    if a < b:
        assert likelihood_threshold(M, a) > likelihood_threshold(M, b)
    assert likelihood_threshold(M, a) == pytest.approx(M * likelihood_threshold(1 + 1, a) / 2)


# -- lock times -------------------------------------------------------------------

def mimic_trace(spec, rep=0, horizon=20):
    cfg = SimConfig(seed=0, horizon=horizon, reps=1, p1_strategy=MimicType("always-H"),
                    conjecture=ALWAYS_L, true_type="normal")
    return run_episode(spec, cfg, rep)


def test_lock_after_first_signal(pc):
    tr = mimic_trace(pc)
    assert tau_from_trace(tr, "always-H", BR_LOCK) == TauSample(1, BR_LOCK, False)
    assert tau_from_trace(tr, "always-H", CRITERION_HIT).tau == 1


def test_immediate_hit():
    tr = mimic_trace(builtin_product_choice(0.9, 0.9))
    assert int(tau_from_trace(tr, "always-H", CRITERION_HIT)) == 0
    assert int(tau_from_trace(tr, "always-H", BR_LOCK)) == 0


def test_tau_errors(pc):
    tr = mimic_trace(pc)
    with pytest.raises(UnknownType):
        tau_from_trace(tr, "nobody")
    with pytest.raises(UnknownType):
        tau_from_trace(tr, "normal")
    with pytest.raises(ValueError):
        tau_from_trace(tr, "always-H", "sometime")


@pytest.mark.parametrize("mu", [0.05, 0.2, 0.5])
def test_criterion_never_precedes_lock(mu):
    spec = builtin_product_choice(mu, 0.9)
    # a conjectured normal type that sometimes plays H keeps beliefs off the vertex
    b = mimic_batch(spec, "always-H", FixedMixed((0.4, 0.6)), reps=300, seed=1, horizon=60)
    lock = tau_samples(spec, b, "always-H", BR_LOCK)
    crit = tau_samples(spec, b, "always-H", CRITERION_HIT)
    assert all(c.tau >= s.tau for s, c in zip(lock, crit))


def test_consultant_lock_regression(cons):
    b = mimic_batch(cons, "always-H", ALWAYS_L, reps=10000, seed=0, horizon=200)
    taus = tau_samples(cons, b, "always-H", BR_LOCK)
    assert not any(t.censored for t in taus)
    assert np.median([t.tau for t in taus]) == 3


# -- tail fit ---------------------------------------------------------------------

def test_geometric_recovery():
    x = np.random.default_rng(0).geometric(0.5, size=10000)
    fit = estimate_tail(list(x))
    assert abs(fit.rho - 0.5) <= min(0.03, 3 * fit.stderr)
    assert fit.r_squared >= 0.99


@given(q=st.sampled_from([0.3, 0.5, 0.7]), seed=st.integers(0, 2**31))
def test_geometric_recovery_property(q, seed):
    x = np.random.default_rng(seed).geometric(q, size=10000)
    fit = estimate_tail(list(x), bootstrap=60)
    assert abs(fit.rho - (1 - q)) <= 3.5 * fit.stderr + 1e-3


def test_degenerate_and_error_tails(tmp_path):
    fit = estimate_tail([0] * 200)
    assert fit.rho == 0.0 and fit.R == 1.0 and fit.degenerate
    assert json.loads(json.dumps(fit.to_dict()))["rho"] == 0.0
    with pytest.raises(InsufficientSamples):
        estimate_tail([1] * 99)
    with pytest.raises(InsufficientSamples):
        estimate_tail([TauSample(5, BR_LOCK, True)] * 500)
    with pytest.raises(NonDecayingTail):
        estimate_tail([0] * 100 + [50] * 100)
    fit = estimate_tail(list(np.random.default_rng(1).geometric(0.5, 500)))
    fit.to_csv(tmp_path / "tail.csv")
    rows = list(csv.reader(open(tmp_path / "tail.csv")))
    assert rows[0] == ["k", "survival"] and float(rows[1][1]) == 1.0


def test_consultant_tail(cons):
    b = mimic_batch(cons, "always-H", ALWAYS_L, reps=10000, seed=0, horizon=200)
    fit = estimate_tail(tau_samples(cons, b, "always-H"))
    assert 0 < fit.rho < 1 and fit.r_squared >= 0.9


# -- lower and upper bounds --------------------------------------------------------

@pytest.mark.parametrize("delta", [0.9, 0.99, 0.999])
def test_lower_bound_closed_form(delta):
    spec = builtin_product_choice(0.2, delta)
    lb = lower_bound_L(spec, "always-H", ALWAYS_L, reps=50, seed=0, horizon=20)
    assert lb.L_normalized == pytest.approx(2 * delta, abs=1e-9)
    assert lb.ci[1] - lb.ci[0] == 0.0
    assert lb.L_unnormalized == pytest.approx(delta / (1 - delta) * 2 * delta)


def test_lower_bound_constant_payoff(pc):
    lb = lower_bound_L(constant_game(pc, 1.3), "always-H", reps=30, seed=0, horizon=40)
    assert lb.L_normalized == pytest.approx(1.3, abs=1e-12)


def test_best_lower_bound():
    spec = two_type_pc()
    best = best_lower_bound(spec, ALWAYS_L, reps=30, horizon=30)
    assert best.type_name == "always-H" and best.L_normalized == pytest.approx(1.8)
    single = builtin_product_choice(0.2, 0.9)
    a = best_lower_bound(single, ALWAYS_L, reps=30, horizon=30)
    b = lower_bound_L(single, "always-H", ALWAYS_L, reps=30, horizon=30)
    assert a.L_normalized == b.L_normalized
    pc = builtin_product_choice(0.2, 0.9)
    empty = GameSpec(pc.stage, TypeSpace(()), pc.monitoring, [1.0], 0.9)
    with pytest.raises(NoCommitmentTypes):
        best_lower_bound(empty)


def test_horizon_too_short(cons):
    with pytest.raises(HorizonTooShort):
        lower_bound_L(cons, "always-H", ALWAYS_L, reps=200, horizon=2)


def test_lower_bound_below_mimic_value(cons):
    lb = lower_bound_L(cons, "always-H", ALWAYS_L, reps=3000, seed=4, horizon=200)
    mimic = evaluate_policy(cons, MimicType("always-H"), reps=3000, seed=5, conjecture=ALWAYS_L)
    assert lb.L_normalized <= mimic.mean + mimic.half_width + lb.normalized.half_width


def test_upper_bound(pc, cons):
    assert upper_bound(pc) == pytest.approx(2.5)
    assert upper_bound(cons) == pytest.approx(1.5)
    assert upper_bound(constant_game(pc, -0.7)) == pytest.approx(-0.7)


# -- Abelian sweep ------------------------------------------------------------------

DELTAS = [0.9, 0.99, 0.999]


def test_constant_stream():
    rep = abelian_sweep([4.0], DELTAS)
    assert all(v == pytest.approx(4.0) for v in rep.discounted.values())
    assert rep.liminf_avg == rep.limsup_avg == 4.0 and rep.rate_bound == 0.0


def test_alternating_stream():
    rep = abelian_sweep([], DELTAS, cycle=[0.0, 2.0])
    for d, v in rep.discounted.items():
        assert v == pytest.approx(2 * d / (1 + d), abs=1e-12)
    assert rep.liminf_avg == rep.limsup_avg == 1.0
    assert rep.finite_sandwich and rep.limit_chain


def test_mimic_stream():
    rep = abelian_sweep([0.0, 2.0], DELTAS)
    for d, v in rep.discounted.items():
        assert v == pytest.approx(2 * d, abs=1e-12)
    assert rep.liminf_avg == 2.0 and rep.limit_chain and rep.finite_sandwich
    # at finite delta the discounted value sits strictly below the long-run average
    assert not any(rep.pointwise().values())


def test_negative_stream_is_shifted():
    rep = abelian_sweep([-3.0, 1.0], [0.5])
    assert rep.shift == 3.0
    assert rep.discounted[0.5] == pytest.approx(0.5 * -3 + 0.5 * 1)


@given(prefix=st.lists(st.floats(-5, 5), max_size=6),
       cycle=st.lists(st.floats(-5, 5), min_size=1, max_size=4),
       d=st.floats(0.05, 0.95))
def test_discounted_value_matches_brute_force(prefix, cycle, d):
    rep = abelian_sweep(prefix, [d], cycle=cycle)
    assert rep.discounted[d] == pytest.approx(geometric_discount(prefix, cycle, d), abs=1e-9)
    assert rep.finite_sandwich
    lo, hi = rep.limit_interval
    mean = float(np.mean(cycle))
    assert lo - 1e-9 <= rep.discounted[d] <= hi + 1e-9
    assert abs(rep.discounted[d] - mean) <= (1 - d) * rep.rate_bound + 1e-9


def test_abelian_errors():
    with pytest.raises(ParameterOutOfRange):
        abelian_sweep([1.0], [])
    with pytest.raises(ParameterOutOfRange):
        abelian_sweep([1.0], [1.0])
    with pytest.raises(ValueError):
        abelian_sweep([], [0.9])


# -- mimic verification ---------------------------------------------------------------

def test_verify_needs_full_rank():
    spec = builtin_consultant(p=0.5, allow_uninformative=True)
    with pytest.raises(FullRankRequired):
        verify_mimic_optimality(spec, N=10, reps=2)


def test_verify_single_candidate(pc):
    rep = verify_mimic_optimality(pc, candidates={"mimic": MimicType("always-H")}, N=200, reps=4)
    assert rep.passed and rep.stackelberg_type == "always-H"


def test_verify_flags_a_better_candidate(pc):
    # a policy that earns more than mimicry must be reported
    rich = constant_game(pc, 0.0)
    st_ = pc.stage
    u1 = np.array([[0.0, 0.0], [5.0, 5.0]])
    spec = GameSpec(StageGame(st_.a1_labels, st_.a2_labels, u1, st_.u2), rich.types,
                    rich.monitoring, rich.mu0, rich.delta, rich.p2_observes_current_signal)
    rep = verify_mimic_optimality(spec, candidates={"always-L": ALWAYS_L}, N=100, reps=4)
    assert rep.violations == ["always-L"] and not rep.passed


# -- report -------------------------------------------------------------------------

def test_bounds_report(pc):
    report, tails = bounds_report(pc, ALWAYS_L, reps=200, horizon=30)
    assert report["epsilon"] == pytest.approx(0.25) and report["f_M"] == pytest.approx(6.0)
    entry = report["per_type"]["always-H"]
    assert entry["L_normalized"] == pytest.approx(1.8)
    assert entry["tail"]["rho"] == 0.0
    assert report["abelian_table"]["limit_chain"]
    assert report["errors"] == {} and report["best_type"] == "always-H"
