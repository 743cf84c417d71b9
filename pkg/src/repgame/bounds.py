"""Reputation bounds: payoff gap, likelihood threshold, lock times, tail fits,
the mimicry lower bound, the Stackelberg upper bound and Abelian sweeps.

Period indices are 0-based.  For a mimic path with lock time ``tau`` the
normalized lower bound is::

    L = (1 - delta) sum_{t < tau} delta^t u1_t + delta^tau * floor(m)

where ``floor(m)`` is Player 1's worst payoff against Player 2's best replies
to type ``m``'s action.  The unnormalized figure starts discounting at one,
``delta / (1 - delta) * L``.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import (FullRankRequired, HorizonTooShort, InsufficientSamples,
                     NoCommitmentTypes, NonDecayingTail, NoPositiveEpsilon,
                     ParameterOutOfRange, ReputationError, UnknownType)
from .game import NORMAL, GameSpec, StageGame, rank_monitoring, require_valid
from .response import best_response_set, mixed_stackelberg, stackelberg_floor
from .simulate import (SELF, Batch, Estimate, FixedMixed, MimicType, SimConfig,
                       default_conjecture, run_batch)

CRITERION_HIT = "CriterionHit"
BR_LOCK = "BRLock"
METHODS = (CRITERION_HIT, BR_LOCK)
MAX_CENSORED = 0.01


def payoff_gap_epsilon(game: StageGame) -> float:
    """Largest eps with eps/(1-eps) * max|u2| <= every gap |u2(a1, j) - u2(a1, k)|, j != k."""
    if game.n2 < 2:
        raise NoPositiveEpsilon("Player 2 has a single action, so there is no gap to certify")
    gaps = [np.abs(game.u2[:, j] - game.u2[:, k]).min()
            for j, k in itertools.combinations(range(game.n2), 2)]
    g = float(min(gaps))
    U = float(np.abs(game.u2).max())
    if g <= 0.0:
        raise NoPositiveEpsilon("Player 2 is indifferent between two actions at some a1")
    return g / (g + U)


def likelihood_threshold(M: int, epsilon: float) -> float:
    if M < 2:
        raise ParameterOutOfRange(f"need at least two types, got M={M}")
    if not 0.0 < epsilon < 1.0:
        raise ParameterOutOfRange(f"epsilon must lie in (0, 1), got {epsilon}")
    return (1.0 - epsilon) / epsilon * M


# -- lock times ---------------------------------------------------------------

@dataclass(frozen=True)
class TauSample:
    tau: int
    method: str
    censored: bool = False

    def __int__(self) -> int:
        return self.tau


def _check_method(method: str) -> None:
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")


def _commit_index(spec: GameSpec, m: str) -> int:
    k = spec.types.index(m)
    if k == spec.types.normal_index:
        raise UnknownType(f"{m!r} is not a commitment type")
    return k


def _lock_times(spec: GameSpec, a2: np.ndarray, m: str):
    """First period after which every action lies in BR(m); ``H`` when never."""
    br = best_response_set(spec.stage, spec.types.get(m).mixed)
    bad = ~np.isin(a2, br)
    H = a2.shape[1]
    last_bad = np.where(bad.any(axis=1), H - 1 - np.argmax(bad[:, ::-1], axis=1), -1)
    tau = last_bad + 1
    return tau, tau >= H


def _criterion_times(spec: GameSpec, info: np.ndarray, m: str, epsilon: float | None):
    """First period whose belief ratio mu(m)/mu(w) reaches f(M) for every other type w."""
    k = _commit_index(spec, m)
    if epsilon is None:
        epsilon = payoff_gap_epsilon(spec.stage)
    f = likelihood_threshold(spec.M, epsilon)
    others = np.delete(info, k, axis=2)
    hit = np.all(info[:, :, k:k + 1] >= f * others, axis=2) & (info[:, :, k] > 0)
    H = info.shape[1]
    tau = np.where(hit.any(axis=1), np.argmax(hit, axis=1), H)
    return tau, tau >= H


def tau_from_trace(trace, m: str, method: str = BR_LOCK, epsilon: float | None = None) -> TauSample:
    _check_method(method)
    _commit_index(trace.spec, m)
    if trace.horizon == 0:
        raise ValueError("empty trace")
    if method == BR_LOCK:
        tau, cens = _lock_times(trace.spec, trace.a2[None, :], m)
    else:
        tau, cens = _criterion_times(trace.spec, trace.info_beliefs()[None], m, epsilon)
    return TauSample(int(tau[0]), method, bool(cens[0]))


def tau_samples(spec: GameSpec, batch: Batch, m: str, method: str = BR_LOCK,
                epsilon: float | None = None) -> list:
    _check_method(method)
    _commit_index(spec, m)
    if method == BR_LOCK:
        tau, cens = _lock_times(spec, batch.data["a2"], m)
    else:
        tau, cens = _criterion_times(spec, batch.info_beliefs(), m, epsilon)
    return [TauSample(int(t), method, bool(c)) for t, c in zip(tau, cens)]


# -- tail fit -----------------------------------------------------------------

@dataclass(frozen=True)
class TailFit:
    R: float
    rho: float
    r_squared: float
    sample_count: int
    stderr: float = float("nan")
    survival: np.ndarray = field(default=None, repr=False)
    fit_range: tuple = (0, 0)

    @property
    def degenerate(self) -> bool:
        return self.fit_range[1] - self.fit_range[0] < 1

    def to_dict(self) -> dict:
        def clean(x):
            return None if not np.isfinite(x) else float(x)
        return {"R": clean(self.R), "rho": clean(self.rho), "r2": clean(self.r_squared),
                "stderr": clean(self.stderr), "sample_count": self.sample_count,
                "fit_range": list(self.fit_range)}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "survival"])
            for k, s in enumerate(self.survival):
                w.writerow([k, repr(float(s))])


def _as_taus(samples):
    tau = np.array([int(s) for s in samples], dtype=np.int64)
    cens = np.array([bool(getattr(s, "censored", False)) for s in samples])
    return tau, cens


def survival_curve(tau: np.ndarray) -> np.ndarray:
    """Empirical P(tau >= k) for k = 0 .. max(tau) + 1."""
    counts = np.bincount(tau, minlength=int(tau.max()) + 2 if tau.size else 1)
    return np.concatenate([[tau.size], tau.size - np.cumsum(counts)])[:-1] / max(tau.size, 1)


def _fit_log_survival(S: np.ndarray, n: int):
    ks = np.flatnonzero(S >= 5.0 / n)
    ks = ks[ks >= 1]
    if ks.size < 2:
        return None
    y = np.log(S[ks])
    # inverse of the delta-method variance (1 - S) / (n S) of log S
    w = n * S[ks] / np.maximum(1.0 - S[ks], 1.0 / n)
    slope, intercept = np.polyfit(ks, y, 1, w=np.sqrt(w))
    resid = y - (slope * ks + intercept)
    ybar = np.average(y, weights=w)
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    r2 = 1.0 - float(np.sum(w * resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2, (int(ks[0]), int(ks[-1]))


def estimate_tail(samples, min_samples: int = 100, bootstrap: int = 200,
                  seed: int = 0) -> TailFit:
    """Fit ``P(tau >= k) ~ R rho^k`` by weighted least squares on log survival.

    Censored samples count as surviving to their recorded horizon.  Points
    with survival below ``5 / n`` are dropped.  ``stderr`` is the bootstrap
    standard deviation of ``rho``.  Samples that leave fewer than two usable
    points beyond ``k = 0`` give the degenerate fit ``rho = 0``.
    """
    tau, cens = _as_taus(samples)
    n = tau.size
    if int((~cens).sum()) < min_samples:
        raise InsufficientSamples(f"need {min_samples} uncensored samples, got {int((~cens).sum())}")
    S = survival_curve(tau)
    fit = _fit_log_survival(S, n)
    if fit is None:
        R = 1.0 if S.size < 2 or S[1] == 0 else float("nan")
        return TailFit(R, 0.0, float("nan"), n, 0.0, S, (0, 0))
    slope, intercept, r2, rng_k = fit
    if slope >= 0:
        raise NonDecayingTail(f"fitted log-survival slope {slope:.4g} is not negative")
    rhos = []
    gen = np.random.default_rng(seed)
    for _ in range(bootstrap):
        boot = _fit_log_survival(survival_curve(gen.choice(tau, n)), n)
        if boot is not None:
            rhos.append(np.exp(boot[0]))
    se = float(np.std(rhos, ddof=1)) if len(rhos) > 1 else float("nan")
    return TailFit(float(np.exp(intercept)), float(np.exp(slope)), r2, n, se, S, rng_k)


# -- lower and upper bounds -----------------------------------------------------

@dataclass(frozen=True)
class LowerBound:
    type_name: str
    normalized: Estimate
    delta: float
    taus: list = field(repr=False)
    censored_rate: float = 0.0

    @property
    def L_normalized(self) -> float:
        return self.normalized.mean

    @property
    def L_unnormalized(self) -> float:
        return self.delta / (1.0 - self.delta) * self.normalized.mean

    @property
    def ci(self) -> tuple:
        return self.normalized.ci

    @property
    def ci_unnormalized(self) -> tuple:
        s = self.delta / (1.0 - self.delta)
        return (s * self.ci[0], s * self.ci[1])

    def to_dict(self) -> dict:
        return {"L_normalized": self.L_normalized, "L_unnormalized": self.L_unnormalized,
                "CI": list(self.ci), "CI_unnormalized": list(self.ci_unnormalized),
                "stderr": self.normalized.stderr, "reps": self.normalized.n,
                "censored_rate": self.censored_rate}


def mimic_batch(spec: GameSpec, m: str, conjecture=None, reps: int = 1000, seed: int = 0,
                horizon: int = 200, workers: int = 1) -> Batch:
    """Normal type copying commitment type ``m`` against Player 2's conjecture."""
    _commit_index(spec, m)
    cfg = SimConfig(seed=seed, horizon=horizon, reps=reps, p1_strategy=MimicType(m),
                    conjecture=conjecture, true_type=NORMAL)
    return run_batch(spec, cfg, workers=workers)


def lock_samples(spec: GameSpec, batch: Batch, m: str, epsilon: float | None = None) -> list:
    """BRLock times, falling back to CriterionHit where the lock is censored."""
    lock = tau_samples(spec, batch, m, BR_LOCK)
    if not any(s.censored for s in lock):
        return lock
    try:
        crit = tau_samples(spec, batch, m, CRITERION_HIT, epsilon)
    except NoPositiveEpsilon:
        return lock
    return [c if s.censored else s for s, c in zip(lock, crit)]


def lower_bound_from_batch(spec: GameSpec, batch: Batch, m: str,
                           epsilon: float | None = None) -> LowerBound:
    taus = lock_samples(spec, batch, m, epsilon)
    tau, cens = _as_taus(taus)
    rate = float(cens.mean())
    if rate > MAX_CENSORED:
        raise HorizonTooShort(f"{rate:.1%} of lock times censored at horizon {batch.horizon}")
    d = spec.delta
    floor = np.where(cens, spec.stage.u1.min(), stackelberg_floor(spec, m))
    w = d ** np.arange(batch.horizon)
    before = np.arange(batch.horizon)[None, :] < tau[:, None]
    head = (1 - d) * np.sum(batch.data["u1"] * w * before, axis=1)
    L = head + d ** tau * floor
    return LowerBound(m, Estimate.from_samples(L), d, taus, rate)


def lower_bound_L(spec: GameSpec, m: str, conjecture=None, reps: int = 1000, seed: int = 0,
                  horizon: int = 200, epsilon: float | None = None, workers: int = 1) -> LowerBound:
    """Monte Carlo mimicry lower bound for commitment type ``m``.

    Player 2 updates with ``conjecture`` (default: the stage-Nash action).
    More than 1% censored lock times raise :class:`HorizonTooShort`; the
    remaining censored paths are charged Player 1's minimum stage payoff
    after the horizon.
    """
    require_valid(spec)
    batch = mimic_batch(spec, m, conjecture, reps, seed, horizon, workers)
    return lower_bound_from_batch(spec, batch, m, epsilon)


def best_lower_bound(spec: GameSpec, conjecture=None, reps: int = 1000, seed: int = 0,
                     horizon: int = 200, epsilon: float | None = None) -> LowerBound:
    types = spec.types.commitment_types
    if not types:
        raise NoCommitmentTypes("no commitment types to mimic")
    results = [lower_bound_L(spec, c.name, conjecture, reps, seed, horizon, epsilon)
               for c in types]
    return max(results, key=lambda r: r.L_normalized)


def upper_bound(spec: GameSpec) -> float:
    return mixed_stackelberg(spec.stage).payoff


# -- Abelian sweep --------------------------------------------------------------

@dataclass(frozen=True)
class AbelianReport:
    shift: float
    discounted: dict
    liminf_avg: float
    limsup_avg: float
    inf_avg: float
    sup_avg: float
    rate_bound: float

    @property
    def finite_sandwich(self) -> bool:
        """inf_N A_N <= V(delta) <= sup_N A_N at every delta (exact for each delta)."""
        tol = 1e-12 * max(1.0, abs(self.sup_avg))
        return all(self.inf_avg - tol <= v <= self.sup_avg + tol for v in self.discounted.values())

    @property
    def limit_interval(self) -> tuple:
        """Interval certain to contain every limit point of V(delta) as delta -> 1."""
        d = max(self.discounted)
        v = self.discounted[d]
        return (v - (1 - d) * self.rate_bound, v + (1 - d) * self.rate_bound)

    @property
    def limit_chain(self) -> bool:
        """liminf average <= lim V(delta) <= limsup average, via the rate bound."""
        lo, hi = self.limit_interval
        tol = 1e-12 * max(1.0, abs(self.sup_avg))
        return lo <= self.limsup_avg + tol and self.liminf_avg - tol <= hi

    def pointwise(self) -> dict:
        """Whether each V(delta) already lies between the liminf and limsup averages."""
        return {d: self.liminf_avg - 1e-12 <= v <= self.limsup_avg + 1e-12
                for d, v in self.discounted.items()}

    def to_dict(self) -> dict:
        return {"shift": self.shift,
                "discounted": {repr(float(d)): v for d, v in self.discounted.items()},
                "liminf_avg": self.liminf_avg, "limsup_avg": self.limsup_avg,
                "inf_avg": self.inf_avg, "sup_avg": self.sup_avg,
                "rate_bound": self.rate_bound, "limit_interval": list(self.limit_interval),
                "finite_sandwich": self.finite_sandwich, "limit_chain": self.limit_chain}


def _discounted_eventually_periodic(prefix: np.ndarray, cycle: np.ndarray, d: float) -> float:
    P, C = prefix.size, cycle.size
    head = float(np.sum(d ** np.arange(P) * prefix))
    loop = float(np.sum(d ** np.arange(C) * cycle)) / (1.0 - d ** C)
    return (1.0 - d) * (head + d ** P * loop)


def abelian_sweep(stream, deltas, cycle=None, cycles_scanned: int = 64) -> AbelianReport:
    """Discounted versus average payoffs of the stream ``prefix, cycle, cycle, ...``.

    ``stream`` is the finite prefix; ``cycle`` repeats forever afterwards and
    defaults to the last element of ``stream``.  Running averages converge to
    the cycle mean, so liminf and limsup of the averages both equal it.  The
    discounted value satisfies ``|V(delta) - mean| <= (1 - delta) B`` with
    ``B`` the largest absolute partial sum of ``x_t - mean``.
    """
    prefix = np.asarray(stream, dtype=float).ravel()
    if cycle is None:
        if prefix.size == 0:
            raise ValueError("need a prefix or a cycle")
        prefix, cycle = prefix[:-1], prefix[-1:]
    cycle = np.asarray(cycle, dtype=float).ravel()
    if cycle.size == 0:
        raise ValueError("cycle must be nonempty")
    deltas = [float(d) for d in deltas]
    if not deltas or any(not 0.0 < d < 1.0 for d in deltas):
        raise ParameterOutOfRange("deltas must be a nonempty list in (0, 1)")
    low = min(prefix.min(initial=np.inf), cycle.min())
    shift = float(-low) if low < 0 else 0.0
    p, c = prefix + shift, cycle + shift
    mean = float(c.mean())
    disc = {d: _discounted_eventually_periodic(p, c, d) - shift for d in deltas}

    x = np.concatenate([p, np.tile(c, cycles_scanned)])
    partial = np.cumsum(x - mean)
    B = float(np.abs(partial[: p.size + c.size]).max(initial=0.0))
    avgs = np.cumsum(x) / np.arange(1, x.size + 1)
    return AbelianReport(shift, disc, mean - shift, mean - shift,
                         float(min(avgs.min(), mean)) - shift,
                         float(max(avgs.max(), mean)) - shift, B)


# -- mimic verification -----------------------------------------------------------

@dataclass(frozen=True)
class MimicReport:
    stackelberg_type: str
    mimic: Estimate
    candidates: dict
    horizon: int

    @property
    def violations(self) -> list:
        out = []
        for name, est in self.candidates.items():
            if self.mimic.mean < est.mean - (est.half_width + self.mimic.half_width):
                out.append(name)
        return out

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"stackelberg_type": self.stackelberg_type, "horizon": self.horizon,
                "mimic": self.mimic.to_dict(),
                "candidates": {k: v.to_dict() for k, v in self.candidates.items()},
                "passed": self.passed, "violations": self.violations}


def stackelberg_type(spec: GameSpec) -> str:
    """Commitment type with the highest payoff floor; first on ties."""
    types = spec.types.commitment_types
    if not types:
        raise NoCommitmentTypes("no commitment types to mimic")
    floors = [stackelberg_floor(spec, c.name) for c in types]
    return types[int(np.argmax(floors))].name


def default_candidates(spec: GameSpec, grid_r: int = 10, deltas=(0.5, 0.9, 0.99),
                       thresholds=(0.2, 0.4, 0.6, 0.8)) -> dict:
    """Stationary policies to test mimicry against.

    Always-play policies for each pure action, value-iteration policies on a
    coarse grid for several discount factors, and, with a single commitment
    type, reputation-threshold policies that mimic only while the commitment
    weight is at least the threshold.
    """
    from .grid import BeliefGrid
    from .solver import MarkovPolicy, value_iteration

    game = spec.stage
    out = {f"always-{lab}": FixedMixed(np.eye(game.n1)[i]) for i, lab in enumerate(game.a1_labels)}
    grid = BeliefGrid(spec.M, grid_r)
    for d in deltas:
        sol = value_iteration(spec.with_delta(d), grid, tol=1e-6)
        out[f"dp-r{grid_r}-delta{d}"] = sol.policy
    if spec.M == 2:
        m = stackelberg_type(spec)
        commit = spec.types.get(m).mixed
        nash = default_conjecture(spec).normal_action
        k = spec.types.index(m)
        for th in thresholds:
            acts = np.where((grid.points[:, k] >= th - 1e-12)[:, None], commit, nash)
            out[f"mimic-above-{th}"] = MarkovPolicy(grid, acts)
            out[f"milk-above-{th}"] = MarkovPolicy(grid, np.where(
                (grid.points[:, k] >= th - 1e-12)[:, None], nash, commit))
    return out


def verify_mimic_optimality(spec: GameSpec, conjecture=SELF, candidates=None, N: int = 5000,
                            reps: int = 20, seed: int = 0) -> MimicReport:
    """Compare N-period average payoffs of mimicking the Stackelberg type and of candidates.

    A falsification check: mimicry passes when its mean is no lower than any
    candidate's mean minus the sum of both 95% half widths.  With the default
    ``conjecture=SELF`` Player 2 knows the normal type's policy in each run.
    """
    require_valid(spec)
    if not rank_monitoring(spec)["full_rank"]:
        raise FullRankRequired("signal kernel does not identify Player 1's actions")
    m = stackelberg_type(spec)
    if candidates is None:
        candidates = default_candidates(spec)

    def average(strategy) -> Estimate:
        cfg = SimConfig(seed=seed, horizon=N, reps=reps, p1_strategy=strategy,
                        conjecture=conjecture, true_type=NORMAL, record_private=False)
        return Estimate.from_samples(run_batch(spec, cfg).average_payoff())

    mimic = average(MimicType(m))
    results = {name: average(s) for name, s in candidates.items()}
    return MimicReport(m, mimic, results, N)


# -- report -----------------------------------------------------------------------

def _error_entry(e: ReputationError) -> dict:
    return {"error": type(e).__name__, "message": str(e), "exit_code": e.exit_code}


def bounds_report(spec: GameSpec, conjecture=None, reps: int = 1000, seed: int = 0,
                  horizon: int = 200, deltas=(0.9, 0.99, 0.999)) -> tuple:
    """Bounds JSON payload plus per-type tail fits.

    Failures of individual quantities are recorded under ``errors`` and the
    remaining figures are still produced.
    """
    require_valid(spec)
    errors = {}
    report = {"delta": spec.delta, "epsilon": None, "f_M": None,
              "upper_bound": upper_bound(spec), "per_type": {}, "abelian_table": None}
    try:
        eps = payoff_gap_epsilon(spec.stage)
        report["epsilon"] = eps
        report["f_M"] = likelihood_threshold(spec.M, eps)
    except ReputationError as e:
        eps = None
        errors["epsilon"] = _error_entry(e)
    tails = {}
    best = None
    for c in spec.types.commitment_types:
        entry = {}
        batch = mimic_batch(spec, c.name, conjecture, reps, seed, horizon)
        try:
            lb = lower_bound_from_batch(spec, batch, c.name, eps)
            entry.update(lb.to_dict())
            if best is None or lb.L_normalized > best[1].L_normalized:
                best = (batch, lb)
        except ReputationError as e:
            errors[f"L[{c.name}]"] = _error_entry(e)
        try:
            fit = estimate_tail(lock_samples(spec, batch, c.name, eps))
            tails[c.name] = fit
            entry["tail"] = fit.to_dict()
        except ReputationError as e:
            entry["tail"] = None
            errors[f"tail[{c.name}]"] = _error_entry(e)
        report["per_type"][c.name] = entry
    if best is not None:
        stream = best[0].data["u1"].mean(axis=0)
        report["abelian_table"] = abelian_sweep(stream, deltas).to_dict()
        report["best_type"] = best[1].type_name
    report["errors"] = errors
    return report, tails
