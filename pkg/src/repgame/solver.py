"""Belief-state dynamic programming for the normal type of Player 1.

Player 2s are Bayesian and myopic.  They interpret signals through a fixed
*conjecture* about the normal type's play (their equilibrium model), and the
solver computes the normal type's best reply against that behaviour.  For a
grid belief ``mu`` and a candidate action ``alpha`` of the normal type the
backup is::

    Q(mu, alpha) = sum_a1 alpha(a1) sum_z rho2(z|a1) [u1(a1, a2(mu, z)) + delta V(mu'(mu, z))]

where ``a2`` is Player 2's tie-broken best reply to its action forecast (post
signal when the signal is observed before Player 2 moves) and ``mu'`` is the
Bayes posterior under the conjecture, evaluated off-grid by barycentric
interpolation.  Values are unnormalized discounted sums.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .beliefs import posterior_action_batch, update_batch
from .errors import IterationLimitExceeded
from .game import GameSpec, require_valid
from .grid import BeliefGrid
from .response import indifference_gap, respond_batch
from .simulate import SimConfig, default_conjecture, resolve_strategy, run_batch

DEFAULT_MAX_ITER = 100_000


@dataclass(frozen=True)
class MarkovPolicy:
    """Stationary action rule of the normal type, indexed by grid point.

    Off-grid beliefs use the action of the cell vertex with the largest
    barycentric weight.
    """

    grid: BeliefGrid = field(repr=False)
    actions: np.ndarray

    def normal_mixed(self, beliefs) -> np.ndarray:
        beliefs = np.asarray(beliefs, dtype=float)
        flat = beliefs.reshape(-1, self.grid.M)
        out = self.actions[self.grid.nearest(flat)]
        return out.reshape(beliefs.shape[:-1] + (self.actions.shape[1],))

    @classmethod
    def constant(cls, grid: BeliefGrid, action) -> "MarkovPolicy":
        action = np.asarray(action, dtype=float)
        return cls(grid, np.tile(action, (len(grid), 1)))

    def to_csv(self, path, spec: GameSpec) -> None:
        names, labels = spec.types.names, spec.stage.a1_labels
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([*[f"mu_{n}" for n in names], *[f"p_{a}" for a in labels]])
            for pt, act in zip(self.grid.points, self.actions):
                w.writerow([*map(repr, map(float, pt)), *map(repr, map(float, act))])


@dataclass(frozen=True)
class ValueFunction:
    grid: BeliefGrid = field(repr=False)
    values: np.ndarray = field(repr=False)
    delta: float
    iterations: int = 0
    residual: float = float("nan")

    @property
    def normalized(self) -> np.ndarray:
        return (1.0 - self.delta) * self.values

    def at(self, beliefs, normalized: bool = True) -> np.ndarray:
        v = self.grid.interpolate(self.values, beliefs)
        return (1.0 - self.delta) * v if normalized else v

    def to_csv(self, path, spec: GameSpec) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([*[f"mu_{n}" for n in spec.types.names], "value", "value_normalized"])
            for pt, v in zip(self.grid.points, self.values):
                w.writerow([*map(repr, map(float, pt)), repr(float(v)),
                            repr(float((1 - self.delta) * v))])


def action_menu(n1: int, mixture_step: int | None = None) -> np.ndarray:
    """Candidate normal-type actions: pure actions, or all mixtures on a 1/k lattice."""
    if not mixture_step:
        return np.eye(n1)
    return BeliefGrid(n1, mixture_step).points.copy()


class Backup:
    """Precomputed one-step structure of the Bellman operator on a grid."""

    def __init__(self, spec: GameSpec, grid: BeliefGrid, conjecture=None,
                 off_path: str = "normal", eta: float = 1e-9):
        self.spec, self.grid = spec, grid
        conj = default_conjecture(spec) if conjecture is None else resolve_strategy(spec, conjecture)
        game, rho2 = spec.stage, spec.monitoring.rho2
        pts = grid.points
        n, nz = len(grid), rho2.shape[1]
        P = spec.type_actions(conj.normal_mixed(pts))
        kappa = np.einsum("nm,nma->na", pts, P)

        self.a2 = np.empty((n, nz), dtype=np.int64)
        self.indiff = np.zeros((n, nz), dtype=bool)
        self.off_path = np.zeros((n, nz), dtype=bool)
        self.idx = np.empty((n, nz, spec.M), dtype=np.int64)
        self.w = np.empty((n, nz, spec.M))
        for z in range(nz):
            zz = np.full(n, z)
            if spec.p2_observes_current_signal:
                kz, _ = posterior_action_batch(spec, kappa, zz)
            else:
                kz = kappa
            self.a2[:, z] = respond_batch(game, kz)
            self.indiff[:, z] = indifference_gap(game, kz) <= eta
            post, off = update_batch(spec, pts, P, zz, off_path)
            self.off_path[:, z] = off
            self.idx[:, z], self.w[:, z] = grid.locate(post)
        # R[i, a1] = sum_z rho2(z|a1) u1(a1, a2[i, z])
        u_taken = game.u1[np.arange(game.n1)[None, :, None], self.a2[:, None, :]]  # (n, n1, nz)
        self.reward = np.einsum("az,naz->na", rho2, u_taken)
        self.rho2 = rho2

    def q_values(self, V: np.ndarray) -> np.ndarray:
        """Action values for each pure action, shape (n, |A1|)."""
        W = (V[self.idx] * self.w).sum(axis=2)
        return self.reward + self.spec.delta * W @ self.rho2.T

    @property
    def indifference_visits(self) -> int:
        return int(self.indiff.sum())


def _greedy(Q: np.ndarray, menu: np.ndarray):
    Qm = Q @ menu.T
    best = Qm.max(axis=1)
    scale = max(1.0, float(np.abs(best).max()))
    choice = np.argmax(Qm >= best[:, None] - 1e-10 * scale, axis=1)
    return best, menu[choice]


def bellman_operator(V, spec: GameSpec, grid: BeliefGrid, conjecture=None, menu=None,
                     off_path: str = "normal") -> ValueFunction:
    """Apply one Bellman backup to ``V`` (a :class:`ValueFunction` or an array)."""
    values = V.values if isinstance(V, ValueFunction) else np.asarray(V, dtype=float)
    backup = Backup(spec, grid, conjecture, off_path)
    menu = action_menu(spec.stage.n1) if menu is None else np.asarray(menu, dtype=float)
    new, _ = _greedy(backup.q_values(values), menu)
    return ValueFunction(grid, new, spec.delta, 1, float(np.abs(new - values).max()))


@dataclass(frozen=True)
class Solution:
    value: ValueFunction
    policy: MarkovPolicy
    iterations: int
    residuals: np.ndarray = field(repr=False)
    indifference_visits: int = 0

    def contraction_violations(self, slack: float = 1e-12) -> int:
        r = self.residuals
        return int(np.sum(r[1:] > self.value.delta * r[:-1] + slack))


def value_iteration(spec: GameSpec, grid: BeliefGrid, tol: float = 1e-6, conjecture=None,
                    menu=None, off_path: str = "normal", max_iter: int = DEFAULT_MAX_ITER,
                    eta: float = 1e-9) -> Solution:
    """Iterate the Bellman operator from zero until within ``tol`` of the fixed point.

    Stops once successive iterates differ by at most ``tol (1 - delta) / (2 delta)``
    in sup norm, which bounds the distance to the fixed point by ``tol / 2``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    require_valid(spec)
    delta = spec.delta
    backup = Backup(spec, grid, conjecture, off_path, eta)
    menu = action_menu(spec.stage.n1) if menu is None else np.asarray(menu, dtype=float)
    stop = tol * (1.0 - delta) / (2.0 * delta)
    V = np.zeros(len(grid))
    residuals = []
    for k in range(1, max_iter + 1):
        new, _ = _greedy(backup.q_values(V), menu)
        res = float(np.abs(new - V).max())
        residuals.append(res)
        V = new
        if res <= stop:
            break
    else:
        raise IterationLimitExceeded(f"no convergence within {max_iter} iterations")
    _, actions = _greedy(backup.q_values(V), menu)
    vf = ValueFunction(grid, V, delta, k, residuals[-1])
    return Solution(vf, MarkovPolicy(grid, actions), k, np.array(residuals),
                    backup.indifference_visits)


@dataclass(frozen=True)
class FiniteHorizonSolution:
    """``values[t]`` is the value with ``T - t`` periods remaining."""

    values: list
    policies: list
    grid: BeliefGrid = field(repr=False)


def backward_induction(spec: GameSpec, grid: BeliefGrid, T: int, conjecture=None,
                       menu=None, off_path: str = "normal") -> FiniteHorizonSolution:
    if T < 1:
        raise ValueError("T must be >= 1")
    require_valid(spec)
    backup = Backup(spec, grid, conjecture, off_path)
    menu = action_menu(spec.stage.n1) if menu is None else np.asarray(menu, dtype=float)
    V = np.zeros(len(grid))
    values, policies = [], []
    for _ in range(T):
        V, act = _greedy(backup.q_values(V), menu)
        values.append(V)
        policies.append(MarkovPolicy(grid, act))
    return FiniteHorizonSolution(values[::-1], policies[::-1], grid)


def truncation_horizon(delta: float, bound: float, tol: float = 1e-12) -> int:
    """Smallest horizon whose discarded tail ``delta**H * bound`` is below ``tol``."""
    if bound <= 0:
        return 1
    return max(1, int(np.ceil(np.log(tol / bound) / np.log(delta))))


def evaluate_policy(spec: GameSpec, policy, mu0=None, reps: int = 100, seed: int = 0,
                    conjecture=None, horizon: int | None = None, off_path: str = "hold"):
    """Monte Carlo normalized discounted value of the normal type playing ``policy``.

    The horizon defaults to the truncation point where the neglected tail is
    below 1e-12 of the largest stage payoff.
    """
    if mu0 is not None:
        spec = spec.with_prior(mu0)
    if horizon is None:
        horizon = truncation_horizon(spec.delta, float(np.abs(spec.stage.u1).max()))
    cfg = SimConfig(seed=seed, horizon=horizon, reps=reps, p1_strategy=policy,
                    conjecture=conjecture, true_type="normal", off_path=off_path)
    return run_batch(spec, cfg).payoff_estimate()


def perturbation_modulus(value: ValueFunction, probe_pairs) -> float:
    """Largest |V(mu) - V(mu')| / ||mu - mu'||_1 over the probe pairs (normalized V)."""
    worst = 0.0
    for a, b in probe_pairs:
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        d = float(np.abs(a - b).sum())
        if d == 0.0:
            continue
        va, vb = value.at(np.vstack([a, b]))
        worst = max(worst, abs(va - vb) / d)
    return worst


def reachable_gap(spec: GameSpec, belief, conjecture=None, depth: int = 30,
                  max_frontier: int = 4096) -> float:
    """Smallest distance to Player 2's indifference set along every signal path.

    Explores all public-signal paths of length ``depth`` from ``belief`` under
    the conjecture (merging numerically equal beliefs) and returns the minimum
    indifference gap of the action forecasts Player 2 acts on.
    """
    conj = default_conjecture(spec) if conjecture is None else resolve_strategy(spec, conjecture)
    game, nz = spec.stage, spec.monitoring.rho2.shape[1]
    frontier = np.atleast_2d(np.asarray(belief, dtype=float))
    gap = np.inf
    for _ in range(depth):
        P = spec.type_actions(conj.normal_mixed(frontier))
        kappa = np.einsum("nm,nma->na", frontier, P)
        nxt = []
        for z in range(nz):
            zz = np.full(frontier.shape[0], z)
            if spec.p2_observes_current_signal:
                kz, off = posterior_action_batch(spec, kappa, zz)
                if (~off).any():
                    gap = min(gap, float(indifference_gap(game, kz[~off]).min()))
            else:
                off = np.zeros(frontier.shape[0], dtype=bool)
            post, off_u = update_batch(spec, frontier, P, zz, "hold")
            nxt.append(post[~off_u])
        if not spec.p2_observes_current_signal:
            gap = min(gap, float(indifference_gap(game, kappa).min()))
        frontier = np.unique(np.round(np.vstack(nxt), 12), axis=0)
        if frontier.shape[0] > max_frontier:
            frontier = frontier[:max_frontier]
    return gap


def safe_probe_pairs(spec: GameSpec, distance: float = 0.01, n: int = 50, margin: float = 0.05,
                     conjecture=None, depth: int = 30, lo: float = 0.05, hi: float = 0.95) -> list:
    """Probe pairs on the two-type simplex away from Player 2's indifference set.

    A pair ``(mu, mu')`` with commitment weights ``x`` and ``x + distance/2``
    (L1 distance ``distance``) is kept only if every point on a five-point
    sweep of the segment keeps Player 2's forecasts at least ``margin`` away
    from indifference along all signal paths of length ``depth``.
    """
    if spec.M != 2:
        raise ValueError("safe_probe_pairs handles two-type games")
    step = distance / 2.0
    pairs = []
    for x in np.linspace(lo, hi - step, n):
        sweep = np.linspace(x, x + step, 5)
        if all(reachable_gap(spec, [s, 1 - s], conjecture, depth) > margin for s in sweep):
            pairs.append((np.array([x, 1 - x]), np.array([x + step, 1 - x - step])))
    return pairs
