"""Seeded Monte Carlo play of the repeated game.

Every replication draws from its own substream, ``SeedSequence(seed,
spawn_key=(rep,))``, so an episode depends only on ``(seed, rep)`` and batches
are reproducible regardless of chunking or worker count.  Each replication
consumes one uniform for the type draw followed by a ``(horizon, 3)`` block of
uniforms for Player 1's action, the public signal and the private signal.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .beliefs import ActionRule, posterior_action_batch, update_batch
from .game import NORMAL, GameSpec, require_valid, stage_nash
from .response import indifference_gap, respond_batch

SELF = "self"
Z95 = 1.959963984540054


@dataclass(frozen=True)
class MimicType:
    """Normal type copies commitment type ``name`` forever."""

    name: str


@dataclass(frozen=True)
class FixedMixed:
    action: tuple

    def __post_init__(self):
        object.__setattr__(self, "action", tuple(float(x) for x in self.action))


def resolve_strategy(spec: GameSpec, strategy):
    """Turn a strategy description into an object with ``normal_mixed``."""
    if strategy is None:
        return ActionRule.pure(spec.stage.n1, stage_nash(spec.stage)[0])
    if isinstance(strategy, MimicType):
        return ActionRule(spec.types.get(strategy.name).mixed)
    if isinstance(strategy, FixedMixed):
        return ActionRule(np.array(strategy.action))
    if hasattr(strategy, "normal_mixed"):
        return strategy
    raise TypeError(f"unsupported strategy {strategy!r}")


def default_conjecture(spec: GameSpec) -> ActionRule:
    """Stage-game Nash action for the normal type."""
    return ActionRule.pure(spec.stage.n1, stage_nash(spec.stage)[0])


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    horizon: int = 100
    reps: int = 1
    p1_strategy: object = None
    conjecture: object = None  # None -> stage Nash, SELF -> Player 2 knows p1_strategy
    record_private: bool = True
    true_type: str | None = None  # None -> draw from mu0
    off_path: str = "hold"
    eta: float = 1e-9

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n: int

    @property
    def half_width(self) -> float:
        return Z95 * self.stderr

    @property
    def ci(self) -> tuple:
        return (self.mean - self.half_width, self.mean + self.half_width)

    @property
    def flagged(self) -> bool:
        """True when the interval is not meaningful (a single replication)."""
        return self.n < 2

    @classmethod
    def from_samples(cls, x) -> "Estimate":
        x = np.asarray(x, dtype=float)
        if x.size < 2:
            return cls(float(x.mean()), float("inf"), int(x.size))
        se = float(x.std(ddof=1) / np.sqrt(x.size))
        # constant samples up to rounding in the discount sums
        if np.ptp(x) <= 1e-12 * max(1.0, float(np.abs(x).max())):
            se = 0.0
        return cls(float(x.mean()), se, int(x.size))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "half_width": self.half_width,
                "ci": list(self.ci), "n": self.n, "flagged": self.flagged}


def _sample(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cum = np.cumsum(probs, axis=1)
    idx = (u[:, None] >= cum).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def _uniforms(seed: int, reps, horizon: int):
    u_type = np.empty(len(reps))
    U = np.empty((len(reps), horizon, 3))
    for k, rep in enumerate(reps):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(rep),)))
        u_type[k] = rng.random()
        U[k] = rng.random((horizon, 3))
    return u_type, U


def _run_block(spec: GameSpec, cfg: SimConfig, reps) -> dict:
    game, mon = spec.stage, spec.monitoring
    n, H, M = len(reps), cfg.horizon, spec.M
    normal = spec.types.normal_index
    p1 = resolve_strategy(spec, cfg.p1_strategy)
    conj = p1 if cfg.conjecture == SELF else resolve_strategy(spec, cfg.conjecture)
    commit = np.array([c.mixed for c in spec.types.commitment_types]).reshape(M - 1, game.n1)

    u_type, U = _uniforms(cfg.seed, reps, H)
    if cfg.true_type is None:
        omega = _sample(np.broadcast_to(spec.mu0, (n, M)), u_type)
    else:
        k = normal if cfg.true_type == NORMAL else spec.types.index(cfg.true_type)
        omega = np.full(n, k, dtype=np.int64)
    is_normal = omega == normal

    out = {name: np.empty((n, H), dtype=np.int16) for name in ("a1", "a2", "z1", "z2")}
    out["u1"] = np.empty((n, H))
    out["u2"] = np.empty((n, H))
    out["beliefs"] = np.empty((n, H, M))
    out["off_path"] = np.zeros((n, H), dtype=bool)
    out["indiff"] = np.zeros((n, H), dtype=bool)
    out["kappa"] = np.empty((n, H, game.n1))

    mu = np.broadcast_to(spec.mu0, (n, M)).copy()
    own = np.empty((n, game.n1))
    for t in range(H):
        P = spec.type_actions(conj.normal_mixed(mu))
        kappa = np.einsum("nm,nma->na", mu, P)
        if is_normal.any():
            own[is_normal] = p1.normal_mixed(mu[is_normal])
        if (~is_normal).any():
            own[~is_normal] = commit[omega[~is_normal]]
        a1 = _sample(own, U[:, t, 0])
        z2 = _sample(mon.rho2[a1], U[:, t, 1])
        if spec.p2_observes_current_signal:
            kz, _ = posterior_action_batch(spec, kappa, z2)
        else:
            kz = kappa
        a2 = respond_batch(game, kz)
        z1 = _sample(mon.rho1[a1 * game.n2 + a2], U[:, t, 2])
        mu, off = update_batch(spec, mu, P, z2, cfg.off_path)

        out["a1"][:, t] = a1
        out["a2"][:, t] = a2
        out["z1"][:, t] = z1 if cfg.record_private else -1
        out["z2"][:, t] = z2
        out["u1"][:, t] = game.u1[a1, a2]
        out["u2"][:, t] = game.u2[a1, a2]
        out["beliefs"][:, t] = mu
        out["off_path"][:, t] = off
        out["indiff"][:, t] = indifference_gap(game, kz) <= cfg.eta
        out["kappa"][:, t] = kz
    out["omega"] = omega
    return out


@dataclass(frozen=True)
class Trace:
    """One simulated play path; ``beliefs[t]`` is the posterior after period ``t``'s signal."""

    spec: GameSpec = field(repr=False)
    omega: str
    a1: np.ndarray
    a2: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    beliefs: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    off_path: np.ndarray
    kappa: np.ndarray

    @property
    def horizon(self) -> int:
        return self.a1.shape[0]

    @property
    def off_path_events(self) -> int:
        return int(self.off_path.sum())

    def info_beliefs(self) -> np.ndarray:
        """Belief Player 2 holds when choosing its action in each period."""
        if self.spec.p2_observes_current_signal:
            return self.beliefs
        return np.vstack([self.spec.mu0[None, :], self.beliefs[:-1]])

    def discounted(self, normalized: bool = True) -> float:
        d = self.spec.delta
        s = float(np.sum(d ** np.arange(self.horizon) * self.u1))
        return (1 - d) * s if normalized else s

    def to_csv(self, path) -> None:
        st, mon, names = self.spec.stage, self.spec.monitoring, self.spec.types.names
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "a1", "a2", "z1", "z2", *[f"mu_{n}" for n in names], "u1", "u2"])
            for t in range(self.horizon):
                z1 = mon.z1_labels[self.z1[t]] if self.z1[t] >= 0 else ""
                w.writerow([t, st.a1_labels[self.a1[t]], st.a2_labels[self.a2[t]], z1,
                            mon.z2_labels[self.z2[t]], *[repr(float(x)) for x in self.beliefs[t]],
                            repr(float(self.u1[t])), repr(float(self.u2[t]))])


@dataclass(frozen=True)
class Batch:
    spec: GameSpec = field(repr=False)
    config: SimConfig
    data: dict = field(repr=False)

    def __getattr__(self, name):
        data = object.__getattribute__(self, "data")
        if name in data:
            return data[name]
        raise AttributeError(name)

    @property
    def reps(self) -> int:
        return self.data["a1"].shape[0]

    @property
    def horizon(self) -> int:
        return self.data["a1"].shape[1]

    @cached_property
    def discount_weights(self) -> np.ndarray:
        return self.spec.delta ** np.arange(self.horizon)

    def discounted(self, normalized: bool = True) -> np.ndarray:
        s = self.data["u1"] @ self.discount_weights
        return (1 - self.spec.delta) * s if normalized else s

    def payoff_estimate(self) -> Estimate:
        return Estimate.from_samples(self.discounted())

    def average_payoff(self) -> np.ndarray:
        """Undiscounted running average over the whole horizon, per replication."""
        return self.data["u1"].mean(axis=1)

    def info_beliefs(self) -> np.ndarray:
        if self.spec.p2_observes_current_signal:
            return self.data["beliefs"]
        prior = np.broadcast_to(self.spec.mu0, (self.reps, 1, self.spec.M))
        return np.concatenate([prior, self.data["beliefs"][:, :-1]], axis=1)

    def trace(self, i: int) -> Trace:
        d = self.data
        return Trace(self.spec, self.spec.types.names[d["omega"][i]], d["a1"][i], d["a2"][i],
                     d["z1"][i], d["z2"][i], d["beliefs"][i], d["u1"][i], d["u2"][i],
                     d["off_path"][i], d["kappa"][i])

    def belief_increments(self) -> np.ndarray:
        prior = np.broadcast_to(self.spec.mu0, (self.reps, 1, self.spec.M))
        path = np.concatenate([prior, self.data["beliefs"]], axis=1)
        return np.diff(path, axis=1)

    def summary(self) -> dict:
        from .bounds import tau_samples

        inc = self.belief_increments().reshape(-1, self.spec.M)
        est = self.payoff_estimate()
        taus = {}
        for c in self.spec.types.commitment_types:
            s = tau_samples(self.spec, self, c.name, "BRLock")
            taus[c.name] = [None if x.censored else x.tau for x in s]
        return {
            "payoff": est.to_dict(),
            "tau_samples": taus,
            "off_path_rate": float(self.data["off_path"].mean()),
            "indifference_visit_rate": float(self.data["indiff"].mean()),
            "eta": self.config.eta,
            "beliefs": {
                "mean_final": self.data["beliefs"][:, -1].mean(axis=0).tolist(),
                "mean_increment": inc.mean(axis=0).tolist(),
                "increment_stderr": (inc.std(axis=0, ddof=1) / np.sqrt(inc.shape[0])).tolist()
                if inc.shape[0] > 1 else [float("inf")] * self.spec.M,
            },
            "reps": self.reps,
            "horizon": self.horizon,
        }

    def write_summary(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2) + "\n", encoding="utf-8")


def run_batch(spec: GameSpec, config: SimConfig, workers: int = 1, chunk: int = 2048) -> Batch:
    require_valid(spec)
    blocks = [range(s, min(s + chunk, config.reps)) for s in range(0, config.reps, chunk)]
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda b: _run_block(spec, config, b), blocks))
    else:
        parts = [_run_block(spec, config, b) for b in blocks]
    data = {k: np.concatenate([p[k] for p in parts], axis=0) for k in parts[0]}
    return Batch(spec, config, data)


def run_episode(spec: GameSpec, config: SimConfig, rep_index: int = 0) -> Trace:
    require_valid(spec)
    part = _run_block(spec, config, [rep_index])
    return Batch(spec, config, part).trace(0)
