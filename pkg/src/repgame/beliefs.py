"""Bayesian dynamics of Player 2's belief over Player 1's type.

A belief is a plain probability vector over the type space (commitment types
first, normal type last).  Player 2's model of the normal type is any object
exposing ``normal_mixed(beliefs) -> (n, |A1|)``; :class:`ActionRule` is the
belief-independent case and :class:`repgame.solver.MarkovPolicy` the
belief-dependent one.

The batched helpers operate on arrays with a leading replication axis and are
what the solver and simulator use in their inner loops.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ZeroProbabilitySignal
from .game import PROB_TOL, GameSpec

OFF_PATH_POLICIES = ("hold", "normal", "raise")


@dataclass(frozen=True)
class ActionRule:
    """Belief-independent mixed action of the normal type."""

    normal_action: np.ndarray

    def __post_init__(self):
        a = np.array(self.normal_action, dtype=float)
        a.setflags(write=False)
        object.__setattr__(self, "normal_action", a)

    def normal_mixed(self, beliefs) -> np.ndarray:
        beliefs = np.asarray(beliefs)
        return np.broadcast_to(self.normal_action, beliefs.shape[:-1] + self.normal_action.shape)

    @classmethod
    def pure(cls, n1: int, i: int) -> "ActionRule":
        a = np.zeros(n1)
        a[i] = 1.0
        return cls(a)


def check_belief(belief) -> np.ndarray:
    b = np.asarray(belief, dtype=float)
    if b.ndim != 1 or np.any(b < -PROB_TOL) or abs(b.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"not a probability vector: {b!r}")
    return b


def _rule_matrix(spec: GameSpec, belief: np.ndarray, rule) -> np.ndarray:
    return spec.type_actions(rule.normal_mixed(belief[None, :])[0])


# -- batched kernels ----------------------------------------------------------

def forecast_batch(beliefs: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Pre-signal action forecast ``sum_w mu(w) P(a|w)`` for each row."""
    return np.einsum("nm,nma->na", beliefs, P)


def signal_likelihoods(spec: GameSpec, P: np.ndarray, z) -> np.ndarray:
    """Per-type likelihood of public signal ``z`` (shape (n, M))."""
    cols = spec.monitoring.rho2[:, z].T  # (n, |A1|)
    return np.einsum("nma,na->nm", P, cols)


def update_batch(spec: GameSpec, beliefs: np.ndarray, P: np.ndarray, z,
                 off_path: str = "hold"):
    """Bayes step for every row; returns ``(posteriors, off_path_mask)``.

    Rows whose signal has zero marginal are handled by ``off_path``:
    ``"hold"`` keeps the belief, ``"normal"`` moves it to the normal-type
    vertex, ``"raise"`` raises :class:`ZeroProbabilitySignal`.
    """
    joint = beliefs * signal_likelihoods(spec, P, z)
    norm = joint.sum(axis=1)
    off = norm <= PROB_TOL
    if off.any() and off_path == "raise":
        raise ZeroProbabilitySignal("signal has zero probability under the belief")
    post = np.empty_like(joint)
    on = ~off
    post[on] = joint[on] / norm[on, None]
    if off.any():
        if off_path == "normal":
            post[off] = 0.0
            post[off, spec.types.normal_index] = 1.0
        else:
            post[off] = beliefs[off]
    return post, off


def posterior_action_batch(spec: GameSpec, kappa: np.ndarray, z):
    """Post-signal action posterior; falls back to ``kappa`` on off-path signals."""
    cols = spec.monitoring.rho2[:, z].T
    joint = kappa * cols
    norm = joint.sum(axis=1)
    off = norm <= PROB_TOL
    out = np.where(off[:, None], kappa, joint / np.where(off, 1.0, norm)[:, None])
    return out, off


# -- single-belief API ------------------------------------------------------

def predicted_action_dist(spec: GameSpec, belief, rule) -> np.ndarray:
    b = check_belief(belief)
    return b @ _rule_matrix(spec, b, rule)


def signal_marginal(spec: GameSpec, belief, rule) -> np.ndarray:
    return predicted_action_dist(spec, belief, rule) @ spec.monitoring.rho2


def belief_update(spec: GameSpec, belief, rule, z2: int) -> np.ndarray:
    """Exact posterior over types after public signal ``z2``.

    Raises :class:`ZeroProbabilitySignal` if ``z2`` has zero marginal.
    """
    b = check_belief(belief)
    P = _rule_matrix(spec, b, rule)
    post, _ = update_batch(spec, b[None, :], P[None], np.array([z2]), off_path="raise")
    return post[0]


def martingale_residual(spec: GameSpec, belief, rule) -> float:
    """Sup-norm gap between ``E[mu' | mu]`` and ``mu`` under Player 2's own forecast."""
    b = check_belief(belief)
    marg = signal_marginal(spec, b, rule)
    expected = np.zeros_like(b)
    for z, pz in enumerate(marg):
        if pz > PROB_TOL:
            expected += pz * belief_update(spec, b, rule, z)
    return float(np.max(np.abs(expected - b)))


def divergence_diagnostics(p, q) -> dict:
    """KL divergence (nats), total variation, and the Pinsker check."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DimensionMismatch(f"shapes differ: {p.shape} vs {q.shape}")
    support = p > 0
    if np.any(q[support] <= 0):
        kl = float("inf")
    else:
        kl = float(np.sum(p[support] * np.log(p[support] / q[support])))
        kl = max(kl, 0.0)
    tv = 0.5 * float(np.abs(p - q).sum())
    return {"kl": kl, "tv": tv, "pinsker_ok": bool(tv <= np.sqrt(kl / 2.0) + 1e-12)}
