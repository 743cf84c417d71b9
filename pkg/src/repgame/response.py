"""Myopic best responses of Player 2 and Stackelberg payoffs of Player 1."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .game import GameSpec, StageGame

BR_TOL = 1e-9


@dataclass(frozen=True)
class IndifferenceSet:
    k: int
    m: int
    coef: np.ndarray  # u2(., k) - u2(., m)


def indifference_sets(game: StageGame) -> list:
    return [
        IndifferenceSet(k, m, game.u2[:, k] - game.u2[:, m])
        for k, m in itertools.combinations(range(game.n2), 2)
    ]


def best_response_set(game: StageGame, kappa, tol: float = BR_TOL) -> list:
    vals = np.asarray(kappa, dtype=float) @ game.u2
    return [int(j) for j in np.flatnonzero(vals >= vals.max() - tol)]


def tie_break(game: StageGame, kappa, candidates) -> int:
    """Pick the candidate that is best for Player 1 under ``kappa``; lowest index on ties."""
    candidates = sorted(candidates)
    p1 = np.asarray(kappa, dtype=float) @ game.u1[:, candidates]
    return candidates[int(np.flatnonzero(p1 >= p1.max() - BR_TOL)[0])]


def respond(game: StageGame, kappa) -> int:
    return tie_break(game, kappa, best_response_set(game, kappa))


def respond_batch(game: StageGame, kappa: np.ndarray) -> np.ndarray:
    """Vectorized ``respond`` over rows of ``kappa`` (shape (n, |A1|))."""
    v2 = kappa @ game.u2
    in_br = v2 >= v2.max(axis=1, keepdims=True) - BR_TOL
    v1 = np.where(in_br, kappa @ game.u1, -np.inf)
    best = v1 >= v1.max(axis=1, keepdims=True) - BR_TOL
    return np.argmax(best & in_br, axis=1)


def indifference_gap(game: StageGame, kappa: np.ndarray) -> np.ndarray:
    """Smallest |kappa . (u2(., k) - u2(., m))| over action pairs, per row."""
    kappa = np.atleast_2d(kappa)
    if game.n2 < 2:
        return np.full(kappa.shape[0], np.inf)
    coefs = np.stack([s.coef for s in indifference_sets(game)], axis=1)
    return np.abs(kappa @ coefs).min(axis=1)


def in_indifference_region(game: StageGame, kappa, eta: float) -> bool:
    return bool(indifference_gap(game, np.asarray(kappa, dtype=float))[0] <= eta)


@dataclass(frozen=True)
class StackelbergResult:
    alpha1: np.ndarray
    a2: int
    payoff: float

    @property
    def a1(self) -> int:
        return int(np.argmax(self.alpha1))


def pure_stackelberg(game: StageGame) -> StackelbergResult:
    best = None
    for i in range(game.n1):
        kappa = np.eye(game.n1)[i]
        j = respond(game, kappa)
        if best is None or game.u1[i, j] > best.payoff:
            best = StackelbergResult(kappa, j, float(game.u1[i, j]))
    return best


def _column_lp(game: StageGame, j: int):
    """Maximize alpha . u1[:, j] over the polytope where j is a best response."""
    n1 = game.n1
    others = [k for k in range(game.n2) if k != j]
    if n1 == 2:
        # alpha = (x, 1 - x); constraints c*x + d >= 0
        lo, hi = 0.0, 1.0
        for k in others:
            g = game.u2[:, j] - game.u2[:, k]
            c, d = g[0] - g[1], g[1]
            if abs(c) < 1e-15:
                if d < -BR_TOL:
                    return None
                continue
            root = -d / c
            if c > 0:
                lo = max(lo, root)
            else:
                hi = min(hi, root)
        if lo > hi + 1e-15:
            return None
        obj = game.u1[0, j] - game.u1[1, j]
        x = hi if obj >= 0 else lo
        x = min(max(x, 0.0), 1.0)
        return np.array([x, 1.0 - x])
    A_ub = np.array([game.u2[:, k] - game.u2[:, j] for k in others]).reshape(len(others), n1)
    res = linprog(-game.u1[:, j], A_ub=A_ub if len(others) else None,
                  b_ub=np.zeros(len(others)) if len(others) else None,
                  A_eq=np.ones((1, n1)), b_eq=[1.0], bounds=[(0, None)] * n1, method="highs")
    if res.status != 0:
        return None
    alpha = np.clip(res.x, 0.0, None)
    return alpha / alpha.sum()


def mixed_stackelberg(game: StageGame) -> StackelbergResult:
    """Best commitment to a mixed action, with Player 2 ties resolved for Player 1."""
    best = None
    for j in range(game.n2):
        alpha = _column_lp(game, j)
        if alpha is None:
            continue
        payoff = float(alpha @ game.u1[:, j])
        if best is None or payoff > best.payoff + 1e-12:
            best = StackelbergResult(alpha, j, payoff)
    return best


def stackelberg_floor(spec: GameSpec, m: str) -> float:
    """Worst Player 1 payoff over Player 2's best responses to type ``m``'s action."""
    alpha = spec.types.get(m).mixed
    br = best_response_set(spec.stage, alpha)
    return float(min(alpha @ spec.stage.u1[:, j] for j in br))


def best_reply_to_type(spec: GameSpec, m: str) -> list:
    return best_response_set(spec.stage, spec.types.get(m).mixed)
