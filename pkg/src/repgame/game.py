"""Game specification: stage game, type space, monitoring, prior and discount.

Matrices are stored with rows indexed by Player 1 actions and columns by
Player 2 actions.  The private kernel ``rho1`` has one row per action pair,
ordered ``a1 * |A2| + a2``.  Beliefs list the commitment types first, in
declaration order, followed by the normal type.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterOutOfRange, QROrderViolated, UnknownType

PROB_TOL = 1e-12
RANK_RTOL = 1e-10
NORMAL = "normal"


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class StageGame:
    a1_labels: tuple
    a2_labels: tuple
    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a1_labels", tuple(self.a1_labels))
        object.__setattr__(self, "a2_labels", tuple(self.a2_labels))
        object.__setattr__(self, "u1", _frozen(self.u1))
        object.__setattr__(self, "u2", _frozen(self.u2))

    @property
    def n1(self) -> int:
        return len(self.a1_labels)

    @property
    def n2(self) -> int:
        return len(self.a2_labels)


@dataclass(frozen=True)
class CommitmentType:
    name: str
    mixed: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mixed", _frozen(self.mixed))


@dataclass(frozen=True)
class TypeSpace:
    commitment_types: tuple = ()

    def __post_init__(self):
        cts = tuple(
            c if isinstance(c, CommitmentType) else CommitmentType(*c)
            for c in self.commitment_types
        )
        object.__setattr__(self, "commitment_types", cts)

    has_normal = True

    @property
    def M(self) -> int:
        return len(self.commitment_types) + 1

    @property
    def names(self) -> tuple:
        return tuple(c.name for c in self.commitment_types) + (NORMAL,)

    @property
    def normal_index(self) -> int:
        return len(self.commitment_types)

    def index(self, name: str) -> int:
        """Position of ``name`` in a belief vector; the normal type is last."""
        for i, c in enumerate(self.commitment_types):
            if c.name == name:
                return i
        if name == NORMAL:
            return self.normal_index
        raise UnknownType(f"no type named {name!r}")

    def get(self, name: str) -> CommitmentType:
        i = self.index(name)
        if i == self.normal_index:
            raise UnknownType("the normal type has no fixed action")
        return self.commitment_types[i]


@dataclass(frozen=True)
class Monitoring:
    rho2: np.ndarray
    rho1: np.ndarray
    z1_labels: tuple
    z2_labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "rho2", _frozen(self.rho2))
        object.__setattr__(self, "rho1", _frozen(self.rho1))
        object.__setattr__(self, "z1_labels", tuple(self.z1_labels))
        object.__setattr__(self, "z2_labels", tuple(self.z2_labels))


@dataclass(frozen=True)
class GameSpec:
    """Complete description of the repeated reputation game.

    ``p2_observes_current_signal`` selects the timing of the public signal.
    When true (the general sequential-move model) the period-``t`` Player 2
    sees ``z2_t`` before acting.  When false, ``z2_t`` becomes public only
    after Player 2 of period ``t`` has moved, so each Player 2 responds to
    the one-step forecast of Player 1's action.
    """

    stage: StageGame
    types: TypeSpace
    monitoring: Monitoring
    mu0: np.ndarray
    delta: float
    p2_observes_current_signal: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mu0", _frozen(self.mu0))
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(
            self, "p2_observes_current_signal", bool(self.p2_observes_current_signal)
        )

    @property
    def M(self) -> int:
        return self.types.M

    def type_actions(self, normal_mixed) -> np.ndarray:
        """Stack commitment mixtures with ``normal_mixed`` into an (..., M, |A1|) array."""
        normal_mixed = np.asarray(normal_mixed, dtype=float)
        lead = normal_mixed.shape[:-1]
        rows = [np.broadcast_to(c.mixed, lead + c.mixed.shape) for c in self.types.commitment_types]
        rows.append(normal_mixed)
        return np.stack(rows, axis=-2)

    def with_prior(self, mu0) -> "GameSpec":
        return GameSpec(self.stage, self.types, self.monitoring, mu0, self.delta,
                        self.p2_observes_current_signal)

    def with_delta(self, delta: float) -> "GameSpec":
        return GameSpec(self.stage, self.types, self.monitoring, self.mu0, delta,
                        self.p2_observes_current_signal)

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "a1": list(self.stage.a1_labels),
            "a2": list(self.stage.a2_labels),
            "z1": list(self.monitoring.z1_labels),
            "z2": list(self.monitoring.z2_labels),
            "u1": self.stage.u1.tolist(),
            "u2": self.stage.u2.tolist(),
            "commitment_types": [
                {"name": c.name, "mixed": c.mixed.tolist()} for c in self.types.commitment_types
            ],
            "rho1": self.monitoring.rho1.tolist(),
            "rho2": self.monitoring.rho2.tolist(),
            "mu0": self.mu0.tolist(),
            "delta": self.delta,
            "p2_observes_current_signal": self.p2_observes_current_signal,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n", encoding="utf-8")
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "GameSpec":
        stage = StageGame(d["a1"], d["a2"], d["u1"], d["u2"])
        types = TypeSpace(tuple((c["name"], c["mixed"]) for c in d.get("commitment_types", [])))
        mon = Monitoring(d["rho2"], d["rho1"], d["z1"], d["z2"])
        return cls(stage, types, mon, d["mu0"], d["delta"],
                   d.get("p2_observes_current_signal", True))

    @classmethod
    def from_json(cls, text: str) -> "GameSpec":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "GameSpec":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class Violation:
    code: str
    message: str = field(default="", compare=False)


def _is_prob_vector(v: np.ndarray) -> bool:
    return v.ndim == 1 and v.size > 0 and bool(np.all(v >= 0)) and abs(v.sum() - 1.0) <= PROB_TOL


def _check_kernel(name, mat, n_rows, n_cols, out):
    if mat.ndim != 2 or mat.shape != (n_rows, n_cols):
        out.append(Violation("KernelShapeMismatch", f"{name} has shape {mat.shape}, expected {(n_rows, n_cols)}"))
        return
    if not np.all(np.isfinite(mat)):
        out.append(Violation("NonFiniteEntry", f"{name} has non-finite entries"))
        return
    if np.any(mat < 0) or np.any(mat > 1):
        out.append(Violation("KernelEntryOutOfRange", f"{name} has entries outside [0, 1]"))
    bad = np.flatnonzero(np.abs(mat.sum(axis=1) - 1.0) > PROB_TOL)
    if bad.size:
        out.append(Violation("KernelRowNotStochastic", f"{name} rows {bad.tolist()} do not sum to 1"))


def validate(spec: GameSpec) -> list:
    """Return every invariant violation of ``spec`` (an empty list means valid)."""
    out = []
    st, ty, mon = spec.stage, spec.types, spec.monitoring
    n1, n2 = st.n1, st.n2

    for name, mat in (("u1", st.u1), ("u2", st.u2)):
        if mat.shape != (n1, n2):
            out.append(Violation("PayoffShapeMismatch", f"{name} has shape {mat.shape}, expected {(n1, n2)}"))
        elif not np.all(np.isfinite(mat)):
            out.append(Violation("NonFiniteEntry", f"{name} has non-finite entries"))
    if n1 == 0 or n2 == 0:
        out.append(Violation("EmptyActionSet", "both players need at least one action"))

    names = [c.name for c in ty.commitment_types]
    if len(set(names)) != len(names) or NORMAL in names:
        out.append(Violation("DuplicateTypeName", f"type names must be unique and not {NORMAL!r}"))
    for c in ty.commitment_types:
        if c.mixed.shape != (n1,) or not np.all(np.isfinite(c.mixed)) or not _is_prob_vector(c.mixed):
            out.append(Violation("MixedActionInvalid", f"type {c.name!r} does not play a mixed action over A1"))

    _check_kernel("rho2", mon.rho2, n1, len(mon.z2_labels), out)
    _check_kernel("rho1", mon.rho1, n1 * n2, len(mon.z1_labels), out)

    mu0 = spec.mu0
    if mu0.shape != (ty.M,):
        out.append(Violation("PriorShapeMismatch", f"mu0 has shape {mu0.shape}, expected ({ty.M},)"))
    elif not np.all(np.isfinite(mu0)):
        out.append(Violation("NonFiniteEntry", "mu0 has non-finite entries"))
    else:
        if np.any(mu0 <= 0):
            out.append(Violation("PriorNotFullSupport", "every type needs positive prior mass"))
        if abs(mu0.sum() - 1.0) > PROB_TOL:
            out.append(Violation("PriorNotNormalized", f"mu0 sums to {mu0.sum()!r}"))

    if not (np.isfinite(spec.delta) and 0.0 < spec.delta < 1.0):
        out.append(Violation("DiscountOutOfRange", f"delta={spec.delta!r} must lie in (0, 1)"))
    return out


def require_valid(spec: GameSpec) -> GameSpec:
    from .errors import InvalidSpec

    violations = validate(spec)
    if violations:
        raise InvalidSpec(violations)
    return spec


def _check_open_unit(name, x):
    if not (0.0 < x < 1.0):
        raise ParameterOutOfRange(f"{name}={x!r} must lie in (0, 1)")


def builtin_product_choice(mu_commit: float = 0.2, delta: float = 0.9) -> GameSpec:
    """Firm/consumer product-choice game with an always-H commitment type.

    Consumers see the outcomes of earlier periods only, so the public kernel
    is the identity on {H, L} and the signal is revealed after Player 2 acts.
    """
    _check_open_unit("mu_commit", mu_commit)
    _check_open_unit("delta", delta)
    stage = StageGame(("H", "L"), ("h", "l"), [[2, 0], [3, 1]], [[3, 2], [0, 1]])
    types = TypeSpace((("always-H", [1.0, 0.0]),))
    pairs = [a + b for a in stage.a1_labels for b in stage.a2_labels]
    mon = Monitoring(np.eye(2), np.eye(4), pairs, ("H", "L"))
    return GameSpec(stage, types, mon, [mu_commit, 1.0 - mu_commit], delta,
                    p2_observes_current_signal=False)


def builtin_consultant(p: float = 0.8, q: float = 0.9, r: float = 0.6,
                       mu_commit: float = 0.1, delta: float = 0.9,
                       allow_uninformative: bool = False) -> GameSpec:
    """Consultant/supervisor game with noisy public effort signal.

    ``allow_uninformative`` admits ``p = 1/2`` (a public signal independent of
    effort) for monitoring diagnostics.
    """
    lo_ok = p >= 0.5 if allow_uninformative else p > 0.5
    if not (lo_ok and p < 1.0):
        raise ParameterOutOfRange(f"p={p!r} must lie in (1/2, 1)")
    if not (0.5 < r < q < 1.0):
        raise QROrderViolated(f"need 1/2 < r < q < 1, got q={q!r}, r={r!r}")
    _check_open_unit("mu_commit", mu_commit)
    _check_open_unit("delta", delta)
    stage = StageGame(("H", "L"), ("B", "N"), [[1, -1], [2, 0]], [[1, -1], [-2, 0]])
    types = TypeSpace((("always-H", [1.0, 0.0]),))
    rho2 = [[p, 1 - p], [1 - p, p]]
    # rows (H,B), (H,N), (L,B), (L,N); columns (b, n)
    rho1 = [[q, 1 - q], [r, 1 - r], [1 - r, r], [1 - q, q]]
    mon = Monitoring(rho2, rho1, ("b", "n"), ("h", "l"))
    return GameSpec(stage, types, mon, [mu_commit, 1.0 - mu_commit], delta,
                    p2_observes_current_signal=True)


BUILTINS = {
    "product-choice": builtin_product_choice,
    "consultant": builtin_consultant,
}


def rank_monitoring(spec: GameSpec) -> dict:
    """Rank of the signal-by-action matrix with entries rho2(z | a1)."""
    A = np.asarray(spec.monitoring.rho2, dtype=float).T
    s = np.linalg.svd(A, compute_uv=False)
    rank = int(np.sum(s > RANK_RTOL * s.max())) if s.size and s.max() > 0 else 0
    return {"rank": rank, "full_rank": rank == spec.stage.n1}


def stage_nash(game: StageGame) -> tuple:
    """First pure Nash equilibrium of the simultaneous-move stage game.

    Falls back to Player 1's maximin action against Player 2's best reply when
    no pure equilibrium exists.
    """
    u1, u2 = game.u1, game.u2
    for i in range(game.n1):
        for j in range(game.n2):
            if u1[i, j] >= u1[:, j].max() - 1e-12 and u2[i, j] >= u2[i, :].max() - 1e-12:
                return i, j
    replies = u2.argmax(axis=1)
    i = int(np.argmax(u1[np.arange(game.n1), replies]))
    return i, int(replies[i])


def point_mass(n: int, i: int) -> np.ndarray:
    v = np.zeros(n)
    v[i] = 1.0
    return v


def mixed_from_labels(game: StageGame, probs: dict) -> np.ndarray:
    """Build a mixed action from ``{label: prob}``."""
    v = np.zeros(game.n1)
    for label, p in probs.items():
        v[game.a1_labels.index(label)] = p
    return v


def load_spec(source: str | None = None, builtin: str | None = None, **overrides) -> GameSpec:
    """Resolve a spec from a JSON path or a builtin name with keyword overrides."""
    if source is not None:
        return GameSpec.load(source)
    if builtin not in BUILTINS:
        raise UnknownType(f"unknown builtin game {builtin!r}; choose from {sorted(BUILTINS)}")
    kwargs = {k: v for k, v in overrides.items() if v is not None}
    return BUILTINS[builtin](**kwargs)


__all__ = [
    "StageGame", "CommitmentType", "TypeSpace", "Monitoring", "GameSpec", "Violation",
    "validate", "require_valid", "builtin_product_choice", "builtin_consultant",
    "rank_monitoring", "stage_nash", "point_mass", "load_spec", "BUILTINS", "NORMAL",
]
