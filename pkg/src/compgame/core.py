"""Participants, profiles, evaluation functions and the game container.

Profiles are handled internally as flat float vectors: participant ``i``
occupies ``game.slices[i]``. :class:`StrategyProfile` and :class:`TangentVector`
are the validated per-participant views used at API boundaries.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, EvaluationError, GameError, ShapeError
from .simplex import EPS_SIMPLEX, as_simplex_point, tangent_basis

FD_STEP = 1e-6


class Category(str, Enum):
    POPULATION = "population"
    ATOMIC_SPLITTABLE = "splittable"
    ATOMIC_NONSPLITTABLE = "non-splittable"


@dataclass(frozen=True)
class Participant:
    id: str
    category: Category
    choices: tuple[str, ...]
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "category", Category(self.category))
        object.__setattr__(self, "choices", tuple(str(c) for c in self.choices))
        if not self.choices:
            raise GameError(f"participant {self.id!r}: choice set is empty")
        if len(set(self.choices)) != len(self.choices):
            raise GameError(f"participant {self.id!r}: choice labels are not unique")
        w = float(self.weight)
        if not np.isfinite(w) or w <= 0.0:
            raise GameError(f"participant {self.id!r}: weight must be positive, got {self.weight!r}")
        object.__setattr__(self, "weight", w)


@dataclass(frozen=True)
class StrategyProfile:
    """One simplex point per participant, keyed by participant id."""

    ids: tuple[str, ...]
    blocks: tuple[np.ndarray, ...]

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate(self.blocks)

    def __getitem__(self, pid: str) -> np.ndarray:
        return self.blocks[self.ids.index(pid)]

    def __array__(self, dtype=None, copy=None):
        return self.flat if dtype is None else self.flat.astype(dtype)


@dataclass(frozen=True)
class TangentVector:
    """Per-participant velocity; each block sums to zero."""

    ids: tuple[str, ...]
    blocks: tuple[np.ndarray, ...]

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate(self.blocks)

    def __array__(self, dtype=None, copy=None):
        return self.flat if dtype is None else self.flat.astype(dtype)


@dataclass(frozen=True)
class Potential:
    """Potential block: ``W(x)`` and the positive scalings ``mu^i(x)``.

    ``gradient`` is an optional analytic gradient of W used by the optimizer;
    verification always differentiates W numerically.
    """

    W: Callable[[np.ndarray], float]
    mu: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    description: str = ""


class Evaluation:
    """Base class for evaluation functions Phi.

    Subclasses implement ``__call__(game, x)`` returning the flat vector Phi(x).
    ``jacobian`` may return an analytic Jacobian; ``None`` means use finite
    differences. ``splittable_concave`` records whether every splittable
    participant's payoff is known to be concave in its own strategy.
    """

    splittable_concave: bool | None = None

    def __call__(self, game: "GameSpec", x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, game: "GameSpec", x: np.ndarray) -> np.ndarray | None:
        return None


class PopulationPayoffs(Evaluation):
    """Phi = F for populations: ``F(x)`` returns the flat payoff vector."""

    def __init__(self, F, jacobian=None):
        self.F = F
        self._jacobian = jacobian

    def __call__(self, game, x):
        return np.asarray(self.F(x), dtype=float)

    def jacobian(self, game, x):
        return None if self._jacobian is None else np.asarray(self._jacobian(x), dtype=float)


class SplittableGradient(Evaluation):
    """Phi^i = grad_i H^i with H^i(x) = <x^i, F^i(x)>.

    ``gradient(x)`` may supply the stacked own-gradients analytically;
    otherwise they are obtained by central differences of each H^i.
    """

    def __init__(self, F, gradient=None, concave: bool | None = None):
        self.F = F
        self.gradient = gradient
        self.splittable_concave = concave

    def payoff(self, game, x, i):
        sl = game.slices[i]
        return float(x[sl] @ np.asarray(self.F(x), dtype=float)[sl])

    def __call__(self, game, x):
        if self.gradient is not None:
            return np.asarray(self.gradient(x), dtype=float)
        return self.numerical_gradient(game, x)

    def numerical_gradient(self, game, x, h=FD_STEP):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for sl in game.slices:
            for k in range(sl.start, sl.stop):
                xp = x.copy()
                xm = x.copy()
                xp[k] += h
                xm[k] -= h
                fp = np.asarray(self.F(xp), dtype=float)[sl]
                fm = np.asarray(self.F(xm), dtype=float)[sl]
                out[k] = (xp[sl] @ fp - xm[sl] @ fm) / (2 * h)
        return out


class PayoffTable(Evaluation):
    """Non-splittable players: dense payoff tables G^i over pure profiles.

    ``tables[i]`` has shape ``game.sizes``; VG^i(x^{-i}) is the multilinear
    extension obtained by summing the table against every opponent's mixed
    strategy.
    """

    def __init__(self, tables: Sequence[np.ndarray]):
        self.tables = [np.asarray(t, dtype=float) for t in tables]

    def vector_payoff(self, game, x, i):
        blocks = game.split(x)
        operands = [self.tables[i], list(range(game.n))]
        for j, xj in enumerate(blocks):
            if j != i:
                operands += [xj, [j]]
        return np.einsum(*operands, [i])

    def __call__(self, game, x):
        return np.concatenate([self.vector_payoff(game, x, i) for i in range(game.n)])


class Composite(Evaluation):
    """Per-participant mixture: participant ``i`` reads its block from ``parts[i]``."""

    def __init__(self, parts: Sequence[Evaluation]):
        self.parts = list(parts)
        flags = [p.splittable_concave for p in self.parts if isinstance(p, SplittableGradient)]
        if not flags:
            self.splittable_concave = True
        elif all(f is True for f in flags):
            self.splittable_concave = True

    def __call__(self, game, x):
        cache = {}
        out = np.empty(game.dim)
        for i, part in enumerate(self.parts):
            key = id(part)
            if key not in cache:
                cache[key] = np.asarray(part(game, x), dtype=float)
            out[game.slices[i]] = cache[key][game.slices[i]]
        return out


def linear_composite(participants: Sequence[Participant], matrix, offset) -> Composite:
    """Composite evaluation built from affine payoffs F(x) = A x + b.

    Populations read F^i; splittable players read the analytic own-gradient
    F^i_p + sum_q x^i_q A[q, p]; non-splittable players read F^i, which is
    the multilinear extension of a polymatrix game and so requires a zero
    diagonal block.
    """
    A = np.asarray(matrix, dtype=float)
    b = np.asarray(offset, dtype=float)
    sizes = [len(p.choices) for p in participants]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    n = offsets[-1]
    if A.shape != (n, n) or b.shape != (n,):
        raise ShapeError(f"linear payoffs need a {n}x{n} matrix and length-{n} offset")
    slices = [slice(offsets[i], offsets[i + 1]) for i in range(len(sizes))]

    def F(x):
        return A @ x + b

    def grad(x):
        g = A @ x + b
        for p, sl in zip(participants, slices):
            if p.category is Category.ATOMIC_SPLITTABLE:
                g[sl] += A[sl, sl].T @ x[sl]
        return g

    concave = True
    for p, sl in zip(participants, slices):
        block = A[sl, sl]
        if p.category is Category.ATOMIC_NONSPLITTABLE and np.any(block != 0.0):
            raise GameError(f"participant {p.id!r}: non-splittable payoffs must not depend on own strategy")
        if p.category is Category.ATOMIC_SPLITTABLE:
            # H^i is concave in x^i iff A_ii + A_ii^T is NSD on the tangent space
            Q = tangent_basis(block.shape[0])
            if Q.shape[1] and np.linalg.eigvalsh(Q.T @ (block + block.T) @ Q).max() > 1e-12:
                concave = False
    population = PopulationPayoffs(F, jacobian=lambda x: A)
    splittable = SplittableGradient(F, gradient=grad, concave=concave)
    parts = [splittable if p.category is Category.ATOMIC_SPLITTABLE else population for p in participants]
    comp = Composite(parts)
    comp.matrix, comp.offset = A, b
    J = A.copy()
    for p, sl in zip(participants, slices):
        if p.category is Category.ATOMIC_SPLITTABLE:
            J[sl, sl] += A[sl, sl].T
    comp.jacobian = lambda game, x: J.copy()
    return comp


@dataclass(frozen=True)
class GameSpec:
    participants: tuple[Participant, ...]
    evaluation: Evaluation
    potential: Potential | None = None
    name: str = ""
    description: str = ""
    sizes: tuple[int, ...] = field(init=False, repr=False)
    slices: tuple[slice, ...] = field(init=False, repr=False)
    dim: int = field(init=False, repr=False)

    def __post_init__(self):
        parts = tuple(self.participants)
        if not parts:
            raise GameError("a game needs at least one participant")
        ids = [p.id for p in parts]
        if len(set(ids)) != len(ids):
            raise GameError("participant ids are not unique")
        sizes = tuple(len(p.choices) for p in parts)
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        object.__setattr__(self, "participants", parts)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "slices", tuple(slice(int(a), int(b)) for a, b in zip(offsets[:-1], offsets[1:])))
        object.__setattr__(self, "dim", int(offsets[-1]))
        x0 = self.uniform()
        self.phi(x0)
        if self.potential is not None:
            mu = np.asarray(self.potential.mu(x0), dtype=float)
            if mu.shape != (self.n,) or np.any(mu <= 0.0):
                raise GameError("potential scalings mu^i must be strictly positive, one per participant")

    @property
    def n(self) -> int:
        return len(self.participants)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.participants)

    def categories(self) -> list[Category]:
        return [p.category for p in self.participants]

    def weights(self) -> np.ndarray:
        return np.array([p.weight for p in self.participants])

    def index(self, pid: str) -> int:
        return self.ids.index(pid)

    def column_labels(self) -> list[str]:
        return [f"{p.id}.{c}" for p in self.participants for c in p.choices]

    # layout helpers

    def split(self, v) -> list[np.ndarray]:
        v = np.asarray(v)
        return [v[sl] for sl in self.slices]

    def block_sums(self, v) -> np.ndarray:
        return np.add.reduceat(np.asarray(v, dtype=float), [sl.start for sl in self.slices])

    def flatten(self, x) -> np.ndarray:
        """Coerce a profile-like value (StrategyProfile, flat vector, blocks, dict) to a flat array."""
        if isinstance(x, (StrategyProfile, TangentVector)):
            if x.ids != self.ids:
                raise ShapeError(f"profile participants {x.ids} do not match game participants {self.ids}")
            return x.flat
        if isinstance(x, Mapping):
            missing = set(self.ids) - set(x)
            extra = set(x) - set(self.ids)
            if missing or extra:
                raise ShapeError(f"profile keys mismatch: missing {sorted(missing)}, unknown {sorted(extra)}")
            x = [x[pid] for pid in self.ids]
        if isinstance(x, (list, tuple)) and len(x) == self.n and all(np.ndim(b) == 1 for b in x):
            for p, b in zip(self.participants, x):
                if len(b) != len(p.choices):
                    raise ShapeError(f"participant {p.id!r}: expected {len(p.choices)} components, got {len(b)}")
            return np.concatenate([np.asarray(b, dtype=float) for b in x])
        flat = np.asarray(x, dtype=float)
        if flat.shape != (self.dim,):
            raise ShapeError(f"expected a flat profile of length {self.dim}, got shape {flat.shape}")
        return flat

    def profile(self, x, eps: float = EPS_SIMPLEX) -> StrategyProfile:
        flat = self.flatten(x)
        blocks = []
        for p, sl in zip(self.participants, self.slices):
            try:
                blocks.append(as_simplex_point(flat[sl], eps))
            except GameError as exc:
                raise type(exc)(f"participant {p.id!r}: {exc}") from None
        return StrategyProfile(self.ids, tuple(blocks))

    def tangent(self, v, tol: float = 1e-8) -> TangentVector:
        flat = self.flatten(v)
        for p, sl in zip(self.participants, self.slices):
            s = flat[sl].sum()
            if abs(s) > tol:
                raise ShapeError(f"participant {p.id!r}: tangent block sums to {s!r}, not 0")
        return TangentVector(self.ids, tuple(flat[sl].copy() for sl in self.slices))

    def uniform(self) -> np.ndarray:
        return np.concatenate([np.full(k, 1.0 / k) for k in self.sizes])

    def vertex(self, choices: Sequence[int]) -> np.ndarray:
        x = np.zeros(self.dim)
        for sl, c in zip(self.slices, choices):
            x[sl.start + int(c)] = 1.0
        return x

    def random_profile(self, rng: np.random.Generator) -> np.ndarray:
        """Dirichlet(1) draw on every block."""
        return np.concatenate([rng.dirichlet(np.ones(k)) for k in self.sizes])

    def n_pure_profiles(self) -> int:
        return int(np.prod(self.sizes, dtype=object))

    def pure_profiles(self) -> Iterator[np.ndarray]:
        for choice in itertools.product(*(range(k) for k in self.sizes)):
            yield self.vertex(choice)

    # evaluation

    def phi(self, x) -> np.ndarray:
        flat = self.flatten(x)
        out = np.asarray(self.evaluation(self, flat), dtype=float)
        if out.shape != (self.dim,):
            raise ShapeError(f"evaluation returned shape {out.shape}, expected ({self.dim},)")
        if not np.all(np.isfinite(out)):
            bad = int(np.nonzero(~np.isfinite(out))[0][0])
            i = next(i for i, sl in enumerate(self.slices) if sl.start <= bad < sl.stop)
            raise EvaluationError(f"non-finite payoff for participant {self.participants[i].id!r}")
        return out

    def require_potential(self) -> Potential:
        if self.potential is None:
            raise ConfigurationError(f"game {self.name!r} has no potential block")
        return self.potential


def evaluate(game: GameSpec, x) -> list[np.ndarray]:
    """Per-participant evaluation vectors Phi^i(x)."""
    return game.split(game.phi(x))


def jacobian(game: GameSpec, x, h: float | None = None) -> np.ndarray:
    """Jacobian of Phi at x: analytic when the evaluation supplies it, else finite differences.

    Central differences with step 1e-6*max(1, |x|_inf); a coordinate within one
    step of 0 or 1 is differenced one-sidedly towards the interior.
    """
    x = game.flatten(x)
    exact = game.evaluation.jacobian(game, x)
    if exact is not None:
        return np.asarray(exact, dtype=float)
    if h is None:
        h = FD_STEP * max(1.0, float(np.abs(x).max()))
    J = np.empty((game.dim, game.dim))
    f0 = None
    for k in range(game.dim):
        xp = x.copy()
        xm = x.copy()
        if x[k] - h < 0.0:
            if f0 is None:
                f0 = game.phi(x)
            xp[k] += h
            J[:, k] = (game.phi(xp) - f0) / h
        elif x[k] + h > 1.0:
            if f0 is None:
                f0 = game.phi(x)
            xm[k] -= h
            J[:, k] = (f0 - game.phi(xm)) / h
        else:
            xp[k] += h
            xm[k] -= h
            J[:, k] = (game.phi(xp) - game.phi(xm)) / (2 * h)
    return J


def numerical_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for k in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[k] += h
        xm[k] -= h
        g[k] = (f(xp) - f(xm)) / (2 * h)
    return g
