"""Built-in games and random game generators used by the CLI and the tests."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .congestion import Affine, Network, RoutingDemand, build_composite_congestion_game
from .core import Category, GameSpec, Participant, PayoffTable, PopulationPayoffs, linear_composite
from .errors import ConfigurationError

FRAMEWORKS = {
    "I": Category.POPULATION,
    "II": Category.ATOMIC_SPLITTABLE,
    "III": Category.ATOMIC_NONSPLITTABLE,
}


def two_arc(framework: str = "I") -> GameSpec:
    """Two participants of weight 1/2 on two parallel arcs, l1(m) = m and l2(m) = 1."""
    cat = FRAMEWORKS[framework]
    net = Network.parallel([Affine(1.0, 0.0), Affine(0.0, 1.0)])
    demands = [RoutingDemand(pid, "o", "d", 0.5, cat) for pid in ("P1", "P2")]
    return build_composite_congestion_game(net, demands, name=f"two-arc-{framework}")


def three_category() -> GameSpec:
    """A population, a splittable and a non-splittable player sharing two parallel arcs."""
    net = Network.parallel([Affine(1.0, 0.0), Affine(0.5, 0.4)])
    demands = [
        RoutingDemand("pop", "o", "d", 0.5, Category.POPULATION),
        RoutingDemand("split", "o", "d", 0.3, Category.ATOMIC_SPLITTABLE),
        RoutingDemand("atom", "o", "d", 0.2, Category.ATOMIC_NONSPLITTABLE),
    ]
    return build_composite_congestion_game(net, demands, name="three-category")


def affine_parallel() -> GameSpec:
    """Three affine parallel arcs with one participant of each category."""
    net = Network.parallel([Affine(1.0, 0.0), Affine(2.0, 0.2), Affine(0.5, 0.5)])
    demands = [
        RoutingDemand("pop", "o", "d", 0.4, Category.POPULATION),
        RoutingDemand("split", "o", "d", 0.35, Category.ATOMIC_SPLITTABLE),
        RoutingDemand("atom", "o", "d", 0.25, Category.ATOMIC_NONSPLITTABLE),
    ]
    return build_composite_congestion_game(net, demands, potential=True, name="affine-parallel")


BUILTINS = {
    "two-arc-I": lambda: two_arc("I"),
    "two-arc-II": lambda: two_arc("II"),
    "two-arc-III": lambda: two_arc("III"),
    "three-category": three_category,
    "affine-parallel": affine_parallel,
}


def builtin(name: str) -> GameSpec:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise ConfigurationError(f"unknown builtin {name!r}; choose from {sorted(BUILTINS)}") from None


# random generators


def _participants(categories: Sequence[Category], sizes: Sequence[int]) -> list[Participant]:
    return [
        Participant(f"P{i + 1}", Category(c), tuple(f"s{k + 1}" for k in range(n)))
        for i, (c, n) in enumerate(zip(categories, sizes))
    ]


def random_linear_game(rng, categories: Sequence[Category], sizes: Sequence[int]) -> GameSpec:
    """Affine payoffs F = Ax + b; splittable own blocks are negative semidefinite, non-splittable own blocks zero."""
    rng = np.random.default_rng(rng)
    parts = _participants(categories, sizes)
    n = int(sum(sizes))
    A = rng.normal(size=(n, n))
    b = rng.normal(size=n)
    start = 0
    for p, k in zip(parts, sizes):
        sl = slice(start, start + k)
        if p.category is Category.ATOMIC_NONSPLITTABLE:
            A[sl, sl] = 0.0
        elif p.category is Category.ATOMIC_SPLITTABLE:
            G = rng.normal(size=(k, k))
            A[sl, sl] = -G @ G.T / k
        start += k
    return GameSpec(tuple(parts), linear_composite(parts, A, b), name="random-linear")


def random_table_game(rng, sizes: Sequence[int]) -> GameSpec:
    """Non-splittable players with standard normal payoff tables."""
    rng = np.random.default_rng(rng)
    parts = _participants([Category.ATOMIC_NONSPLITTABLE] * len(sizes), sizes)
    tables = [rng.normal(size=tuple(sizes)) for _ in sizes]
    return GameSpec(tuple(parts), PayoffTable(tables), name="random-table")


def random_mixed_game(rng, sizes: Sequence[int] = (2, 3, 2)) -> GameSpec:
    """One participant per category (cycled) with random affine payoffs."""
    cats = [list(FRAMEWORKS.values())[i % 3] for i in range(len(sizes))]
    return random_linear_game(rng, cats, sizes)


def dissipative_game(
    rng, sizes: Sequence[int], strict: bool = True, rank: int | None = None, support: float = 0.7, skew: bool = True
):
    """Population game Phi(x) = -S(x - x*) + K(x - x*) + c with S PSD and K skew.

    c is constant on the support of x* and lower off it, so x* is an
    equilibrium. ``strict`` adds a multiple of the identity to S (strictly
    dissipative, x* unique). ``rank`` limits the rank of S when not strict;
    with ``skew=False`` as well (K = 0) the equilibria form a continuum.
    Returns (game, x_star).
    """
    rng = np.random.default_rng(rng)
    parts = _participants([Category.POPULATION] * len(sizes), sizes)
    n = int(sum(sizes))
    r = n if rank is None else rank
    G = rng.normal(size=(n, r))
    S = G @ G.T / max(r, 1)
    if strict:
        S = S + 0.5 * np.eye(n)
    H = rng.normal(size=(n, n))
    K = 0.5 * (H - H.T) if skew else np.zeros((n, n))
    blocks, c = [], []
    for k in sizes:
        keep = rng.random(k) < support
        keep[rng.integers(k)] = True
        w = np.where(keep, rng.random(k) + 0.1, 0.0)
        blocks.append(w / w.sum())
        c.append(rng.normal() - np.where(keep, 0.0, rng.random(k) + 0.1))
    x_star = np.concatenate(blocks)
    c = np.concatenate(c)
    A = -S + K
    offset = c - A @ x_star

    def F(x):
        return A @ x + offset

    ev = PopulationPayoffs(F, jacobian=lambda x: A)
    ev.matrix, ev.offset = A, offset
    return GameSpec(tuple(parts), ev, name="dissipative"), x_star


def random_parallel_affine(rng, n_arcs: int | None = None, counts: Sequence[int] | None = None) -> GameSpec:
    """Affine parallel-arc routing game with the composite potential attached.

    ``counts`` gives the number of populations, splittable and non-splittable
    players (default: each drawn from {1, 2}).
    """
    rng = np.random.default_rng(rng)
    if n_arcs is None:
        n_arcs = int(rng.integers(2, 5))
    if counts is None:
        counts = rng.integers(1, 3, size=3)
    net = Network.parallel([Affine(rng.uniform(0.5, 2.0), rng.uniform(0.0, 1.0)) for _ in range(n_arcs)])
    demands = []
    for cat, cnt in zip(FRAMEWORKS.values(), counts):
        for j in range(int(cnt)):
            tag = {"population": "pop", "splittable": "split", "non-splittable": "atom"}[cat.value]
            demands.append(RoutingDemand(f"{tag}{j + 1}", "o", "d", float(rng.uniform(0.2, 1.0)), cat))
    return build_composite_congestion_game(net, demands, potential=True, name="random-affine-parallel")
