"""Routing games on directed networks with populations, splittable and non-splittable players.

Costs are kept as costs throughout this module; the only sign flip to payoffs
happens in ``CongestionEvaluation.__call__``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Category, Evaluation, GameSpec, Participant, Potential
from .errors import CombinatorialLimitError, ConfigurationError, DomainError, GameError

PROFILE_CAP = 1_000_000
FLOW_TOL = 1e-9


# arc costs


class ArcCost:
    """Per-unit arc cost l(m). Subclasses supply value and derivative (vectorized).

    ``c1``, ``nondecreasing`` and ``convex`` are metadata used by the
    convexity check; ``None`` means unknown.
    """

    c1: bool | None = None
    nondecreasing: bool | None = None
    convex: bool | None = None

    def value(self, m):
        raise NotImplementedError

    def derivative(self, m):
        raise NotImplementedError

    def override(self, **flags) -> "ArcCost":
        for k, v in flags.items():
            if k not in ("c1", "nondecreasing", "convex"):
                raise ValueError(f"unknown cost property {k!r}")
            setattr(self, k, v)
        return self


class Affine(ArcCost):
    def __init__(self, b: float, d: float):
        self.b = float(b)
        self.d = float(d)
        self.c1 = True
        self.nondecreasing = self.b >= 0
        self.convex = True

    def value(self, m):
        return self.b * np.asarray(m, dtype=float) + self.d

    def derivative(self, m):
        return np.full(np.shape(m), self.b)

    def __repr__(self):
        return f"Affine(b={self.b!r}, d={self.d!r})"


class Polynomial(ArcCost):
    """l(m) = sum_k coeffs[k] m^k."""

    def __init__(self, coeffs: Sequence[float]):
        c = np.asarray(coeffs, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("polynomial cost needs at least one coefficient")
        self.coeffs = c
        self._dcoeffs = c[1:] * np.arange(1, c.size)
        self.c1 = True
        # sufficient conditions on m >= 0; unknown otherwise
        self.nondecreasing = True if np.all(c[1:] >= 0) else None
        self.convex = True if np.all(c[2:] >= 0) else None

    def value(self, m):
        return np.polynomial.polynomial.polyval(np.asarray(m, dtype=float), self.coeffs)

    def derivative(self, m):
        m = np.asarray(m, dtype=float)
        if self._dcoeffs.size == 0:
            return np.zeros(m.shape)
        return np.polynomial.polynomial.polyval(m, self._dcoeffs)

    def __repr__(self):
        return f"Polynomial({self.coeffs.tolist()!r})"


class Tabulated(ArcCost):
    """Piecewise-linear interpolation of (points, values); end values are held outside the table."""

    def __init__(self, points: Sequence[float], values: Sequence[float]):
        p = np.asarray(points, dtype=float)
        v = np.asarray(values, dtype=float)
        if p.ndim != 1 or p.shape != v.shape or p.size < 2 or np.any(np.diff(p) <= 0):
            raise ValueError("tabulated cost needs >= 2 strictly increasing points with matching values")
        self.points, self.values = p, v
        self._slopes = np.diff(v) / np.diff(p)
        self.c1 = False
        self.nondecreasing = bool(np.all(self._slopes >= 0))
        self.convex = bool(np.all(np.diff(self._slopes) >= 0))

    def value(self, m):
        return np.interp(np.asarray(m, dtype=float), self.points, self.values)

    def derivative(self, m):
        k = np.clip(np.searchsorted(self.points, np.asarray(m, dtype=float), side="right") - 1, 0, self._slopes.size - 1)
        return self._slopes[k]


# network


@dataclass(frozen=True)
class Arc:
    tail: str
    head: str
    cost: ArcCost
    label: str = ""


@dataclass(frozen=True)
class Network:
    nodes: tuple
    arcs: tuple

    def __post_init__(self):
        nodes = tuple(self.nodes)
        if len(set(nodes)) != len(nodes):
            raise GameError("node names are not unique")
        arcs = []
        for k, a in enumerate(self.arcs):
            if a.tail not in nodes or a.head not in nodes:
                raise GameError(f"arc {k} references an unknown node ({a.tail!r} -> {a.head!r})")
            arcs.append(a if a.label else Arc(a.tail, a.head, a.cost, str(k + 1)))
        labels = [a.label for a in arcs]
        if len(set(labels)) != len(labels):
            raise GameError("arc labels are not unique")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "arcs", tuple(arcs))

    @classmethod
    def parallel(cls, costs: Sequence[ArcCost], origin="o", destination="d") -> "Network":
        return cls((origin, destination), tuple(Arc(origin, destination, c) for c in costs))

    def is_parallel(self) -> bool:
        return len({(a.tail, a.head) for a in self.arcs}) == 1 and self.arcs[0].tail != self.arcs[0].head

    def out_arcs(self, node) -> list[int]:
        return [k for k, a in enumerate(self.arcs) if a.tail == node]


@dataclass(frozen=True)
class RoutingDemand:
    id: str
    origin: str
    destination: str
    weight: float
    category: Category = Category.POPULATION
    paths: tuple | None = None  # optional whitelist of arc-index tuples

    def __post_init__(self):
        object.__setattr__(self, "category", Category(self.category))
        if not np.isfinite(self.weight) or self.weight < 0:
            raise GameError(f"demand {self.id!r}: weight must be finite and nonnegative")


def enumerate_paths(network: Network, origin, destination) -> list[tuple[int, ...]]:
    """All simple directed paths origin -> destination as arc-index tuples.

    Depth-first search over out-arcs in index order, so the result is sorted
    lexicographically by arc indices.
    """
    if origin not in network.nodes or destination not in network.nodes:
        raise GameError(f"unknown origin/destination {origin!r} -> {destination!r}")
    if origin == destination:
        raise GameError("origin and destination must differ")
    out = {v: network.out_arcs(v) for v in network.nodes}
    paths: list[tuple[int, ...]] = []
    stack = [(origin, (), frozenset([origin]))]
    while stack:
        node, path, seen = stack.pop()
        if node == destination:
            paths.append(path)
            continue
        for k in reversed(out[node]):
            head = network.arcs[k].head
            if head not in seen:
                stack.append((head, path + (k,), seen | {head}))
    if not paths:
        warnings.warn(f"no path from {origin!r} to {destination!r}", stacklevel=2)
    return paths


def _validate_path(network: Network, demand: RoutingDemand, path) -> tuple[int, ...]:
    path = tuple(int(k) for k in path)
    if not path:
        raise GameError(f"demand {demand.id!r}: empty path")
    node, seen = demand.origin, {demand.origin}
    for k in path:
        if not 0 <= k < len(network.arcs) or network.arcs[k].tail != node:
            raise GameError(f"demand {demand.id!r}: path {path} is not a directed path from {demand.origin!r}")
        node = network.arcs[k].head
        if node in seen:
            raise GameError(f"demand {demand.id!r}: path {path} is not simple")
        seen.add(node)
    if node != demand.destination:
        raise GameError(f"demand {demand.id!r}: path {path} does not end at {demand.destination!r}")
    return path


def demand_paths(network: Network, demand: RoutingDemand) -> list[tuple[int, ...]]:
    if demand.paths is None:
        paths = enumerate_paths(network, demand.origin, demand.destination)
    else:
        paths = [_validate_path(network, demand, p) for p in demand.paths]
        if len(set(paths)) != len(paths):
            raise GameError(f"demand {demand.id!r}: duplicate paths in whitelist")
    if not paths:
        raise GameError(f"demand {demand.id!r}: no admissible path")
    return paths


def path_label(network: Network, path) -> str:
    return "-".join(network.arcs[k].label for k in path)


# compiled model


class CongestionModel:
    """Incidence data shared by the evaluation, the potential and the flow helpers."""

    def __init__(self, network: Network, demands: Sequence[RoutingDemand]):
        self.network = network
        self.demands = tuple(demands)
        if not self.demands:
            raise GameError("at least one demand is required")
        self.paths = [demand_paths(network, d) for d in self.demands]
        n_arcs = len(network.arcs)
        self.incidence = []
        for paths in self.paths:
            D = np.zeros((n_arcs, len(paths)))
            for c, p in enumerate(paths):
                D[list(p), c] = 1.0
            self.incidence.append(D)
        self.m = np.array([d.weight for d in self.demands], dtype=float)
        self.M = float(self.m.sum())
        cats = [d.category for d in self.demands]
        self.fluid = [i for i, c in enumerate(cats) if c is not Category.ATOMIC_NONSPLITTABLE]
        self.splittable = [i for i, c in enumerate(cats) if c is Category.ATOMIC_SPLITTABLE]
        self.atomic = [i for i, c in enumerate(cats) if c is Category.ATOMIC_NONSPLITTABLE]
        count = int(np.prod([len(self.paths[k]) for k in self.atomic], dtype=object)) if self.atomic else 1
        if count > PROFILE_CAP:
            raise CombinatorialLimitError(count, PROFILE_CAP)
        # every pure profile of the non-splittable players: choice indices and induced arc loads
        grids = np.meshgrid(*[np.arange(len(self.paths[k])) for k in self.atomic], indexing="ij")
        self.choices = np.stack([g.ravel() for g in grids], axis=1) if self.atomic else np.zeros((1, 0), dtype=int)
        self.atomic_flow = np.zeros((count, n_arcs))
        for col, k in enumerate(self.atomic):
            self.atomic_flow += self.m[k] * self.incidence[k][:, self.choices[:, col]].T
        self.union = sorted({p for paths in self.paths for p in paths})
        self._check_costs()

    def _check_costs(self):
        grid = np.linspace(0.0, max(self.M, 1e-12), 101)
        for a in self.network.arcs:
            v = np.asarray(a.cost.value(grid), dtype=float)
            if not np.all(np.isfinite(v)) or v.min() < 0.0:
                raise GameError(f"arc {a.label!r}: cost must be finite and nonnegative on [0, {self.M:g}]")

    def participants(self) -> list[Participant]:
        return [
            Participant(d.id, d.category, tuple(path_label(self.network, p) for p in paths), d.weight)
            for d, paths in zip(self.demands, self.paths)
        ]

    def blocks(self, game_or_slices, x):
        slices = getattr(game_or_slices, "slices", game_or_slices)
        return [x[sl] for sl in slices]

    def fluid_flows(self, blocks) -> dict:
        """Per-participant arc flows f^i for the fluid (non-atomic-choice) participants."""
        return {i: self.m[i] * (self.incidence[i] @ blocks[i]) for i in self.fluid}

    def profile_probabilities(self, blocks, skip: int | None = None) -> np.ndarray:
        P = np.ones(len(self.choices))
        for col, k in enumerate(self.atomic):
            if k != skip:
                P = P * blocks[k][self.choices[:, col]]
        return P

    def loads(self, blocks):
        per = self.fluid_flows(blocks)
        base = np.zeros(len(self.network.arcs))
        for i in self.fluid:
            base = base + per[i]
        return per, base[None, :] + self.atomic_flow

    def arc_costs(self, F):
        L = np.empty_like(F)
        dL = np.empty_like(F)
        for a, arc in enumerate(self.network.arcs):
            L[:, a] = arc.cost.value(F[:, a])
            dL[:, a] = arc.cost.derivative(F[:, a])
        return L, dL

    def expected_costs(self, blocks) -> list[np.ndarray]:
        """Per-participant expected marginal path costs (the negated evaluation)."""
        per, F = self.loads(blocks)
        L, dL = self.arc_costs(F)
        P = self.profile_probabilities(blocks)
        out = []
        for i, d in enumerate(self.demands):
            D = self.incidence[i]
            if d.category is Category.POPULATION:
                out.append(P @ (L @ D))
            elif d.category is Category.ATOMIC_SPLITTABLE:
                out.append(P @ ((L + dL * per[i][None, :]) @ D))
            else:
                col = self.atomic.index(i)
                own = self.choices[:, col]
                Pk = self.profile_probabilities(blocks, skip=i)
                c = (L @ D)[np.arange(len(own)), own]
                out.append(np.bincount(own, weights=Pk * c, minlength=D.shape[1]))
        return out

    def participant_cost(self, blocks, i: int) -> float:
        """u^i: expected per-unit cost <x^i, c^i> (expected own-path cost for non-splittable players)."""
        _, F = self.loads(blocks)
        L, _ = self.arc_costs(F)
        P = self.profile_probabilities(blocks)
        D = self.incidence[i]
        if self.demands[i].category is Category.ATOMIC_NONSPLITTABLE:
            col = self.atomic.index(i)
            own = self.choices[:, col]
            return float(P @ (L @ D)[np.arange(len(own)), own])
        return float(P @ (L @ D) @ blocks[i])


class CongestionEvaluation(Evaluation):
    """Phi = -(expected marginal path costs); the single cost-to-payoff sign flip."""

    def __init__(self, model: CongestionModel):
        self.model = model
        arcs = model.network.arcs
        if all(a.cost.c1 and a.cost.nondecreasing and a.cost.convex for a in arcs):
            self.splittable_concave = True

    def __call__(self, game, x):
        blocks = [x[sl] for sl in game.slices]
        return -np.concatenate(self.model.expected_costs(blocks))


# flows and path costs


@dataclass
class FlowState:
    per_participant: np.ndarray  # (participants, arcs)
    aggregate: np.ndarray  # arc loads f
    configuration: dict = field(default_factory=dict)  # path -> z_p


def flow_state(network: Network, demands: Sequence[RoutingDemand], x) -> FlowState:
    """Arc flows induced by x with every participant's strategy read as a split of its weight."""
    model = CongestionModel(network, demands)
    sizes = [len(p) for p in model.paths]
    blocks = np.split(np.asarray(x, dtype=float), np.cumsum(sizes)[:-1])
    per = np.array([model.m[i] * (model.incidence[i] @ b) for i, b in enumerate(blocks)])
    z = {p: 0.0 for p in model.union}
    for i, b in enumerate(blocks):
        for p, w in zip(model.paths[i], b):
            z[p] += model.m[i] * w
    return FlowState(per, per.sum(axis=0), z)


def configuration_flow(network: Network, z) -> np.ndarray:
    f = np.zeros(len(network.arcs))
    for p, w in dict(z).items():
        f[list(p)] += w
    return f


def path_costs(network: Network, demands: Sequence[RoutingDemand], z) -> dict:
    """c_p(z) = sum_{a in p} l_a(f_a) for every path of every demand, f induced by z.

    ``z`` maps paths (arc-index tuples) to aggregate weight. Arc loads outside
    [0, M] by more than 1e-9 raise DomainError.
    """
    M = float(sum(d.weight for d in demands))
    f = configuration_flow(network, z)
    bad = np.nonzero((f < -FLOW_TOL) | (f > M + FLOW_TOL))[0]
    if bad.size:
        a = network.arcs[int(bad[0])]
        raise DomainError(f"arc {a.label!r}: load {f[bad[0]]!r} outside [0, {M!r}]")
    l = np.array([arc.cost.value(fa) for arc, fa in zip(network.arcs, f)], dtype=float)
    paths = sorted({p for d in demands for p in demand_paths(network, d)})
    return {p: float(l[list(p)].sum()) for p in paths}


# games


def is_affine_parallel(network: Network, demands: Sequence[RoutingDemand]) -> bool:
    if not network.is_parallel():
        return False
    o, d = network.arcs[0].tail, network.arcs[0].head
    return all(isinstance(a.cost, Affine) for a in network.arcs) and all(
        dm.origin == o and dm.destination == d for dm in demands
    )


def affine_parallel_potential(network: Network, demands: Sequence[RoutingDemand]) -> Potential:
    """Potential of a composite routing game on parallel arcs with affine costs l_a = b_a m + d_a.

    W(x) = -E_s[ 1/2 sum_a b_a (f_a^2 + sum_{j splittable} (m^j x^j_a)^2
                 + sum_{k non-splittable} (m^k)^2 1{s^k = a}) + sum_a d_a f_a ]
    with scalings mu^i = m^i. Requires b_a >= 0 and d_a >= 0.
    """
    if not is_affine_parallel(network, demands):
        raise ConfigurationError("the affine potential needs parallel arcs between one o-d pair and affine costs")
    b = np.array([a.cost.b for a in network.arcs])
    dvec = np.array([a.cost.d for a in network.arcs])
    if np.any(b < 0) or np.any(dvec < 0):
        raise ConfigurationError("affine potential needs b_a >= 0 and d_a >= 0")
    model = CongestionModel(network, demands)
    sizes = [len(p) for p in model.paths]
    cuts = np.cumsum(sizes)[:-1]
    # arc index of each choice (paths are single arcs)
    arc_of = [np.array([p[0] for p in paths]) for paths in model.paths]
    atomic_sq = np.zeros((len(model.choices), len(network.arcs)))
    for col, k in enumerate(model.atomic):
        atomic_sq[np.arange(len(model.choices)), arc_of[k][model.choices[:, col]]] += model.m[k] ** 2

    def parts(x):
        blocks = np.split(np.asarray(x, dtype=float), cuts)
        per, F = model.loads(blocks)
        P = model.profile_probabilities(blocks)
        split_sq = np.zeros(len(network.arcs))
        for j in model.splittable:
            split_sq = split_sq + per[j] ** 2
        term = 0.5 * (b * (F**2 + split_sq + atomic_sq)).sum(axis=1) + (dvec * F).sum(axis=1)
        return blocks, per, F, P, term

    def W(x):
        _, _, _, P, term = parts(x)
        return -float(P @ term)

    def gradient(x):
        blocks, per, F, P, term = parts(x)
        marginal = P @ (b * F + dvec)  # E[b f + d] per arc
        total = P.sum()
        out = []
        for i, dm in enumerate(demands):
            if dm.category is Category.ATOMIC_NONSPLITTABLE:
                col = model.atomic.index(i)
                Pk = model.profile_probabilities(blocks, skip=i)
                g = -np.bincount(model.choices[:, col], weights=Pk * term, minlength=sizes[i])
            else:
                g = -model.m[i] * marginal[arc_of[i]]
                if dm.category is Category.ATOMIC_SPLITTABLE:
                    g = g - total * b[arc_of[i]] * model.m[i] * per[i][arc_of[i]]
            out.append(g)
        return np.concatenate(out)

    m = model.m.copy()
    return Potential(W=W, mu=lambda x: m, gradient=gradient, description="affine parallel-arc potential, mu^i = m^i")


def build_composite_congestion_game(
    network: Network,
    demands: Sequence[RoutingDemand],
    potential="auto",
    name: str = "",
    description: str = "",
) -> GameSpec:
    """Assemble a GameSpec from a network and demands.

    ``potential``: "auto" attaches the affine parallel-arc potential when it
    applies, True requires it, False/None omits it, or pass a Potential.
    """
    model = CongestionModel(network, demands)
    if isinstance(potential, Potential):
        pot = potential
    elif potential is True:
        pot = affine_parallel_potential(network, demands)
    elif potential == "auto":
        pot = None
        if is_affine_parallel(network, demands) and np.all(model.m > 0):
            try:
                pot = affine_parallel_potential(network, demands)
            except ConfigurationError:
                pot = None
    else:
        pot = None
    game = GameSpec(tuple(model.participants()), CongestionEvaluation(model), pot, name, description)
    return game


@dataclass
class ConvexityReport:
    verdict: str  # "pass" | "fail" | "inconclusive"
    worst: float
    checked: int
    notes: list = field(default_factory=list)


def check_splittable_convexity(
    network: Network, demands: Sequence[RoutingDemand], samples: int = 200, rng=None, tol: float = 1e-9
) -> ConvexityReport:
    """Midpoint convexity of each splittable player's cost in its own strategy.

    Runs only when every arc cost is flagged C1, nondecreasing and convex;
    otherwise the verdict is "inconclusive". A violation is a disproof.
    """
    rng = np.random.default_rng(rng)
    flags = [(a.cost.c1, a.cost.nondecreasing, a.cost.convex) for a in network.arcs]
    if not all(all(f is True for f in fl) for fl in flags):
        return ConvexityReport("inconclusive", 0.0, 0, ["arc cost properties missing or not satisfied"])
    game = build_composite_congestion_game(network, demands, potential=False)
    model = game.evaluation.model
    if not model.splittable:
        return ConvexityReport("pass", 0.0, 0, ["no splittable participants"])
    worst = -np.inf
    for t in range(samples):
        x = game.random_profile(rng)
        j = model.splittable[t % len(model.splittable)]
        sl = game.slices[j]
        a, c = rng.dirichlet(np.ones(game.sizes[j]), size=2)

        def u(block):
            y = x.copy()
            y[sl] = block
            return model.participant_cost(model.blocks(game, y), j)

        gap = u(0.5 * (a + c)) - 0.5 * (u(a) + u(c))
        worst = max(worst, gap)
    return ConvexityReport("pass" if worst <= tol else "fail", float(worst), samples)
