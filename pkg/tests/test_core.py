import numpy as np
import pytest

from compgame import zoo
from compgame.congestion import Network, Polynomial, RoutingDemand, build_composite_congestion_game
from compgame.core import (
    Category,
    GameSpec,
    Participant,
    PayoffTable,
    PopulationPayoffs,
    Potential,
    SplittableGradient,
    evaluate,
    jacobian,
    linear_composite,
)
from compgame.equilibrium import tangent_space_basis
from compgame.errors import EvaluationError, GameError, ShapeError, SimplexError

POP = Category.POPULATION
SPLIT = Category.ATOMIC_SPLITTABLE
ATOM = Category.ATOMIC_NONSPLITTABLE


def pop_game(F, sizes=(2, 2), jac=None):
    parts = tuple(Participant(f"P{i}", POP, tuple(f"c{k}" for k in range(n))) for i, n in enumerate(sizes))
    return GameSpec(parts, PopulationPayoffs(F, jac))


def test_two_arc_population_payoffs_at_all_on_arc_one():
    g = zoo.two_arc("I")
    blocks = evaluate(g, {"P1": [1.0, 0.0], "P2": [1.0, 0.0]})
    for b in blocks:
        assert np.array_equal(b, [-1.0, -1.0])


def test_identity_table_uniform_mixing():
    parts = (Participant("A", ATOM, ("x", "y")), Participant("B", ATOM, ("x", "y")))
    g = GameSpec(parts, PayoffTable([np.eye(2), np.eye(2)]))
    assert np.allclose(g.phi(g.uniform()), [0.5, 0.5, 0.5, 0.5])


def test_splittable_two_arc_gradient_matches_finite_differences():
    g = zoo.two_arc("II")
    x = np.array([2 / 3, 1 / 3, 2 / 3, 1 / 3])

    def u1(y):
        # per-unit cost to player 1 from scratch: arc 1 carries half of each player's share
        f = 0.5 * y[0] + 0.5 * y[2]
        return y[0] * f + y[1] * 1.0

    h = 1e-6
    fd = []
    for k in (0, 1):
        e = np.zeros(4)
        e[k] = h
        fd.append(-(u1(x + e) - u1(x - e)) / (2 * h))
    phi = g.phi(x)
    assert np.allclose(phi[:2], fd, atol=1e-8)
    assert abs(phi[0] - phi[1]) < 1e-12


def test_flatten_accepts_profile_like_values():
    g = zoo.two_arc("I")
    flat = np.array([0.25, 0.75, 1.0, 0.0])
    assert np.array_equal(g.flatten({"P1": [0.25, 0.75], "P2": [1.0, 0.0]}), flat)
    assert np.array_equal(g.flatten([[0.25, 0.75], [1.0, 0.0]]), flat)
    assert np.array_equal(g.flatten(g.profile(flat)), flat)
    assert np.array_equal(g.profile(flat)["P2"], [1.0, 0.0])


def test_shape_errors_name_the_participant():
    g = zoo.two_arc("I")
    with pytest.raises(ShapeError, match="P2"):
        g.flatten([[0.5, 0.5], [1.0, 0.0, 0.0]])
    with pytest.raises(ShapeError):
        g.phi(np.ones(3))
    with pytest.raises(SimplexError, match="P1"):
        g.profile([0.5, 0.6, 1.0, 0.0])
    with pytest.raises(ShapeError, match="P1"):
        g.tangent([0.1, 0.0, 0.0, 0.0])


def test_non_finite_payoff_is_an_evaluation_error():
    g = pop_game(lambda x: np.where(x > 0.9, np.nan, 0.0))
    with pytest.raises(EvaluationError, match="P1"):
        g.phi([0.5, 0.5, 0.0, 1.0])


def test_participant_validation():
    with pytest.raises(GameError, match="'A'"):
        Participant("A", POP, ())
    with pytest.raises(GameError, match="'A'"):
        Participant("A", POP, ("x", "x"))
    with pytest.raises(GameError, match="'A'"):
        Participant("A", POP, ("x",), weight=0.0)
    with pytest.raises(GameError):
        GameSpec((Participant("A", POP, ("x",)), Participant("A", POP, ("y",))), PopulationPayoffs(lambda x: x))


def test_potential_scalings_must_be_positive():
    with pytest.raises(GameError):
        pop_game_with_mu(lambda x: np.array([1.0, 0.0]))
    pop_game_with_mu(lambda x: np.array([1.0, 2.0]))


def pop_game_with_mu(mu):
    parts = (Participant("A", POP, ("x", "y")), Participant("B", POP, ("x", "y")))
    return GameSpec(parts, PopulationPayoffs(lambda x: -x), Potential(lambda x: -0.5 * x @ x, mu))


def test_evaluation_is_bitwise_deterministic(rng):
    g = zoo.three_category()
    x = g.random_profile(rng)
    assert np.array_equal(g.phi(x), g.phi(x.copy()))


def test_jacobian_of_constant_map_is_zero():
    g = pop_game(lambda x: np.array([1.0, 2.0, 3.0, 4.0]))
    assert np.array_equal(jacobian(g, g.uniform()), np.zeros((4, 4)))


def test_jacobian_recovers_linear_map(rng):
    A = rng.normal(size=(5, 5))
    b = rng.normal(size=5)
    g = pop_game(lambda x: -A @ x + b, sizes=(2, 3))
    for x in (g.uniform(), g.vertex([0, 2]), g.random_profile(rng)):
        assert np.allclose(jacobian(g, x), -A, atol=1e-6)


def test_jacobian_analytic_override_is_used():
    A = np.arange(16.0).reshape(4, 4)
    g = pop_game(lambda x: A @ x, jac=lambda x: A)
    assert np.array_equal(jacobian(g, g.uniform()), A)


@pytest.mark.parametrize("costs", [[Polynomial([0.0, 1.0]), Polynomial([1.0])], [Polynomial([0.2, 1.0]), Polynomial([0.0, 2.0]), Polynomial([1.0, 0.5])]])
def test_affine_congestion_jacobian_is_symmetric_nsd_on_tangent_space(rng, costs):
    # equal weights: with unequal weights J is only symmetric in the weighted metric
    demands = [RoutingDemand("a", "o", "d", 0.5), RoutingDemand("b", "o", "d", 0.5)]
    g = build_composite_congestion_game(Network.parallel(costs), demands)
    Q = tangent_space_basis(g)
    for _ in range(20):
        J = jacobian(g, g.random_profile(rng))
        assert np.allclose(J, J.T, atol=1e-7)
        assert np.linalg.eigvalsh(Q.T @ (0.5 * (J + J.T)) @ Q).max() <= 1e-7


def test_linear_composite_splittable_gradient_matches_finite_differences(rng):
    parts = [Participant("A", SPLIT, ("x", "y", "z")), Participant("B", POP, ("x", "y")), Participant("C", SPLIT, ("x", "y"))]
    A = rng.normal(size=(7, 7))
    b = rng.normal(size=7)
    comp = linear_composite(parts, A, b)
    g = GameSpec(tuple(parts), comp)
    numeric = SplittableGradient(lambda x: A @ x + b)
    worst = 0.0
    for _ in range(100):
        x = g.random_profile(rng)
        exact = g.phi(x)
        fd = numeric.numerical_gradient(g, x)
        for p, sl in zip(parts, g.slices):
            if p.category is SPLIT:
                worst = max(worst, np.linalg.norm(exact[sl] - fd[sl]) / max(1.0, np.linalg.norm(fd[sl])))
    assert worst <= 1e-5


def test_congestion_splittable_gradient_matches_finite_differences(rng):
    net = Network.parallel([Polynomial([0.1, 0.0, 0.0, 1.0]), Polynomial([0.3, 1.0, 0.5]), Polynomial([1.0])])
    demands = [
        RoutingDemand("s", "o", "d", 0.7, SPLIT),
        RoutingDemand("p", "o", "d", 0.5, POP),
        RoutingDemand("k", "o", "d", 0.4, ATOM),
    ]
    g = build_composite_congestion_game(net, demands)
    model = g.evaluation.model
    h = 1e-6
    worst = 0.0
    for _ in range(100):
        x = g.random_profile(rng)
        phi = g.phi(x)
        fd = np.empty(3)
        for c in range(3):
            e = np.zeros(g.dim)
            e[c] = h
            fd[c] = -(model.participant_cost(model.blocks(g, x + e), 0) - model.participant_cost(model.blocks(g, x - e), 0)) / (2 * h)
        worst = max(worst, np.linalg.norm(phi[:3] - fd) / max(1.0, np.linalg.norm(fd)))
    assert worst <= 1e-5


def test_non_splittable_linear_payoffs_need_zero_own_block():
    parts = [Participant("A", ATOM, ("x", "y")), Participant("B", ATOM, ("x", "y"))]
    with pytest.raises(GameError, match="'A'"):
        linear_composite(parts, np.eye(4), np.zeros(4))


def test_linear_composite_concavity_flag():
    parts = [Participant("A", SPLIT, ("x", "y"))]
    assert linear_composite(parts, -np.eye(2), np.zeros(2)).splittable_concave is True
    assert linear_composite(parts, np.eye(2), np.zeros(2)).splittable_concave is not True


def test_one_sided_differences_at_the_boundary():
    # Phi defined only on x >= 0: a central difference at 0 would read a negative coordinate
    g = pop_game(lambda x: np.sqrt(np.maximum(x, 0.0)) * 0 + x**2)
    J = jacobian(g, g.vertex([0, 1]))
    assert np.allclose(np.diag(J), [2.0, 0.0, 0.0, 2.0], atol=1e-5)


def test_pure_profiles_and_vertices():
    g = zoo.two_arc("III")
    assert g.n_pure_profiles() == 4
    assert [tuple(v) for v in g.pure_profiles()][1] == (1.0, 0.0, 0.0, 1.0)
    assert g.column_labels() == ["P1.1", "P1.2", "P2.1", "P2.2"]
