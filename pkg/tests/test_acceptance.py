"""Acceptance criteria, one test each, at the stated tolerances.

Every test records a single ``PASS criterion N: ...`` or ``FAIL criterion N: ...``
line (repeated in the pytest terminal summary) and then asserts it.
"""
import itertools
import time

import numpy as np
from conftest import ACCEPTANCE_LINES

from compgame import zoo
from compgame.core import Category
from compgame.dynamics import DynamicsKind, check_nash_stationarity, check_pc, field, integrate
from compgame.equilibrium import (
    check_concavity,
    check_dissipative,
    check_potential,
    equilibrium_representations,
    maximize_potential,
    sne_check,
    solve_vi,
    vi_residual,
)
from compgame.lyapunov import PAIRED, LyapunovKind, lyapunov_value, make_lyapunov, monotonicity_report
from compgame.simplex import project_simplex, project_tangent_cone

ALL = list(DynamicsKind)
POP, SPLIT, ATOM = Category.POPULATION, Category.ATOMIC_SPLITTABLE, Category.ATOMIC_NONSPLITTABLE


def verdict(n, checks):
    """checks: list of (ok, text). Records one line and asserts every check."""
    ok = all(c for c, _ in checks)
    failed = [t for c, t in checks if not c]
    detail = "; ".join(failed) if failed else "; ".join(t for _, t in checks)
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def golden_cases():
    cases = [("I", [1.0, 0.0, 1.0, 0.0]), ("II", [2 / 3, 1 / 3, 2 / 3, 1 / 3])]
    return cases + [("III", [1.0, 0.0, t, 1.0 - t]) for t in (0.0, 0.5, 1.0)]


def sample_profile(g, rng):
    """Mostly interior, sometimes on a face or at a vertex."""
    u = rng.random()
    if u < 0.6:
        return g.random_profile(rng)
    if u < 0.85:
        x = g.random_profile(rng)
        for sl in g.slices:
            if sl.stop - sl.start > 1 and rng.random() < 0.7:
                b = x[sl]
                b[rng.integers(len(b))] = 0.0
                x[sl] = b / b.sum()
        return x
    return g.vertex([rng.integers(k) for k in g.sizes])


def game_zoo(rng):
    games = [zoo.two_arc(f) for f in ("I", "II", "III")] + [zoo.three_category(), zoo.affine_parallel()]
    for _ in range(3):
        games.append(zoo.random_mixed_game(rng))
        games.append(zoo.random_linear_game(rng, [POP, POP], [3, 2]))
        games.append(zoo.random_linear_game(rng, [SPLIT, SPLIT], [2, 3]))
        games.append(zoo.random_table_game(rng, [2, 3]))
        games.append(zoo.random_parallel_affine(rng))
    return games


def test_criterion_1_golden_values():
    checks = []
    for fw, x in golden_cases():
        r = vi_residual(zoo.two_arc(fw), x)
        checks.append((r <= 1e-8, f"framework {fw} at {np.round(x, 4).tolist()}: vi {r:.1e} (<= 1e-8)"))
    g = zoo.two_arc("I")
    target = np.array([1.0, 0.0, 1.0, 0.0])
    for kind in ("smith", "bnn"):
        t0 = time.perf_counter()
        traj = integrate(kind, g, g.uniform(), dt=1e-2, t_end=50.0)
        elapsed = time.perf_counter() - t0
        dist = float(np.linalg.norm(traj.final - target))
        checks.append((dist <= 1e-4, f"{kind} distance to equilibrium at t=50: {dist:.3e} (<= 1e-4)"))
        checks.append((elapsed < 5.0, f"{kind} runtime {elapsed:.2f}s (< 5s)"))
    verdict(1, checks)


def test_criterion_2_affine_potential():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    checks = []
    for k in range(3):
        g = zoo.random_parallel_affine(rng)
        model = g.evaluation.model
        shape = f"instance {k} ({len(model.network.arcs)} arcs, counts {[len(model.fluid) - len(model.splittable), len(model.splittable), len(model.atomic)]})"
        pot = check_potential(g, 100, rng=rng)
        checks.append((pot.worst_defect <= 1e-5, f"{shape}: potential defect {pot.worst_defect:.1e} (<= 1e-5)"))
        best = maximize_potential(g, rng=rng)
        checks.append((best.vi_residual is not None and best.vi_residual <= 1e-6, f"{shape}: maximizer vi {best.vi_residual:.1e} (<= 1e-6)"))
        conc = check_concavity(g, 200, rng=rng, tol=1e-9)
        checks.append((conc.passed, f"{shape}: midpoint concavity violation {conc.worst_violation:.1e} (<= 1e-9)"))
    elapsed = time.perf_counter() - t0
    checks.append((elapsed < 30.0, f"runtime {elapsed:.1f}s (< 30s)"))
    verdict(2, checks)


def test_criterion_3_positive_correlation():
    rng = np.random.default_rng(3)
    games = game_zoo(rng)
    worst_inner, strict_bad, closed_err, n = np.inf, 0, 0.0, 0
    for s in range(1000):
        g = games[s % len(games)]
        x = sample_profile(g, rng)
        for kind in ALL:
            r = check_pc(kind, g, x)
            worst_inner = min(worst_inner, float(r.inner.min()))
            strict_bad += int(np.any(r.inner[r.block_norms > 1e-6] <= 0.0))
            if kind in (DynamicsKind.RD, DynamicsKind.LP, DynamicsKind.BNN):
                closed_err = max(closed_err, float(np.abs(r.inner - r.closed_form).max()))
        n += 1
    verdict(3, [
        (worst_inner >= -1e-10, f"{n} samples x 6 dynamics: min <B,Phi> {worst_inner:.1e} (>= -1e-10)"),
        (strict_bad == 0, f"non-positive inner products with |B| > 1e-6: {strict_bad}"),
        (closed_err <= 1e-10, f"closed-form mismatch (RD, LP, BNN) {closed_err:.1e} (<= 1e-10)"),
    ])


def exact_equilibria():
    out = [(zoo.two_arc(fw), np.array(x)) for fw, x in golden_cases()]
    for seed in range(6):
        g, x_star = zoo.dissipative_game(seed, (3, 2), strict=seed % 2 == 0)
        out.append((g, x_star))
    return out


def test_criterion_4_nash_stationarity():
    rng = np.random.default_rng(4)
    eqs = exact_equilibria()
    checks = []
    for kind in ALL:
        bad = checked = skipped = 0
        for s in range(200):
            if s % 4 == 0:
                g, x = eqs[(s // 4) % len(eqs)]
            else:
                g = eqs[s % len(eqs)][0]
                x = sample_profile(g, rng)
            rep = check_nash_stationarity(kind, g, [x])
            bad += len(rep.counterexamples)
            checked += rep.checked
            skipped += rep.skipped
        checks.append((bad == 0, f"{kind.value}: {bad} mismatches in {checked} checked ({skipped} skipped)"))
    g = zoo.two_arc("I")
    x = g.vertex((1, 1))
    rest = float(np.abs(field("rd", g, x)).max())
    vi = vi_residual(g, x)
    checks.append((rest == 0.0 and vi > 1e-8, f"RD boundary rest point {x.tolist()}: |B| = {rest:g}, vi {vi:.2f}"))
    verdict(4, checks)


def dissipative_suite():
    out = []
    for seed in (31, 32, 33):
        g, x_star = zoo.dissipative_game(seed, (3, 3), strict=True)
        d = check_dissipative(g, pairs=200, rng=seed)
        if d.dissipative and d.strictly:
            out.append((g, x_star))
    return out


def test_criterion_5_lyapunov():
    checks = []
    games = dissipative_suite()
    checks.append((len(games) == 3, f"{len(games)} certified strictly dissipative games"))
    for dyn in ALL:
        kind = PAIRED[dyn]
        worst, worst_tol, ok = -np.inf, 0.0, True
        for g, x_star in games:
            anchor = x_star if kind in (LyapunovKind.RELATIVE_ENTROPY, LyapunovKind.HALF_SQUARED_DISTANCE) else None
            traj = integrate(dyn, g, g.uniform(), t_end=10.0, lyapunov=make_lyapunov(kind, g, anchor))
            rep = monotonicity_report(kind, traj, g, anchor, values=traj.lyapunov)
            ok &= rep.passed
            if rep.max_adverse - rep.tol > worst - worst_tol:
                worst, worst_tol = rep.max_adverse, rep.tol
        checks.append((ok, f"{kind.value} along {dyn.value}: max adverse step {worst:.1e} (<= {worst_tol:.1e})"))
    rng = np.random.default_rng(5)
    for kind in ("bnn-excess", "smith-pairwise", "br-gap"):
        at_eq = max(lyapunov_value(kind, g, x) for g, x in exact_equilibria())
        off = min(lyapunov_value(kind, g, g.random_profile(rng)) for g, _ in games for _ in range(100))
        checks.append((at_eq <= 1e-10 and off > 1e-6, f"{kind}: max on equilibria {at_eq:.1e} (<= 1e-10), min off equilibria {off:.1e} (> 1e-6)"))
    for k in range(2):
        g = zoo.random_parallel_affine(rng)
        for dyn in ALL:
            traj = integrate(dyn, g, g.random_profile(rng), t_end=10.0, lyapunov=g.potential.W)
            rep = monotonicity_report("potential", traj, g, values=traj.lyapunov)
            checks.append((rep.passed, f"potential along {dyn.value} (affine instance {k}): max decrease {rep.max_adverse:.1e} (<= {rep.tol:.1e})"))
    verdict(5, checks)


def test_criterion_6_vi_representations():
    rng = np.random.default_rng(6)
    games = game_zoo(rng)
    eqs = exact_equilibria()
    disagree = inconclusive = 0
    for s in range(1000):
        if s % 10 == 0:
            g, x = eqs[(s // 10) % len(eqs)]
        else:
            g = games[s % len(games)]
            x = sample_profile(g, rng)
        a = equilibrium_representations(g, x).agree()
        disagree += a is False
        inconclusive += a is None
    link = 0.0
    delta = 1e-6
    for _ in range(100):
        x = rng.dirichlet(np.ones(4))
        if rng.random() < 0.5:
            x[rng.integers(4)] = 0.0
            x /= x.sum()
        f = rng.normal(size=4)
        link = max(link, float(np.linalg.norm((project_simplex(x + delta * f) - x) / delta - project_tangent_cone(x, f))))
    verdict(6, [
        (disagree == 0, f"1000 profiles: {disagree} verdict disagreements ({inconclusive} in the inconclusive band)"),
        (link <= 1e-4, f"LP/GP limit link at delta=1e-6: {link:.1e} (<= 1e-4)"),
    ])


def test_criterion_7_dissipative_structure():
    rng = np.random.default_rng(7)
    checks = []
    mismatch = total = 0
    for seed in (41, 42):
        g, x_star = zoo.dissipative_game(seed, (3, 2), strict=False, rank=2, skew=seed == 41)
        eqs = [x_star] + [solve_vi(g, g.random_profile(rng)).x for _ in range(2)]
        for x in eqs + [g.random_profile(rng) for _ in range(10)]:
            sne = sne_check(g, x, samples=100, rng=rng).passed
            ne = vi_residual(g, x) <= 1e-8
            mismatch += sne != ne
            total += 1
    checks.append((mismatch == 0, f"SNE vs NE on {total} profiles: {mismatch} mismatches"))
    # without the skew part and with a rank-one S the equilibria form a continuum
    g, _ = zoo.dissipative_game(43, (3, 3), strict=False, rank=1, support=1.0, skew=False)
    eqs = [solve_vi(g, g.random_profile(rng)).x for _ in range(4)]
    worst = max(vi_residual(g, lam * x + (1 - lam) * y) for x, y in itertools.combinations(eqs, 2) for lam in (0.25, 0.5, 0.75))
    spread = max(np.linalg.norm(x - y) for x, y in itertools.combinations(eqs, 2))
    checks.append((spread > 0.1, f"equilibria found from 4 starts are distinct (spread {spread:.2f})"))
    checks.append((worst <= 1e-6, f"convex combinations of 4 equilibria (spread {spread:.2f}): worst vi {worst:.1e} (<= 1e-6)"))
    for seed in (44, 45):
        g, _ = zoo.dissipative_game(seed, (3, 2, 2), strict=True)
        sols = [solve_vi(g, g.random_profile(rng)).x for _ in range(10)]
        dist = max(np.linalg.norm(x - y) for x, y in itertools.combinations(sols, 2))
        checks.append((dist <= 1e-5, f"strict game {seed}: 10 starts, max pairwise distance {dist:.1e} (<= 1e-5)"))
    verdict(7, checks)


def test_criterion_8_integrator_order():
    checks = []
    for seed in (51, 52, 53):
        g, _ = zoo.dissipative_game(seed, (3, 2), strict=True)
        x0 = g.uniform()

        def terminal(dt):
            return integrate("rd", g, x0, dt=dt, t_end=2.0, rest_tol=0.0, diagnostics=False).final

        ref = terminal(1e-4)
        e1, e2 = (np.linalg.norm(terminal(dt) - ref) for dt in (0.2, 0.1))
        ratio = e1 / e2
        checks.append((8.0 <= ratio <= 32.0, f"RD game {seed}: error ratio {ratio:.1f} in [8, 32]"))
    verdict(8, checks)
