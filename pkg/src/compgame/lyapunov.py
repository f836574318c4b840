"""Lyapunov candidates for the six dynamics and monotonicity checks along trajectories."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import GameSpec
from .dynamics import DynamicsKind, Trajectory
from .equilibrium import VERIFY_TOL, best_reply_gaps, project_profile
from .errors import ConfigurationError, DomainError

LYAP_REL_TOL = 1e-7


class LyapunovKind(str, Enum):
    POTENTIAL = "potential"
    RELATIVE_ENTROPY = "relative-entropy"
    BNN_EXCESS = "bnn-excess"
    SMITH_PAIRWISE = "smith-pairwise"
    HALF_SQUARED_DISTANCE = "half-squared-distance"
    GP_REGULARIZED_GAP = "gp-gap"
    BR_GAP = "br-gap"


# dynamics each candidate is known to decrease along (in dissipative games)
PAIRED = {
    DynamicsKind.RD: LyapunovKind.RELATIVE_ENTROPY,
    DynamicsKind.BNN: LyapunovKind.BNN_EXCESS,
    DynamicsKind.SMITH: LyapunovKind.SMITH_PAIRWISE,
    DynamicsKind.LP: LyapunovKind.HALF_SQUARED_DISTANCE,
    DynamicsKind.GP: LyapunovKind.GP_REGULARIZED_GAP,
    DynamicsKind.BR: LyapunovKind.BR_GAP,
}

ANCHORED = {LyapunovKind.RELATIVE_ENTROPY, LyapunovKind.HALF_SQUARED_DISTANCE}
NEEDS_C1 = {
    LyapunovKind.BNN_EXCESS,
    LyapunovKind.SMITH_PAIRWISE,
    LyapunovKind.GP_REGULARIZED_GAP,
    LyapunovKind.BR_GAP,
}


def increasing(kind) -> bool:
    return LyapunovKind(kind) is LyapunovKind.POTENTIAL


def check_anchor(game: GameSpec, anchor, tol: float = VERIFY_TOL) -> np.ndarray:
    if anchor is None:
        raise ConfigurationError("this Lyapunov kind needs an equilibrium anchor")
    a = game.flatten(anchor)
    r = float(best_reply_gaps(game, a).sum())
    if r > tol:
        raise ConfigurationError(f"anchor is not an equilibrium: vi_residual {r:.3e} > {tol:g}")
    return a


def relative_entropy(game: GameSpec, x, anchor) -> float:
    total = 0.0
    for p, sl in zip(game.participants, game.slices):
        a, b = anchor[sl], x[sl]
        supp = a > 0.0
        missing = supp & (b <= 0.0)
        if missing.any():
            c = p.choices[int(np.nonzero(missing)[0][0])]
            raise DomainError(f"participant {p.id!r}, choice {c!r}: anchor support not contained in support of x")
        total += float(a[supp] @ np.log(a[supp] / b[supp]))
    return total


def lyapunov_value(kind, game: GameSpec, x, anchor=None, phi=None) -> float:
    """H(x) for the given candidate. Anchored kinds take an already validated anchor."""
    kind = LyapunovKind(kind)
    x = game.flatten(x)
    if kind is LyapunovKind.POTENTIAL:
        return float(game.require_potential().W(x))
    if kind is LyapunovKind.RELATIVE_ENTROPY:
        return relative_entropy(game, x, game.flatten(anchor))
    if kind is LyapunovKind.HALF_SQUARED_DISTANCE:
        d = x - game.flatten(anchor)
        return 0.5 * float(d @ d)
    if phi is None:
        phi = game.phi(x)
    if kind is LyapunovKind.BR_GAP:
        return float(best_reply_gaps(game, x, phi).sum())
    if kind is LyapunovKind.GP_REGULARIZED_GAP:
        y = x + phi
        r = project_profile(game, y) - y
        return 0.5 * float(phi @ phi) - 0.5 * float(r @ r)
    total = 0.0
    for sl in game.slices:
        xi, f = x[sl], phi[sl]
        if kind is LyapunovKind.BNN_EXCESS:
            total += 0.5 * float((np.maximum(f - xi @ f, 0.0) ** 2).sum())
        else:
            # ordered pairs: sum_p x_p sum_q ([f_q - f_p]^+)^2
            gain = np.maximum(f[None, :] - f[:, None], 0.0)
            total += float(xi @ (gain**2).sum(axis=1))
    return total


def make_lyapunov(kind, game: GameSpec, anchor=None):
    """Callable x -> H(x) suitable for ``integrate(lyapunov=...)``.

    Off-domain points of the relative entropy map to NaN.
    """
    kind = LyapunovKind(kind)
    a = check_anchor(game, anchor) if kind in ANCHORED else None
    if kind is LyapunovKind.POTENTIAL:
        game.require_potential()

    def H(x):
        try:
            return lyapunov_value(kind, game, x, a)
        except DomainError:
            return float("nan")

    return H


@dataclass
class MonotonicityReport:
    kind: LyapunovKind
    dynamics: DynamicsKind | None
    values: np.ndarray
    max_adverse: float
    tol: float
    passed: bool
    certified: bool
    out_of_domain: int
    notes: list = field(default_factory=list)

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def as_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "dynamics": self.dynamics.value if self.dynamics else None,
            "h_start": float(self.values[0]) if len(self.values) else None,
            "h_end": float(self.values[-1]) if len(self.values) else None,
            "max_adverse_step": self.max_adverse,
            "tol": self.tol,
            "verdict": self.verdict,
            "certified_pairing": self.certified,
            "out_of_domain_steps": self.out_of_domain,
            "notes": list(self.notes),
        }


def monotonicity_report(kind, trajectory: Trajectory, game: GameSpec, anchor=None, values=None) -> MonotonicityReport:
    """Largest adverse per-step change of H along the trajectory.

    Adverse means an increase, except for the potential which should not
    decrease. PASS when the largest adverse change is at most
    1e-7 * (1 + |H(x_0)|). Steps where the relative entropy is undefined are
    counted and skipped.
    """
    kind = LyapunovKind(kind)
    if values is None:
        H = make_lyapunov(kind, game, anchor)
        values = np.array([H(x) for x in trajectory.profiles])
    values = np.asarray(values, dtype=float)
    sign = -1.0 if increasing(kind) else 1.0
    steps = sign * np.diff(values)
    valid = np.isfinite(steps)
    max_adverse = float(steps[valid].max()) if valid.any() else 0.0
    h0 = values[0] if np.isfinite(values[0]) else 0.0
    tol = LYAP_REL_TOL * (1.0 + abs(float(h0)))
    dyn = trajectory.kind
    certified = kind is LyapunovKind.POTENTIAL or PAIRED.get(dyn) is kind
    notes = []
    if not certified:
        notes.append(f"{kind.value} is not the certified candidate for {dyn.value}")
    if kind in NEEDS_C1:
        notes.append("assumes Phi is continuously differentiable")
    out = int(np.count_nonzero(~np.isfinite(values)))
    if out:
        notes.append(f"{out} steps outside the domain of the candidate")
    return MonotonicityReport(kind, dyn, values, max_adverse, tol, max_adverse <= tol, certified, out, notes)
