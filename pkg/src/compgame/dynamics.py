"""The six evolutionary dynamics, a guarded RK4 integrator and PC / Nash-stationarity checks."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field as dc_field
from enum import Enum
from typing import Callable

import numpy as np

from .core import GameSpec
from .equilibrium import best_reply_gaps
from .errors import GameError
from .simplex import EPS_SIMPLEX, project_simplex, project_tangent_cone

BR_TIE_BAND = 1e-9
REST_TOL = 1e-9
DEFAULT_DT = 1e-2


class DynamicsKind(str, Enum):
    RD = "rd"
    BNN = "bnn"
    SMITH = "smith"
    LP = "lp"
    GP = "gp"
    BR = "br"


def _rd(x, f):
    return x * (f - x @ f)


def _bnn(x, f):
    excess = np.maximum(f - x @ f, 0.0)
    return excess - x * excess.sum()


def _smith(x, f):
    gain = np.maximum(f[:, None] - f[None, :], 0.0)  # gain[p, q] = [f_p - f_q]^+
    return gain @ x - x * gain.sum(axis=0)


def _lp(x, f):
    return project_tangent_cone(x, f)


def _gp(x, f):
    return project_simplex(x + f) - x


def _is_best_reply(x, f):
    # every used choice within the tie band of the best payoff
    return bool(np.all(f[x > 0.0] >= f.max() - BR_TIE_BAND))


def _br_target(f):
    return int(np.nonzero(f >= f.max() - BR_TIE_BAND)[0][0])


def _br(x, f):
    # selection: stay put when x is already a best reply, else the lowest-index maximizer
    if _is_best_reply(x, f):
        return np.zeros_like(x)
    target = np.zeros_like(x)
    target[_br_target(f)] = 1.0
    return target - x


_FIELDS = {
    DynamicsKind.RD: _rd,
    DynamicsKind.BNN: _bnn,
    DynamicsKind.SMITH: _smith,
    DynamicsKind.LP: _lp,
    DynamicsKind.GP: _gp,
    DynamicsKind.BR: _br,
}


def field_from_phi(kind, game: GameSpec, x, phi) -> np.ndarray:
    rule = _FIELDS[DynamicsKind(kind)]
    x = np.asarray(x, dtype=float)
    return np.concatenate([rule(x[sl], phi[sl]) for sl in game.slices])


def field(kind, game: GameSpec, x) -> np.ndarray:
    """B_Phi(x) as a flat vector; every block sums to zero."""
    x = game.flatten(x)
    return field_from_phi(kind, game, x, game.phi(x))


@dataclass
class Trajectory:
    kind: DynamicsKind
    dt: float
    times: np.ndarray
    profiles: np.ndarray
    vi_residual: np.ndarray
    field_norm: np.ndarray
    pc: np.ndarray
    lyapunov: np.ndarray | None = None
    status: str = "completed"
    message: str = ""
    meta: dict = dc_field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.profiles[-1]

    def __len__(self):
        return len(self.times)


def guard(game: GameSpec, x: np.ndarray) -> np.ndarray:
    """Keep x in X: clamp tiny negatives when within tolerance, project otherwise."""
    out = np.empty_like(x)
    for sl in game.slices:
        b = x[sl]
        if b.min() >= -EPS_SIMPLEX and abs(b.sum() - 1.0) <= EPS_SIMPLEX:
            out[sl] = np.maximum(b, 0.0)
        else:
            out[sl] = project_simplex(b)
    return out


def integrate(
    kind,
    game: GameSpec,
    x0,
    dt: float = DEFAULT_DT,
    t_end: float = 10.0,
    lyapunov: Callable[[np.ndarray], float] | None = None,
    rest_tol: float = REST_TOL,
    diagnostics: bool = True,
) -> Trajectory:
    """Fixed-step classical RK4 on X with a post-step (and stage) simplex guard.

    Stops early at a rest point (|B|_inf <= rest_tol). A non-finite state or
    evaluation aborts the run; the trajectory up to the last valid step is
    returned with ``status == "aborted"``.
    """
    kind = DynamicsKind(kind)
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not t_end >= dt:
        raise ValueError("t_end must be at least dt")
    n_steps = int(round(t_end / dt))
    x = guard(game, game.flatten(x0).astype(float))

    def rhs(z):
        phi = game.phi(z)
        return field_from_phi(kind, game, z, phi), phi

    xs, vis, norms, pcs, lyap = [], [], [], [], []
    status, message = "completed", ""

    def record(z, b, phi):
        xs.append(z)
        if diagnostics:
            vis.append(float(best_reply_gaps(game, z, phi).sum()))
            norms.append(float(np.abs(b).max()))
            pcs.append([float(b[sl] @ phi[sl]) for sl in game.slices])
        if lyapunov is not None:
            lyap.append(float(lyapunov(z)))

    try:
        k1, phi = rhs(x)
        record(x, k1, phi)
        for _ in range(n_steps):
            if np.abs(k1).max() <= rest_tol:
                status, message = "rest point", "field norm below rest tolerance"
                break
            k2, _ = rhs(guard(game, x + 0.5 * dt * k1))
            k3, _ = rhs(guard(game, x + 0.5 * dt * k2))
            k4, _ = rhs(guard(game, x + dt * k3))
            x_new = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(x_new)):
                raise FloatingPointError("non-finite state")
            x = guard(game, x_new)
            k1, phi = rhs(x)
            record(x, k1, phi)
    except (FloatingPointError, GameError) as exc:
        status, message = "aborted", f"{type(exc).__name__}: {exc}"
        # drop a partially recorded step
        m = len(xs)
        vis, norms, pcs, lyap = vis[:m], norms[:m], pcs[:m], lyap[:m]

    m = min(len(xs), len(vis)) if diagnostics else len(xs)
    if lyapunov is not None:
        m = min(m, len(lyap))
    return Trajectory(
        kind=kind,
        dt=dt,
        times=dt * np.arange(m),
        profiles=np.array(xs[:m]),
        vi_residual=np.array(vis[:m]),
        field_norm=np.array(norms[:m]),
        pc=np.array(pcs[:m]).reshape(m, game.n) if diagnostics else np.empty((m, 0)),
        lyapunov=np.array(lyap[:m]) if lyapunov is not None else None,
        status=status,
        message=message,
    )


def write_trajectory_csv(traj: Trajectory, game: GameSpec, out=None) -> str:
    """CSV with header ``t, <participant.choice...>, vi_residual, field_norm, lyapunov``.

    Returns the text; also writes it to ``out`` (a text stream) when given.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", *game.column_labels(), "vi_residual", "field_norm", "lyapunov"])
    for k in range(len(traj)):
        row = [repr(float(traj.times[k]))]
        row += [repr(float(v)) for v in traj.profiles[k]]
        row.append(repr(float(traj.vi_residual[k])) if len(traj.vi_residual) else "")
        row.append(repr(float(traj.field_norm[k])) if len(traj.field_norm) else "")
        row.append(repr(float(traj.lyapunov[k])) if traj.lyapunov is not None else "")
        w.writerow(row)
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text


def pc_closed_form(kind, game: GameSpec, x, phi=None) -> np.ndarray:
    """Per-participant closed forms of <B^i, Phi^i>.

    RD: sum_p x_p (Phi_p - mean)^2; BNN: sum_p excess_p^2; Smith:
    sum_{p,q} x_q ([Phi_p - Phi_q]^+)^2; LP: |Pi_T Phi|^2; BR: Phi_p* - mean for
    the selected reply (0 at rest). GP has only the lower bound
    |Pi(x+Phi) - x|^2, which is what is returned.
    """
    kind = DynamicsKind(kind)
    x = game.flatten(x)
    if phi is None:
        phi = game.phi(x)
    out = []
    for sl in game.slices:
        xi, f = x[sl], phi[sl]
        mean = xi @ f
        if kind is DynamicsKind.RD:
            out.append(float(xi @ (f - mean) ** 2))
        elif kind is DynamicsKind.BNN:
            out.append(float((np.maximum(f - mean, 0.0) ** 2).sum()))
        elif kind is DynamicsKind.SMITH:
            gain = np.maximum(f[:, None] - f[None, :], 0.0)
            out.append(float((gain**2 @ xi).sum()))
        elif kind is DynamicsKind.LP:
            t = project_tangent_cone(xi, f)
            out.append(float(t @ t))
        elif kind is DynamicsKind.GP:
            d = project_simplex(xi + f) - xi
            out.append(float(d @ d))
        else:
            out.append(0.0 if _is_best_reply(xi, f) else float(f[_br_target(f)] - mean))
    return np.array(out)


@dataclass
class PCResult:
    inner: np.ndarray
    closed_form: np.ndarray
    block_norms: np.ndarray
    holds: bool


def check_pc(kind, game: GameSpec, x, zero_tol: float = 1e-10, active_norm: float = 1e-6) -> PCResult:
    """Per-participant <B^i(x), Phi^i(x)> and whether positive correlation holds at x."""
    x = game.flatten(x)
    phi = game.phi(x)
    b = field_from_phi(kind, game, x, phi)
    inner = np.array([b[sl] @ phi[sl] for sl in game.slices])
    norms = np.array([np.linalg.norm(b[sl]) for sl in game.slices])
    holds = bool(np.all(inner > -zero_tol) and np.all(inner[norms > active_norm] > 0.0))
    return PCResult(inner, pc_closed_form(kind, game, x, phi), norms, holds)


@dataclass
class StationarityReport:
    holds: bool
    checked: int
    skipped: int
    counterexamples: list = dc_field(default_factory=list)


def check_nash_stationarity(kind, game: GameSpec, sample_profiles, tol: float = 1e-8, interior: float = 1e-3):
    """Check |B(x)| <= tol  <=>  vi_residual(x) <= tol on the samples.

    For RD only interior samples (min component >= ``interior``) are judged;
    boundary samples are counted as skipped.
    """
    kind = DynamicsKind(kind)
    bad, checked, skipped = [], 0, 0
    for x in sample_profiles:
        x = game.flatten(x)
        if kind is DynamicsKind.RD and x.min() < interior:
            skipped += 1
            continue
        phi = game.phi(x)
        rest = np.linalg.norm(field_from_phi(kind, game, x, phi)) <= tol
        eq = best_reply_gaps(game, x, phi).sum() <= tol
        checked += 1
        if rest != eq:
            bad.append(x)
    return StationarityReport(not bad, checked, skipped, bad)
