"""Sphere-constrained descent with explicit strict-saddle escape.

Riemannian gradient descent with Armijo backtracking; near stationarity the
smallest tangent-Hessian eigenpair is computed and, when negative past
tolerance, a curvilinear step along the eigenvector direction restores
descent. Deterministic under the option seed.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .errors import ContractError, DegenerateStepError, IterationError, StallError
from .landscape import min_tangent_eig
from .signals import as_unit

__all__ = ["SolveStatus", "SolveOptions", "Objective", "OptReport", "retract", "descend"]

_MIN_STEP = 1e-16


class SolveStatus(str, Enum):
    CONVERGED_SECOND_ORDER = "ConvergedSecondOrder"
    CONVERGED_FIRST_ORDER = "ConvergedFirstOrder"
    MAX_ITERS = "MaxIters"


@dataclass(frozen=True)
class SolveOptions:
    max_iters: int = 2000
    grad_tol: float = 1e-8
    curvature_tol: float = 1e-8       # eigensolver residual tolerance
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    initial_step: float = 1.0
    escape_check_period: int = 10
    min_eig_tol: float = 1e-6         # negativity threshold for escapes
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.backtrack_factor < 1.0):
            raise ContractError(f"backtrack_factor must be in (0,1), got {self.backtrack_factor}")
        for name in ("grad_tol", "curvature_tol", "armijo_c", "initial_step", "min_eig_tol"):
            if getattr(self, name) <= 0.0:
                raise ContractError(f"{name} must be positive")


@dataclass(frozen=True)
class Objective:
    """Smooth objective on the sphere given by callables.

    ``value(q)`` and ``grad(q)`` take a unit vector; ``grad`` must return a
    tangent vector (the Riemannian gradient). ``hess_vec(q, v)`` applies the
    Riemannian Hessian to a tangent vector.
    """

    value: Callable
    grad: Callable
    hess_vec: Callable


@dataclass
class OptReport:
    q_final: np.ndarray
    objective_trace: list = field(default_factory=list)
    grad_norm_trace: list = field(default_factory=list)
    escape_events: list = field(default_factory=list)  # (iteration, lambda_min)
    status: SolveStatus = SolveStatus.MAX_ITERS

    @property
    def iterations(self):
        return len(self.objective_trace) - 1


def retract(q, step, tangent_tol=1e-8):
    """Metric projection retraction: normalize q + step back to the sphere."""
    q = np.asarray(q, dtype=float)
    step = np.asarray(step, dtype=float)
    if abs(np.dot(q, step)) > tangent_tol * max(1.0, np.linalg.norm(step)):
        raise ContractError(f"step is not tangent at q: <q, step> = {np.dot(q, step):g}")
    if not np.any(step):
        return q.copy()
    cand = q + step
    n = np.linalg.norm(cand)
    if n < 1e-12:
        raise DegenerateStepError("retraction target is numerically zero")
    return cand / n


def _normalized(v):
    return v / np.linalg.norm(v)


def _escape_step(value, q, f, v, lam, backtrack):
    """Curvilinear step along the negative-curvature direction.

    Step size starts at the |lambda_min| scale; the sign is chosen by the
    lower objective at the initial step, exact ties keeping +v.
    """
    s = max(abs(lam), _MIN_STEP * 10)
    fp = value(_normalized(q + s * v))
    fm = value(_normalized(q - s * v))
    d = v if fp <= fm else -v
    while s > _MIN_STEP:
        qn = _normalized(q + s * d)
        fn = value(qn)
        if fn < f:
            return qn, fn, True
        s *= backtrack
    return q, f, False


def descend(objective: Objective, q0, opts: SolveOptions = SolveOptions()):
    """Minimize ``objective`` over the sphere from unit ``q0``.

    Monotone by construction: every accepted step satisfies an Armijo
    decrease (gradient steps) or a strict decrease (escape steps). Second-
    order convergence requires both a small gradient and a tangent-Hessian
    bounded below by -min_eig_tol; first-order convergence is reported when
    the eigensolver fails at a stationary point, or when descent exhausts
    the objective's fp resolution before grad_tol with no negative curvature
    left. Raises StallError, carrying the partial traces, when neither the
    gradient nor an escape direction yields any decrease.
    """
    q = as_unit(q0).copy()
    f = objective.value(q)
    report = OptReport(q_final=q, objective_trace=[f], status=SolveStatus.MAX_ITERS)
    t = opts.initial_step
    prev_q = prev_g = None  # secant pair for the Barzilai-Borwein trial step
    # Plateau probes guard against the slow 1/t crawl toward balanced
    # saddles, where the gradient stays well above grad_tol for thousands of
    # iterations; fruitless probes back off geometrically.
    probe_period = opts.escape_check_period

    for it in range(1, opts.max_iters + 1):
        g = objective.grad(q)
        gn = float(np.linalg.norm(g))
        report.grad_norm_trace.append(gn)

        near_stationary = gn <= opts.grad_tol
        periodic_probe = (
            not near_stationary
            and it % opts.escape_check_period == 0
            and gn <= 10.0 * opts.grad_tol
        )
        plateau_probe = False
        if not near_stationary and not periodic_probe and it % probe_period == 0:
            w = opts.escape_check_period
            if len(report.objective_trace) > w:
                recent = report.objective_trace[-1 - w] - f
                plateau_probe = recent <= 1e-4 * abs(f)
        if near_stationary or periodic_probe or plateau_probe:
            try:
                lam, v = min_tangent_eig(
                    lambda u: objective.hess_vec(q, u),
                    q,
                    tol=opts.curvature_tol,
                    seed=opts.seed + it,
                )
            except IterationError:
                if near_stationary:
                    report.status = SolveStatus.CONVERGED_FIRST_ORDER
                    report.q_final = q
                    return report
                lam, v = None, None
            if lam is not None:
                if lam < -opts.min_eig_tol:
                    q2, f2, ok = _escape_step(
                        objective.value, q, f, v, lam, opts.backtrack_factor
                    )
                    report.escape_events.append((it, lam))
                    if not ok:
                        raise StallError(
                            f"no decrease along the escape direction at iteration {it}",
                            report=report,
                        )
                    q, f = q2, f2
                    probe_period = opts.escape_check_period
                    prev_q = prev_g = None
                    report.objective_trace.append(f)
                    report.q_final = q
                    continue
                if near_stationary:
                    report.status = SolveStatus.CONVERGED_SECOND_ORDER
                    report.q_final = q
                    return report
                if plateau_probe:
                    probe_period = min(2 * probe_period, 64 * opts.escape_check_period)

        # Armijo backtracking. The trial step comes from the secant pair of
        # the previous accepted step (Barzilai-Borwein); plain step recycling
        # parks at the edge of stability where the contraction stalls, while
        # the secant step adapts to the local curvature scale in one move.
        if prev_g is not None:
            s = q - prev_q
            dg = g - prev_g
            sy = float(np.dot(s, dg))
            if sy > 0.0:
                t = float(np.dot(s, s)) / sy
            else:
                t = t / opts.backtrack_factor
        prev_q, prev_g = q, g
        accepted = False
        while t > _MIN_STEP:
            cand = q - t * g
            qn = cand / np.linalg.norm(cand)
            fn = objective.value(qn)
            # strict decrease required: once t*gn^2 rounds below the value's
            # fp resolution the Armijo threshold alone would accept no-ops
            if fn < f and fn <= f - opts.armijo_c * t * gn * gn:
                q, f = qn, fn
                accepted = True
                break
            t *= opts.backtrack_factor
        if not accepted:
            # The objective has reached its fp resolution along the gradient
            # direction. Certify curvature: escape if strictly negative,
            # otherwise report the point at the precision achieved.
            try:
                lam, v = min_tangent_eig(
                    lambda u: objective.hess_vec(q, u),
                    q,
                    tol=opts.curvature_tol,
                    seed=opts.seed + it,
                )
            except IterationError:
                raise StallError(
                    f"line search found no decrease at iteration {it} "
                    f"(grad norm {gn:g}) and the curvature check did not converge",
                    report=report,
                ) from None
            if lam < -opts.min_eig_tol:
                q2, f2, ok = _escape_step(
                    objective.value, q, f, v, lam, opts.backtrack_factor
                )
                report.escape_events.append((it, lam))
                if not ok:
                    raise StallError(
                        f"no decrease along either the gradient or the escape "
                        f"direction at iteration {it}",
                        report=report,
                    )
                q, f = q2, f2
                probe_period = opts.escape_check_period
                prev_q = prev_g = None
                report.objective_trace.append(f)
                report.q_final = q
                continue
            report.status = (
                SolveStatus.CONVERGED_SECOND_ORDER
                if gn <= opts.grad_tol
                else SolveStatus.CONVERGED_FIRST_ORDER
            )
            report.q_final = q
            return report
        report.objective_trace.append(f)
        report.q_final = q

    report.status = SolveStatus.MAX_ITERS
    report.q_final = q
    return report
