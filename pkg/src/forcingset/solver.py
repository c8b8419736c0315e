"""Newton training, the half-space constrained quadratic step, and one-step
Newton leave-one-out updates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import (
    ConvergenceError,
    DegenerateConstraintError,
    NumericalError,
    SingularSystemError,
)
from .model import (
    LOGISTIC,
    Claim,
    Dataset,
    Instance,
    ModelParams,
    gradient,
    hessian,
    log_odds,
    loss_and_gradient,
    total_loss,
)

ARMIJO_C = 1e-4
DEFAULT_INNER_ITERS = 20
STEP_TOL = 1e-8


def factorize(H):
    """Cholesky factor of an SPD matrix; raises ``SingularSystemError``."""
    try:
        return linalg.cho_factor(H, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(f"singular system: {exc}") from None


def solve_spd(H, b):
    return linalg.cho_solve(factorize(H), b)


def train(
    dataset: Dataset,
    alpha: float,
    tol: float = 1e-8,
    max_iter: int = 100,
    init: ModelParams | None = None,
    loss=LOGISTIC,
) -> ModelParams:
    """Minimize the regularized mean loss by damped Newton with Armijo
    backtracking.  ``init`` warm-starts the iteration."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if init is None:
        params = ModelParams.zeros(dataset.dim, alpha)
    else:
        params = ModelParams(init.theta, alpha)
    f, g = loss_and_gradient(dataset, params, loss)
    gnorm = float(np.linalg.norm(g))
    for _ in range(max_iter):
        if gnorm <= tol:
            return params
        step = -solve_spd(hessian(dataset, params, loss), g)
        slope = float(np.dot(g, step))
        t = 1.0
        while True:
            cand = params.replace(params.theta + t * step)
            f_new, g_new = loss_and_gradient(dataset, cand, loss)
            if f_new <= f + ARMIJO_C * t * slope or t < 1e-12:
                break
            # near the optimum f is flat to rounding; trust a full step that
            # halves the gradient norm
            if t == 1.0 and np.linalg.norm(g_new) <= 0.5 * gnorm and f_new <= f + 1e-12 * abs(f):
                break
            t *= 0.5
        if t < 1e-12 and f_new > f:
            # no further descent possible in floating point
            break
        params, f, g = cand, f_new, g_new
        gnorm = float(np.linalg.norm(g))
    if gnorm <= tol:
        return params
    raise ConvergenceError("training did not converge", gnorm)


@dataclass(frozen=True)
class QuadraticSurrogate:
    """Second-order Taylor model ``f(theta)`` of the training loss at ``center``."""

    center: ModelParams
    value: float
    grad: np.ndarray
    hess: np.ndarray

    def __call__(self, theta) -> float:
        d = np.asarray(theta, dtype=np.float64) - self.center.theta
        return float(self.value + d @ self.grad + 0.5 * d @ self.hess @ d)

    def gradient_at(self, theta) -> np.ndarray:
        d = np.asarray(theta, dtype=np.float64) - self.center.theta
        return self.grad + self.hess @ d


def build_surrogate(dataset: Dataset, params: ModelParams, loss=LOGISTIC) -> QuadraticSurrogate:
    value, g = loss_and_gradient(dataset, params, loss)
    return QuadraticSurrogate(params, value, g, hessian(dataset, params, loss))


@dataclass(frozen=True)
class KktSolution:
    theta_prime: np.ndarray
    multiplier: float
    constraint_active: bool


def solve_halfspace_qp(surrogate: QuadraticSurrogate, a, b: float) -> KktSolution:
    """Exact minimizer of the surrogate over ``{theta : a . theta >= b}``."""
    a = np.asarray(a, dtype=np.float64)
    factor = factorize(surrogate.hess)
    theta_u = surrogate.center.theta - linalg.cho_solve(factor, surrogate.grad)
    if not np.all(np.isfinite(theta_u)):
        raise NumericalError("numerical failure: non-finite Newton point")
    slack = b - float(a @ theta_u)
    if slack <= 0:
        return KktSolution(theta_u, 0.0, False)
    Hinv_a = linalg.cho_solve(factor, a)
    curv = float(a @ Hinv_a)
    if curv <= 1e-14:
        raise DegenerateConstraintError(f"degenerate constraint (a'H^-1 a = {curv:.3e})")
    lam = slack / curv
    theta = theta_u + lam * Hinv_a
    if not np.all(np.isfinite(theta)):
        raise NumericalError("numerical failure: non-finite constrained point")
    return KktSolution(theta, lam, True)


def solve_constrained(surrogate: QuadraticSurrogate, claim: Claim) -> KktSolution:
    """Minimize the surrogate subject to log-odds toward the counter class
    being at least ``claim.epsilon``."""
    _, a = log_odds(claim.x_star, surrogate.center, claim.decided_class)
    return solve_halfspace_qp(surrogate, a, claim.epsilon)


def kkt_residuals(surrogate: QuadraticSurrogate, a, b: float, sol: KktSolution) -> dict:
    """Violation of each KKT condition; all are zero at an exact solution."""
    a = np.asarray(a, dtype=np.float64)
    g = surrogate.gradient_at(sol.theta_prime)
    gap = float(a @ sol.theta_prime) - b
    return {
        "stationarity": float(np.max(np.abs(g - sol.multiplier * a))),
        "primal": max(0.0, -gap),
        "dual": max(0.0, -sol.multiplier),
        "complementarity": abs(sol.multiplier * gap),
    }


def counterfactual_params(
    dataset: Dataset,
    params: ModelParams,
    claim: Claim,
    inner_iters: int = DEFAULT_INNER_ITERS,
    loss=LOGISTIC,
) -> ModelParams:
    """Minimize the true loss subject to the counterfactual constraint by
    repeated surrogate solves.

    The first round jumps to the surrogate solution, which is feasible.
    Later rounds backtrack on the true loss along the segment toward the next
    surrogate solution; the segment stays feasible because the constraint is
    a half-space.
    """
    if inner_iters < 1:
        raise ValueError("inner_iters must be >= 1")
    _, a = log_odds(claim.x_star, params, claim.decided_class)
    b = claim.epsilon
    current = params
    f = None
    for it in range(inner_iters):
        sur = build_surrogate(dataset, current, loss)
        sol = solve_halfspace_qp(sur, a, b)
        step = sol.theta_prime - current.theta
        if np.linalg.norm(step) <= STEP_TOL:
            break
        if it == 0 or float(a @ current.theta) < b:
            current = current.replace(sol.theta_prime)
            f = None
            continue
        if f is None:
            f = sur.value
        slope = float(sur.grad @ step)
        t = 1.0
        while True:
            cand = current.replace(current.theta + t * step)
            f_new = total_loss(dataset, cand, loss)
            if f_new <= f + ARMIJO_C * t * min(slope, 0.0) or t < 1e-10:
                break
            t *= 0.5
        if f_new > f:
            break
        current, f = cand, f_new
    return current


def one_step_newton_remove(
    dataset: Dataset, params: ModelParams, removed: Instance, loss=LOGISTIC
) -> ModelParams:
    """Approximate the optimum after deleting ``removed`` with one Newton step
    ``theta + H^-1 grad_l(removed) / n'``, where ``n'`` and ``H`` refer to the
    active set that still contains ``removed``."""
    if not dataset.is_active(removed.id):
        raise ValueError(f"instance {removed.id} is not active")
    g = gradient(removed, params, loss)
    if not np.any(g):
        return params
    step = solve_spd(hessian(dataset, params, loss), g) / dataset.n_active
    return params.replace(params.theta + step)


def newton_refine(dataset: Dataset, params: ModelParams, loss=LOGISTIC) -> ModelParams:
    """One full Newton step on the current training set (the unconstrained
    minimizer of the quadratic surrogate at ``params``)."""
    sur = build_surrogate(dataset, params, loss)
    return params.replace(params.theta - solve_spd(sur.hess, sur.grad))


def retrain_remove(
    dataset: Dataset, params: ModelParams, removed: Instance, tol: float = 1e-10, loss=LOGISTIC
) -> ModelParams:
    """Exact optimum after deleting ``removed``, warm-started at ``params``."""
    return train(dataset.remove(removed.id), params.alpha, tol=tol, init=params, loss=loss)
