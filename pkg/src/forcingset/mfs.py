"""Iterative construction of a minimal forcing subset (MFS).

Each round solves the counterfactual problem on the current training set,
removes the instance whose loss rises the most under the counterfactual
parameters, and updates the unconstrained parameters either by a one-step
Newton approximation or by exact retraining.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import StaleClaimError
from .model import (
    Claim,
    Dataset,
    ModelParams,
    class_probability,
    decision_value,
    predict,
    sample_losses,
    total_loss,
)
from .solver import (
    DEFAULT_INNER_ITERS,
    counterfactual_params,
    newton_refine,
    one_step_newton_remove,
    train,
)

SCHEMA_VERSION = "1.0"

UPDATE_MODES = ("newton-approx", "exact-retrain")
EXIT_REASONS = ("loss-gap-closed", "decision-flipped", "cap-reached", "no-positive-score")

# log-odds magnitude treated as "on the boundary" when judging a retrain
BOUNDARY_TOL = 1e-3


@dataclass(frozen=True)
class MfsConfig:
    epsilon: float = 0.1
    delta: float = 1e-4
    max_set_size: int | None = None  # None: a quarter of the training set
    update_mode: str = "newton-approx"
    inner_iters: int = DEFAULT_INNER_ITERS
    alpha: float = 0.01
    train_tol: float = 1e-10
    recenter: bool = True

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if not self.delta > 0:
            raise ValueError("delta must be > 0")
        if self.max_set_size is not None and self.max_set_size < 1:
            raise ValueError("max_set_size must be positive")
        if self.update_mode not in UPDATE_MODES:
            raise ValueError(f"update_mode must be one of {UPDATE_MODES}")
        if self.inner_iters < 1:
            raise ValueError("inner_iters must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")

    def cap_for(self, n: int) -> int:
        cap = max(1, n // 4) if self.max_set_size is None else self.max_set_size
        if cap > n - 1:
            raise ValueError(f"max_set_size {cap} exceeds n - 1 = {n - 1}")
        return cap


@dataclass(frozen=True)
class MfsStep:
    selected_id: int
    score: float
    loss_unconstrained: float
    loss_constrained: float
    confidence_at_target: float


@dataclass(frozen=True)
class MfsResult:
    steps: tuple[MfsStep, ...]
    exit_reason: str
    flipped_on_retrain: bool
    initial_confidence: float
    final_loss_gap: float
    retrain_log_odds: float  # toward the counter class, after exact retrain on D \ S
    claim: Claim
    config: MfsConfig
    seed: int = 0

    @property
    def selected_ids(self) -> list[int]:
        return [s.selected_id for s in self.steps]

    def __len__(self):
        return len(self.steps)

    @property
    def forces(self) -> bool:
        """Retraining without S flips the decision or lands on the boundary."""
        return self.flipped_on_retrain or abs(self.retrain_log_odds) <= BOUNDARY_TOL

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config": asdict(self.config),
            "seed": self.seed,
            "claim": {
                "x_star": self.claim.x_star.tolist(),
                "decided_class": self.claim.decided_class,
                "epsilon": self.claim.epsilon,
            },
            "steps": [asdict(s) for s in self.steps],
            "exit_reason": self.exit_reason,
            "flipped_on_retrain": self.flipped_on_retrain,
            "retrain_log_odds": self.retrain_log_odds,
            "final_loss_gap": self.final_loss_gap,
            "trajectory": confidence_trajectory(self),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> MfsResult:
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {doc.get('schema_version')!r}")
        c = doc["claim"]
        trajectory = doc["trajectory"]
        return cls(
            steps=tuple(MfsStep(**s) for s in doc["steps"]),
            exit_reason=doc["exit_reason"],
            flipped_on_retrain=doc["flipped_on_retrain"],
            initial_confidence=trajectory[0],
            final_loss_gap=doc["final_loss_gap"],
            retrain_log_odds=doc["retrain_log_odds"],
            claim=Claim(np.array(c["x_star"]), c["decided_class"], c["epsilon"]),
            config=MfsConfig(**doc["config"]),
            seed=doc["seed"],
        )


def score_instances(
    dataset: Dataset, params_unconstrained: ModelParams, params_constrained: ModelParams
) -> list[tuple[int, float]]:
    """Positive part of each active instance's loss increase under the
    constrained parameters, ordered by id."""
    before = sample_losses(dataset, params_unconstrained)
    after = sample_losses(dataset, params_constrained)
    scores = np.maximum(after - before, 0.0)
    ids = dataset.active_ids
    order = np.argsort(ids, kind="stable")
    return [(int(ids[k]), float(scores[k])) for k in order]


def _select(scores):
    best_id, best = None, 0.0
    for id_, s in scores:  # ascending ids: strict '>' keeps the lowest on ties
        if s > best:
            best_id, best = id_, s
    return best_id, best


def construct_mfs(
    dataset: Dataset,
    claim: Claim,
    config: MfsConfig = MfsConfig(),
    rng_seed: int = 0,
    params: ModelParams | None = None,
) -> MfsResult:
    """Build the forcing subset for ``claim``.

    ``params`` may carry an already trained model for ``dataset``; otherwise
    the model is trained here.  The procedure is deterministic, ``rng_seed``
    is recorded for provenance only.
    """
    cap = config.cap_for(dataset.n_active)
    if params is None:
        params = train(dataset, config.alpha, tol=config.train_tol)
    c0 = claim.decided_class
    if predict(claim.x_star, params) != c0:
        raise StaleClaimError(
            f"claim says class {c0} but the trained model predicts {1 - c0} at x*"
        )
    initial_conf = class_probability(claim.x_star, params, c0)

    active = dataset
    steps: list[MfsStep] = []
    exit_reason = None
    gap = float("nan")
    while exit_reason is None:
        constrained = counterfactual_params(active, params, claim, config.inner_iters)
        loss_u = total_loss(active, params)
        loss_c = total_loss(active, constrained)
        gap = loss_c - loss_u
        if gap < config.delta:
            exit_reason = "loss-gap-closed"
            break
        chosen, score = _select(score_instances(active, params, constrained))
        if chosen is None:
            exit_reason = "no-positive-score"
            break
        removed = active.instance(chosen)
        if config.update_mode == "newton-approx":
            params = one_step_newton_remove(active, params, removed)
            active = active.remove(chosen)
            if config.recenter:
                params = newton_refine(active, params)
        else:
            active = active.remove(chosen)
            params = train(active, config.alpha, tol=config.train_tol, init=params)
        steps.append(
            MfsStep(chosen, score, loss_u, loss_c, class_probability(claim.x_star, params, c0))
        )
        if predict(claim.x_star, params) != c0:
            exit_reason = "decision-flipped"
        elif len(steps) >= cap:
            exit_reason = "cap-reached"

    retrained = train(active, config.alpha, tol=config.train_tol, init=params)
    z = decision_value(claim.x_star, retrained)
    toward_c1 = z if c0 == 0 else -z
    return MfsResult(
        steps=tuple(steps),
        exit_reason=exit_reason,
        flipped_on_retrain=predict(claim.x_star, retrained) != c0,
        initial_confidence=initial_conf,
        final_loss_gap=gap,
        retrain_log_odds=toward_c1,
        claim=claim,
        config=config,
        seed=rng_seed,
    )


def confidence_trajectory(result: MfsResult) -> list[float]:
    """Probability of the decided class before any removal and after each step."""
    return [result.initial_confidence] + [s.confidence_at_target for s in result.steps]
