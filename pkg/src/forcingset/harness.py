"""Desk-scale experiment runners: training-set debugging, poisoning
detection, and the empirical check of the one-step Newton error bound."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import flip_labels, gen_bow_spamlike, gen_blobs, inject_poison, restore_labels
from .mfs import MfsConfig, construct_mfs
from .model import (
    LOGISTIC,
    Claim,
    Dataset,
    ModelParams,
    accuracy,
    augment,
    class_probability,
    hessian,
    predict,
    sample_gradients,
)
from .solver import one_step_newton_remove, train

REPORT_SCHEMA_VERSION = "1.0"

# max over z of |d/dz [sigma(z)(1 - sigma(z))]|, attained at sigma = (3 -/+ sqrt 3) / 6
SIGMOID_CURVATURE_LIPSCHITZ = 1.0 / (6.0 * math.sqrt(3.0))


def _seed_stream(*key) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(k) for k in key])


def _child_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1)[0])


# --------------------------------------------------------------------------
# error bound


@dataclass(frozen=True)
class BoundEstimate:
    n: int
    alpha: float
    lambda_min: float
    N_g: float
    L_F: float
    L_H: float
    bound_value: float
    observed_error: float
    worst_id: int
    errors: tuple[float, ...] = field(repr=False, default=())

    @property
    def holds(self) -> bool:
        return self.observed_error <= self.bound_value

    def violations(self) -> list[int]:
        """Indices of removal cells whose error exceeds the bound."""
        return [i for i, e in enumerate(self.errors) if e > self.bound_value]


def bound_value(n, L_F, L_H, N_g, lambda_min, alpha) -> float:
    return n * L_F * L_H * N_g**2 / (lambda_min + alpha) ** 3


def hessian_lipschitz(dataset: Dataset, loss=LOGISTIC) -> float:
    """Lipschitz constant (spectral norm) of the mean-loss Hessian."""
    if loss.name == "squared":
        return 0.0
    norms = np.linalg.norm(dataset.design, axis=1)
    return SIGMOID_CURVATURE_LIPSCHITZ * float(np.max(norms**3))


def check_bound(
    dataset: Dataset,
    alphas,
    probe=None,
    tol: float = 1e-10,
    loss=LOGISTIC,
) -> list[BoundEstimate]:
    """Compare one-step Newton removal with exact retraining for every single
    instance, through the linear probe ``F(theta) = theta . [probe; 1]``.

    ``probe`` defaults to the first instance's features.  The smallest
    eigenvalue is taken on the weight block of the unregularized mean
    Hessian, so ``lambda_min + alpha`` is the curvature floor of the
    regularized objective on the weights.
    """
    if probe is None:
        probe = dataset.X[dataset.active][0]
    x1 = augment(probe)
    L_F = float(np.linalg.norm(x1))
    L_H = hessian_lipschitz(dataset, loss)
    out = []
    for alpha in alphas:
        if not alpha > 0:
            raise ValueError("every alpha must be > 0")
        theta = train(dataset, alpha, tol=tol, loss=loss)
        H0 = loss.hessian(dataset.design, dataset.targets, theta.theta)
        d = dataset.dim
        lam = float(np.linalg.eigvalsh(H0[:d, :d])[0]) if d else 0.0
        N_g = float(np.max(np.linalg.norm(sample_gradients(dataset, theta, loss), axis=1)))
        errors = []
        for id_ in dataset.active_ids:
            inst = dataset.instance(int(id_))
            approx = one_step_newton_remove(dataset, theta, inst, loss)
            exact = train(dataset.remove(inst.id), alpha, tol=tol, init=theta, loss=loss)
            errors.append(abs(float(x1 @ exact.theta) - float(x1 @ approx.theta)))
        k = int(np.argmax(errors))
        out.append(
            BoundEstimate(
                n=dataset.n_active,
                alpha=float(alpha),
                lambda_min=lam,
                N_g=N_g,
                L_F=L_F,
                L_H=L_H,
                bound_value=bound_value(dataset.n_active, L_F, L_H, N_g, lam, alpha),
                observed_error=errors[k],
                worst_id=int(dataset.active_ids[k]),
                errors=tuple(errors),
            )
        )
    return out


# --------------------------------------------------------------------------
# training-set debugging


@dataclass(frozen=True)
class MethodScore:
    precision: float
    recall: float
    top_k: int
    post_fix_test_accuracy: float
    selected_ids: tuple[int, ...]


@dataclass(frozen=True)
class DebugReport:
    flip_fraction: float
    seed: int
    status: str  # "ok" or "no-target"
    n_targets: int
    bug_ids: tuple[int, ...]
    noisy_test_accuracy: float
    mfs: MethodScore | None
    random: MethodScore | None


def precision_recall(bugs, selected) -> tuple[float, float]:
    """Precision ``|B & S| / |S|`` and recall ``|B & S| / |B|``.

    An empty ``B`` has recall 1.0 and an empty ``S`` precision 0.0.
    """
    B, S = set(bugs), set(selected)
    hit = len(B & S)
    precision = hit / len(S) if S else 0.0
    recall = hit / len(B) if B else 1.0
    return precision, recall


def pool_round_robin(selections) -> list[int]:
    """Merge ordered id lists by step rank, dropping repeats."""
    pooled, seen = [], set()
    depth = max((len(s) for s in selections), default=0)
    for r in range(depth):
        for sel in selections:
            if r < len(sel) and sel[r] not in seen:
                seen.add(sel[r])
                pooled.append(sel[r])
    return pooled


def confident_mistakes(train_params, dataset: Dataset, threshold: float) -> list[int]:
    """Rows whose prediction is wrong with confidence >= threshold, most
    confident first (ties by row)."""
    rows = []
    for r in range(dataset.n):
        x = dataset.X[r]
        c = predict(x, train_params)
        if c != dataset.y[r]:
            conf = class_probability(x, train_params, c)
            if conf >= threshold:
                rows.append((-conf, r))
    return [r for _, r in sorted(rows)]


@dataclass(frozen=True)
class DebugSetup:
    n_train: int = 300
    n_val: int = 400
    n_test: int = 1000
    vocab: int = 50
    alpha: float = 0.01
    confidence: float = 0.7
    max_targets: int = 10
    epsilon: float = 0.1
    delta: float = 1e-4


def _score_fix(train_ds, bugs, selected, alpha, test_ds, init):
    fixed = restore_labels(train_ds, sorted(set(selected) & set(bugs)))
    params = train(fixed, alpha, init=init)
    p, r = precision_recall(bugs, selected)
    return MethodScore(p, r, len(selected), accuracy(test_ds, params), tuple(int(i) for i in selected))


def run_debug_cell(setup: DebugSetup, fraction: float, seed: int) -> DebugReport:
    ss = _seed_stream(seed, 7919)
    s_train, s_val, s_test, s_flip, s_rand = (_child_seed(c) for c in ss.spawn(5))
    clean = gen_bow_spamlike(setup.n_train, setup.vocab, s_train)
    val = gen_bow_spamlike(setup.n_val, setup.vocab, s_val)
    test = gen_bow_spamlike(setup.n_test, setup.vocab, s_test)
    noisy, log = flip_labels(clean, fraction, s_flip)
    bugs = tuple(sorted(log.flipped_ids))
    params = train(noisy, setup.alpha)
    noisy_acc = accuracy(test, params)
    targets = confident_mistakes(params, val, setup.confidence)[: setup.max_targets]
    if not targets:
        return DebugReport(fraction, seed, "no-target", 0, bugs, noisy_acc, None, None)
    config = MfsConfig(epsilon=setup.epsilon, delta=setup.delta, alpha=setup.alpha)
    selections = []
    for r in targets:
        claim = Claim.from_model(val.X[r], params, setup.epsilon)
        res = construct_mfs(noisy, claim, config, rng_seed=seed, params=params)
        selections.append(res.selected_ids)
    pooled = pool_round_robin(selections)
    rng = np.random.default_rng(s_rand)
    random_sel = sorted(int(i) for i in rng.choice(noisy.ids, size=len(pooled), replace=False))
    return DebugReport(
        flip_fraction=fraction,
        seed=seed,
        status="ok",
        n_targets=len(targets),
        bug_ids=bugs,
        noisy_test_accuracy=noisy_acc,
        mfs=_score_fix(noisy, bugs, pooled, setup.alpha, test, params),
        random=_score_fix(noisy, bugs, random_sel, setup.alpha, test, params),
    )


def run_debug_experiment(
    setup: DebugSetup, flip_fractions, seeds
) -> list[DebugReport]:
    for f in flip_fractions:
        if not 0 < f <= 0.5:
            raise ValueError(f"flip fraction must be in (0, 0.5], got {f}")
    return [run_debug_cell(setup, f, s) for f in sorted(flip_fractions) for s in sorted(seeds)]


# --------------------------------------------------------------------------
# poisoning


@dataclass(frozen=True)
class PoisonSetup:
    n: int = 100
    separation: float = 3.0
    spread: float = 1.0
    alpha: float = 0.1
    radius: float = 0.05
    epsilon: float = 0.1
    delta: float = 1e-4


DIST_LO, DIST_HI = 4.0, 5.0
MARGIN_LO, MARGIN_HI = 0.5, 0.85


@dataclass(frozen=True)
class PoisonEntry:
    target_id: int
    status: str  # "ok" or "attack-failed"
    size_clean: int
    size_poisoned: int
    poison_rank: int  # 1-based; 0 when the poison was not selected
    target_x: tuple[float, ...]


def poison_targets(dataset: Dataset, params: ModelParams, n_targets: int, seed: int):
    """Attackable targets on the flanks of the decision boundary.

    Each target lies beyond the training mass along the boundary, on a random
    side, at a margin that is a random fraction of the logit shift one
    poison placed on it would cause (first-order influence estimate).  Far
    from the data a single instance has more leverage than any clean point,
    the desk analogue of a feature-collision attack.
    """
    rng = np.random.default_rng(seed)
    w, b = params.weights, params.intercept
    normal = w / np.linalg.norm(w)
    X = dataset.X[dataset.active]
    centre = X.mean(axis=0)
    on_boundary = centre - (w @ centre + b) / (w @ w) * w
    basis = np.linalg.svd(np.eye(len(w)) - np.outer(normal, normal))[0][:, : len(w) - 1]
    scale = float(np.sqrt(np.mean(np.sum((X - centre) ** 2, axis=1))))
    H = hessian(dataset, params)
    pts = []
    for _ in range(n_targets):
        along = basis @ rng.standard_normal(basis.shape[1])
        along /= np.linalg.norm(along)
        x = on_boundary + scale * rng.uniform(DIST_LO, DIST_HI) * along
        x1 = augment(x)
        shift = 0.5 * float(x1 @ np.linalg.solve(H, x1)) / (dataset.n_active + 1)
        margin = rng.uniform(MARGIN_LO, MARGIN_HI) * shift * rng.choice([-1.0, 1.0])
        pts.append(x + margin / np.linalg.norm(w) * normal)
    return pts


def run_poison_experiment(
    n_targets: int, setup: PoisonSetup = PoisonSetup(), seed: int = 0
) -> list[PoisonEntry]:
    if n_targets < 0:
        raise ValueError("n_targets must be >= 0")
    ss = _seed_stream(seed, 104729)
    s_data, s_targets, s_poison = (_child_seed(c) for c in ss.spawn(3))
    clean = gen_blobs(setup.n, setup.separation, setup.spread, 2, s_data)
    params = train(clean, setup.alpha, tol=1e-10)
    config = MfsConfig(
        epsilon=setup.epsilon,
        delta=setup.delta,
        alpha=setup.alpha,
        max_set_size=max(1, setup.n // 4),
    )
    entries = []
    for k, x in enumerate(poison_targets(clean, params, n_targets, s_targets)):
        claim = Claim.from_model(x, params, setup.epsilon)
        size_clean = len(construct_mfs(clean, claim, config, seed, params=params))
        poisoned, rec = inject_poison(clean, x, setup.radius, s_poison + k, setup.alpha)
        p_params = train(poisoned, setup.alpha, tol=1e-10, init=params)
        tx = tuple(float(v) for v in x)
        if predict(x, p_params) == claim.decided_class:
            entries.append(PoisonEntry(k, "attack-failed", size_clean, 0, 0, tx))
            continue
        p_claim = Claim.from_model(x, p_params, setup.epsilon)
        p_config = MfsConfig(**{**asdict(config), "max_set_size": max(1, poisoned.n // 4)})
        res = construct_mfs(poisoned, p_claim, p_config, seed, params=p_params)
        ids = res.selected_ids
        rank = ids.index(rec.poison_id) + 1 if rec.poison_id in ids else 0
        entries.append(PoisonEntry(k, "ok", size_clean, len(ids), rank, tx))
    return entries


# --------------------------------------------------------------------------
# serialization


def _row(obj) -> dict:
    d = asdict(obj)
    for key, v in list(d.items()):
        if isinstance(v, (tuple, list)):
            d[key] = " ".join(repr(x) for x in v)
    return d


def report_json(kind: str, rows, extra: dict | None = None) -> str:
    doc = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "kind": kind,
        "rows": [asdict(r) for r in rows],
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True)


def flat_rows(kind: str, rows) -> list[dict]:
    """One flat dict per cell, for CSV export."""
    out = []
    for r in rows:
        if kind == "debug":
            base = {"flip_fraction": r.flip_fraction, "seed": r.seed, "status": r.status,
                    "n_targets": r.n_targets, "n_bugs": len(r.bug_ids),
                    "noisy_test_accuracy": r.noisy_test_accuracy}
            for name in ("mfs", "random"):
                m = getattr(r, name)
                base[f"{name}_precision"] = m.precision if m else ""
                base[f"{name}_recall"] = m.recall if m else ""
                base[f"{name}_top_k"] = m.top_k if m else ""
                base[f"{name}_test_accuracy"] = m.post_fix_test_accuracy if m else ""
            out.append(base)
        elif kind == "bound":
            d = asdict(r)
            d.pop("errors")
            d["holds"] = r.holds
            out.append(d)
        else:
            d = asdict(r)
            d["target_x"] = " ".join(repr(v) for v in r.target_x)
            out.append(d)
    return out


def report_csv(kind: str, rows) -> str:
    flat = flat_rows(kind, rows)
    buf = io.StringIO()
    if flat:
        w = csv.DictWriter(buf, fieldnames=list(flat[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(flat)
    return buf.getvalue()


# --------------------------------------------------------------------------
# target selection and half-moon walks


def resolve_target(selector: str, pool: Dataset, params: ModelParams) -> np.ndarray:
    """Pick a test point.

    ``row:<i>`` is row ``i`` of ``pool``; ``point:<x0>,<x1>,...`` a literal
    vector; ``misclassified:first`` the first misclassified row;
    ``misclassified:conf=<p>`` the misclassified row whose confidence is
    closest to ``p`` (lowest row on ties).  Raises ``LookupError`` when the
    selector matches nothing and ``ValueError`` when it is malformed.
    """
    kind, _, arg = selector.partition(":")
    if kind == "row":
        try:
            r = int(arg)
        except ValueError:
            raise ValueError(f"bad row index {arg!r}") from None
        if not 0 <= r < pool.n:
            raise LookupError(f"row {r} out of range (0..{pool.n - 1})")
        return pool.X[r].copy()
    if kind == "point":
        try:
            x = np.array([float(v) for v in arg.split(",")])
        except ValueError:
            raise ValueError(f"bad point {arg!r}") from None
        if x.shape[0] != pool.dim:
            raise LookupError(f"point has {x.shape[0]} coordinates, expected {pool.dim}")
        return x
    if kind == "misclassified":
        wrong = [r for r in range(pool.n) if predict(pool.X[r], params) != pool.y[r]]
        if not wrong:
            raise LookupError("no misclassified row")
        if arg == "first":
            return pool.X[wrong[0]].copy()
        if arg.startswith("conf="):
            target = float(arg[5:])
            conf = [class_probability(pool.X[r], params, predict(pool.X[r], params)) for r in wrong]
            k = int(np.argmin(np.abs(np.asarray(conf) - target)))
            return pool.X[wrong[k]].copy()
    raise ValueError(f"unknown target selector {selector!r}")


@dataclass(frozen=True)
class HalfmoonWalk:
    seed: int
    dataset: Dataset
    params: ModelParams
    claim: Claim
    results: dict  # update_mode -> MfsResult


def halfmoon_walk(
    seed: int,
    n: int = 100,
    noise: float = 0.2,
    alpha: float = 0.01,
    epsilon: float = 0.1,
    delta: float = 1e-4,
    selector: str = "misclassified:conf=0.74",
    modes=("newton-approx", "exact-retrain"),
) -> HalfmoonWalk:
    """Train on a half-moon sample, pick a misclassified held-out target and
    build its MFS under each update mode."""
    from .data import gen_halfmoon

    train_ds = gen_halfmoon(n, noise, seed)
    test_ds = gen_halfmoon(n, noise, seed + 10_000)
    params = train(train_ds, alpha, tol=1e-10)
    x = resolve_target(selector, test_ds, params)
    claim = Claim.from_model(x, params, epsilon)
    results = {}
    for mode in modes:
        cfg = MfsConfig(epsilon=epsilon, delta=delta, alpha=alpha, update_mode=mode)
        results[mode] = construct_mfs(train_ds, claim, cfg, seed, params=params)
    return HalfmoonWalk(seed, train_ds, params, claim, results)
