import json

import numpy as np
import pytest

from forcingset.data import gen_blobs, gen_halfmoon
from forcingset.errors import StaleClaimError
from forcingset.harness import halfmoon_walk
from forcingset.mfs import (
    MfsConfig,
    MfsResult,
    confidence_trajectory,
    construct_mfs,
    score_instances,
)
from forcingset.model import (
    Claim,
    Dataset,
    ModelParams,
    class_probability,
    per_sample_loss,
    predict,
)
from forcingset.solver import counterfactual_params, train


@pytest.fixture(scope="module")
def walk():
    return halfmoon_walk(2)


class TestScores:
    def test_identical_params_score_zero(self, small_dataset):
        p = train(small_dataset, 0.1)
        assert all(s == 0.0 for _, s in score_instances(small_dataset, p, p))

    def test_only_worsened_instance_scores(self):
        ds = Dataset(np.array([[1.0], [-1.0], [2.0]]), [1, 0, 0])
        before = ModelParams(np.zeros(2))
        after = ModelParams(np.array([1.0, 0.0]))
        scores = dict(score_instances(ds, before, after))
        assert scores[0] == 0.0 and scores[1] == 0.0
        assert scores[2] > 0.0

    def test_ordered_by_id(self, small_dataset):
        p = train(small_dataset, 0.1)
        ds = small_dataset.remove([3, 7])
        ids = [i for i, _ in score_instances(ds, p, p.replace(p.theta * 0.5))]
        assert ids == sorted(ids) and 3 not in ids

    def test_matches_brute_force_loop(self, walk):
        ds, p, claim = walk.dataset, walk.params, walk.claim
        pc = counterfactual_params(ds, p, claim)
        got = score_instances(ds, p, pc)
        for (id_, s), inst in zip(got, ds.instances):
            assert id_ == inst.id
            ref = max(per_sample_loss(inst, pc) - per_sample_loss(inst, p), 0.0)
            assert s == pytest.approx(ref, rel=1e-9, abs=1e-14)
        top = max(got, key=lambda t: (t[1], -t[0]))[0]
        # the most responsible instance carries the decided label
        assert ds.instance(top).label == claim.decided_class


class TestConstruct:
    def test_stale_claim(self, walk):
        flipped = Claim(walk.claim.x_star, 1 - walk.claim.decided_class, 0.1)
        with pytest.raises(StaleClaimError):
            construct_mfs(walk.dataset, flipped, MfsConfig(), params=walk.params)

    def test_gap_below_delta_at_start(self, walk):
        res = construct_mfs(walk.dataset, walk.claim, MfsConfig(delta=1e6), params=walk.params)
        assert len(res) == 0
        assert res.exit_reason == "loss-gap-closed"
        assert res.final_loss_gap < 1e6
        assert confidence_trajectory(res) == [res.initial_confidence]

    @pytest.mark.parametrize("mode", ["newton-approx", "exact-retrain"])
    def test_halfmoon_bracket_and_flip(self, walk, mode):
        res = walk.results[mode]
        assert 5 <= len(res) <= 25
        assert res.flipped_on_retrain
        assert len(set(res.selected_ids)) == len(res)

    @pytest.mark.parametrize("seed", range(5))
    def test_retrain_mode_no_larger(self, seed):
        w = halfmoon_walk(seed)
        assert len(w.results["exact-retrain"]) <= len(w.results["newton-approx"])

    def test_loss_dominance_per_step(self, walk):
        for res in walk.results.values():
            for s in res.steps:
                assert s.loss_constrained >= s.loss_unconstrained - 1e-10
                assert s.score > 0

    def test_cap_respected(self, walk):
        res = construct_mfs(walk.dataset, walk.claim, MfsConfig(max_set_size=2), params=walk.params)
        assert len(res) == 2
        assert res.exit_reason == "cap-reached"

    def test_trains_when_params_missing(self, walk):
        a = construct_mfs(walk.dataset, walk.claim)
        assert a.selected_ids == walk.results["newton-approx"].selected_ids

    def test_deterministic(self, walk):
        a = construct_mfs(walk.dataset, walk.claim, rng_seed=5)
        b = construct_mfs(walk.dataset, walk.claim, rng_seed=5)
        assert a.to_json() == b.to_json()

    @pytest.mark.parametrize("seed", range(10))
    def test_modes_pick_same_first_instance(self, seed):
        ds = gen_blobs(60, separation=4.0, spread=1.0, seed=seed)
        p = train(ds, 1.0, tol=1e-10)
        w, b = p.weights, p.intercept
        x = -(b + 0.3) * w / (w @ w)  # just on the class-0 side
        claim = Claim.from_model(x, p, 0.1)
        first = []
        for mode in ("newton-approx", "exact-retrain"):
            cfg = MfsConfig(alpha=1.0, update_mode=mode, max_set_size=3)
            first.append(construct_mfs(ds, claim, cfg, params=p).selected_ids[0])
        assert first[0] == first[1]


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [{"epsilon": -1}, {"delta": 0}, {"max_set_size": 0}, {"update_mode": "x"}, {"inner_iters": 0}, {"alpha": 0}],
    )
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            MfsConfig(**kw)

    def test_default_cap_is_quarter(self):
        assert MfsConfig().cap_for(100) == 25

    def test_cap_must_leave_data(self):
        with pytest.raises(ValueError):
            MfsConfig(max_set_size=10).cap_for(10)


class TestTrajectory:
    def test_starts_at_model_confidence(self, walk):
        res = walk.results["newton-approx"]
        traj = confidence_trajectory(res)
        c0 = walk.claim.decided_class
        assert traj[0] == class_probability(walk.claim.x_star, walk.params, c0)
        assert len(traj) == len(res) + 1

    def test_ends_below_half_when_flipped(self, walk):
        for res in walk.results.values():
            if res.flipped_on_retrain:
                assert confidence_trajectory(res)[-1] < 0.5 + walk.claim.epsilon


class TestSerialization:
    def test_round_trip(self, walk):
        res = walk.results["exact-retrain"]
        doc = json.loads(res.to_json())
        assert doc["schema_version"] == "1.0"
        back = MfsResult.from_dict(doc)
        assert back.to_json() == res.to_json()

    def test_schema_mismatch(self, walk):
        doc = walk.results["exact-retrain"].to_dict()
        doc["schema_version"] = "0.9"
        with pytest.raises(ValueError):
            MfsResult.from_dict(doc)


def test_forced_retrain_flips_for_misclassified_target():
    ds = gen_halfmoon(100, 0.2, 11)
    p = train(ds, 0.01, tol=1e-10)
    wrong = next(i for i in ds.instances if predict(i.features, p) != i.label)
    claim = Claim.from_model(wrong.features, p, 0.1)
    res = construct_mfs(ds, claim, params=p)
    assert res.exit_reason == "decision-flipped"
    assert res.forces
