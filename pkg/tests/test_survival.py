import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import regressor
from oracles import auroc_pairs, cindex_pairs, cox_loop
from xcg.cellgraph import PatientBag, synth_planted_cohort
from xcg.cellgraph.graph import assemble_bags, build_graphs
from xcg.gnn.optim import TrainConfig
from xcg.survival import (UninformativeBatchError, auroc, concordance_index, cox_loss, ensemble_predict,
                          make_folds, prepare_samples, stage_baseline_risk, train)
from xcg.survival.training import evaluate, predict_scores, train_fold


class TestCox:
    def test_two_patients(self):
        assert abs(cox_loss([0.0, 0.0], [5, 10], [1, 1]) - math.log(2) / 2) < 1e-12

    def test_singleton(self):
        assert cox_loss([1.3], [4.0], [1]) == 0.0

    def test_no_events(self):
        with pytest.raises(UninformativeBatchError, match="uninformative batch"):
            cox_loss([0.1, 0.2], [1, 2], [0, 0])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_loop_oracle_and_shift(self, seed):
        r = np.random.default_rng(seed)
        risks = r.normal(0, 3, 9)
        times = r.integers(1, 6, 9).astype(float)
        events = r.random(9) < 0.6
        events[0] = True
        val = cox_loss(risks, times, events)
        assert abs(val - cox_loop(risks, times, events)) < 1e-10
        assert abs(cox_loss(risks + 17.5, times, events) - val) < 1e-12

    def test_gradient_fd(self, rng):
        risks = rng.normal(size=8)
        times = rng.uniform(1, 10, 8)
        events = np.array([1, 0, 1, 1, 0, 1, 0, 1], bool)
        _, g = cox_loss(risks, times, events, return_grad=True)
        h = 1e-5
        fd = np.array([(cox_loss(risks + h * np.eye(8)[i], times, events)
                        - cox_loss(risks - h * np.eye(8)[i], times, events)) / (2 * h) for i in range(8)])
        assert np.max(np.abs(g - fd) / np.maximum(np.abs(g), 1e-8)) < 1e-6

    def test_large_risks_stable(self):
        assert np.isfinite(cox_loss([800.0, -800.0, 0.0], [1, 2, 3], [1, 1, 1]))


class TestConcordance:
    def test_perfect(self):
        assert concordance_index([3, 2, 1], [1, 2, 3], [1, 1, 1]) == 1.0

    def test_reversed(self):
        assert concordance_index([1, 2, 3], [1, 2, 3], [1, 1, 1]) == 0.0

    def test_censored_first_is_undefined(self):
        with pytest.raises(ValueError, match="undefined C-index"):
            concordance_index([1, 2], [1, 2], [0, 1])

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_pair_oracle(self, seed):
        r = np.random.default_rng(seed)
        risks = r.integers(0, 5, 20).astype(float)
        times = r.integers(0, 8, 20).astype(float)
        events = r.random(20) < 0.5
        try:
            oracle = cindex_pairs(risks, times, events)
        except ZeroDivisionError:
            with pytest.raises(ValueError):
                concordance_index(risks, times, events)
            return
        assert concordance_index(risks, times, events) == oracle


class TestAuroc:
    def test_separated(self):
        assert auroc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0

    def test_all_equal(self):
        assert auroc([0.5] * 6, [1, 0, 1, 0, 0, 1]) == 0.5

    def test_single_class(self):
        with pytest.raises(ValueError):
            auroc([0.1, 0.2], [1, 1])

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_pair_oracle(self, seed):
        r = np.random.default_rng(seed)
        s = r.integers(0, 6, 15).astype(float)
        y = r.random(15) < 0.5
        y[0], y[1] = True, False
        assert auroc(s, y) == auroc_pairs(s, y)


def _bags(n, event_rate, seed):
    r = np.random.default_rng(seed)
    events = r.permutation(np.arange(n) < round(event_rate * n))
    return [PatientBag(f"P{i:03d}", [f"P{i:03d}_g0"], float(r.uniform(1, 100)), bool(events[i]),
                       "late" if r.random() < 0.5 else "early") for i in range(n)]


class TestFolds:
    def test_event_balance(self):
        plan = make_folds(_bags(100, 0.4, 0), "regression", seed=0)
        bags = {b.patient_id: b for b in _bags(100, 0.4, 0)}
        per_fold = [sum(bags[p].event for p in f.test) for f in plan.folds]
        assert all(7 <= c <= 9 for c in per_fold), per_fold

    def test_deterministic(self):
        a = make_folds(_bags(50, 0.4, 1), "regression", seed=3).to_dict()
        b = make_folds(_bags(50, 0.4, 1), "regression", seed=3).to_dict()
        assert a == b

    def test_partition(self):
        bags = _bags(53, 0.3, 2)
        plan = make_folds(bags, "regression", seed=1)
        tests = [set(f.test) for f in plan.folds]
        assert set().union(*tests) == {b.patient_id for b in bags}
        assert sum(len(t) for t in tests) == len(bags)
        for f in plan.folds:
            assert set(f.inner_train) | set(f.inner_val) == set(f.train)
            assert not set(f.train) & set(f.test)

    def test_classification_drops_excluded(self):
        bags = _bags(60, 0.5, 4)
        plan = make_folds(bags, "classification", seed=0)
        excluded = {b.patient_id for b in bags if b.survival_class.value == "excluded"}
        assert excluded
        assert not excluded & set().union(*(set(f.test) for f in plan.folds))

    def test_roundtrip(self):
        plan = make_folds(_bags(30, 0.5, 5), "regression", seed=0)
        assert type(plan).from_dict(plan.to_dict()).to_dict() == plan.to_dict()


def test_stage_baseline():
    assert stage_baseline_risk(["late", "early"]).tolist() == [1.0, 0.0]


@pytest.fixture(scope="module")
def tiny_cohort():
    cells, patients = synth_planted_cohort(20, 1, seed=3, n_phenotypes=3, cells_per_graph=30)
    bags = assemble_bags(cells, patients)
    return prepare_samples(bags, build_graphs(cells, 3, 3)), bags


class TestTraining:
    def test_zero_epochs_is_initial_model(self, tiny_cohort):
        samples, bags = tiny_cohort
        plan = make_folds(bags, "regression", seed=0)
        cfg = TrainConfig(epochs=0, lr_grid=(1e-3,))
        res = train_fold(samples, "regression", cfg, plan, 0, seed=5, model_kwargs={"hidden": 4, "embed_dim": 4})
        from xcg.survival.training import new_model
        init = new_model("regression", 3, {"hidden": 4, "embed_dim": 4}, seed=5)
        test = [samples[i] for i in plan.folds[0].test]
        assert res.metric == evaluate("regression", predict_scores(init, "regression", test), test)

    def test_deterministic_weights(self, tiny_cohort):
        samples, bags = tiny_cohort
        plan = make_folds(bags, "classification", seed=0)
        cfg = TrainConfig(epochs=2, lr_grid=(1e-3, 3e-4))
        kw = {"hidden": 4}
        a = train(samples, "classification", cfg, plan, seed=1, model_kwargs=kw)
        b = train(samples, "classification", cfg, plan, seed=1, model_kwargs=kw)
        for ra, rb in zip(a, b):
            assert ra.best_lr == rb.best_lr
            for k in ra.model.params:
                assert np.array_equal(ra.model.params[k], rb.model.params[k])

    def test_parallel_equals_serial(self, tiny_cohort):
        samples, bags = tiny_cohort
        plan = make_folds(bags, "regression", seed=0)
        cfg = TrainConfig(epochs=1, lr_grid=(1e-3,), batch_size=8)
        kw = {"hidden": 4, "embed_dim": 4}
        a = train(samples, "regression", cfg, plan, seed=2, model_kwargs=kw, n_jobs=1)
        b = train(samples, "regression", cfg, plan, seed=2, model_kwargs=kw, n_jobs=2)
        for ra, rb in zip(a, b):
            assert np.array_equal(ra.test_scores, rb.test_scores)


class TestEnsemble:
    def test_identical_members(self, tiny_cohort):
        samples, _ = tiny_cohort
        s = next(iter(samples.values()))
        m = regressor(3, 4, seed=0)
        from xcg.gnn.models import forward_regression
        assert ensemble_predict([m, m.copy()], s.graphs, s.stage) == forward_regression(m, s.graphs, s.stage)

    def test_arithmetic_mean(self, tiny_cohort):
        samples, _ = tiny_cohort
        s = next(iter(samples.values()))
        members = []
        for target in (1, 2, 3, 4, 5):
            m = regressor(3, 4, seed=0)
            m.params["head.w2"][...] = 0.0
            m.params["head.b2"][...] = target
            members.append(m)
        assert ensemble_predict(members, s.graphs, s.stage) == 3.0

    def test_empty(self, tiny_cohort):
        samples, _ = tiny_cohort
        s = next(iter(samples.values()))
        with pytest.raises(ValueError):
            ensemble_predict([], s.graphs, s.stage)
