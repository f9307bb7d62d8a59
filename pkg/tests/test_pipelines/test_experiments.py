import numpy as np
import pytest

from tue_lab.core.errors import BadConfig, EmptySourceClass
from tue_lab.core.perturb import zero_set
from tue_lab.datasets.synthetic import SyntheticConfig, make_synthetic_split
from tue_lab.pipelines.config import TrainConfig
from tue_lab.pipelines.experiments import (
    CORRESPONDENCES,
    lambda_sweep,
    plan_transfer,
    resolve_workers,
    run_jobs,
    swap_eval,
    swap_maps,
    training_wise_eval,
    transfer_eval,
)
from tue_lab.pipelines.training import evaluate


def _square(x):
    return x * x


def test_resolve_workers(monkeypatch):
    monkeypatch.delenv("TUE_THREADS", raising=False)
    assert resolve_workers() == 1
    assert resolve_workers(3) == 3
    monkeypatch.setenv("TUE_THREADS", "2")
    assert resolve_workers(5) == 2, "the environment overrides the requested count"
    monkeypatch.setenv("TUE_THREADS", "many")
    with pytest.raises(BadConfig):
        resolve_workers()
    monkeypatch.delenv("TUE_THREADS")
    with pytest.raises(BadConfig):
        resolve_workers(0)


def test_run_jobs_keeps_keys():
    jobs = {"b": dict(x=3), "a": dict(x=2)}
    assert run_jobs(_square, jobs) == {"b": 9, "a": 4}
    assert list(run_jobs(_square, jobs, workers=2)) == ["b", "a"], "results come back in job order"


def test_swap_maps(tiny_pset):
    maps = swap_maps(tiny_pset, seed=1)
    assert tuple(maps) == CORRESPONDENCES
    assert np.array_equal(maps["original"].index, np.arange(tiny_pset.n))


def test_swap_eval(tiny_train, tiny_test, tiny_pset, fast_train, small_models):
    results = swap_eval(tiny_train, tiny_pset, tiny_test, fast_train, seed=2, extra_ctx=small_models)
    assert set(results) == set(CORRESPONDENCES)
    assert all(0.0 <= r.accuracy <= 1.0 for r in results.values())


def test_swap_eval_of_zero_perturbations_matches_clean_training(tiny_train, tiny_test, fast_train, small_models):
    zeros = zero_set(tiny_train.labels, tiny_train.d, 0.1, tiny_train.K)
    results = swap_eval(tiny_train, zeros, tiny_test, fast_train, seed=2, extra_ctx=small_models)
    clean = evaluate(tiny_train, tiny_test, "supervised", fast_train, extra_ctx=small_models)
    for name, result in results.items():
        assert result.accuracy == clean.accuracy, name
        assert abs(result.train_loss - clean.train_loss) < 1e-12, name


def _target(K, per_class, seed=1001):
    cfg = SyntheticConfig(K=K, per_class=per_class, width=4, height=4, channels=1, seed=seed, name="target")
    return make_synthetic_split(cfg, test_per_class=2)


def test_plan_transfer_needs_interpolation_for_more_classes(tiny_pset):
    target, _ = _target(K=5, per_class=6)
    with pytest.raises(BadConfig):
        plan_transfer(tiny_pset, target)
    source, class_map = plan_transfer(tiny_pset, target, interpolate=True)
    assert source.K == 5 and class_map.tolist() == [0, 1, 2, 3, 4]
    assert source.linf() <= tiny_pset.epsilon


def test_plan_transfer_grows_small_classes(tiny_pset):
    target, _ = _target(K=3, per_class=12)
    source, _ = plan_transfer(tiny_pset, target, interpolate=True)
    assert source.class_counts().tolist() == [12, 12, 12]
    unchanged, _ = plan_transfer(tiny_pset, target)
    assert unchanged is tiny_pset, "without interpolation perturbations are re-used"


def test_plan_transfer_class_map_errors(tiny_pset):
    target, _ = _target(K=3, per_class=4)
    with pytest.raises(EmptySourceClass):
        plan_transfer(tiny_pset, target, class_map=[0, 1, 5])
    with pytest.raises(BadConfig):
        plan_transfer(tiny_pset, target, class_map=[0, 1])


def test_transfer_eval(tiny_pset, fast_train, small_models):
    target, target_test = _target(K=4, per_class=8)
    result = transfer_eval(tiny_pset, target, target_test, fast_train, interpolate=True, seed=3, extra_ctx=small_models)
    assert result.mode == "supervised" and result.train_tag == "target-train+rand"


def test_training_wise_eval(tiny_train, tiny_test, tiny_pset, fast_train, fast_probe, small_models):
    pre = TrainConfig(epochs=1, batch_size=6, seed=5)
    results = training_wise_eval(
        tiny_train, tiny_test, {"rand": tiny_pset}, fast_train, pre, fast_probe, extra_ctx=small_models
    )
    assert set(results) == {
        ("clean", "supervised"),
        ("clean", "unsupervised"),
        ("rand", "supervised"),
        ("rand", "unsupervised"),
    }


def test_lambda_sweep(tiny_train, fast_gen, fast_probe, small_models):
    points = lambda_sweep(tiny_train, fast_gen("tue", epochs=1), [0.0, 2.0], fast_probe, extra_ctx=small_models)
    assert [p["lambda"] for p in points] == [0.0, 2.0]
    assert all(p["rounds"] == 1 and np.isfinite(p["csd"]) for p in points)
