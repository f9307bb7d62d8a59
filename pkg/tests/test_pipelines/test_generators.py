import json

import numpy as np
import pytest

from tue_lab.core.errors import BadConfig, UnknownMethod
from tue_lab.datasets.dataset import with_labels
from tue_lab.pipelines.config import GenConfig
from tue_lab.pipelines.generators import GenTrace, gen_emn, gen_tue, gen_ucl, generate


def _budget_ok(pset, eps):
    return pset.linf() <= np.float32(eps)


@pytest.mark.parametrize("method", ["emn", "ucl", "tue"])
def test_generators_respect_budget_and_trace(tiny_train, fast_gen, small_models, method):
    cfg = fast_gen(method)
    pset, trace = generate(tiny_train, cfg, extra_ctx=small_models)
    assert pset.n == tiny_train.n and pset.d == tiny_train.d
    assert np.array_equal(pset.labels, tiny_train.labels)
    assert _budget_ok(pset, cfg.epsilon), "max |delta| must stay inside epsilon"
    assert pset.linf() > 0.0, "some perturbation was learned"
    assert len(trace) == cfg.epochs
    assert trace.column("round") == list(range(cfg.epochs))
    assert all(np.isfinite(v) for v in trace.column("csd"))
    assert len(json.loads(trace.to_json())) == cfg.epochs


@pytest.mark.parametrize("method", ["emn", "ucl", "tue"])
def test_generation_is_deterministic(tiny_train, fast_gen, small_models, method):
    cfg = fast_gen(method)
    a, _ = generate(tiny_train, cfg, extra_ctx=small_models)
    b, _ = generate(tiny_train, cfg, extra_ctx=small_models)
    assert a.equals(b), "identical config and seed must give bit-identical perturbations"


def test_zero_budget_gives_zero_perturbations(tiny_train, fast_gen, small_models):
    pset, trace = gen_tue(tiny_train, fast_gen("tue", epsilon=0.0), extra_ctx=small_models)
    assert pset.linf() == 0.0
    assert np.isnan(trace.column("perturbation_loss")[0]), "no PGD pass ran"


def test_zero_rounds_gives_empty_trace(tiny_train, fast_gen, small_models):
    pset, trace = gen_emn(tiny_train, fast_gen("emn", epochs=0), extra_ctx=small_models)
    assert pset.linf() == 0.0 and len(trace) == 0


def test_tue_with_zero_lambda_equals_ucl(tiny_train, fast_gen, small_models):
    ucl, _ = gen_ucl(tiny_train, fast_gen("ucl"), extra_ctx=small_models)
    tue, _ = gen_tue(tiny_train, fast_gen("tue", lam=0.0), extra_ctx=small_models)
    assert np.array_equal(ucl.deltas, tue.deltas), "lambda = 0 reproduces UCL bit for bit"


def test_ucl_ignores_labels(tiny_train, fast_gen, small_models):
    relabelled = with_labels(tiny_train, (tiny_train.labels + 1) % tiny_train.K)
    a, _ = gen_ucl(tiny_train, fast_gen("ucl"), extra_ctx=small_models)
    b, _ = gen_ucl(relabelled, fast_gen("ucl"), extra_ctx=small_models)
    assert np.array_equal(a.deltas, b.deltas), "the contrastive objective never reads labels"


def test_batch_scope_csd_runs(tiny_train, fast_gen, small_models):
    pset, trace = gen_tue(tiny_train, fast_gen("tue", csd_scope="batch", lam=5.0), extra_ctx=small_models)
    assert _budget_ok(pset, 0.1) and len(trace) == 2


def test_emn_early_stop(tiny_train, fast_gen, small_models):
    cfg = fast_gen("emn", epochs=5, stop_train_accuracy=0.01)
    _, trace = gen_emn(tiny_train, cfg, extra_ctx=small_models)
    assert len(trace) == 1, "any classifier clears a 1% accuracy bar after the first round"


def test_custom_trace_fn(tiny_train, fast_gen, small_models):
    def trace_fn(ctx):
        return {"round": ctx.round.index, "lam": ctx.lam}

    _, trace = gen_tue(tiny_train, fast_gen("tue", lam=3.0), extra_ctx=small_models, trace_fn=trace_fn)
    assert trace.column("lam") == [3.0, 3.0]


def test_sn_dispatch(tiny_train, fast_gen):
    pset, trace = generate(tiny_train, fast_gen("sn"))
    assert isinstance(trace, GenTrace) and len(trace) == 0
    assert np.all(np.abs(pset.deltas) == np.float32(0.1))
    again, _ = generate(tiny_train, fast_gen("sn"))
    assert pset.equals(again)


def test_method_checks(tiny_train, fast_gen):
    with pytest.raises(UnknownMethod):
        generate(tiny_train, GenConfig(method="pgd"))
    with pytest.raises(BadConfig):
        gen_emn(tiny_train, fast_gen("tue"))
