import pytest

from tue_lab.core.errors import BadConfig, UnknownMethod
from tue_lab.core.transforms import AugmentationPair
from tue_lab.pipelines.config import (
    GenConfig,
    ModelDims,
    ProbeConfig,
    init_gen_config,
    init_pretrain_config,
    init_probe_config,
    init_supervised_config,
)
from tue_lab.pipelines.context import Context, NS, augmentation_of, default_augmentation, dims_of, make_context


def test_context_reads_cfg_and_extras():
    cfg = GenConfig(method="tue", lam=2.0)
    ctx = make_context(cfg, {"encoder": {"hidden": 16}})
    assert ctx.lam == 2.0 and ctx["lam"] == 2.0
    assert ctx.encoder.hidden == 16
    assert "encoder" in set(ctx) and "epsilon" in set(ctx)
    assert ctx.merged_dict()["encoder"] == {"hidden": 16}


def test_context_rejects_scalar_extras():
    with pytest.raises(TypeError):
        Context(cfg=GenConfig(method="tue"), extra={"encoder": 3})
    with pytest.raises(BadConfig):
        make_context(GenConfig(method="tue"), {"decoder": {"hidden": 3}})


def test_with_extra_adds_round_state():
    ctx = make_context(GenConfig(method="emn"))
    round_ctx = ctx.with_extra(round={"index": 4, "csd": 0.5})
    assert round_ctx.round.index == 4
    assert "round" not in ctx.extra, "the original context is untouched"


def test_ns_attribute_access():
    ns = NS({"a": 1, "b": {"c": 2}})
    assert ns.a == 1 and ns.b.c == 2 and ns.get("z", 9) == 9
    with pytest.raises(AttributeError):
        ns.missing


def test_component_helpers():
    ctx = make_context(GenConfig(method="ucl"), {"augment": {"crop_pad": 0, "flip_prob": 1.0}, "classifier": {"hidden": 7}})
    assert augmentation_of(ctx) == AugmentationPair(flip_prob=1.0)
    assert dims_of(ctx, "classifier") == ModelDims(hidden=7)
    assert augmentation_of(make_context(GenConfig(method="ucl"))) == default_augmentation()
    with pytest.raises(BadConfig):
        dims_of(make_context(GenConfig(method="ucl"), {"encoder": {"width": 3}}), "encoder")
    with pytest.raises(BadConfig):
        augmentation_of(make_context(GenConfig(method="ucl"), {"augment": {"flip_prob": 3.0}}))


def test_gen_config_validation():
    cfg = init_gen_config("tue", seed=3, epsilon=0.1)
    assert cfg.step_size == pytest.approx(0.01)
    assert GenConfig(method="tue", pgd_step_size=0.02).step_size == 0.02
    with pytest.raises(UnknownMethod):
        GenConfig(method="fgsm").validate()
    for bad in (dict(epochs=-1), dict(lam=-0.1), dict(temperature=0.0), dict(csd_scope="local"), dict(batch_size=1)):
        with pytest.raises(BadConfig):
            GenConfig(method="tue", **bad).validate()


def test_train_config_helpers():
    assert init_supervised_config(2).seed == 2
    pre = init_pretrain_config(1, epochs=3)
    assert pre.epochs == 3 and pre.seed == 1
    assert isinstance(init_probe_config(0), ProbeConfig)
    with pytest.raises(BadConfig):
        init_probe_config(0, split_fraction=1.0)
    with pytest.raises(BadConfig):
        init_supervised_config(0, schedule="step")
