from __future__ import annotations
from dataclasses import dataclass, field, asdict, is_dataclass
from collections.abc import Mapping, Iterator
from typing import Any, Dict, Optional

from tue_lab.configs import bench_constants as bc
from tue_lab.core.errors import BadConfig
from tue_lab.core.transforms import AugmentationPair
from tue_lab.pipelines.config import COMPONENTS, RESERVED, ModelDims


class NS:
    """
    Namespace wrapper around dict for attribute-style access.
    """
    def __init__(self, d):
        object.__setattr__(self, "_d", dict(d))

    def __getattr__(self, k):
        try:
            v = self._d[k]
        except KeyError:
            raise AttributeError(k) from None
        return NS(v) if isinstance(v, dict) else v

    def __setattr__(self, k, v):
        self._d[k] = v

    def get(self, k, default=None):
        return self._d.get(k, default)

    def to_dict(self) -> Dict[str, Any]:
        return dict(self._d)


@dataclass(frozen=True)
class Context(Mapping[str, Any]):
    """
    General context object for pipelines.
    Cfg contains invariant configuration parameters (a GenConfig or TrainConfig).
    Extra contains any additional context parameters.
    Each key in extra corresponds to a pipeline component (augment, encoder,
    classifier) that may contain its own parameters; "round" carries
    per-round generator state.
    Extras override cfg on name collisions.
    """
    cfg: Any
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __getattr__(self, name: str) -> Any:
        if name in self.extra:
            v = self.extra[name]
            return NS(v) if isinstance(v, dict) else v
        return getattr(self.cfg, name)  # raises AttributeError if missing

    def __getitem__(self, key: str) -> Any:
        if key in self.extra:
            v = self.extra[key]
            return NS(v) if isinstance(v, dict) else v
        if is_dataclass(self.cfg):
            d = asdict(self.cfg)
            if key in d:
                return d[key]
        return getattr(self.cfg, key)

    def __iter__(self) -> Iterator[str]:
        keys = set(self.extra.keys())
        if is_dataclass(self.cfg):
            keys |= set(asdict(self.cfg).keys())
        return iter(keys)

    def __len__(self) -> int:
        return sum(1 for _ in self.__iter__())

    def merged_dict(self) -> dict[str, Any]:
        base = asdict(self.cfg) if is_dataclass(self.cfg) else {}
        return {**base, **dict(self.extra)}

    def with_extra(self, **components: Mapping[str, Any]) -> "Context":
        return Context(cfg=self.cfg, extra={**dict(self.extra), **components})

    def component(self, name: str) -> Dict[str, Any]:
        v = self.extra.get(name)
        return dict(v) if v is not None else {}

    def _validate_extra(self, extra: Mapping[str, Any]) -> None:
        for k, v in extra.items():
            if k in RESERVED:
                if not isinstance(v, Mapping):
                    raise TypeError(f"extra['{k}'] must be a mapping/dict, got {type(v)}")
                continue

            if not isinstance(v, Mapping):
                raise TypeError(
                    f"extra['{k}'] must be a dict of component params; "
                    f"top-level scalar keys are not allowed (got {type(v)})"
                )
            if k not in COMPONENTS:
                raise BadConfig(f"unknown pipeline component '{k}', expected one of {sorted(COMPONENTS)}")

    def __post_init__(self) -> None:
        self._validate_extra(self.extra)


def make_context(cfg: Any, extra_ctx: Optional[Mapping[str, Mapping[str, Any]]] = None) -> Context:
    return Context(cfg=cfg, extra=dict(extra_ctx or {}))


def default_augmentation() -> AugmentationPair:
    return AugmentationPair(crop_pad=bc.AUG_CROP_PAD, flip_prob=bc.AUG_FLIP_PROB, jitter_std=bc.AUG_JITTER_STD)


def augmentation_of(ctx: Context) -> AugmentationPair:
    """AugmentationPair from extra['augment'], benchmark views when absent."""
    params = ctx.component("augment")
    if not params:
        return default_augmentation()
    try:
        return AugmentationPair(**params).validate()
    except TypeError as e:
        raise BadConfig(f"bad augment parameters {params}: {e}") from e


def dims_of(ctx: Context, component: str) -> ModelDims:
    """ModelDims from extra[component] ("encoder" or "classifier"), defaults when absent."""
    params = ctx.component(component)
    try:
        return ModelDims(**params).validate()
    except TypeError as e:
        raise BadConfig(f"bad {component} parameters {params}: {e}") from e
