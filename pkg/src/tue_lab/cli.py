"""
Command-line front end. Every subcommand loads its inputs, calls one library
operation and writes its outputs atomically next to a provenance record.

Exit codes: 0 success, 1 runtime error, 2 usage or configuration error. Errors
are reported as one JSON line on standard error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union, get_args, get_origin, get_type_hints

from tue_lab.configs import bench_constants as bc
from tue_lab.configs.constants import Method, Mode
from tue_lab.core.errors import BadConfig, SchemaError, TueError, UnknownMethod
from tue_lab.core.losses import csd
from tue_lab.core.perturb import load_perturbations, save_perturbations
from tue_lab.core.utils import atomic_write_text
from tue_lab.datasets.cifar import load_cifar_binary
from tue_lab.datasets.dataset import class_capped_sample
from tue_lab.datasets.io import load_dataset, save_dataset
from tue_lab.datasets.synthetic import SyntheticConfig, make_synthetic_split
from tue_lab.pipelines.config import GenConfig, ModelDims, ProbeConfig, TrainConfig, init_pretrain_config
from tue_lab.pipelines.context import default_augmentation
from tue_lab.pipelines.experiments import resolve_workers, swap_eval, training_wise_eval, transfer_eval
from tue_lab.pipelines.generators import generate
from tue_lab.pipelines.reports import (
    JsonLinesWriter,
    ReportRow,
    provenance_record,
    write_csv,
    write_json,
    write_projection,
    write_provenance,
)
from tue_lab.pipelines.training import apply_perturbations, evaluate, separability_probe

SECTIONS = ("method", "seed", "data", "model", "generate", "train", "eval", "output")
USAGE_ERRORS = (SchemaError, BadConfig, UnknownMethod)


class UsageError(TueError):
    pass


# Config schema ------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalOptions:
    swap_seed: int = 0
    transfer_seed: int = 0
    interpolate: bool = False
    workers: int = 1
    class_map: Optional[List[int]] = None


@dataclass(frozen=True)
class OutputOptions:
    trace: Optional[str] = None
    jsonl: Optional[str] = None


@dataclass(frozen=True)
class CliConfig:
    method: str
    seed: int
    data: SyntheticConfig
    test_per_class: int
    generate: GenConfig
    supervised: TrainConfig
    pretrain: TrainConfig
    probe: ProbeConfig
    eval: EvalOptions
    output: OutputOptions
    extra_ctx: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self.data)
        data["test_per_class"] = self.test_per_class
        return {
            "method": self.method,
            "seed": self.seed,
            "data": data,
            "model": {k: dict(v) for k, v in self.extra_ctx.items()},
            "generate": asdict(self.generate),
            "train": {
                "supervised": asdict(self.supervised),
                "pretrain": asdict(self.pretrain),
                "probe": asdict(self.probe),
            },
            "eval": asdict(self.eval),
            "output": asdict(self.output),
        }


def _declared_type(cls: type, name: str) -> Tuple[type, bool]:
    """(base type, nullable) of a dataclass field; Optional[X] unwraps to X."""
    hint = get_type_hints(cls)[name]
    nullable = False
    if get_origin(hint) is Union:
        args = [a for a in get_args(hint) if a is not type(None)]
        nullable = len(args) < len(get_args(hint))
        hint = args[0]
    return (get_origin(hint) or hint), nullable


def _check_value(value: Any, expected: type, key_path: str, nullable: bool = False) -> Any:
    if value is None and nullable:
        return value
    if expected is bool:
        ok = isinstance(value, bool)
    elif expected is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif expected is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    else:
        ok = isinstance(value, expected)
    if not ok:
        raise SchemaError(key_path, f"expected {expected.__name__}, got {type(value).__name__}")
    return value


def _section(doc: Any, key_path: str) -> Mapping[str, Any]:
    if doc is None:
        return {}
    if not isinstance(doc, Mapping):
        raise SchemaError(key_path, f"expected an object, got {type(doc).__name__}")
    return doc


def _build(base: Any, doc: Any, key_path: str):
    """replace(base, **doc) with unknown keys and wrong types rejected by dotted key path."""
    doc = _section(doc, key_path)
    known = {f.name for f in fields(base)}
    updates = {}
    for k, v in doc.items():
        if k not in known:
            raise SchemaError(f"{key_path}.{k}", "unknown key")
        expected, nullable = _declared_type(type(base), k)
        updates[k] = _check_value(v, expected, f"{key_path}.{k}", nullable)
    try:
        out = replace(base, **updates)
        return out.validate() if hasattr(out, "validate") else out
    except UnknownMethod:
        raise
    except (TypeError, ValueError) as e:
        raise SchemaError(key_path, str(e)) from e


def _seeded(doc: Any, seed: int, key_path: str) -> Dict[str, Any]:
    return {"seed": seed, **dict(_section(doc, key_path))}


def config_from_dict(doc: Any) -> CliConfig:
    doc = _section(doc, "")
    for k in doc:
        if k not in SECTIONS:
            raise SchemaError(k, "unknown key")
    seed = _check_value(doc.get("seed", 0), int, "seed")
    method = _check_value(doc.get("method", str(Method.TUE)), str, "method")

    data_doc = dict(_section(doc.get("data"), "data"))
    test_per_class = _check_value(data_doc.pop("test_per_class", bc.BENCH_TEST_PER_CLASS), int, "data.test_per_class")
    data = _build(SyntheticConfig(seed=seed), data_doc, "data")

    model_doc = _section(doc.get("model"), "model")
    extra_ctx: Dict[str, Dict[str, Any]] = {}
    for k, v in model_doc.items():
        if k in ("encoder", "classifier"):
            extra_ctx[k] = asdict(_build(ModelDims(), v, f"model.{k}"))
        elif k == "augment":
            extra_ctx[k] = asdict(_build(default_augmentation(), v, "model.augment"))
        else:
            raise SchemaError(f"model.{k}", "unknown key")

    gen_doc = _seeded(doc.get("generate"), seed, "generate")
    gen_method = gen_doc.pop("method", method)
    try:
        generate_cfg = _build(GenConfig(method=str(gen_method)), gen_doc, "generate")
    except UnknownMethod as e:
        raise SchemaError("generate.method", str(e)) from e

    train_doc = _section(doc.get("train"), "train")
    for k in train_doc:
        if k not in ("supervised", "pretrain", "probe"):
            raise SchemaError(f"train.{k}", "unknown key")
    supervised = _build(TrainConfig(seed=seed), train_doc.get("supervised"), "train.supervised")
    pretrain = _build(init_pretrain_config(seed), train_doc.get("pretrain"), "train.pretrain")
    probe = _build(ProbeConfig(seed=seed), train_doc.get("probe"), "train.probe")

    eval_opts = _build(EvalOptions(swap_seed=seed, transfer_seed=seed), doc.get("eval"), "eval")
    if eval_opts.class_map is not None and not all(isinstance(c, int) for c in eval_opts.class_map):
        raise SchemaError("eval.class_map", "expected a list of integers")
    output = _build(OutputOptions(), doc.get("output"), "output")

    return CliConfig(
        method=str(gen_method),
        seed=seed,
        data=data,
        test_per_class=test_per_class,
        generate=generate_cfg,
        supervised=supervised,
        pretrain=pretrain,
        probe=probe,
        eval=eval_opts,
        output=output,
        extra_ctx=extra_ctx,
    )


def parse_config(path: Optional[str]) -> CliConfig:
    """Read and validate a JSON config; no path means all defaults."""
    if path is None:
        return config_from_dict({})
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError("", f"{path} is not valid JSON: {e}") from e
    return config_from_dict(doc)


# Subcommands ----------------------------------------------------------------------------

def _require_files(*paths: Optional[str]) -> None:
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise FileNotFoundError(f"input file not found: {p}")


def _provenance(args, cfg: CliConfig, inputs: Sequence[Optional[str]], outputs: Sequence[str]) -> None:
    record = provenance_record(
        args.command,
        cfg.to_dict(),
        cfg.seed,
        inputs=[p for p in inputs if p is not None],
        outputs=outputs,
    )
    write_provenance(outputs[0], record)


def cmd_gen_data(args, cfg: CliConfig) -> int:
    if args.cifar:
        _require_files(*args.cifar)
        ds = load_cifar_binary(args.cifar, name=Path(args.out).stem)
        if args.cap is not None:
            ds = class_capped_sample(ds, args.cap, cfg.seed)
        outputs = [str(save_dataset(ds, args.out))]
    else:
        train, test = make_synthetic_split(cfg.data, cfg.test_per_class)
        outputs = [str(save_dataset(train, args.out))]
        if args.test:
            outputs.append(str(save_dataset(test, args.test)))
    _provenance(args, cfg, list(args.cifar or []), outputs)
    return 0


def cmd_gen_noise(args, cfg: CliConfig) -> int:
    _require_files(args.data)
    gen_cfg = replace(cfg.generate, method=args.method).validate()
    ds = load_dataset(args.data)
    pset, trace = generate(ds, gen_cfg, extra_ctx=cfg.extra_ctx, progress=args.progress)
    outputs = [str(save_perturbations(pset, args.out))]
    trace_path = args.trace or cfg.output.trace
    if trace_path:
        outputs.append(str(atomic_write_text(trace_path, trace.to_json())))
    cfg = replace(cfg, method=args.method, generate=gen_cfg)
    _provenance(args, cfg, [args.data, args.config], outputs)
    return 0


def _test_split(args, cfg: CliConfig):
    if args.test:
        return load_dataset(args.test)
    logging.warning("No --test given; drawing the clean test split from the config's data section")
    return make_synthetic_split(cfg.data, cfg.test_per_class)[1]


def cmd_eval(args, cfg: CliConfig) -> int:
    _require_files(args.data, args.perturbations, args.test)
    train = load_dataset(args.data)
    if args.perturbations:
        train = apply_perturbations(train, load_perturbations(args.perturbations))
    test = _test_split(args, cfg)
    result = evaluate(
        train, test, args.mode, cfg.supervised, cfg.pretrain, cfg.probe, extra_ctx=cfg.extra_ctx, progress=args.progress
    )
    out = write_json(args.out, {"result": result, "config": cfg.to_dict()})
    _append_jsonl(args, cfg, [{"experiment": "eval", **result.to_dict()}])
    print(f"{result.accuracy:.4f}")
    _provenance(args, cfg, [args.data, args.perturbations, args.test], [str(out)])
    return 0


def _append_jsonl(args, cfg: CliConfig, records: List[Dict[str, Any]]) -> None:
    path = getattr(args, "jsonl", None) or cfg.output.jsonl
    if path:
        JsonLinesWriter(path).extend(records)


def _set_csd(pset) -> Optional[float]:
    try:
        return csd(pset.deltas, pset.labels, allow_floor=True)[0].csd
    except TueError as e:
        logging.warning(f"csd unavailable for {pset.source_name}: {e}")
        return None


def cmd_swap_eval(args, cfg: CliConfig) -> int:
    _require_files(args.data, args.perturbations, args.test)
    ds = load_dataset(args.data)
    pset = load_perturbations(args.perturbations)
    test = _test_split(args, cfg)
    workers = resolve_workers(args.workers or cfg.eval.workers)
    results = swap_eval(ds, pset, test, cfg.supervised, seed=cfg.eval.swap_seed, workers=workers, extra_ctx=cfg.extra_ctx)
    value = _set_csd(pset)
    method = args.method or pset.source_name
    rows = [
        ReportRow("swap", method, str(Mode.SUPERVISED), name, r.accuracy, value, r.seed)
        for name, r in results.items()
    ]
    out = write_csv(args.out, rows)
    _append_jsonl(args, cfg, [{"experiment": "swap", "correspondence": n, **r.to_dict()} for n, r in results.items()])
    _provenance(args, cfg, [args.data, args.perturbations, args.test], [str(out)])
    return 0


def cmd_transfer(args, cfg: CliConfig) -> int:
    _require_files(args.perturbations, args.target, args.test)
    pset = load_perturbations(args.perturbations)
    target = load_dataset(args.target)
    test = _test_split(args, cfg)
    result = transfer_eval(
        pset,
        target,
        test,
        cfg.supervised,
        class_map=cfg.eval.class_map,
        interpolate=args.interpolate or cfg.eval.interpolate,
        seed=cfg.eval.transfer_seed,
        extra_ctx=cfg.extra_ctx,
    )
    out = write_json(args.out, {"result": result, "config": cfg.to_dict()})
    _append_jsonl(args, cfg, [{"experiment": "transfer", **result.to_dict()}])
    print(f"{result.accuracy:.4f}")
    _provenance(args, cfg, [args.perturbations, args.target, args.test], [str(out)])
    return 0


def cmd_matrix(args, cfg: CliConfig) -> int:
    _require_files(args.data, args.test, *args.perturbations)
    train = load_dataset(args.data)
    test = _test_split(args, cfg)
    sets = {Path(p).stem: load_perturbations(p) for p in args.perturbations}
    workers = resolve_workers(args.workers or cfg.eval.workers)
    results = training_wise_eval(
        train, test, sets, cfg.supervised, cfg.pretrain, cfg.probe, workers=workers, extra_ctx=cfg.extra_ctx
    )
    csds = {name: _set_csd(pset) for name, pset in sets.items()}
    rows = [
        ReportRow("training-wise", name, mode, "original", r.accuracy, csds.get(name), r.seed)
        for (name, mode), r in results.items()
    ]
    out = write_csv(args.out, rows)
    _append_jsonl(args, cfg, [{"experiment": "training-wise", "method": n, **r.to_dict()} for (n, _), r in results.items()])
    _provenance(args, cfg, [args.data, args.test, *args.perturbations], [str(out)])
    return 0


def cmd_csd(args, cfg: CliConfig) -> int:
    _require_files(args.perturbations)
    pset = load_perturbations(args.perturbations)
    report, _ = csd(pset.deltas, pset.labels, allow_floor=args.allow_floor)
    print(f"{report.csd:.9g}")
    if args.out is not None:
        result = {
            "csd": report.csd,
            "floored": report.floored,
            "classes": report.classes,
            "intra": report.intra,
            "inter": report.inter,
        }
        out = write_json(args.out, {"result": result, "config": cfg.to_dict()})
        _provenance(args, cfg, [args.perturbations], [str(out)])
    return 0


def cmd_probe(args, cfg: CliConfig) -> int:
    _require_files(args.perturbations)
    pset = load_perturbations(args.perturbations)
    result = separability_probe(pset, cfg=cfg.probe)
    out = write_json(args.out, {"result": result, "config": cfg.to_dict()})
    _append_jsonl(args, cfg, [{"experiment": "probe", "method": pset.source_name, **result.to_dict()}])
    print(f"{result.heldout_accuracy:.4f}")
    _provenance(args, cfg, [args.perturbations], [str(out)])
    return 0


def project_dump(perturbation_file: str, out_csv: str) -> Path:
    """label, pc1, pc2 for every perturbation in a TUEP file."""
    _require_files(perturbation_file)
    return write_projection(load_perturbations(perturbation_file), out_csv)


def cmd_project(args, cfg: CliConfig) -> int:
    out = project_dump(args.perturbations, args.out)
    _provenance(args, cfg, [args.perturbations], [str(out)])
    return 0


# Parser -----------------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tue-lab", description="Generate and evaluate transferable unlearnable examples.")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    methods = [str(m) for m in Method]

    def add(name: str, help: str) -> argparse.ArgumentParser:
        p = subparsers.add_parser(name, help=help)
        p.add_argument("--config", default=None, help="JSON experiment config (defaults when omitted)")
        p.add_argument("--log", action="store_true", help="Enable INFO logging")
        p.add_argument("--progress", action="store_true", help="Show progress bars")
        return p

    p = add("gen-data", "Draw the synthetic benchmark or convert CIFAR-style batches to TUED")
    p.add_argument("--out", required=True, help="Output TUED file (training split)")
    p.add_argument("--test", default=None, help="Output TUED file for the clean test split")
    p.add_argument("--cifar", nargs="+", default=None, help="CIFAR-style binary batch files to convert instead")
    p.add_argument("--cap", type=int, default=None, help="Keep at most this many samples per class (CIFAR input)")
    p.set_defaults(func=cmd_gen_data)

    p = add("gen-noise", "Generate a perturbation set")
    p.add_argument("--method", required=True, choices=methods)
    p.add_argument("--data", required=True, help="Clean TUED dataset")
    p.add_argument("--out", required=True, help="Output TUEP file")
    p.add_argument("--trace", default=None, help="Output JSON trace of the alternation rounds")
    p.set_defaults(func=cmd_gen_noise)

    p = add("eval", "Train on a (perturbed) dataset and score on clean test data")
    p.add_argument("--mode", required=True, choices=[str(m) for m in Mode])
    p.add_argument("--data", required=True)
    p.add_argument("--perturbations", default=None)
    p.add_argument("--test", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--jsonl", default=None, help="Append the result to this JSON lines file")
    p.set_defaults(func=cmd_eval)

    p = add("swap-eval", "Original / intra-class / inter-class correspondence experiment")
    p.add_argument("--data", required=True)
    p.add_argument("--perturbations", required=True)
    p.add_argument("--test", default=None)
    p.add_argument("--method", default=None, help="Method name for the CSV (default: perturbation source tag)")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--jsonl", default=None)
    p.set_defaults(func=cmd_swap_eval)

    p = add("transfer", "Transfer a perturbation set to another dataset")
    p.add_argument("--perturbations", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--test", default=None, help="Clean test split of the target")
    p.add_argument("--interpolate", action="store_true", help="Interpolate missing classes and samples")
    p.add_argument("--out", required=True)
    p.add_argument("--jsonl", default=None)
    p.set_defaults(func=cmd_transfer)

    p = add("matrix", "Clean and perturbed training sets under supervised and unsupervised training")
    p.add_argument("--data", required=True)
    p.add_argument("--perturbations", nargs="+", required=True)
    p.add_argument("--test", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--jsonl", default=None)
    p.set_defaults(func=cmd_matrix)

    p = add("csd", "Print the Classwise Separability Discriminant of a perturbation set")
    p.add_argument("--perturbations", required=True)
    p.add_argument("--allow-floor", action="store_true", help="Floor coincident centroids instead of failing")
    p.add_argument("--out", default=None, help="Also write the per-class report as JSON")
    p.set_defaults(func=cmd_csd)

    p = add("probe", "Linear separability probe on a perturbation set")
    p.add_argument("--perturbations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jsonl", default=None)
    p.set_defaults(func=cmd_probe)

    p = add("project", "Dump a 2-D PCA projection of a perturbation set as CSV")
    p.add_argument("--perturbations", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project)

    return parser


def _report_error(e: BaseException) -> None:
    print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.log else logging.WARNING, format="%(levelname)s %(message)s")
        cfg = parse_config(args.config)
        return args.func(args, cfg)
    except SystemExit as e:
        # --help
        return int(e.code or 0)
    except (UsageError,) + USAGE_ERRORS as e:
        _report_error(e)
        return 2
    except Exception as e:
        logging.debug("command failed", exc_info=True)
        _report_error(e)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
