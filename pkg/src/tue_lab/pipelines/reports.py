"""Result records: JSON documents, JSON lines, the aggregate CSV and provenance files."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np

from tue_lab.core.kernel import pca_project
from tue_lab.core.perturb import PerturbationSet
from tue_lab.core.utils import atomic_write_text, make_dirs_if_not_exists, sha256_file

PathLike = Union[str, Path]

CSV_COLUMNS = ("experiment", "method", "mode", "correspondence", "accuracy", "csd", "seed")


@dataclass(frozen=True)
class ReportRow:
    experiment: str
    method: str
    mode: str
    correspondence: str
    accuracy: float
    csd: Optional[float]
    seed: int


def format_accuracy(value: float) -> str:
    """Fractions with 4 decimals; multiply by 100 for percent."""
    return f"{value:.4f}"


def format_csd(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.9g}"


def rows_to_csv(rows: Iterable[ReportRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([
            r.experiment, r.method, r.mode, r.correspondence, format_accuracy(r.accuracy), format_csd(r.csd), r.seed,
        ])
    return buf.getvalue()


def write_csv(path: PathLike, rows: Iterable[ReportRow]) -> Path:
    rows = list(rows)
    out = atomic_write_text(path, rows_to_csv(rows))
    logging.info(f"Wrote {len(rows)} report rows to {out}")
    return out


def _jsonable(obj: Any) -> Any:
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def to_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def write_json(path: PathLike, obj: Any) -> Path:
    return atomic_write_text(path, to_json(obj))


class JsonLinesWriter:
    """Single writer appending one record per line."""

    def __init__(self, path: PathLike):
        self.path = Path(path)
        make_dirs_if_not_exists(self.path.parent)

    def append(self, record: Mapping[str, Any]) -> None:
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(json.dumps(record, sort_keys=True, default=_jsonable) + "\n")

    def extend(self, records: Iterable[Mapping[str, Any]]) -> None:
        for r in records:
            self.append(r)


def provenance_path(out: PathLike) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".provenance.json")


def provenance_record(
    command: str,
    config: Mapping[str, Any],
    seed: Optional[int],
    inputs: Sequence[PathLike] = (),
    outputs: Sequence[PathLike] = (),
) -> Dict[str, Any]:
    from tue_lab import __version__

    return {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": dict(config),
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {str(p): sha256_file(p) for p in outputs},
    }


def write_provenance(out: PathLike, record: Mapping[str, Any]) -> Path:
    return write_json(provenance_path(out), record)


def project_rows(pset: PerturbationSet, dims: int = 2) -> List[List[str]]:
    """PCA of the perturbations: one [label, pc1, pc2] row per perturbation."""
    points = pca_project(pset.deltas, dims)
    return [[str(int(y))] + [repr(float(v)) for v in p] for y, p in zip(pset.labels, points)]


def write_projection(pset: PerturbationSet, out: PathLike) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label", "pc1", "pc2"])
    writer.writerows(project_rows(pset))
    path = atomic_write_text(out, buf.getvalue())
    logging.info(f"Wrote {pset.n} projected points to {path}")
    return path
