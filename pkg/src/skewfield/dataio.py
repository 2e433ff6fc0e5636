"""Dataset, layout, and report persistence with provenance headers.

CSV files are wide (one row per time point, one column per site, header row of
site ids) and carry '#'-prefixed provenance comment lines. All floats are
written with shortest round-trip repr, so a CSV -> memory -> CSV cycle is
byte-identical and values survive at full double precision.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .model import Dataset
from .report import FitReport
from .spatial import SpatialLayout

__all__ = [
    "config_hash",
    "make_provenance",
    "read_dataset_csv",
    "read_fit_report",
    "read_layout_json",
    "write_dataset_csv",
    "write_fit_report",
    "write_json",
    "write_layout_json",
]


def config_hash(config: dict) -> str:
    """sha256 of the canonical JSON encoding of a configuration."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def make_provenance(seed: int, config: dict) -> dict:
    return {
        "tool": "skewfield",
        "version": __version__,
        "seed": int(seed),
        "config_hash": config_hash(config),
    }


def _provenance_lines(provenance: dict) -> list[str]:
    return [f"# {k}: {provenance[k]}" for k in sorted(provenance)]


def write_dataset_csv(path, dataset: Dataset, provenance: dict | None = None) -> None:
    path = Path(path)
    lines = _provenance_lines(provenance) if provenance else []
    lines.append(",".join(dataset.layout.site_ids))
    for row in dataset.y:
        lines.append(",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def read_dataset_csv(path, layout: SpatialLayout) -> Dataset:
    path = Path(path)
    rows: list[list[float]] = []
    header: list[str] | None = None
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line or line.startswith("#"):
            continue
        cells = line.split(",")
        if header is None:
            header = [c.strip() for c in cells]
            if header != list(layout.site_ids):
                raise ValueError(
                    f"{path.name}: header does not match layout site ids"
                )
            continue
        if len(cells) != len(header):
            raise ValueError(
                f"{path.name}: row {lineno} has {len(cells)} cells, expected {len(header)}"
            )
        parsed = []
        for col, cell in zip(header, cells):
            try:
                parsed.append(float(cell))
            except ValueError as exc:
                raise ValueError(
                    f"{path.name}: row {lineno}, column {col!r}: cannot parse {cell!r}"
                ) from exc
        rows.append(parsed)
    if header is None:
        raise ValueError(f"{path.name}: missing header row")
    y = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return Dataset(y=y, layout=layout)


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def write_layout_json(path, layout: SpatialLayout, provenance: dict | None = None) -> None:
    payload = layout.to_dict()
    if provenance:
        payload["provenance"] = provenance
    write_json(path, payload)


def read_layout_json(path) -> SpatialLayout:
    return SpatialLayout.from_dict(json.loads(Path(path).read_text()))


def write_fit_report(path, report: FitReport, provenance: dict | None = None) -> None:
    payload = report.to_dict()
    if provenance:
        payload["provenance"] = provenance
    write_json(path, payload)


def read_fit_report(path) -> FitReport:
    return FitReport.from_dict(json.loads(Path(path).read_text()))


def write_trace_csv(path, report: FitReport) -> None:
    """Per-iteration trace in long, plot-ready form."""
    lines = ["iteration,n_sweeps,loglik,loglik_stderr,q_value,aitken,acceptance"]
    for row in report.trace:
        acc = ";".join(repr(a) for a in row.acceptance)
        ait = "" if row.aitken is None else repr(row.aitken)
        lines.append(
            f"{row.index},{row.n_sweeps},{row.loglik!r},{row.loglik_stderr!r},"
            f"{row.q_value!r},{ait},{acc}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
