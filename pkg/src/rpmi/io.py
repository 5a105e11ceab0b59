"""CSV and JSON formats for phase sets, intensity records and sweep tables."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgumentError
from .interferometer import InterferometerConfig, IntensityRecord, NoiseModel
from .pnseq import GeneratorPolynomial, PhaseSequenceSet

__all__ = [
    "fmt",
    "matrix_to_csv",
    "matrix_from_csv",
    "phase_set_to_json",
    "phase_set_from_json",
    "record_to_json",
    "record_from_json",
    "table_to_csv",
    "write_text",
]


def fmt(x: float) -> str:
    """17 significant digits: enough to round-trip any double."""
    return format(float(x), ".17g")


def matrix_to_csv(matrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in np.asarray(matrix, dtype=float):
        w.writerow(fmt(v) for v in row)
    return buf.getvalue()


def matrix_from_csv(text: str) -> np.ndarray:
    rows = [list(map(float, r)) for r in csv.reader(io.StringIO(text)) if r]
    if not rows or len({len(r) for r in rows}) != 1:
        raise InvalidArgumentError("CSV matrix must have rows of equal, nonzero length")
    return np.array(rows, dtype=float)


def phase_set_to_dict(ps: PhaseSequenceSet) -> dict:
    return {
        "n": ps.order,
        "N": ps.slots,
        "M": ps.units,
        "poly": None if ps.poly is None else str(ps.poly),
        "shifts": None if ps.shifts is None else list(ps.shifts),
        "mode": ps.mode,
        "seed": ps.seed,
        "phases": ps.phases.tolist(),
    }


def phase_set_to_json(ps: PhaseSequenceSet) -> str:
    return json.dumps(phase_set_to_dict(ps), indent=1)


def phase_set_from_json(text: str) -> PhaseSequenceSet:
    d = json.loads(text)
    phases = np.array(d["phases"], dtype=float)
    if phases.shape != (d["N"], d["M"]):
        raise InvalidArgumentError(f"phases shape {phases.shape} != (N, M) = ({d['N']}, {d['M']})")
    poly = GeneratorPolynomial.parse(d["poly"]) if d.get("poly") else None
    if poly is not None and d.get("n") is not None and poly.order != d["n"]:
        raise InvalidArgumentError("polynomial order disagrees with n")
    return PhaseSequenceSet(
        phases,
        d.get("mode", "designed"),
        poly,
        None if d.get("shifts") is None else tuple(d["shifts"]),
        d.get("seed"),
    )


def record_to_json(rec: IntensityRecord) -> str:
    return json.dumps(
        {
            "N": rec.slots,
            "M": rec.units,
            "period_index": rec.period_index,
            "config": rec.config.to_dict(),
            "noise": rec.noise.to_dict(),
            "values": rec.values.tolist(),
        },
        indent=1,
    )


def record_from_json(text: str) -> IntensityRecord:
    d = json.loads(text)
    return IntensityRecord(
        np.array(d["values"], dtype=float),
        InterferometerConfig(**d["config"]),
        NoiseModel(**d["noise"]),
        d.get("period_index", 0),
    )


def table_to_csv(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow(fmt(v) if isinstance(v, (float, np.floating)) else v for v in row)
    return buf.getvalue()


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path
