"""Reading prediction files and writing sweep tables.

Input CSV: header ``id,label,s0,...,s{K-1}`` (the ``label`` column may be
omitted; an empty cell means unlabeled).  Input JSONL: one object per line
with ``id``, ``scores`` and optionally ``label``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .losses import validate_probs

FORMATS = ("csv", "jsonl")
SCORE_TYPES = ("probs", "logits")
SWEEP_HEADER = ("tau", "coverage", "accuracy", "selective_risk", "n_accepted")


@dataclass(frozen=True)
class PredictionRecord:
    id: str
    label: int | None
    scores: tuple


def _infer_format(path: Path, fmt):
    if fmt is not None:
        if fmt not in FORMATS:
            raise ConfigError(f"unknown format {fmt!r}; expected one of {FORMATS}")
        return fmt
    suffix = path.suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix in (".jsonl", ".ndjson"):
        return "jsonl"
    raise ConfigError(f"cannot infer the format of {path}; pass csv or jsonl explicitly")


def _parse_label(raw, where):
    if raw is None or raw == "":
        return None
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise DataError(f"{where}: label {raw!r} is not an integer") from None
    if not value.is_integer() or value < 0:
        raise DataError(f"{where}: label {raw!r} is not a non-negative integer")
    return int(value)


def _parse_scores(raw, where):
    try:
        scores = tuple(float(s) for s in raw)
    except (TypeError, ValueError):
        raise DataError(f"{where}: scores must be numbers") from None
    if not all(math.isfinite(s) for s in scores):
        raise DataError(f"{where}: non-finite score")
    return scores


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        has_label = len(header) > 1 and header[1] == "label"
        first = 2 if has_label else 1
        k = len(header) - first
        expected = ["id"] + (["label"] if has_label else []) + [f"s{i}" for i in range(k)]
        if header != expected or k < 2:
            raise DataError(
                f"{path}: header {header} does not match id[,label],s0,...,s{{K-1}} with K >= 2"
            )
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            if len(row) != len(header):
                raise DataError(f"{where}: expected {len(header)} columns, found {len(row)}")
            label = _parse_label(row[1], where) if has_label else None
            yield where, row[0], label, _parse_scores(row[first:], where)


def _read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{where}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict) or "id" not in obj or "scores" not in obj:
                raise DataError(f"{where}: expected an object with 'id' and 'scores'")
            extra = set(obj) - {"id", "label", "scores"}
            if extra:
                raise DataError(f"{where}: unexpected keys {sorted(extra)}")
            if not isinstance(obj["scores"], list):
                raise DataError(f"{where}: 'scores' must be a list")
            yield where, str(obj["id"]), _parse_label(obj.get("label"), where), _parse_scores(obj["scores"], where)


def ingest(path, fmt: str | None = None, score_type: str = "probs") -> list[PredictionRecord]:
    """Read and validate a prediction file."""
    path = Path(path)
    if score_type not in SCORE_TYPES:
        raise ConfigError(f"unknown score type {score_type!r}; expected one of {SCORE_TYPES}")
    fmt = _infer_format(path, fmt)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    reader = _read_csv if fmt == "csv" else _read_jsonl
    records, seen, width = [], set(), None
    for where, rid, label, scores in reader(path):
        if rid in seen:
            raise DataError(f"{where}: duplicate id {rid!r}")
        seen.add(rid)
        if width is None:
            width = len(scores)
        if len(scores) != width or width < 2:
            raise DataError(f"{where}: expected {width} scores (>= 2), found {len(scores)}")
        if label is not None and label >= width:
            raise DataError(f"{where}: label {label} out of range for {width} classes")
        if score_type == "probs":
            try:
                validate_probs(np.array([scores]))
            except DataError as exc:
                raise DataError(f"{where}: {exc}") from None
        records.append(PredictionRecord(rid, label, scores))
    if not records:
        raise DataError(f"{path}: no records")
    return records


def as_arrays(records: list[PredictionRecord]):
    """``(ids, labels, scores)``; ``labels`` is None unless every record has one."""
    ids = [r.id for r in records]
    scores = np.array([r.scores for r in records], dtype=float)
    if all(r.label is not None for r in records):
        labels = np.array([r.label for r in records], dtype=np.int64)
    else:
        labels = None
    return ids, labels, scores


def write_predictions(path, ids, scores, labels=None):
    path = Path(path)
    fmt = _infer_format(path, None)
    scores = np.asarray(scores, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if fmt == "csv":
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id"] + (["label"] if labels is not None else [])
                       + [f"s{i}" for i in range(scores.shape[1])])
            for i, rid in enumerate(ids):
                lab = [int(labels[i])] if labels is not None else []
                w.writerow([rid] + lab + [repr(float(s)) for s in scores[i]])
        else:
            for i, rid in enumerate(ids):
                obj = {"id": rid}
                if labels is not None:
                    obj["label"] = int(labels[i])
                obj["scores"] = [float(s) for s in scores[i]]
                fh.write(json.dumps(obj) + "\n")


def _fmt(x):
    return "" if x is None else f"{x:.12g}"


def write_sweep(dest, rows):
    """Write sweep rows as CSV to a path or an open text stream."""
    if hasattr(dest, "write"):
        _write_sweep_rows(dest, rows)
        return
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        _write_sweep_rows(fh, rows)


def _write_sweep_rows(fh, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow([_fmt(r.tau), _fmt(r.coverage), _fmt(r.accuracy),
                    _fmt(r.selective_risk), r.n_accepted])


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
