"""Prediction-file and epoch-directory I/O for the CLI.

Prediction files are CSV with a header: a ``label`` column of integer class
indices plus probability columns ``p0..p{k-1}`` or logit columns
``z0..z{k-1}``.  Epoch directories hold ``epoch_0000.csv``-style files with
contiguous zero-padded numbering from 0.  Floats are always written with 17
significant digits so outputs are byte-stable.
"""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import numpy as np

from .calibrate import calibrator_from_dict
from .errors import ValidationError
from .scores import PredictionSet

FLOAT_FMT = "%.17g"
_EPOCH_RE = re.compile(r"^epoch_(\d{4,})\.csv$")


def _column_block(header: list[str], prefix: str) -> list[int] | None:
    cols = {}
    for idx, name in enumerate(header):
        m = re.fullmatch(rf"{prefix}(\d+)", name.strip())
        if m:
            cols[int(m.group(1))] = idx
    if not cols:
        return None
    k = len(cols)
    if sorted(cols) != list(range(k)):
        raise ValidationError(f"{prefix}-columns must be contiguous {prefix}0..{prefix}{k-1}")
    return [cols[i] for i in range(k)]


def read_prediction_file(path, logits: bool = False, renormalize: bool = False) -> PredictionSet:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ValidationError(f"{path}: empty file")
            rows = list(reader)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}")
    header = [h.strip() for h in header]
    if "label" not in header:
        raise ValidationError(f"{path}: missing 'label' column")
    label_idx = header.index("label")
    prefix = "z" if logits else "p"
    block = _column_block(header, prefix)
    if block is None:
        raise ValidationError(f"{path}: no '{prefix}0..' columns found (use --logits for z-columns)")
    labels = np.empty(len(rows), dtype=np.int64)
    values = np.empty((len(rows), len(block)))
    for i, row in enumerate(rows):
        lineno = i + 2
        if len(row) != len(header):
            raise ValidationError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            labels[i] = int(row[label_idx])
            for j, idx in enumerate(block):
                values[i, j] = float(row[idx])
        except ValueError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}")
    try:
        if logits:
            return PredictionSet.from_logits(values, labels)
        return PredictionSet.from_probs(values, labels, renormalize=renormalize)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}")


def write_prediction_file(path, data: PredictionSet) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"p{i}" for i in range(data.k)])
        for label, row in zip(data.labels, data.probs):
            writer.writerow([int(label)] + [FLOAT_FMT % v for v in row])


def write_calibrator(path, cal) -> None:
    Path(path).write_text(json.dumps(cal.to_dict(), indent=2) + "\n")


def read_calibrator(path):
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read calibrator {path}: {exc}")
    return calibrator_from_dict(payload)


def list_epoch_files(directory) -> list[tuple[int, Path]]:
    """Epoch files in a directory, validated to be contiguous from 0."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ValidationError(f"{directory} is not a directory")
    found = []
    for entry in sorted(directory.iterdir()):
        m = _EPOCH_RE.match(entry.name)
        if m:
            found.append((int(m.group(1)), entry))
    if not found:
        raise ValidationError(f"{directory}: no epoch_NNNN.csv files found")
    found.sort()
    epochs = [e for e, _ in found]
    if epochs != list(range(len(epochs))):
        raise ValidationError(f"{directory}: epoch numbering must be contiguous from 0, got {epochs}")
    return found
