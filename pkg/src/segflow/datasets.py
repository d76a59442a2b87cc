#!/usr/bin/env python3

"""CSV loaders and writers for labeled sequences.

Two layouts are read:

* generic: columns `dim0 .. dim{d-1}` plus an optional `label` column;
* bee tracks: columns `t, x, y, theta, label` with the dance phases
  `waggle`, `turn-right` and `turn-left`, turned into
  `(cos theta, sin theta, x, y)` observations.
"""

from __future__ import annotations

import hashlib
import os
from importlib import resources
from typing import Optional

import numpy as np
import pandas as pd

from segflow.errors import DataFormatError
from segflow.generators import LabeledSequence

BEE_COLUMNS = ('t', 'x', 'y', 'theta', 'label')
"""Required columns of a bee track file."""

BEE_LABELS = ('waggle', 'turn-right', 'turn-left')
"""Dance phases, in the order of their label ids."""

FLOAT_FORMAT = '%.17g'
"""Text format of every written float, exact on reload."""


def _read(path: str) -> pd.DataFrame:
    try:
        return pd.read_csv(path, skipinitialspace=True, float_precision='round_trip')
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataFormatError(f'cannot parse {path}: {exc}') from exc


def _numeric(frame: pd.DataFrame, columns, path: str) -> np.ndarray:
    """Columns as floats; the first bad cell is reported with its 1-based data row."""
    values = frame[list(columns)].apply(pd.to_numeric, errors='coerce').to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise DataFormatError(f'{path}: column "{columns[col]}" is missing or not a finite number',
                              row=int(row) + 1)
    return values


def _missing(frame: pd.DataFrame, columns, path: str):
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise DataFormatError(f'{path}: missing columns {missing}')


def load_bee(path: str) -> LabeledSequence:
    """Load one bee dance track.

    Raises:
        DataFormatError: On missing columns, non-finite values or unknown
            dance phases, naming the 1-based data row.
    """
    frame = _read(path)
    _missing(frame, BEE_COLUMNS, path)
    t, x, y, theta = _numeric(frame, BEE_COLUMNS[:4], path).T
    phases = frame['label'].astype(str).str.strip()
    unknown = ~phases.isin(BEE_LABELS)
    if unknown.any():
        row = int(np.flatnonzero(unknown.to_numpy())[0])
        raise DataFormatError(f'{path}: unknown dance phase "{phases.iloc[row]}"', row=row + 1)
    labels = phases.map({name: i for i, name in enumerate(BEE_LABELS)}).to_numpy(dtype=np.int64)
    observations = np.column_stack([np.cos(theta), np.sin(theta), x, y])
    meta = {'source': 'bee', 'path': os.fspath(path), 'classes': list(BEE_LABELS), 'time': t.tolist()}
    return LabeledSequence(observations, labels, meta)


def bee_sample_path() -> str:
    """Path of the bundled bee track sample."""
    return str(resources.files('segflow').joinpath('data', 'bee_sample.csv'))


def load_csv(path: str, require_labels: bool = False) -> LabeledSequence:
    """Load a generic feature sequence.

    Labels of any integer values are mapped to contiguous ids in sorted
    order; the original values are kept in `meta['classes']`.

    Raises:
        DataFormatError: On missing or non-numeric columns, naming the row.
    """
    frame = _read(path)
    dims = sorted((c for c in frame.columns if str(c).startswith('dim')), key=lambda c: int(str(c)[3:] or -1))
    expected = [f'dim{i}' for i in range(len(dims))]
    if not dims or dims != expected:
        raise DataFormatError(f'{path}: expected columns dim0..dim{{d-1}}, found {list(frame.columns)}')
    if frame.shape[0] == 0:
        raise DataFormatError(f'{path}: no data rows')
    observations = _numeric(frame, dims, path)
    meta = {'source': 'csv', 'path': os.fspath(path)}
    labels = None
    if 'label' in frame.columns:
        raw = _numeric(frame, ['label'], path)[:, 0]
        if np.any(raw != np.round(raw)):
            row = int(np.flatnonzero(raw != np.round(raw))[0])
            raise DataFormatError(f'{path}: label is not an integer', row=row + 1)
        classes, labels = np.unique(raw.astype(np.int64), return_inverse=True)
        meta['classes'] = classes.tolist()
    elif require_labels:
        raise DataFormatError(f'{path}: a label column is required')
    return LabeledSequence(observations, labels, meta)


def load_sequence(path: str, kind: Optional[str] = None) -> LabeledSequence:
    """Dispatch on `kind`, or on the header when `kind` is None."""
    if kind is None:
        columns = set(_read(path).columns)
        kind = 'bee' if set(BEE_COLUMNS) <= columns else 'csv'
    if kind == 'bee':
        return load_bee(path)
    if kind == 'csv':
        return load_csv(path)
    raise DataFormatError(f'unknown data kind "{kind}"')


def write_csv(sequence: LabeledSequence, path: str) -> str:
    """Write `dim0..dim{d-1}` and `label` columns with round-trip float text.

    Returns:
        str: Path written.
    """
    frame = pd.DataFrame(sequence.observations, columns=[f'dim{i}' for i in range(sequence.d)])
    if sequence.labels is not None:
        frame['label'] = sequence.labels
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    return path


def content_hash(path: str) -> str:
    """Git-style blob hash of a file: sha1 of `blob <size>\\0` plus the bytes."""
    with open(path, 'rb') as handle:
        data = handle.read()
    return hashlib.sha1(b'blob %d\0' % len(data) + data).hexdigest()
