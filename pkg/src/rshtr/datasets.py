"""Dataset file ingestion: LIBSVM sparse text and dense CSV.

The LIBSVM format is one sample per line, ``label idx:val idx:val ...``
with 1-based feature indices. Parse failures report the line number and
the 1-based token position within the line.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import ParseError


def load_libsvm(path, n_features: Optional[int] = None,
                feature_limit: Optional[int] = None,
                sample_limit: Optional[int] = None):
    """Parse a LIBSVM file into (csr matrix, label vector).

    ``feature_limit`` drops features with index above the limit;
    ``sample_limit`` keeps only the first rows. ``n_features`` fixes the
    column count (otherwise the maximum seen index is used).
    """
    rows, cols, vals, labels = [], [], [], []
    max_index = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if sample_limit is not None and len(labels) >= sample_limit:
                break
            tokens = line.split()
            try:
                label = float(tokens[0])
            except ValueError:
                raise ParseError(f"bad label {tokens[0]!r} at line {lineno}",
                                 line=lineno, column=1) from None
            row = len(labels)
            labels.append(label)
            for pos, token in enumerate(tokens[1:], start=2):
                idx_str, sep, val_str = token.partition(":")
                if not sep:
                    raise ParseError(f"expected idx:val, got {token!r} at line {lineno}",
                                     line=lineno, column=pos)
                try:
                    idx = int(idx_str)
                    val = float(val_str)
                except ValueError:
                    raise ParseError(f"bad feature token {token!r} at line {lineno}",
                                     line=lineno, column=pos) from None
                if idx < 1:
                    raise ParseError(f"feature index {idx} must be >= 1 at line {lineno}",
                                     line=lineno, column=pos)
                if feature_limit is not None and idx > feature_limit:
                    continue
                rows.append(row)
                cols.append(idx - 1)
                vals.append(val)
                max_index = max(max_index, idx)
    n_cols = n_features if n_features is not None else max_index
    if feature_limit is not None:
        n_cols = min(n_cols, feature_limit) if n_features is not None else max_index
    X = sp.csr_array((vals, (rows, cols)), shape=(len(labels), n_cols), dtype=np.float64)
    return X, np.asarray(labels, dtype=np.float64)


def save_libsvm(path, X, y) -> None:
    """Write (matrix, labels) in LIBSVM format with 1-based indices.

    Values are written with shortest round-trip formatting so a
    save/load cycle reproduces the data exactly.
    """
    X = sp.csr_array(X)
    y = np.asarray(y).ravel()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i in range(X.shape[0]):
            start, end = X.indptr[i], X.indptr[i + 1]
            pairs = sorted(zip(X.indices[start:end], X.data[start:end]))
            feats = " ".join(f"{int(j) + 1}:{float(v)!r}" for j, v in pairs)
            fh.write(f"{float(y[i])!r} {feats}".rstrip() + "\n")


def load_dense_csv(path):
    """Dense CSV with one header row; returns (column names, float matrix)."""
    import csv

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty CSV file", line=1) from None
        data = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, got {len(row)} at line {lineno}",
                    line=lineno,
                )
            parsed = []
            for col, cell in enumerate(row, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ParseError(f"bad number {cell!r} at line {lineno}",
                                     line=lineno, column=col) from None
            data.append(parsed)
    return header, np.asarray(data, dtype=np.float64)


def save_dense_csv(path, header, data) -> None:
    import csv

    data = np.asarray(data, dtype=np.float64)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in data:
            writer.writerow([repr(float(v)) for v in row])
