"""Observed records and CSV ingestion."""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SchemaError

_X_COLUMN = re.compile(r"^x(\d+)$")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Records ``(x, a, y, w)``; ``x`` is (n, p), the others length n."""

    x: np.ndarray
    a: np.ndarray
    y: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        a = np.asarray(self.a, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        w = np.asarray(self.w, dtype=float).ravel()
        n = a.size
        if n == 0:
            raise ValueError("dataset is empty")
        if x.shape[0] != n or y.size != n or w.size != n:
            raise ValueError("x, a, y, w lengths differ")
        for name, arr in (("x", x), ("a", a), ("y", y), ("w", w)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in {name}")
        if np.any(w < 0) or not w.sum() > 0:
            raise ValueError("weights must be nonnegative with a positive sum")
        for name, arr in (("x", x), ("a", a), ("y", y), ("w", w)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_arrays(cls, x, a, y, w=None) -> "Dataset":
        a = np.asarray(a, dtype=float)
        if w is None:
            w = np.ones(a.shape[0])
        return cls(x, a, y, w)

    @property
    def n(self) -> int:
        return self.a.size

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def __len__(self):
        return self.a.size

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.x[idx], self.a[idx], self.y[idx], self.w[idx])

    def with_outcome(self, y) -> "Dataset":
        return Dataset(self.x, self.a, y, self.w)

    def with_weights(self, w) -> "Dataset":
        return Dataset(self.x, self.a, self.y, w)

    def to_csv(self, path) -> None:
        header = [f"x{j + 1}" for j in range(self.p)] + ["a", "y", "w"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(self.n):
                row = list(self.x[i]) + [self.a[i], self.y[i], self.w[i]]
                writer.writerow([f"{v:.17g}" for v in row])


def read_csv(path) -> Dataset:
    """Load ``x1..xp, a, y[, w]`` columns from a UTF-8 CSV with a header row."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        x_cols = sorted(
            ((int(m.group(1)), j) for j, h in enumerate(header) if (m := _X_COLUMN.match(h))),
        )
        if not x_cols:
            raise SchemaError(f"{path}:1: no covariate columns x1..xp in header")
        if [k for k, _ in x_cols] != list(range(1, len(x_cols) + 1)):
            raise SchemaError(f"{path}:1: covariate columns must be x1..x{len(x_cols)} without gaps")
        for required in ("a", "y"):
            if required not in header:
                raise SchemaError(f"{path}:1: missing required column {required!r}")
        known = {h for h in header if _X_COLUMN.match(h)} | {"a", "y", "w"}
        extra = [h for h in header if h not in known]
        if extra:
            raise SchemaError(f"{path}:1: unexpected columns {extra}")
        ia, iy = header.index("a"), header.index("y")
        iw = header.index("w") if "w" in header else None
        xs, as_, ys, ws = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
            if not all(np.isfinite(vals)):
                raise SchemaError(f"{path}:{lineno}: non-finite value")
            if iw is not None and vals[iw] < 0:
                raise SchemaError(f"{path}:{lineno}: negative weight")
            xs.append([vals[j] for _, j in x_cols])
            as_.append(vals[ia])
            ys.append(vals[iy])
            ws.append(vals[iw] if iw is not None else 1.0)
    if not as_:
        raise SchemaError(f"{path}: no data rows")
    try:
        return Dataset(np.array(xs), np.array(as_), np.array(ys), np.array(ws))
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from None
