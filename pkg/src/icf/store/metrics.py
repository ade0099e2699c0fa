"""Append-only CSV metrics (RFC 4180 quoting, CRLF line ends via the csv module)."""
from __future__ import annotations

import csv
import io
import os
from typing import Iterable, List, Mapping, Optional, Sequence

# documented columns per experiment kind; discrete runs add sel_0..sel_{K-1}
DISCRETE_COLUMNS = ("step", "recon_loss", "sel_mean")
CONTINUOUS_COLUMNS = ("step", "recon_loss", "reward_behavior", "reward_contrast", "sigma", "skipped")
Q_COLUMNS = ("episode", "success", "steps_to_goal")


def discrete_columns(n_features: int, reconstruction: bool = True) -> List[str]:
    cols = list(DISCRETE_COLUMNS) + [f"sel_{k}" for k in range(n_features)]
    return cols if reconstruction else [c for c in cols if c != "recon_loss"]


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "item"):  # numpy scalars
        return format_value(v.item())
    return str(v)


def encode_row(values: Sequence) -> str:
    buf = io.StringIO()
    csv.writer(buf).writerow([format_value(v) for v in values])
    return buf.getvalue()


class MetricsWriter:
    """Rows are formatted completely before they are written, so a failed
    record never leaves a partial line.  The header is written only when the
    file is new or empty; ``flush_every`` rows are buffered between flushes."""

    def __init__(self, path, columns: Sequence[str], flush_every: int = 100):
        self.path, self.columns = os.fspath(path), list(columns)
        self.flush_every = max(int(flush_every), 1)
        fresh = not os.path.exists(self.path) or os.path.getsize(self.path) == 0
        if not fresh:
            with open(self.path, newline="") as fh:
                head = next(csv.reader(fh), None)
            if head != self.columns:
                raise ValueError(f"{self.path}: existing header {head} differs from {self.columns}")
        self._fh = open(self.path, "a", newline="")
        self._pending = 0
        if fresh:
            self._fh.write(encode_row(self.columns))
            self._fh.flush()

    def write(self, record: Mapping) -> None:
        unknown = set(record) - set(self.columns)
        if unknown:
            raise KeyError(f"metrics record has columns outside the header: {sorted(unknown)}")
        self._fh.write(encode_row([record.get(c) for c in self.columns]))
        self._pending += 1
        if self._pending >= self.flush_every:
            self.flush()

    def write_all(self, records: Iterable[Mapping]) -> None:
        for r in records:
            self.write(r)

    def flush(self) -> None:
        self._fh.flush()
        self._pending = 0

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def truncate_after(path, step: int, key: str = "step") -> int:
    """Drops rows whose ``key`` exceeds ``step`` (rows logged after the checkpoint a
    run resumes from); returns the number of rows kept."""
    path = os.fspath(path)
    if not os.path.exists(path) or os.path.getsize(path) == 0:
        return 0
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    col = head.index(key)
    keep = [r for r in body if int(r[col]) <= step]
    if len(keep) != len(body):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(head)
            w.writerows(keep)
    return len(keep)


def read_metrics(path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_rows(path, columns: Sequence[str], rows: Iterable[Sequence], flush_every: int = 100) -> None:
    """One-shot table writer (fresh file)."""
    if os.path.exists(path):
        os.remove(path)
    with MetricsWriter(path, columns, flush_every) as w:
        for r in rows:
            w.write(dict(zip(columns, r)))


__all__ = ["CONTINUOUS_COLUMNS", "DISCRETE_COLUMNS", "MetricsWriter", "Q_COLUMNS", "discrete_columns",
           "encode_row", "format_value", "read_metrics", "truncate_after", "write_rows"]
