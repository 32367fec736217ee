"""Dataset CSV schema: required columns x and y, proxy columns u_0..u_{p-1},
optional z_c_true ground truth, and optional ref_* reference series.

UTF-8, '.' decimal separator, no thousands separators. Files written here
round-trip losslessly through read_dataset.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import SchemaError

_PROXY_RE = re.compile(r"^u_(\d+)$")
_REF_RE = re.compile(r"^ref_(\d+)$")


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    U: np.ndarray
    z_c_true: np.ndarray | None = None
    refs: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def p(self) -> int:
        return self.U.shape[1]


def from_scm_draw(draw) -> Dataset:
    """Serialize a synthetic draw as a dataset fixture with ground truth."""
    return Dataset(
        x=np.asarray(draw.x, dtype=float),
        y=np.asarray(draw.y, dtype=float),
        U=np.asarray(draw.U, dtype=float),
        z_c_true=np.asarray(draw.z_c, dtype=float),
    )


def format_float(value: float) -> str:
    return repr(float(value))


def write_dataset(path, dataset: Dataset) -> None:
    p = dataset.p
    header = ["x", "y"] + [f"u_{j}" for j in range(p)]
    columns = [dataset.x, dataset.y] + [dataset.U[:, j] for j in range(p)]
    if dataset.z_c_true is not None:
        header.append("z_c_true")
        columns.append(dataset.z_c_true)
    bad = [name for name in dataset.refs if not _REF_RE.match(name)]
    if bad:
        raise SchemaError(f"reference series must be named ref_<index>, got {bad}")
    for name in sorted(dataset.refs, key=lambda s: int(_REF_RE.match(s).group(1))):
        header.append(name)
        columns.append(dataset.refs[name])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(dataset.n):
            writer.writerow([format_float(col[i]) for col in columns])


def read_dataset(path) -> Dataset:
    """Parse and validate a dataset CSV; schema violations report the
    offending line number (1-based, header is line 1)."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = list(reader)

    seen = {}
    for j, name in enumerate(header):
        if name in seen:
            raise SchemaError(f"{path} line 1: duplicate column {name!r}")
        seen[name] = j
    for required in ("x", "y"):
        if required not in seen:
            raise SchemaError(f"{path} line 1: missing required column {required!r}")

    proxy_ids = sorted(int(m.group(1)) for m in map(_PROXY_RE.match, header) if m)
    if not proxy_ids:
        raise SchemaError(f"{path} line 1: no proxy columns u_0..u_{{p-1}} found")
    if proxy_ids != list(range(len(proxy_ids))):
        raise SchemaError(
            f"{path} line 1: proxy columns must be numbered u_0..u_{{p-1}} "
            f"without gaps, got {len(proxy_ids)} columns ending at u_{proxy_ids[-1]}"
        )
    ref_names = [h for h in header if _REF_RE.match(h)]
    known = {"x", "y", "z_c_true"} | set(ref_names) | {f"u_{j}" for j in proxy_ids}
    unknown = [h for h in header if h not in known]
    if unknown:
        raise SchemaError(f"{path} line 1: unrecognized columns {unknown}")

    if not rows:
        raise SchemaError(f"{path}: no data rows")
    table = np.empty((len(rows), len(header)))
    for i, row in enumerate(rows):
        line = i + 2
        if len(row) != len(header):
            raise SchemaError(
                f"{path} line {line}: expected {len(header)} fields, got {len(row)}"
            )
        for j, cell in enumerate(row):
            try:
                value = float(cell)
            except ValueError:
                raise SchemaError(
                    f"{path} line {line}: column {header[j]!r} has non-numeric "
                    f"value {cell!r}"
                ) from None
            if not np.isfinite(value):
                raise SchemaError(
                    f"{path} line {line}: column {header[j]!r} is not finite"
                )
            table[i, j] = value

    U = table[:, [seen[f"u_{j}"] for j in proxy_ids]]
    return Dataset(
        x=table[:, seen["x"]].copy(),
        y=table[:, seen["y"]].copy(),
        U=U.copy(),
        z_c_true=table[:, seen["z_c_true"]].copy() if "z_c_true" in seen else None,
        refs={name: table[:, seen[name]].copy() for name in ref_names},
    )
