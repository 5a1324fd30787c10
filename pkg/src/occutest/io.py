"""Dataset files and tabular outputs.

Two dataset layouts are accepted, both CSV with a header row (``#`` starts a
comment line):

summary
    ``region,N,K,s_d,d`` with one row per region.
site
    ``region,site,K,y`` with one row per site; ``y`` is the number of visits
    with a detection. Rows are aggregated to ``(N, K, s_d, d)`` on load.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .model import RegionDesign, RegionSummary

SUMMARY_COLUMNS = ("region", "N", "K", "s_d", "d")
SITE_COLUMNS = ("region", "site", "K", "y")


class DatasetError(ValueError):
    """Malformed dataset file; the message carries the offending line number."""


@dataclass(frozen=True)
class Dataset:
    data: tuple[RegionSummary, RegionSummary]
    designs: tuple[RegionDesign, RegionDesign]
    layout: str


def _int(value: str, column: str, line: int) -> int:
    try:
        return int(value.strip())
    except ValueError:
        raise DatasetError(f"line {line}: column {column!r} must be an integer, got {value!r}") from None


def _rows(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [(i, raw) for i, raw in enumerate(fh, start=1) if raw.strip() and not raw.lstrip().startswith("#")]
    if not lines:
        raise DatasetError(f"{path}: no header row")
    header_line, header = lines[0]
    columns = [c.strip() for c in next(csv.reader([header]))]
    for lineno, raw in lines[1:]:
        values = next(csv.reader([raw]))
        if len(values) != len(columns):
            raise DatasetError(f"line {lineno}: expected {len(columns)} fields, got {len(values)}")
        yield lineno, dict(zip(columns, values))
    return columns


def _header(path: Path) -> list[str]:
    with open(path, newline="", encoding="utf-8") as fh:
        for raw in fh:
            if raw.strip() and not raw.lstrip().startswith("#"):
                return [c.strip() for c in next(csv.reader([raw]))]
    raise DatasetError(f"{path}: no header row")


def read_dataset(path) -> Dataset:
    """Load a two-region dataset in either layout.

    Raises
    ------
    OSError
        The file cannot be read.
    DatasetError
        The content is malformed or violates the count constraints.
    """
    path = Path(path)
    columns = _header(path)
    if set(SUMMARY_COLUMNS) <= set(columns):
        return _read_summary(path)
    if set(SITE_COLUMNS) <= set(columns):
        return _read_sites(path)
    raise DatasetError(
        f"line 1: unrecognised header {columns}; expected {','.join(SUMMARY_COLUMNS)} or {','.join(SITE_COLUMNS)}"
    )


def _region(value: str, line: int) -> int:
    region = _int(value, "region", line)
    if region not in (1, 2):
        raise DatasetError(f"line {line}: region must be 1 or 2, got {region}")
    return region


def _finish(found: dict, layout: str) -> Dataset:
    if set(found) != {1, 2}:
        raise DatasetError(f"dataset must contain regions 1 and 2, found {sorted(found)}")
    designs, data = [], []
    for region in (1, 2):
        design, summary, line = found[region]
        try:
            summary.validate(design)
        except ValueError as exc:
            raise DatasetError(f"line {line}: region {region}: {exc}") from None
        designs.append(design)
        data.append(summary)
    return Dataset(tuple(data), tuple(designs), layout)


def _read_summary(path: Path) -> Dataset:
    found = {}
    for line, row in _rows(path):
        region = _region(row["region"], line)
        if region in found:
            raise DatasetError(f"line {line}: region {region} appears twice")
        try:
            design = RegionDesign(_int(row["N"], "N", line), _int(row["K"], "K", line))
        except ValueError as exc:
            raise DatasetError(f"line {line}: {exc}") from None
        found[region] = (design, RegionSummary(_int(row["s_d"], "s_d", line), _int(row["d"], "d", line)), line)
    return _finish(found, "summary")


def _read_sites(path: Path) -> Dataset:
    acc: dict[int, dict] = {}
    for line, row in _rows(path):
        region = _region(row["region"], line)
        K = _int(row["K"], "K", line)
        y = _int(row["y"], "y", line)
        site = row["site"].strip()
        entry = acc.setdefault(region, {"K": K, "sites": set(), "s_d": 0, "d": 0, "line": line})
        if K != entry["K"]:
            raise DatasetError(f"line {line}: region {region} mixes K={entry['K']} and K={K}")
        if K < 1 or not 0 <= y <= K:
            raise DatasetError(f"line {line}: y={y} outside [0, K={K}]")
        if site in entry["sites"]:
            raise DatasetError(f"line {line}: duplicate site {site!r} in region {region}")
        entry["sites"].add(site)
        entry["s_d"] += y > 0
        entry["d"] += y
    found = {
        region: (RegionDesign(len(e["sites"]), e["K"]), RegionSummary(e["s_d"], e["d"]), e["line"])
        for region, e in acc.items()
    }
    return _finish(found, "site")


# --------------------------------------------------------------------------
# outputs


def format_value(value) -> str:
    """Cell text: 6 significant digits for floats, ``nan`` for NaN, empty for None."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.6g}"
    if hasattr(value, "item"):  # numpy scalar
        return format_value(value.item())
    return str(value)


def write_table(path, header: Sequence[str], rows: Iterable[Sequence], fmt: str = "csv") -> Path:
    """Write rows as UTF-8 CSV (with header) or as a JSON list of records."""
    path = Path(path)
    rows = [list(r) for r in rows]
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(v) for v in row])
    elif fmt == "json":
        records = [{k: _json_value(v) for k, v in zip(header, row)} for row in rows]
        path.write_text(json.dumps(records, indent=2) + "\n", encoding="utf-8")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return path


def _json_value(value):
    if hasattr(value, "item"):
        value = value.item()
    if isinstance(value, float):
        if math.isnan(value):
            return None
        return float(format_value(value))
    return value


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
