"""Loading and cleaning of the four raw sources into quarter-aligned records.

Every source is a delimited text file with a header row:

=============  ================================================================
source         required columns
=============  ================================================================
ratings        company_id, date, rating
filings        company_id, fiscal_year, fiscal_quarter, filing_type, filing_date, mda_text
fundamentals   company_id, quarter, niq, ltq, piq, atq, ggroup, gind, gsector, gsubind
macro          date, then one column per series (or ``quarter`` instead of ``date``)
=============  ================================================================

Dates are ISO ``YYYY-MM-DD``; quarters are written ``2012Q4``.
"""

from __future__ import annotations

import csv
import datetime as dt
import html
import json
import logging
import math
import re
import sys
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .core import SP_SCALE, QuarterId
from .errors import SchemaError

logger = logging.getLogger(__name__)

# MDA sections are long; the stdlib default field limit (128 KiB) is too small.
csv.field_size_limit(min(sys.maxsize, 2**31 - 1))

FUNDAMENTAL_FLOATS = ("niq", "ltq", "piq", "atq")
FUNDAMENTAL_CODES = ("ggroup", "gind", "gsector", "gsubind")
FUNDAMENTAL_DESCRIPTIONS = {
    "niq": "Net Income (Loss)",
    "ltq": "Liabilities - Total",
    "piq": "Pretax Income",
    "atq": "Assets - Total",
    "ggroup": "GIC Groups",
    "gind": "GIC Industries",
    "gsector": "GIC Sectors",
    "gsubind": "GIC Sub-Industries",
}
FILING_TYPES = ("10-Q", "10-K")

SOURCE_COLUMNS = {
    "ratings": ("company_id", "date", "rating"),
    "filings": ("company_id", "fiscal_year", "fiscal_quarter", "filing_type", "filing_date", "mda_text"),
    "fundamentals": ("company_id", "quarter") + FUNDAMENTAL_FLOATS + FUNDAMENTAL_CODES,
}
SOURCES = ("ratings", "filings", "fundamentals", "macro")


@dataclass(frozen=True)
class RatingsRecord:
    company_id: str
    quarter: QuarterId
    rating: str
    date: Optional[dt.date] = None


@dataclass(frozen=True)
class RawFiling:
    company_id: str
    filing_quarter: QuarterId
    filing_type: str
    mda_text: str
    filing_date: Optional[dt.date] = None


@dataclass(frozen=True)
class FundamentalsRecord:
    company_id: str
    quarter: QuarterId
    niq: float
    ltq: float
    piq: float
    atq: float
    ggroup: str
    gind: str
    gsector: str
    gsubind: str


@dataclass(frozen=True)
class MacroRecord:
    quarter: QuarterId
    values: Dict[str, float]
    date: Optional[dt.date] = None


@dataclass
class LoadResult:
    records: list
    rejects: List[dict] = field(default_factory=list)
    n_rows: int = 0


_TAG_RE = re.compile(r"<[^<>]+>")
_URL_RE = re.compile(r"(?:https?://|ftp://|www\.)\S+", re.IGNORECASE)
_WS_RE = re.compile(r"\s+")


def _clean_once(text: str) -> str:
    text = html.unescape(text)
    text = _TAG_RE.sub(" ", text)
    text = _URL_RE.sub(" ", text)
    return _WS_RE.sub(" ", text).strip()


def clean_text(raw: str) -> str:
    """Strip HTML tags/entities and links, collapse whitespace.

    Iterated to a fixed point so the result is idempotent even when unescaping
    exposes new markup (``&lt;p&gt;``). Each productive pass shortens the string,
    so the loop terminates.
    """
    text = raw or ""
    while True:
        cleaned = _clean_once(text)
        if cleaned == text:
            return cleaned
        text = cleaned


def _parse_date(value: str) -> dt.date:
    return dt.date.fromisoformat(value.strip())


def _parse_float(value: str, name: str) -> float:
    x = float(value)
    if not math.isfinite(x):
        raise ValueError(f"{name} is not finite: {value!r}")
    return x


def _parse_code(value: str, name: str) -> str:
    v = (value or "").strip()
    if not v:
        raise ValueError(f"{name} is empty")
    # Compustat exports sometimes write GICS codes as floats ("4510.0").
    if re.fullmatch(r"\d+\.0+", v):
        v = v.split(".")[0]
    return v


def _ratings_row(row: dict) -> RatingsRecord:
    d = _parse_date(row["date"])
    return RatingsRecord(
        company_id=_parse_code(row["company_id"], "company_id"),
        quarter=QuarterId.from_date(d),
        rating=SP_SCALE.levels[SP_SCALE.rank(row["rating"])],
        date=d,
    )


def _filing_row(row: dict) -> RawFiling:
    ftype = row["filing_type"].strip().upper()
    if ftype not in FILING_TYPES:
        raise ValueError(f"filing_type must be one of {FILING_TYPES}, got {row['filing_type']!r}")
    year = int(row["fiscal_year"])
    # an annual report stands in for the fourth quarter of its fiscal year
    quarter = 4 if ftype == "10-K" else int(row["fiscal_quarter"])
    text = clean_text(row["mda_text"])
    if not text:
        raise ValueError("mda_text is empty after cleaning")
    fdate = row.get("filing_date") or ""
    return RawFiling(
        company_id=_parse_code(row["company_id"], "company_id"),
        filing_quarter=QuarterId(year, quarter),
        filing_type=ftype,
        mda_text=text,
        filing_date=_parse_date(fdate) if fdate.strip() else None,
    )


def _fundamentals_row(row: dict) -> FundamentalsRecord:
    kw = {k: _parse_float(row[k], k) for k in FUNDAMENTAL_FLOATS}
    kw.update({k: _parse_code(row[k], k) for k in FUNDAMENTAL_CODES})
    return FundamentalsRecord(
        company_id=_parse_code(row["company_id"], "company_id"),
        quarter=QuarterId.parse(row["quarter"]),
        **kw,
    )


def _macro_row(row: dict, columns: Sequence[str]) -> MacroRecord:
    if row.get("date"):
        d = _parse_date(row["date"])
        quarter = QuarterId.from_date(d)
    else:
        d = None
        quarter = QuarterId.parse(row["quarter"])
    values = {c: _parse_float(row[c], c) for c in columns}
    return MacroRecord(quarter=quarter, values=values, date=d)


def load_source(path, schema: str, macro_columns: Optional[Sequence[str]] = None,
                max_reject_fraction: float = 0.5) -> LoadResult:
    """Read and validate one source file.

    Invalid rows are collected in ``rejects`` (row number, reason, error type)
    rather than raised; more than ``max_reject_fraction`` rejected rows is taken
    as a sign of the wrong file and raises :class:`SchemaError`.
    """
    if schema not in SOURCES:
        raise ValueError(f"unknown source schema {schema!r}; expected one of {SOURCES}")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such source file: {path}")

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        reader.fieldnames = header
        if schema == "macro":
            if "date" not in header and "quarter" not in header:
                raise SchemaError(f"{path}: macro file needs a 'date' or 'quarter' column")
            columns = list(macro_columns) if macro_columns else [
                h for h in header if h not in ("date", "quarter")]
            missing = [c for c in columns if c not in header]
            if missing or not columns:
                raise SchemaError(f"{path}: macro columns missing {missing or 'all'}")
            parse = lambda row: _macro_row(row, columns)  # noqa: E731
        else:
            missing = [c for c in SOURCE_COLUMNS[schema] if c not in header]
            if missing:
                raise SchemaError(f"{path}: header lacks columns {missing} required for {schema}")
            parse = {"ratings": _ratings_row, "filings": _filing_row,
                     "fundamentals": _fundamentals_row}[schema]

        result = LoadResult(records=[])
        for lineno, row in enumerate(reader, start=2):
            result.n_rows += 1
            try:
                result.records.append(parse(row))
            except Exception as exc:  # every row failure is reported, never fatal
                result.rejects.append({
                    "source": schema, "path": str(path), "line": lineno,
                    "error": type(exc).__name__, "reason": str(exc),
                })
    if result.n_rows and len(result.rejects) > max_reject_fraction * result.n_rows:
        raise SchemaError(
            f"{path}: {len(result.rejects)}/{result.n_rows} rows rejected as {schema}; wrong file?")
    for r in result.rejects:
        logger.debug("rejected %s line %s: %s", schema, r["line"], r["reason"])
    return result


def align_quarterly(records: Iterable, reduce: str = "mean") -> dict:
    """Collapse records to at most one per key.

    Company sources key on ``(company_id, QuarterId)`` and keep the latest-dated
    record (the last one seen when undated); macro records key on ``QuarterId``
    and are reduced to quarterly means (or ``"last"``).
    """
    records = list(records)
    if not records:
        return {}
    if isinstance(records[0], MacroRecord):
        return _align_macro(records, reduce)

    out: dict = {}
    dups = 0
    for rec in records:
        if isinstance(rec, RatingsRecord):
            key, stamp = (rec.company_id, rec.quarter), rec.date
        elif isinstance(rec, RawFiling):
            key, stamp = (rec.company_id, rec.filing_quarter), rec.filing_date
        elif isinstance(rec, FundamentalsRecord):
            key, stamp = (rec.company_id, rec.quarter), None
        else:
            raise TypeError(f"cannot align {type(rec).__name__}")
        if key in out:
            dups += 1
            prev = out[key]
            prev_stamp = getattr(prev, "date", None) or getattr(prev, "filing_date", None)
            if stamp is None or prev_stamp is None or stamp >= prev_stamp:
                out[key] = rec
        else:
            out[key] = rec
    if dups:
        logger.info("align_quarterly: dropped %d duplicate %s records", dups, type(records[0]).__name__)
    return out


def _align_macro(records: List[MacroRecord], reduce: str) -> Dict[QuarterId, MacroRecord]:
    by_q: Dict[QuarterId, List[MacroRecord]] = defaultdict(list)
    for rec in records:
        by_q[rec.quarter].append(rec)
    out = {}
    for q in sorted(by_q):
        group = sorted(by_q[q], key=lambda r: r.date or dt.date.min)
        columns = group[0].values.keys()
        if reduce == "mean":
            values = {c: math.fsum(r.values[c] for r in group) / len(group) for c in columns}
        elif reduce == "last":
            values = dict(group[-1].values)
        else:
            raise ValueError(f"unknown reduction {reduce!r}")
        out[q] = MacroRecord(quarter=q, values=values, date=None)
    return out


@dataclass
class AlignedSources:
    """The four sources after alignment, ready for window building."""

    ratings: Dict[Tuple[str, QuarterId], RatingsRecord]
    filings: Dict[Tuple[str, QuarterId], RawFiling]
    fundamentals: Dict[Tuple[str, QuarterId], FundamentalsRecord]
    macro: Dict[QuarterId, MacroRecord]

    @property
    def macro_columns(self) -> List[str]:
        for rec in self.macro.values():
            return list(rec.values)
        return []


def _record_to_json(rec) -> dict:
    d = {}
    for k, v in rec.__dict__.items():
        if isinstance(v, QuarterId):
            v = str(v)
        elif isinstance(v, dt.date):
            v = v.isoformat()
        d[k] = v
    return d


def _record_from_json(kind: str, d: dict):
    d = dict(d)
    for k in ("quarter", "filing_quarter"):
        if k in d:
            d[k] = QuarterId.parse(d[k])
    for k in ("date", "filing_date"):
        if d.get(k):
            d[k] = dt.date.fromisoformat(d[k])
    cls = {"ratings": RatingsRecord, "filings": RawFiling,
           "fundamentals": FundamentalsRecord, "macro": MacroRecord}[kind]
    return cls(**d)


def ingest(ratings_path, filings_path, fundamentals_path, macro_path,
           macro_columns: Optional[Sequence[str]] = None, macro_reduce: str = "mean"):
    """Load and align all four sources. Returns ``(AlignedSources, report)``."""
    paths = {"ratings": ratings_path, "filings": filings_path,
             "fundamentals": fundamentals_path, "macro": macro_path}
    aligned = {}
    report = {"rejects": [], "counts": {}}
    for kind, path in paths.items():
        res = load_source(path, kind, macro_columns=macro_columns if kind == "macro" else None)
        amap = align_quarterly(res.records, reduce=macro_reduce)
        aligned[kind] = amap
        report["rejects"].extend(res.rejects)
        report["counts"][kind] = {
            "rows": res.n_rows, "accepted": len(amap), "rejected": len(res.rejects),
            "merged": len(res.records) - len(amap),
        }
    return AlignedSources(**aligned), report


def write_aligned(sources: AlignedSources, report: dict, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for kind in SOURCES:
        amap = getattr(sources, kind)
        with (out / f"{kind}.jsonl").open("w", encoding="utf-8") as fh:
            for key in sorted(amap, key=str):
                fh.write(json.dumps(_record_to_json(amap[key]), sort_keys=True) + "\n")
    with (out / "rejects.jsonl").open("w", encoding="utf-8") as fh:
        for r in report["rejects"]:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    (out / "ingest_stats.json").write_text(json.dumps(report["counts"], indent=2, sort_keys=True))


def read_aligned(in_dir) -> AlignedSources:
    src = Path(in_dir)
    maps = {}
    for kind in SOURCES:
        recs = []
        with (src / f"{kind}.jsonl").open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    recs.append(_record_from_json(kind, json.loads(line)))
        maps[kind] = align_quarterly(recs, reduce="last")
    return AlignedSources(**maps)
