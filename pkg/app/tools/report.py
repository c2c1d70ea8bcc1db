"""Report rows, CSV serialization and the run summary document."""

import hashlib
import json
import os
from typing import Dict, List, Optional

import pandas as pd
from pydantic import BaseModel, Field

from utils.common import ensure_dir, logger

SCHEMA_VERSION = 1
COLUMNS = [
    "experiment", "curve_family", "a", "b", "N", "alpha", "beta", "p", "j", "s",
    "value", "bound", "ratio", "stderr",
    "samples_x1", "samples_x2", "samples_x3", "samples_x4",
    "seed", "wall_ms",
]


class ReportRow(BaseModel):
    """One atomic measurement."""

    experiment: str = Field(..., description="Command or sub-measurement that produced the row")
    curve_family: Optional[str] = Field(None, description="Curve family tag or test family")
    a: Optional[float] = Field(None, description="Exponent of phi3")
    b: Optional[float] = Field(None, description="Exponent of phi4")
    N: Optional[int] = Field(None, description="Scale N (or M for Weyl-sum experiments)")
    alpha: Optional[float] = Field(None, description="Exponent of the omega3 side length")
    beta: Optional[float] = Field(None, description="Exponent of the omega4 side length")
    p: Optional[float] = Field(None, description="Moment order")
    j: Optional[int] = Field(None, description="Dyadic scale index")
    s: Optional[int] = Field(None, description="Level-set index")
    value: Optional[float] = Field(None, description="Measured quantity")
    bound: Optional[float] = Field(None, description="Bound the value is compared against")
    ratio: Optional[float] = Field(None, description="value / bound")
    stderr: Optional[float] = Field(None, description="Error estimate of value")
    samples_x1: Optional[int] = Field(None, description="Samples on axis 1")
    samples_x2: Optional[int] = Field(None, description="Samples on axis 2")
    samples_x3: Optional[int] = Field(None, description="Samples on axis 3")
    samples_x4: Optional[int] = Field(None, description="Samples on axis 4")
    seed: Optional[int] = Field(None, description="Seed of the run")
    wall_ms: Optional[float] = Field(None, description="Wall time in milliseconds")


def rows_frame(rows: List[ReportRow]) -> pd.DataFrame:
    """Rows in schema column order; integer columns stay nullable integers."""
    frame = pd.DataFrame([row.model_dump() for row in rows], columns=COLUMNS)
    for column in ("N", "j", "s", "samples_x1", "samples_x2", "samples_x3", "samples_x4", "seed"):
        frame[column] = frame[column].astype("Int64")
    return frame


def write_rows(rows: List[ReportRow], out_dir: str, deterministic: bool = True) -> str:
    """Write rows.csv with floats at 17 significant digits.

    With `deterministic`, wall_ms is blanked so replays are byte-identical.
    """
    frame = rows_frame(rows)
    if deterministic:
        frame["wall_ms"] = None
    path = os.path.join(ensure_dir(out_dir), "rows.csv")
    frame.to_csv(path, index=False, float_format="%.17g")
    logger.info(f"💾 Wrote {len(frame)} rows to {path}")
    return path


def config_hash(config: Dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_summary(
    out_dir: str,
    command: str,
    config: Dict,
    checks: Dict[str, bool],
    slopes: Optional[Dict[str, float]] = None,
    extra: Optional[Dict] = None,
) -> str:
    """summary.json: config echo, pass/fail per assertion, fitted slopes."""
    summary = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config_sha256": config_hash(config),
        "config": config,
        "checks": checks,
        "passed": all(checks.values()),
        "slopes": slopes or {},
    }
    if extra:
        summary["details"] = extra
    path = os.path.join(ensure_dir(out_dir), "summary.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True, default=str)
    logger.info(f"💾 Wrote summary to {path}")
    return path
