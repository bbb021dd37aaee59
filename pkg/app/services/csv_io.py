"""
Artifact Exchange.

CSV and JSON readers/writers for every artifact the lab consumes or
produces.  CSV files use ',' separators, '.' decimals, a required header
row and a leading ``#`` comment line with the tool version and config
hash; floats are written with 12 significant digits.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Sequence, Union

import numpy as np
import pandas as pd

from app import __version__
from app.errors import InputValidationError
from app.models.batch_models import EvalBatch, PartitionLabels, RepBatch
from app.models.enums import FairnessMetric
from app.models.pareto_models import TradeoffPoint
from app.utils.general import dumps_report

__all__ = [
    "read_csv",
    "read_dcor_input",
    "read_eval_batch",
    "read_tradeoff_points",
    "write_csv",
    "write_json",
]

FLOAT_FORMAT: str = "%.12g"

PathLike = Union[str, Path]


def _provenance(config_hash: str) -> str:
    return f"# tool_version={__version__} config_hash={config_hash}\n"


def write_csv(
    rows: Sequence[dict[str, Any]], path: PathLike, columns: Sequence[str], config_hash: str
) -> Path:
    """Write *rows* under a provenance comment line."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(list(rows), columns=list(columns))
    with target.open("w", encoding="utf-8", newline="") as handle:
        handle.write(_provenance(config_hash))
        frame.to_csv(handle, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return target


def write_json(document: dict[str, Any], path: PathLike, config_hash: str) -> Path:
    """Write *document* with ``tool_version`` and ``config_hash`` fields added."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    stamped = {**document, "tool_version": __version__, "config_hash": config_hash}
    target.write_text(dumps_report(stamped), encoding="utf-8")
    return target


def read_csv(path: PathLike, required: Sequence[str]) -> pd.DataFrame:
    """Read a CSV with a header row; ``#`` lines are comments."""
    source = Path(path)
    if not source.is_file():
        raise InputValidationError(f"{source}: file not found.")
    try:
        frame = pd.read_csv(source, comment="#", sep=",", decimal=".")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise InputValidationError(f"{source}: unreadable CSV ({exc}).") from exc
    missing = [col for col in required if col not in frame.columns]
    if missing:
        raise InputValidationError(f"{source}: missing required columns {missing}.")
    if frame[list(required)].isna().any().any():
        raise InputValidationError(f"{source}: empty cells in required columns.")
    return frame


def read_eval_batch(path: PathLike) -> EvalBatch:
    """Columns y_true, y_pred, g and optional d."""
    frame = read_csv(path, ["y_true", "y_pred", "g"])
    return EvalBatch(
        y_true=frame["y_true"].to_numpy(),
        y_pred=frame["y_pred"].to_numpy(),
        g=frame["g"].to_numpy(),
        d=frame["d"].to_numpy() if "d" in frame.columns else None,
    )


def read_tradeoff_points(
    path: PathLike, metric: FairnessMetric = FairnessMetric.EOD
) -> list[TradeoffPoint]:
    """Columns lambda, V, U; a sweep CSV (V_eod, V_eo) is read through *metric*."""
    source = Path(path)
    header = read_csv(source, []).columns
    v_col = "V" if "V" in header else f"V_{metric}"
    frame = read_csv(source, ["lambda", v_col, "U"])
    return [
        TradeoffPoint(v=float(row[v_col]), u=float(row["U"]), lam=float(row["lambda"]))
        for _, row in frame.iterrows()
    ]


def read_dcor_input(path: PathLike) -> tuple[RepBatch, RepBatch, PartitionLabels]:
    """Two representation blocks (columns ``a_*`` and ``b_*``) plus label column y and optional d."""
    frame = read_csv(path, ["y"])
    a_cols = [c for c in frame.columns if str(c).startswith("a_")]
    b_cols = [c for c in frame.columns if str(c).startswith("b_")]
    if not a_cols or not b_cols:
        raise InputValidationError(f"{path}: expected columns prefixed a_ and b_.")
    labels = PartitionLabels(
        y=frame["y"].to_numpy(),
        d=frame["d"].to_numpy() if "d" in frame.columns else None,
    )
    return (
        RepBatch(values=frame[a_cols].to_numpy(dtype=np.float64)),
        RepBatch(values=frame[b_cols].to_numpy(dtype=np.float64)),
        labels,
    )
