"""CSV ingestion and emission, and the per-run JSON manifest."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pandas.errors import EmptyDataError, ParserError

from src.copulas.copula import validate_correlation
from src.errors import DataFormatError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass(frozen=True, eq=False)
class ReturnsData:
    matrix: np.ndarray
    names: Tuple[str, ...]

    @property
    def n_periods(self) -> int:
        return self.matrix.shape[0]


def _read_frame(path: PathLike) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"File not found: {path}")
    if not path.read_text(encoding="utf-8").strip():
        raise DataFormatError(f"File is empty: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except EmptyDataError:
        raise DataFormatError(f"File is empty: {path}")
    except ParserError as e:
        raise DataFormatError(f"Malformed CSV {path}: {e}")
    if frame.shape[0] == 0:
        raise DataFormatError(f"{path} has a header but no data rows")
    return frame.fillna("")


def _numeric(frame: pd.DataFrame, path: PathLike) -> np.ndarray:
    """Convert every cell to float, naming the first offending cell (1-based data row)."""
    values = np.empty(frame.shape, dtype=float)
    for j, column in enumerate(frame.columns):
        cells = frame[column].astype(str).str.strip()
        converted = pd.to_numeric(cells, errors="coerce")
        for i, (raw, number) in enumerate(zip(cells, converted)):
            if raw == "":
                raise DataFormatError(f"{path}: missing value at row {i + 1}, column '{column}'")
            if not math.isfinite(number):
                raise DataFormatError(f"{path}: non-numeric or non-finite value '{raw}' at row {i + 1}, column '{column}'")
        values[:, j] = converted.to_numpy(dtype=float)
    return values


def ingest_returns_csv(path: PathLike) -> ReturnsData:
    """Read a header row of asset names followed by one row of decimal returns per period.

    Raises:
        DataFormatError: empty file, header without rows, ragged rows, missing or non-numeric cells.
    """
    frame = _read_frame(path)
    names = tuple(str(c).strip() for c in frame.columns)
    if any(name.startswith("Unnamed:") or not name for name in names):
        raise DataFormatError(f"{path}: every column needs an asset name in the header")
    matrix = _numeric(frame, path)
    logger.info(f"Loaded {matrix.shape[0]} periods of {matrix.shape[1]} assets from {path}")
    return ReturnsData(matrix, names)


def ingest_correlation_csv(path: PathLike, names: Optional[Sequence[str]] = None) -> np.ndarray:
    """Square correlation matrix with a header row; a leading label column is allowed.

    Args:
        path: CSV file.
        names: When given, the header must list these assets in this order.
    """
    frame = _read_frame(path)
    first = frame.columns[0]
    if pd.to_numeric(frame[first].astype(str).str.strip(), errors="coerce").isna().any():
        frame = frame.drop(columns=[first])
    if frame.shape[0] != frame.shape[1]:
        raise DataFormatError(f"{path}: correlation matrix must be square, got {frame.shape[0]}x{frame.shape[1]}")
    header = [str(c).strip() for c in frame.columns]
    if names is not None and list(names) != header:
        raise DataFormatError(f"{path}: correlation header {header} does not match assets {list(names)}")
    return validate_correlation(_numeric(frame, path))


def write_csv(rows: Iterable[Dict[str, Any]], path: PathLike, columns: Optional[Sequence[str]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(list(rows), columns=list(columns) if columns is not None else None)
    frame.to_csv(path, index=False, lineterminator="\n", float_format="%.10g")
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def content_hash(data: bytes) -> str:
    """Git-style blob hash: sha1 over ``blob <len>\\0`` followed by the bytes."""
    digest = hashlib.sha1()
    digest.update(b"blob %d\0" % len(data))
    digest.update(data)
    return digest.hexdigest()


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def write_json(data: Any, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, sort_keys=True, indent=2, default=_json_default) + "\n", encoding="utf-8")
    return path


def write_manifest(
    out_dir: PathLike,
    config: Dict[str, Any],
    outputs: Sequence[PathLike],
    inputs: Sequence[PathLike] = (),
) -> Path:
    """manifest.json: config echo, seed, output files and content hashes of the inputs and the config."""
    out_dir = Path(out_dir)
    input_hashes: List[Dict[str, str]] = []
    for item in inputs:
        item = Path(item)
        input_hashes.append({"path": str(item), "hash": content_hash(item.read_bytes())})
    manifest = {
        "config": config,
        "config_hash": content_hash(canonical_json(config).encode("utf-8")),
        "seed": config.get("seed"),
        "inputs": input_hashes,
        "outputs": sorted(Path(p).name for p in outputs),
    }
    return write_json(manifest, out_dir / "manifest.json")
