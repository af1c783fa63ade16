"""
Shared utility functions for gridplan
"""
import logging
import os
import tempfile
from pathlib import Path
from typing import Callable, Dict, Iterable, Mapping, Optional, Sequence, Union

import polars as pl

from gridplan.core.config import settings
from gridplan.core.exceptions import ConfigError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _replace_atomically(path: PathLike, write: Callable[[str], None]) -> Path:
    """Let ``write`` fill a temporary sibling file, then rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        write(tmp_name)
        os.replace(tmp_name, path)
    except Exception as e:
        logger.error(f"Error writing {path}: {str(e)}")
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def atomic_write_text(path: PathLike, text: str) -> Path:
    """Write text through a temporary sibling file and rename it into place."""

    def write(tmp_name: str) -> None:
        with open(tmp_name, "w", newline="\n") as handle:
            handle.write(text)

    return _replace_atomically(path, write)


def write_frame(df: pl.DataFrame, path: PathLike) -> Path:
    """Write a polars frame as CSV atomically; cells with commas or quotes are quoted."""
    return _replace_atomically(path, df.write_csv)


def atomic_write_csv(path: PathLike, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Write row tuples under the given header (header only when there are no rows)."""
    df = pl.DataFrame(list(rows), schema=list(columns), orient="row", infer_schema_length=None)
    return write_frame(df, path)


def read_csv(
    path: PathLike,
    required: Sequence[str],
    schema: Optional[Mapping[str, pl.DataType]] = None,
    what: str = "CSV",
) -> pl.DataFrame:
    """
    Read a CSV file with polars and check its header.

    Args:
        path: File to read
        required: Column names that must be present
        schema: Optional dtype overrides per column
        what: Human readable name used in error messages

    Returns:
        pl.DataFrame: the parsed frame

    Raises:
        ConfigError: missing file, unreadable content or missing columns
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{what} file not found: {path}")
    try:
        df = pl.read_csv(path, schema_overrides=dict(schema or {}))
    except Exception as e:
        logger.error(f"Error reading {what} {path}: {str(e)}")
        raise ConfigError(f"Cannot read {what} file {path}: {e}") from e
    missing = [col for col in required if col not in df.columns]
    if missing:
        raise ConfigError(f"{what} file {path} is missing columns: {', '.join(missing)}")
    return df


def group_dict(df: pl.DataFrame, keys: Sequence[str], value: str) -> Dict[tuple, float]:
    """Map each key tuple to its value column entry."""
    return {tuple(row[:-1]): row[-1] for row in df.select([*keys, value]).iter_rows()}


def resolve_workers(requested: Optional[int] = None) -> int:
    """Worker count: explicit request, then GRIDPLAN_WORKERS, then available cores."""
    if requested is not None:
        if requested < 1:
            raise ConfigError(f"Worker count must be at least 1, got {requested}")
        return requested
    return settings.worker_count
