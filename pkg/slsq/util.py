import json
import math
from typing import Optional

import numpy as np
import pandas as pd
import pyarrow as pa
import pyarrow.parquet as pq
import yaml

# relative slack when snapping a float time onto the tick grid
TICK_RTOL = 1e-9


class ConfigError(ValueError):
    """A configuration document or parameter set is malformed."""


def load_document(path: str):
    """Load a JSON or YAML document.

    JSON is selected by a ``.json`` extension; anything else is parsed as
    YAML (which also accepts JSON).
    """
    try:
        with open(path, "r") as f:
            if path.endswith(".json"):
                return json.load(f)
            return yaml.safe_load(f)
    except (OSError, json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"Cannot read {path}: {e}") from e


def dump_document(doc, path: str) -> None:
    with open(path, "w") as f:
        if path.endswith(".json"):
            json.dump(doc, f, indent=2)
            f.write("\n")
        else:
            yaml.safe_dump(doc, f, sort_keys=False)


def to_ticks(t: float, base_tick: float, name: str = "time") -> int:
    """Convert a time to an integer tick count, refusing off-grid values."""
    if base_tick <= 0:
        raise ValueError(f"base_tick must be positive, got {base_tick}")
    q = t / base_tick
    k = round(q)
    if not math.isclose(q, k, rel_tol=TICK_RTOL, abs_tol=TICK_RTOL):
        raise ValueError(f"{name}={t} is not a multiple of base_tick={base_tick}")
    return int(k)


def ceil_ticks(t: float, base_tick: float) -> int:
    """Smallest tick count k with k * base_tick >= t (up to TICK_RTOL)."""
    q = t / base_tick
    k = math.floor(q)
    if math.isclose(q, k, rel_tol=TICK_RTOL, abs_tol=TICK_RTOL):
        return int(k)
    return int(math.ceil(q))


###
### Serialization
###

def struct_to_dataframe(arr: np.ndarray) -> pd.DataFrame:
    """Flatten a structured array (with vector-valued fields) into columns.

    A field ``x`` of shape (d,) becomes columns ``x1 .. xd``.
    """
    cols = {}
    for name in arr.dtype.names:
        col = arr[name]
        if col.ndim == 1:
            cols[name] = col.astype(col.dtype.newbyteorder("="))
        else:
            for i in range(col.shape[1]):
                cols[f"{name}{i + 1}"] = col[:, i].astype(col.dtype.newbyteorder("="))
    return pd.DataFrame(cols)


def struct_to_csv(arr: np.ndarray, path: str) -> None:
    struct_to_dataframe(arr).to_csv(path, index=False, float_format="%.17g")


def struct_to_parquet(
    arr: np.ndarray,
    path: str,
    *,
    chunk_size: Optional[int] = None,
    row_group_size: Optional[int] = None,
) -> None:
    """
    Write a NumPy structured array to a Parquet file using PyArrow.

    Vector-valued fields are flattened as in `struct_to_dataframe`.
    """

    if arr.dtype.names is None:
        raise TypeError("struct_to_parquet expects a structured NumPy array (dtype.names is None).")

    n_rows = len(arr)
    if n_rows == 0:
        return

    if chunk_size is None:
        chunk_size = n_rows if n_rows <= 10_000_000 else 1_000_000

    writer: Optional[pq.ParquetWriter] = None
    try:
        for start in range(0, n_rows, chunk_size):
            chunk = arr[start:start + chunk_size]
            table = pa.Table.from_pandas(struct_to_dataframe(chunk), preserve_index=False)

            if writer is None:
                writer = pq.ParquetWriter(path, table.schema, compression="zstd")
            writer.write_table(table, row_group_size=row_group_size)
    finally:
        if writer is not None:
            writer.close()


def parse_int_list(text: str) -> list:
    """Parse ``"1,10,100"`` into ``[1, 10, 100]``."""
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"Expected a comma-separated list of integers, got {text!r}") from e


def parse_float_list(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"Expected a comma-separated list of numbers, got {text!r}") from e


class ProtocolError(ValueError):
    """A symbol is out of cadence, out of range or cannot be decoded."""
