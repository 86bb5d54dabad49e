"""
Coder-to-controller symbols and their on-disk formats.

A block symbol (sent at t_k = k n tau_s) carries the quantizer index, the
observed mode and the missed-interval count b_k; a mode-only symbol (sent
at the n-1 intermediate sampling instants) carries the mode alone.

Formats:

* binary log: concatenated `SymbolRecordDtype` records (big-endian);
* JSON lines: one object per symbol, for inspection;
* wire bits: fixed-width fields of ceil(log2(alphabet)) bits each.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

from .quantizer import index_bits
from .schema import SYMBOL_BLOCK, SYMBOL_MODE, SymbolRecordDtype
from .util import ProtocolError


@dataclass(frozen=True)
class BlockSymbol:
    tick: int
    eta: int
    mode: int
    nmissed: int


@dataclass(frozen=True)
class ModeSymbol:
    tick: int
    mode: int


Symbol = Union[BlockSymbol, ModeSymbol]


def to_records(symbols: Iterable[Symbol]) -> np.ndarray:
    symbols = list(symbols)
    out = np.zeros(len(symbols), dtype=SymbolRecordDtype)
    block = np.array([isinstance(s, BlockSymbol) for s in symbols], dtype=bool)
    out["tick"] = [s.tick for s in symbols]
    out["mode"] = [s.mode for s in symbols]
    out["kind"] = np.where(block, SYMBOL_BLOCK, SYMBOL_MODE)
    out["eta"] = [s.eta if b else 0 for s, b in zip(symbols, block)]
    out["nmissed"] = [s.nmissed if b else 0 for s, b in zip(symbols, block)]
    return out


def from_records(arr: np.ndarray) -> list:
    out = []
    for rec in arr:
        kind = int(rec["kind"])
        if kind == SYMBOL_BLOCK:
            out.append(BlockSymbol(int(rec["tick"]), int(rec["eta"]), int(rec["mode"]), int(rec["nmissed"])))
        elif kind == SYMBOL_MODE:
            out.append(ModeSymbol(int(rec["tick"]), int(rec["mode"])))
        else:
            raise ProtocolError(f"unknown symbol kind {kind} at tick {int(rec['tick'])}")
    return out


def write_binary(symbols: Iterable[Symbol], path: str) -> None:
    with open(path, "wb") as f:
        f.write(to_records(symbols).tobytes())


def read_binary(path: str) -> list:
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) % SymbolRecordDtype.itemsize:
        raise ProtocolError(
            f"{path}: {len(buf)} bytes is not a whole number of {SymbolRecordDtype.itemsize}-byte records"
        )
    return from_records(np.frombuffer(buf, dtype=SymbolRecordDtype))


def to_json(s: Symbol) -> dict:
    if isinstance(s, BlockSymbol):
        return {"tick": s.tick, "kind": "block", "eta": s.eta, "mode": s.mode, "nmissed": s.nmissed}
    return {"tick": s.tick, "kind": "mode", "mode": s.mode}


def from_json(obj) -> Symbol:
    try:
        if obj["kind"] == "block":
            return BlockSymbol(int(obj["tick"]), int(obj["eta"]), int(obj["mode"]), int(obj["nmissed"]))
        if obj["kind"] == "mode":
            return ModeSymbol(int(obj["tick"]), int(obj["mode"]))
    except (KeyError, TypeError, ValueError) as e:
        raise ProtocolError(f"cannot decode symbol {obj!r}: {e}") from e
    raise ProtocolError(f"unknown symbol kind in {obj!r}")


def write_jsonl(symbols: Iterable[Symbol], path: str) -> None:
    with open(path, "w") as f:
        for s in symbols:
            f.write(json.dumps(to_json(s)))
            f.write("\n")


def read_jsonl(path: str) -> list:
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ProtocolError(f"{path}:{lineno}: {e}") from e
            out.append(from_json(obj))
    return out


def read_log(path: str) -> list:
    """Read a symbol log; ``.jsonl`` is JSON lines, anything else binary."""
    if path.endswith(".jsonl"):
        return read_jsonl(path)
    return read_binary(path)


###
### Wire packing
###

def _field(value: int, size: int, name: str) -> str:
    if not 0 <= value < size:
        raise ProtocolError(f"{name}={value} outside its alphabet of size {size}")
    width = index_bits(size)
    return format(value, f"0{width}b") if width else ""


def pack(s: Symbol, m: int, n: int, mode_count: int) -> str:
    """
    Fixed-width bit string of a symbol: ``eta | nmissed | mode`` for block
    symbols (alphabets m, n+1, N), ``mode`` alone otherwise.
    """
    if isinstance(s, BlockSymbol):
        return (_field(s.eta, m, "eta") + _field(s.nmissed, n + 1, "nmissed")
                + _field(s.mode, mode_count, "mode"))
    return _field(s.mode, mode_count, "mode")


def unpack(bits: str, tick: int, block: bool, m: int, n: int, mode_count: int) -> Symbol:
    """Inverse of `pack`; the receiver knows from the cadence which kind to expect."""
    widths = [index_bits(m), index_bits(n + 1), index_bits(mode_count)] if block else [index_bits(mode_count)]
    if len(bits) != sum(widths) or any(ch not in "01" for ch in bits):
        raise ProtocolError(f"expected {sum(widths)} bits at tick {tick}, got {bits!r}")
    values, pos = [], 0
    for w in widths:
        values.append(int(bits[pos:pos + w], 2) if w else 0)
        pos += w
    if block:
        eta, nmissed, mode = values
        if eta >= m or nmissed > n or mode >= mode_count:
            raise ProtocolError(f"undecodable block symbol {bits!r} at tick {tick}")
        return BlockSymbol(tick, eta, mode, nmissed)
    if values[0] >= mode_count:
        raise ProtocolError(f"undecodable mode symbol {bits!r} at tick {tick}")
    return ModeSymbol(tick, values[0])
