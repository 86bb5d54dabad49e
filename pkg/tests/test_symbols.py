import pytest

from slsq import symbols
from slsq.schema import SymbolRecordDtype
from slsq.symbols import BlockSymbol, ModeSymbol
from slsq.util import ProtocolError

STREAM = [
    BlockSymbol(tick=0, eta=420, mode=1, nmissed=0),
    ModeSymbol(tick=8, mode=1),
    ModeSymbol(tick=16, mode=0),
    BlockSymbol(tick=24, eta=7, mode=0, nmissed=2),
]


def test_records():
    arr = symbols.to_records(STREAM)
    assert arr.dtype == SymbolRecordDtype
    assert list(arr["kind"]) == [0, 1, 1, 0]
    assert list(arr["eta"]) == [420, 0, 0, 7]
    assert symbols.from_records(arr) == STREAM


def test_binary_log(tmp_path):
    path = str(tmp_path / "symbols.bin")
    symbols.write_binary(STREAM, path)
    assert (tmp_path / "symbols.bin").stat().st_size == len(STREAM) * SymbolRecordDtype.itemsize
    assert symbols.read_log(path) == STREAM

    with open(path, "ab") as f:
        f.write(b"\x00\x01")
    with pytest.raises(ProtocolError):
        symbols.read_binary(path)


def test_binary_log_unknown_kind(tmp_path):
    arr = symbols.to_records(STREAM[:1])
    arr["kind"] = 9
    path = tmp_path / "bad.bin"
    path.write_bytes(arr.tobytes())
    with pytest.raises(ProtocolError):
        symbols.read_binary(str(path))


def test_jsonl_log(tmp_path):
    path = str(tmp_path / "symbols.jsonl")
    symbols.write_jsonl(STREAM, path)
    assert symbols.read_log(path) == STREAM
    assert symbols.to_json(STREAM[1]) == {"tick": 8, "kind": "mode", "mode": 1}

    with open(path, "a") as f:
        f.write('{"tick": 32, "kind": "nope"}\n')
    with pytest.raises(ProtocolError):
        symbols.read_jsonl(path)


def test_pack_widths():
    # 841-point quantizer, n = 100, two modes: 10 + 7 + 1 bits
    bits = symbols.pack(STREAM[0], 841, 100, 2)
    assert len(bits) == 18
    assert bits == format(420, "010b") + format(0, "07b") + "1"
    assert symbols.pack(STREAM[1], 841, 100, 2) == "1"
    assert symbols.pack(ModeSymbol(0, 0), 841, 100, 1) == ""


def test_unpack():
    bits = symbols.pack(STREAM[3], 841, 100, 2)
    assert symbols.unpack(bits, 24, True, 841, 100, 2) == STREAM[3]
    assert symbols.unpack("0", 16, False, 841, 100, 2) == ModeSymbol(16, 0)
    with pytest.raises(ProtocolError):
        symbols.unpack("1" * 18, 24, True, 841, 100, 2)
    with pytest.raises(ProtocolError):
        symbols.unpack("01", 16, False, 841, 100, 2)
    with pytest.raises(ProtocolError):
        symbols.pack(BlockSymbol(0, 841, 0, 0), 841, 100, 2)
