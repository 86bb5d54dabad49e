import logging
import math

import numpy as np
import pytest

from slsq import quantizer
from slsq.experiments import sample_unit_ball
from slsq.quantizer import BallQuantizer, build, half_width, index_bits, mhat
from slsq.util import ConfigError, ProtocolError


def test_alphabet_size():
    assert half_width(2, 0.05) == 14
    assert mhat(2, 0.05) == 841
    q = build(2, 0.05)
    assert q.m_hat == 841
    assert 512 < q.m <= 841
    assert q.bits == 10


def test_index_bits():
    assert index_bits(1) == 0
    assert index_bits(2) == 1
    assert index_bits(101) == 7
    assert index_bits(1024) == 10
    assert index_bits(1025) == 11


def test_points_lie_in_unit_ball():
    for d, alpha in [(1, 0.05), (2, 0.1), (3, 0.25)]:
        q = build(d, alpha)
        assert np.all(np.linalg.norm(q.points, axis=1) <= 1 + 1e-12)
        assert np.array_equal(q.point(q.zero_index), np.zeros(d))
        assert len(np.unique(np.round(q.points, 12), axis=0)) == q.m


def test_scalar_grid():
    q = BallQuantizer(1, 0.5)
    assert q.m == 3
    np.testing.assert_array_equal(q.points[:, 0], [-1.0, 0.0, 1.0])
    assert q.quantize([0.6])[0] == 2
    assert q.quantize([-0.9])[0] == 0
    # equidistant from 0 and 1: the smaller index wins
    idx, point = q.quantize([0.5])
    assert idx == 1 and point[0] == 0.0


@pytest.mark.parametrize("d,alpha", [(1, 0.05), (2, 0.05), (2, 0.3), (3, 0.2)])
def test_accuracy(d, alpha):
    q = build(d, alpha)
    xi = sample_unit_ball(np.random.default_rng(d), 2000, d)
    idx = q.quantize_many(xi)
    assert np.all(np.linalg.norm(xi - q.points[idx], axis=1) <= alpha + 1e-12)
    for v, i in zip(xi[:50], idx[:50]):
        assert q.quantize(v)[0] == i


@pytest.mark.parametrize("d,alpha", [(1, 0.05), (2, 0.05), (3, 0.2)])
def test_zero_region(d, alpha):
    q = build(d, alpha)
    small = sample_unit_ball(np.random.default_rng(0), 1000, d, radius=alpha / math.sqrt(d) * (1 - 1e-9))
    assert np.all(q.quantize_many(small) == q.zero_index)
    assert q.quantize(np.zeros(d))[0] == q.zero_index


def test_single_point_quantizer(caplog):
    with caplog.at_level(logging.WARNING, logger="slsq.quantizer"):
        q = BallQuantizer(1, 2.0)
    assert q.m == 1
    assert q.bits == 0
    assert q.encode_index(0) == ""
    assert q.quantize([0.9])[0] == 0
    assert "single point" in caplog.text


def test_too_many_points():
    with pytest.raises(ConfigError):
        BallQuantizer(10, 0.001)
    with pytest.raises(ValueError):
        mhat(2, 0.0)


def test_codes():
    q = build(2, 0.05)
    assert q.encode_index(5) == "0000000101"
    assert q.decode_index("0000000101") == 5
    with pytest.raises(ProtocolError):
        q.decode_index("101")
    with pytest.raises(ProtocolError):
        q.decode_index("1111111111")
    with pytest.raises(ProtocolError):
        q.encode_index(q.m)
    with pytest.raises(ProtocolError):
        q.point(-1)


def test_quantize_rejects_bad_input():
    q = build(2, 0.05)
    with pytest.raises(ValueError):
        q.quantize([0.1, 0.2, 0.3])
    with pytest.raises(ValueError):
        q.quantize([np.nan, 0.0])


def test_build_is_cached():
    assert build(2, 0.05) is build(2, 0.05)
    assert quantizer.from_document(build(2, 0.05).to_document()) is build(2, 0.05)
    with pytest.raises(ConfigError):
        quantizer.from_document({"d": 2})
