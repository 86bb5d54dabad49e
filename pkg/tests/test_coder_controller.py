import math

import pytest

from slsq.coder import SoundnessViolation, bit_cost, coder_block_step, coder_init, coder_mode_step, wire_bits
from slsq.controller import (controller_block_step, controller_init, controller_mode_step, controller_step,
                             input_at)
from slsq.design import beta_k, derived_constants
from slsq.symbols import BlockSymbol, ModeSymbol
from slsq.util import ProtocolError


def test_first_block(scalar_case):
    state = coder_init(scalar_case)
    sym, state = coder_block_step(state, [0.37], 1)
    assert sym == BlockSymbol(tick=0, eta=14, mode=1, nmissed=0)
    assert state.r_k == 1.0 and state.beta == 1.0 and state.k == 1
    assert state.quantizer.point(14)[0] == pytest.approx(0.4)

    with pytest.raises(SoundnessViolation):
        coder_block_step(coder_init(scalar_case), [1.5], 0)


def test_block_radius_update(scalar_case):
    dc = derived_constants(scalar_case)
    b0, b1 = beta_k(0, dc, 0.0), beta_k(1, dc, 0.0)
    assert b0 == pytest.approx(math.exp(-0.25) + 0.05)
    assert b1 == pytest.approx(b0 + 0.1)

    state = coder_init(scalar_case)
    _, state = coder_block_step(state, [0.9], 0)
    sym, s1 = coder_block_step(state, [0.5 * b0], 0)
    assert sym.nmissed == 0 and sym.tick == 500
    assert s1.r_k == b0

    sym, s2 = coder_block_step(state, [-0.5 * (b0 + b1)], 1)
    assert sym.nmissed == 1
    assert s2.r_k == b1

    with pytest.raises(SoundnessViolation) as info:
        coder_block_step(state, [2.0], 0)
    assert info.value.k == 1
    assert info.value.beta_max == pytest.approx(beta_k(10, dc, 0.0))


def test_mode_step(scalar_case):
    state = coder_init(scalar_case)
    with pytest.raises(ValueError):
        coder_mode_step(state, 0, 1)
    _, state = coder_block_step(state, [0.1], 0)
    _, state = coder_block_step(state, [0.1], 0)
    assert coder_mode_step(state, 1, 3) == ModeSymbol(tick=(10 + 3) * 50, mode=1)
    with pytest.raises(ValueError):
        coder_mode_step(state, 1, 10)


def test_bit_costs(case1, scalar_case):
    block = BlockSymbol(0, 0, 0, 0)
    mode = ModeSymbol(8, 1)
    assert bit_cost(block, case1) == pytest.approx(17.37, abs=0.01)
    assert bit_cost(mode, case1) == 1.0
    assert wire_bits(block, case1) == 18
    assert wire_bits(mode, case1) == 1
    # 21 points, 11 nmissed values, 2 modes
    assert wire_bits(block, scalar_case) == 5 + 4 + 1


def _drive(cfg, sys, fb, xs, modes):
    """Feed the coder and the controller the same block observations."""
    coder = coder_init(cfg)
    ctrl = controller_init(cfg, sys, fb)
    for k, (x, mode) in enumerate(zip(xs, modes)):
        sym, coder = coder_block_step(coder, x, mode)
        _, ctrl = controller_block_step(ctrl, sym)
        assert ctrl.r_k == coder.r_k
        for j in range(1, cfg.n):
            _, ctrl = controller_mode_step(ctrl, coder_mode_step(coder, mode, j))
    return coder, ctrl


def test_controller_mirrors_radii(scalar_case, scalar_plant):
    sys, fb, _ = scalar_plant
    coder, ctrl = _drive(scalar_case, sys, fb, [[0.8], [0.7], [-0.6], [0.1]], [0, 1, 1, 0])
    assert ctrl.k == coder.k == 4


def test_controller_reconstruction(scalar_case, scalar_plant):
    sys, fb, _ = scalar_plant
    ctrl = controller_init(scalar_case, sys, fb)
    seg, ctrl = controller_block_step(ctrl, BlockSymbol(0, 14, 0, 0))
    assert ctrl.xi[0] == pytest.approx(0.4)
    assert seg.tick_start == 0 and seg.tick_end == 50
    # mode 0 closes the loop at -1, mode 1 at -1/2
    seg, ctrl = controller_mode_step(ctrl, ModeSymbol(50, 1))
    assert ctrl.xi[0] == pytest.approx(0.4 * math.exp(-0.05))
    seg, ctrl = controller_step(ctrl, ModeSymbol(100, 1))
    assert ctrl.xi[0] == pytest.approx(0.4 * math.exp(-0.05) * math.exp(-0.025))
    assert ctrl.next_tick == 150 and not ctrl.expects_block

    assert input_at(seg, seg.t_start)[0] == pytest.approx(-0.5 * ctrl.xi[0])
    assert input_at(seg, seg.t_start + 0.01)[0] == pytest.approx(-0.5 * ctrl.xi[0] * math.exp(-0.005))
    with pytest.raises(ValueError):
        input_at(seg, seg.t_end)


def test_controller_expects_block_after_n_intervals(scalar_case, scalar_plant):
    sys, fb, _ = scalar_plant
    ctrl = controller_init(scalar_case, sys, fb)
    _, ctrl = controller_block_step(ctrl, BlockSymbol(0, 10, 0, 0))
    for j in range(1, scalar_case.n):
        _, ctrl = controller_mode_step(ctrl, ModeSymbol(j * 50, 0))
    assert ctrl.expects_block and ctrl.next_tick == 500
    with pytest.raises(ProtocolError):
        controller_mode_step(ctrl, ModeSymbol(500, 0))
    _, ctrl = controller_block_step(ctrl, BlockSymbol(500, 10, 0, 3))
    assert ctrl.r_k == beta_k(3, ctrl.dc, 0.0)


def test_controller_protocol_errors(scalar_case, scalar_plant):
    sys, fb, _ = scalar_plant
    ctrl = controller_init(scalar_case, sys, fb)
    with pytest.raises(ProtocolError):
        controller_mode_step(ctrl, ModeSymbol(0, 0))
    with pytest.raises(ProtocolError):
        controller_block_step(ctrl, BlockSymbol(50, 10, 0, 0))
    with pytest.raises(ProtocolError):
        controller_block_step(ctrl, BlockSymbol(0, 10, 0, 1))
    with pytest.raises(ProtocolError):
        controller_block_step(ctrl, BlockSymbol(0, 10, 2, 0))
    with pytest.raises(ProtocolError):
        controller_block_step(ctrl, BlockSymbol(0, 21, 0, 0))

    _, ctrl = controller_block_step(ctrl, BlockSymbol(0, 10, 0, 0))
    with pytest.raises(ProtocolError):
        controller_mode_step(ctrl, ModeSymbol(60, 0))


def test_controller_rejects_other_systems(case1, scalar_plant):
    sys, fb, _ = scalar_plant
    with pytest.raises(ValueError):
        controller_init(case1, sys, fb)
