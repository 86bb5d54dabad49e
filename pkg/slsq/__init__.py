"""Finite-data-rate stabilization of switched linear systems: quantizer, coder, controller and simulator."""

__version__ = "0.1.0"

from .coder import SoundnessViolation
from .design import (CoderControllerConfig, InfeasibleDesign, InvalidState, SearchExhausted, SearchTargets,
                     check_condition, data_rate, decay_rates, search_parameters)
from .quantizer import BallQuantizer
from .simulate import ClosedLoopTrace, run_closed_loop, verify_trace
from .switching import AdtBudget, SwitchingSignal
from .system import FeedbackLaw, StabilizabilityCertificate, SwitchedLinearSystem
from .util import ConfigError, ProtocolError
