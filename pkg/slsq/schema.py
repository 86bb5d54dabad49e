# Record layouts of every tabular output. Vector-valued fields are flattened
# to name1..named by slsq.util.struct_to_dataframe when written to CSV/Parquet.

import numpy as np

# Symbol log record (binary wire/log format, big-endian, fixed size).
SymbolRecordDtype = np.dtype([
    ('tick', '>u8'),                # Timestamp, in ticks.
    ('kind', 'u1'),                 # 0 = block symbol, 1 = mode-only symbol.
    ('eta', '>u8'),                 # Quantizer index (block symbols; 0 otherwise).
    ('mode', '>u2'),                # Mode observed at the timestamp.
    ('nmissed', '>u4'),             # Number of missed mode intervals b_k (block symbols; 0 otherwise).
])

SYMBOL_BLOCK = 0
SYMBOL_MODE = 1


def trace_dtype(d: int, c: int) -> np.dtype:
    """Closed-loop samples: one row per sampling instant and per switch."""
    return np.dtype([
        ('t', '<f8'),               # Time.
        ('tick', '<i8'),            # Time, in ticks.
        ('x', '<f8', (d,)),         # Plant state.
        ('xhat', '<f8', (d,)),      # Controller model state.
        ('u', '<f8', (c,)),         # Applied input (left limit at segment ends).
        ('sigma', '<i4'),           # True mode.
        ('sigma_hat', '<i4'),       # Mode known to the controller.
        ('block', '<i8'),           # Current block k.
        ('r_k', '<f8'),             # Radius of the current block.
        ('beta_k', '<f8'),          # Contraction factor of the current block.
        ('b_k', '<i4'),             # Missed-interval count of the current block.
    ])


def block_dtype(d: int) -> np.dtype:
    """One row per block boundary t_k = k n tau_s."""
    return np.dtype([
        ('k', '<i8'),               # Block index.
        ('tick', '<i8'),            # t_k, in ticks.
        ('t', '<f8'),               # t_k.
        ('x', '<f8', (d,)),         # Observed state x(t_k).
        ('x_norm', '<f8'),          # ||x(t_k)||.
        ('r_prev', '<f8'),          # r_{k-1} (r_0 for k = 0).
        ('r_k', '<f8'),             # r_k.
        ('beta_k', '<f8'),          # beta_k (1 for k = 0).
        ('beta_star', '<f8'),       # r_k / r_0.
        ('rho_k', '<f8'),           # psi + alpha_bar + N_sigma(t_k, 0) eps_bar / k (NaN for k = 0).
        ('b_k', '<i4'),             # Missed-interval count transmitted with the block symbol.
        ('nstar_prev', '<i4'),      # N*_{k-1}: intervals of block k-1 containing a switch (-1 for k = 0).
        ('nswitch_prev', '<i4'),    # N_sigma(t_k, t_{k-1}) (-1 for k = 0).
        ('mismatch_prev', '<f8'),   # Time in block k-1 with sigma_hat != sigma (NaN for k = 0).
        ('eta', '<i8'),             # Quantizer index sent.
        ('mode', '<i4'),            # Mode sent.
        ('xi', '<f8', (d,)),        # Reconstruction r_k * point(eta).
        ('sound', '|b1'),           # ||x(t_k)|| <= r_k.
    ])


def segment_dtype(d: int) -> np.dtype:
    """Controller input segments u(t) = K_mode xhat(t), xhat(tick_start) = xhat0."""
    return np.dtype([
        ('tick_start', '<i8'),      # Segment start, in ticks.
        ('tick_end', '<i8'),        # Segment end (exclusive), in ticks.
        ('mode', '<i4'),            # Model mode driving the auxiliary system.
        ('xhat0', '<f8', (d,)),     # Model state at the segment start.
    ])


# Rate-versus-ADT sweep.
SweepDtype = np.dtype([
    ('tau_a', '<f8'),               # Average dwell time.
    ('feasible', '|b1'),            # A configuration was found.
    ('tau_s', '<f8'),               # Sampling period.
    ('n', '<i8'),                   # Block length.
    ('alpha', '<f8'),               # Quantizer accuracy.
    ('rate', '<f8'),                # [bits/time] Average data rate.
    ('lhs', '<f8'),                 # Left-hand side of the parameter condition.
    ('mu', '<f8'),                  # Guaranteed decay rate.
])

# Fast-switching experiment, one row per n.
Prop1Dtype = np.dtype([
    ('n', '<i8'),                   # Switching frequency parameter (switch every 1/n).
    ('sup_integral', '<f8'),        # max over inputs of |int_0^T B_sigma_n(t) u(t) dt|.
    ('argmax_input', '<i4'),        # Index of the maximizing input.
    ('min_abs_x', '<f8'),           # min over inputs of |x(T)| for x(0) = 1.
    ('linear_reference', '<f8'),    # T / (2n): the integral for u(t) = t.
])

# Property suite summary.
SuiteDtype = np.dtype([
    ('suite', '<U32'),              # Suite name.
    ('runs', '<i8'),                # Number of randomized cases.
    ('violations', '<i8'),          # Cases failing the property.
    ('passed', '|b1'),              # violations == 0.
])
