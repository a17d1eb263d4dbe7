"""Adaptive-cutoff temporal smoothing of per-frame fit outputs.

Each joint coordinate is filtered independently; part orientations are
filtered in unit-quaternion space with hemisphere sign alignment against the
previous sample, then renormalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .body import PART_LABELS
from .errors import FilterError, InvalidParameterError
from .geometry import matrix_from_quat, quat_from_matrix


@dataclass
class OneEuroConfig:
    min_cutoff: float = 1.0   # Hz
    beta: float = 0.007       # cutoff gain per unit speed
    d_cutoff: float = 1.0     # Hz, derivative smoothing
    nominal_rate: float = 30.0  # Hz fallback when timestamps are absent

    def __post_init__(self):
        if not (self.min_cutoff > 0 and self.d_cutoff > 0 and self.nominal_rate > 0):
            raise InvalidParameterError("cutoffs and nominal rate must be positive")
        if self.beta < 0:
            raise InvalidParameterError("beta must be non-negative")


@dataclass
class OneEuroState:
    prev_value: float = 0.0
    prev_derivative: float = 0.0
    prev_timestamp: float = 0.0
    initialized: bool = False


def smoothing_factor(dt, cutoff):
    r = 2.0 * math.pi * cutoff * dt
    return r / (r + 1.0)


def one_euro_step(state, x, t, cfg):
    """Filter one sample; the first sample passes through unchanged."""
    if not math.isfinite(x):
        raise FilterError(f"non-finite filter input {x!r}")
    if not state.initialized:
        state.prev_value = x
        state.prev_derivative = 0.0
        state.prev_timestamp = t
        state.initialized = True
        return x
    if t <= state.prev_timestamp:
        raise FilterError(f"non-monotone timestamp {t} after {state.prev_timestamp}")
    dt = t - state.prev_timestamp
    dx = (x - state.prev_value) / dt
    a_d = smoothing_factor(dt, cfg.d_cutoff)
    dx_hat = a_d * dx + (1.0 - a_d) * state.prev_derivative
    cutoff = cfg.min_cutoff + cfg.beta * abs(dx_hat)
    a = smoothing_factor(dt, cutoff)
    x_hat = a * x + (1.0 - a) * state.prev_value
    state.prev_value = x_hat
    state.prev_derivative = dx_hat
    state.prev_timestamp = t
    return x_hat


class _ChannelBank:
    """Independent filters over a flat array of channels."""

    def __init__(self, n):
        self.states = [OneEuroState() for _ in range(n)]

    def step(self, values, t, cfg):
        return np.array(
            [one_euro_step(s, float(x), t, cfg) for s, x in zip(self.states, values)]
        )


def smooth_sequence(results, cfg):
    """Filter an ordered sequence of fit results (None = unfittable frame).

    Joint positions are filtered per coordinate and part orientations per
    quaternion component. Gaps reset the filter state: interpolating across
    missed detections would fabricate data. Returns a new list; input
    results are not modified.
    """
    out = []
    pos_bank = None
    quat_banks = None
    prev_q = None
    for r in results:
        if r is None:
            pos_bank = quat_banks = prev_q = None
            out.append(None)
            continue
        if pos_bank is None:
            pos_bank = _ChannelBank(r.joints3d.size)
            quat_banks = {label: _ChannelBank(4) for label in PART_LABELS}
            prev_q = {}
        t = r.timestamp
        joints = pos_bank.step(r.joints3d.reshape(-1), t, cfg).reshape(r.joints3d.shape)
        parts = {}
        for label in PART_LABELS:
            q = quat_from_matrix(r.part_orientations[label])
            if label in prev_q and float(np.dot(q, prev_q[label])) < 0.0:
                q = -q
            prev_q[label] = q
            qf = quat_banks[label].step(q, t, cfg)
            qf = qf / np.linalg.norm(qf)
            parts[label] = matrix_from_quat(qf)
        out.append(replace(r, joints3d=joints, part_orientations=parts))
    return out
