"""Exact zero-order-hold discretization of the cell state-space model.

The continuous A matrix is block-diagonal with 2x2 blocks of the form
``[[0, 0], [lam, -lam]]``, which admits a closed-form matrix exponential, so
the ZOH pair (A_d, B_d) is computed analytically per block rather than through
a generic expm/integral routine.  C and D pass through unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np

from .cell import CellParameters, ContinuousModel, TemperatureAdjustedParams, \
    arrhenius_adjust, build_continuous


@dataclass(frozen=True)
class DiscreteModel:
    """ZOH discrete model ``x+ = A_d x + B_d u``, ``psi = C_d x + D_d u``."""

    a_d: np.ndarray
    b_d: np.ndarray
    c_d: np.ndarray
    d_d: np.ndarray
    dt: float
    temperature: float


def zoh_block(lam: float, b1: float, b2: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form ZOH of one electrode block.

    For ``A = [[0, 0], [lam, -lam]]`` and ``B = [b1, b2]``:

    ``A_d = [[1, 0], [1 - e, e]]`` with ``e = exp(-lam dt)``, and

    ``B_d = [b1 dt,  b1 dt + (b2 - b1)(1 - e)/lam]``.

    ``(1 - e)`` is computed with expm1 so small ``lam dt`` stays accurate.
    """
    if not (lam > 0 and dt > 0):
        raise ValueError("lam and dt must be > 0")
    e = math.exp(-lam * dt)
    one_minus_e = -math.expm1(-lam * dt)
    a_d = np.array([[1.0, 0.0], [one_minus_e, e]])
    b_d = np.array([b1 * dt, b1 * dt + (b2 - b1) * one_minus_e / lam])
    return a_d, b_d


def discretize(m: ContinuousModel, dt: float) -> DiscreteModel:
    """Exact ZOH discretization of the full 4-state model."""
    if not (math.isfinite(dt) and dt > 0):
        raise ValueError(f"dt must be finite and > 0, got {dt}")
    a_d = np.zeros((4, 4))
    b_d = np.zeros(4)
    for row in (0, 2):
        lam = m.a[row + 1, row]
        blk_a, blk_b = zoh_block(lam, m.b[row], m.b[row + 1], dt)
        a_d[row:row + 2, row:row + 2] = blk_a
        b_d[row:row + 2] = blk_b
    return DiscreteModel(a_d=a_d, b_d=b_d, c_d=m.c.copy(), d_d=m.d.copy(),
                         dt=dt, temperature=m.temperature)


def build_discrete(p: CellParameters, temperature: float, dt: float,
                   adjusted: TemperatureAdjustedParams | None = None) -> DiscreteModel:
    """Arrhenius-adjust, assemble, and discretize in one call."""
    if adjusted is None:
        adjusted = arrhenius_adjust(p, temperature)
    return discretize(build_continuous(adjusted, p), dt)
