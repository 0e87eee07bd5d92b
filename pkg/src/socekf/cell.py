"""Electrochemical cell model.

Continuous-time parameter-grouped single particle model of a two-electrode
cell: reference parameters with Arrhenius temperature scaling, block-diagonal
state-space matrices, the concentration output map, electrode overpotentials,
and the terminal-voltage equation.

State vector order is ``[q1_p, q2_p, q1_n, q2_n]`` (normalized charge states,
positive electrode first); output order is ``[cbar_p, css_p, cbar_n, css_n]``
(average and surface normalized concentrations per electrode).

Sign conventions
----------------
Measured current is discharge-positive: a positive current lowers the terminal
voltage through the overpotential and ohmic terms.  The normalized charge
states are oriented so that charging raises them, so the state-space input is
the *negated* measured current; :func:`state_space_input` is the single place
that mapping lives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

FARADAY = 96485.0  # C/mol
GAS_CONSTANT = 8.314  # J/(mol K)
T_REF_DEFAULT = 298.15  # K

#: Default clamp applied to surface concentrations before sqrt(c(1-c)) and
#: OCP slope evaluation; both are singular/undefined at 0 and 1.
CLAMP_EPS = 1e-6

# State / output vector indices.
IDX_Q1_P, IDX_Q2_P, IDX_Q1_N, IDX_Q2_N = 0, 1, 2, 3
IDX_CBAR_P, IDX_CSS_P, IDX_CBAR_N, IDX_CSS_N = 0, 1, 2, 3


def state_space_input(current: float) -> float:
    """Map a discharge-positive measured current onto the state-space input.

    The charge states integrate the charging direction, so the model input is
    the negated measured current.  Every simulator/filter code path goes
    through this helper so the orientation is defined exactly once.
    """
    return -current


def clamp_concentration(c: float, eps: float = CLAMP_EPS) -> float:
    """Clamp a normalized concentration into [eps, 1 - eps]."""
    if c < eps:
        return eps
    if c > 1.0 - eps:
        return 1.0 - eps
    return c


@dataclass(frozen=True)
class OcpCurve:
    """Open-circuit potential of one electrode vs normalized concentration.

    Breakpoints must start at 0.0, end at 1.0, and be strictly increasing, so
    the curve (and its first derivative) is evaluable anywhere in [0, 1].
    ``interpolation`` selects "linear" or "pchip" (monotone piecewise cubic;
    continuously differentiable).
    """

    concentration: np.ndarray
    potential: np.ndarray
    interpolation: str = "pchip"
    _pchip: PchipInterpolator | None = field(
        default=None, repr=False, compare=False
    )
    _pchip_deriv: PchipInterpolator | None = field(
        default=None, repr=False, compare=False
    )

    def __post_init__(self):
        x = np.asarray(self.concentration, dtype=float)
        y = np.asarray(self.potential, dtype=float)
        object.__setattr__(self, "concentration", x)
        object.__setattr__(self, "potential", y)
        if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
            raise ValueError("breakpoint arrays must be 1-D and equal length")
        if x.size < 2:
            raise ValueError("need at least two breakpoints")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("breakpoints must be finite")
        if np.any(np.diff(x) <= 0):
            raise ValueError("breakpoint abscissae must be strictly increasing")
        if x[0] != 0.0 or x[-1] != 1.0:
            raise ValueError("breakpoints must span [0, 1] exactly")
        if self.interpolation not in ("linear", "pchip"):
            raise ValueError(
                f"unknown interpolation {self.interpolation!r}"
                " (expected 'linear' or 'pchip')"
            )
        if self.interpolation == "pchip":
            p = PchipInterpolator(x, y, extrapolate=False)
            object.__setattr__(self, "_pchip", p)
            object.__setattr__(self, "_pchip_deriv", p.derivative())

    @classmethod
    def flat(cls, value: float) -> "OcpCurve":
        """A constant curve (zero slope everywhere)."""
        return cls(np.array([0.0, 1.0]), np.array([value, value]), "linear")

    def evaluate(self, c: float) -> tuple[float, float]:
        """Return ``(potential, slope)`` at normalized concentration ``c``.

        Raises ValueError for c outside [0, 1].  In linear mode the slope at a
        knot is the slope of the segment to its right (left segment at c = 1).
        """
        if not 0.0 <= c <= 1.0:
            raise ValueError(f"concentration {c} outside [0, 1]")
        x = self.concentration
        y = self.potential
        if self.interpolation == "pchip":
            return float(self._pchip(c)), float(self._pchip_deriv(c))
        i = int(np.searchsorted(x, c, side="right")) - 1
        i = min(max(i, 0), x.size - 2)
        slope = (y[i + 1] - y[i]) / (x[i + 1] - x[i])
        return float(y[i] + slope * (c - x[i])), float(slope)

    def value(self, c: float) -> float:
        return self.evaluate(c)[0]

    def slope(self, c: float) -> float:
        return self.evaluate(c)[1]


def ocp_eval(curve: OcpCurve, c: float) -> tuple[float, float]:
    """Evaluate an OCP curve: ``(potential in V, slope in V per unit c)``."""
    return curve.evaluate(c)


def _require(cond: bool, name: str, message: str) -> None:
    if not cond:
        raise ValueError(f"{name}: {message}")


@dataclass(frozen=True)
class CellParameters:
    """Reference-temperature parameter group for one cell.

    Units: time constants ``alpha_*1`` in seconds, electrode capacities
    ``q_p``/``q_n`` and cell capacity ``q_cell`` in ampere-seconds, inverse
    reaction time scales ``d_*1`` in 1/s, ohmic resistance ``r0_1`` in ohms,
    activation energies ``e1``..``e5`` in J/mol, temperatures in kelvin.
    ``c_min_*``/``c_max_*`` are the stoichiometric limits used for SOC
    reconstruction (dimensionless, inside (0, 1)).
    """

    alpha_p1: float
    alpha_n1: float
    q_p: float
    q_n: float
    d_p1: float
    d_n1: float
    r0_1: float
    e1: float
    e2: float
    e3: float
    e4: float
    e5: float
    c_min_p: float
    c_max_p: float
    c_min_n: float
    c_max_n: float
    q_cell: float
    ocp_p: OcpCurve
    ocp_n: OcpCurve
    t_ref: float = T_REF_DEFAULT

    def __post_init__(self):
        for name in ("alpha_p1", "alpha_n1", "q_p", "q_n", "d_p1", "d_n1",
                     "r0_1", "q_cell", "t_ref"):
            v = getattr(self, name)
            _require(math.isfinite(v) and v > 0, name, "must be finite and > 0")
        for name in ("e1", "e2", "e3", "e4", "e5"):
            v = getattr(self, name)
            _require(math.isfinite(v) and v >= 0, name, "must be finite and >= 0")
        for side in ("p", "n"):
            lo = getattr(self, f"c_min_{side}")
            hi = getattr(self, f"c_max_{side}")
            _require(0.0 < lo < hi < 1.0, f"c_min_{side}/c_max_{side}",
                     "must satisfy 0 < c_min < c_max < 1")
        for name in ("ocp_p", "ocp_n"):
            _require(isinstance(getattr(self, name), OcpCurve), name,
                     "must be an OcpCurve")

    def capacity(self, electrode: str) -> float:
        return self.q_p if electrode == "p" else self.q_n

    def window(self, electrode: str) -> tuple[float, float]:
        if electrode == "p":
            return self.c_min_p, self.c_max_p
        return self.c_min_n, self.c_max_n


@dataclass(frozen=True)
class TemperatureAdjustedParams:
    """Temperature-dependent parameters evaluated at one temperature."""

    alpha_p: float
    alpha_n: float
    d_p: float
    d_n: float
    r0: float
    temperature: float


def arrhenius_adjust(p: CellParameters, temperature: float) -> TemperatureAdjustedParams:
    """Scale the temperature-dependent parameters to ``temperature`` (K).

    Diffusion time constants shrink, reaction rates grow, and ohmic
    resistance shrinks as temperature rises (for positive activation
    energies); all equal their reference values at ``p.t_ref``.
    """
    if not (math.isfinite(temperature) and temperature > 0):
        raise ValueError(f"temperature must be finite and > 0, got {temperature}")
    dinv = 1.0 / p.t_ref - 1.0 / temperature

    def factor(e: float) -> float:
        return math.exp((e / GAS_CONSTANT) * dinv)

    return TemperatureAdjustedParams(
        alpha_p=p.alpha_p1 / factor(p.e2),
        alpha_n=p.alpha_n1 / factor(p.e1),
        d_p=p.d_p1 * factor(p.e4),
        d_n=p.d_n1 * factor(p.e3),
        r0=p.r0_1 / factor(p.e5),
        temperature=temperature,
    )


@dataclass(frozen=True)
class StateVector:
    """Named view of the 4-state vector ``[q1_p, q2_p, q1_n, q2_n]``."""

    q1_p: float
    q2_p: float
    q1_n: float
    q2_n: float

    def as_array(self) -> np.ndarray:
        return np.array([self.q1_p, self.q2_p, self.q1_n, self.q2_n])

    @classmethod
    def from_array(cls, x: np.ndarray) -> "StateVector":
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]))


@dataclass(frozen=True)
class OutputVector:
    """Named view of the output vector ``[cbar_p, css_p, cbar_n, css_n]``."""

    cbar_p: float
    css_p: float
    cbar_n: float
    css_n: float

    def as_array(self) -> np.ndarray:
        return np.array([self.cbar_p, self.css_p, self.cbar_n, self.css_n])

    @classmethod
    def from_array(cls, psi: np.ndarray) -> "OutputVector":
        return cls(float(psi[0]), float(psi[1]), float(psi[2]), float(psi[3]))


@dataclass(frozen=True)
class ContinuousModel:
    """Continuous-time state-space matrices at one temperature.

    ``a`` is 4x4 block-diagonal (one 2x2 block per electrode, positive
    first), ``b`` and ``d`` are length-4 input vectors, ``c`` is the 4x4
    identity.  Rows of ``d`` for the average concentrations are zero.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    temperature: float


def build_continuous(tp: TemperatureAdjustedParams, p: CellParameters) -> ContinuousModel:
    """Assemble the block-diagonal continuous model from adjusted parameters.

    Each electrode block is
    ``A_i = [[0, 0], [30/alpha_i, -30/alpha_i]]``,
    ``B_i = [1/Q_i, 19/(7 Q_i)]``, ``C_i = I``, ``D_i = [0, alpha_i/(105 Q_i)]``.
    """
    a = np.zeros((4, 4))
    b = np.zeros(4)
    d = np.zeros(4)
    for row, alpha, q in ((0, tp.alpha_p, p.q_p), (2, tp.alpha_n, p.q_n)):
        lam = 30.0 / alpha
        a[row + 1, row] = lam
        a[row + 1, row + 1] = -lam
        b[row] = 1.0 / q
        b[row + 1] = 19.0 / (7.0 * q)
        d[row + 1] = alpha / (105.0 * q)
    return ContinuousModel(a=a, b=b, c=np.eye(4), d=d,
                           temperature=tp.temperature)


def output_map(m, x, current: float) -> OutputVector:
    """Concentration outputs ``psi = C x + D u`` for state-space input ``u``.

    ``m`` may be a continuous or discrete model (both carry ``c`` rows and a
    ``d`` feedthrough under the same field contract).  The average
    concentrations have zero feedthrough, so they equal the q1 states exactly.
    """
    if isinstance(x, StateVector):
        x = x.as_array()
    c_mat = getattr(m, "c_d", None)
    d_vec = getattr(m, "d_d", None)
    if c_mat is None:
        c_mat, d_vec = m.c, m.d
    psi = c_mat @ np.asarray(x, dtype=float) + d_vec * current
    return OutputVector.from_array(psi)


def overpotential(css: float, current: float, temperature: float,
                  electrode: str, q_i: float, d_i: float) -> float:
    """Electrode overpotential (V) in asinh form.

    ``css`` must already be clamped inside (0, 1).  The electrode sign is -1
    for "p" and +1 for "n", so a positive (discharge) current gives a negative
    positive-electrode overpotential and a positive negative-electrode one.
    """
    if not (math.isfinite(css) and math.isfinite(current)
            and math.isfinite(temperature)):
        raise ValueError("overpotential inputs must be finite")
    sign = -1.0 if electrode == "p" else 1.0
    g = sign * current / (6.0 * q_i * d_i * math.sqrt(css * (1.0 - css)))
    return (2.0 * GAS_CONSTANT * temperature / FARADAY) * math.asinh(g)


def overpotential_slope(css: float, current: float, temperature: float,
                        electrode: str, q_i: float, d_i: float) -> float:
    """d(overpotential)/d(css) at a clamped surface concentration."""
    sign = -1.0 if electrode == "p" else 1.0
    root = math.sqrt(css * (1.0 - css))
    g = sign * current / (6.0 * q_i * d_i * root)
    gprime = -sign * current * (1.0 - 2.0 * css) / (
        12.0 * q_i * d_i * (css * (1.0 - css)) ** 1.5)
    return (2.0 * GAS_CONSTANT * temperature / FARADAY) * gprime / math.sqrt(
        1.0 + g * g)


def terminal_voltage(psi: OutputVector, current: float, temperature: float,
                     p: CellParameters,
                     adjusted: TemperatureAdjustedParams | None = None,
                     eps: float = CLAMP_EPS) -> float:
    """Terminal voltage from concentration outputs and discharge-positive current.

    ``V = OCP_p(css_p) - OCP_n(css_n) + eta_p - eta_n - R0(T) * I``.  Surface
    concentrations are clamped into [eps, 1-eps] before use.  With zero
    current this reduces to the cell OCV.
    """
    if adjusted is None:
        adjusted = arrhenius_adjust(p, temperature)
    css_p = clamp_concentration(psi.css_p, eps)
    css_n = clamp_concentration(psi.css_n, eps)
    v = p.ocp_p.value(css_p) - p.ocp_n.value(css_n)
    v += overpotential(css_p, current, temperature, "p", p.q_p, adjusted.d_p)
    v -= overpotential(css_n, current, temperature, "n", p.q_n, adjusted.d_n)
    v -= adjusted.r0 * current
    return v
