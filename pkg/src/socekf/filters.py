"""State and residual-bias Kalman filters.

Two estimators over the same discretized cell model:

* a baseline extended Kalman filter over the four charge states, observed
  through the terminal voltage;
* a dual filter that adds a scalar EKF for a slowly varying additive voltage
  bias (sensor offset, OCP-curve mismatch, unmodeled dynamics), coupled to
  the state filter through the shared voltage measurement.

Each dual-filter step runs a fixed four-stage sequence: (1) state predict
plus voltage predict, (2) state measurement update using the previous bias
estimate, (3) bias predict plus a second voltage predict at the freshly
updated states, (4) bias measurement update.  The baseline filter is the same
code path with the bias stages skipped and the bias pinned at zero.

Both covariance updates use the Joseph form and explicit symmetrization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cell import CLAMP_EPS, CellParameters, OutputVector, StateVector, \
    TemperatureAdjustedParams, arrhenius_adjust, clamp_concentration, \
    ocp_eval, overpotential_slope, state_space_input, terminal_voltage
from .discretize import DiscreteModel, build_discrete
from .errors import NumericalError

N_STATES = 4


def symmetrize(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p + p.T)


def joseph_update(p_prior: np.ndarray, k: np.ndarray, h: np.ndarray,
                  r: float) -> np.ndarray:
    """Joseph-form posterior covariance for a scalar measurement.

    ``(I - k h) P (I - k h)^T + k r k^T``, symmetrized.  Keeps the posterior
    positive semidefinite for any gain ``k``, not only the optimal one.
    """
    i_kh = np.eye(p_prior.shape[0]) - np.outer(k, h)
    return symmetrize(i_kh @ p_prior @ i_kh.T + np.outer(k, k) * r)


def _check_cov(m: np.ndarray, name: str, n: int) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (n, n):
        raise ValueError(f"{name} must be {n}x{n}, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} must be finite")
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    m = symmetrize(m)
    scale = max(1.0, float(np.max(np.abs(m))))
    if float(np.linalg.eigvalsh(m)[0]) < -1e-9 * scale:
        raise ValueError(f"{name} must be positive semidefinite")
    return m


@dataclass(frozen=True)
class FilterConfig:
    """Noise covariances, initial conditions, and numeric policy knobs.

    ``q_x``/``p0_x`` are 4x4 symmetric PSD; ``r_x``, ``r_theta`` are strictly
    positive scalar variances (V^2); ``q_theta``/``p0_theta`` are nonnegative.
    ``eps`` is the surface-concentration clamp, ``rebuild_delta_t`` the
    temperature movement (K) that triggers a discrete-model rebuild,
    ``jacobian`` selects the analytic voltage Jacobian or a central
    finite-difference fallback, and the gate settings optionally reject
    measurement updates whose innovation exceeds ``gate_n_sigma`` standard
    deviations.
    """

    q_x: np.ndarray
    r_x: float
    q_theta: float
    r_theta: float
    x0: np.ndarray
    p0_x: np.ndarray
    theta0: float = 0.0
    p0_theta: float = 1e-4
    eps: float = CLAMP_EPS
    rebuild_delta_t: float = 0.5
    gate_enabled: bool = False
    gate_n_sigma: float = 6.0
    jacobian: str = "analytic"

    def __post_init__(self):
        object.__setattr__(self, "q_x", _check_cov(self.q_x, "q_x", N_STATES))
        object.__setattr__(self, "p0_x", _check_cov(self.p0_x, "p0_x", N_STATES))
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (N_STATES,) or not np.all(np.isfinite(x0)):
            raise ValueError("x0 must be a finite length-4 vector")
        object.__setattr__(self, "x0", x0)
        for name in ("r_x", "r_theta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0")
        for name in ("q_theta", "p0_theta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0")
        if not 0 < self.eps < 0.5:
            raise ValueError("eps must be in (0, 0.5)")
        if self.rebuild_delta_t < 0:
            raise ValueError("rebuild_delta_t must be >= 0")
        if self.gate_n_sigma <= 0:
            raise ValueError("gate_n_sigma must be > 0")
        if self.jacobian not in ("analytic", "fd"):
            raise ValueError("jacobian must be 'analytic' or 'fd'")


@dataclass(frozen=True)
class FilterState:
    """Posterior estimates after a step, plus last-step diagnostics.

    ``u_prev`` is the measured current of the previous sample, used to
    propagate the states at the next step; ``None`` marks a freshly
    initialized filter whose first step applies no time propagation.
    """

    x_hat: np.ndarray
    p_x: np.ndarray
    theta_hat: float
    p_theta: float
    last_v_pred: float = math.nan
    last_innovation_x: float = math.nan
    last_innovation_theta: float = math.nan
    u_prev: float | None = None


@dataclass(frozen=True)
class StepInput:
    """One measurement sample: current (A, discharge-positive), measured
    terminal voltage (V), temperature (K), and sample period (s)."""

    current: float
    v_meas: float
    temperature: float
    dt: float

    def __post_init__(self):
        for name in ("current", "v_meas", "temperature", "dt"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")


@dataclass(frozen=True)
class StepOutput:
    """Per-step estimator outputs.

    ``v_spm`` is the model voltage at the posterior states; ``v_model`` adds
    the posterior bias estimate.  ``soc_clamped`` flags that an electrode SOC
    left [0, 1] before clamping.
    """

    soc_cell: float
    soc_p: float
    soc_n: float
    theta_hat: float
    v_model: float
    v_spm: float
    x_hat: np.ndarray
    p_x_diag: np.ndarray
    p_theta: float
    soc_clamped: bool


@dataclass(frozen=True)
class StatePrediction:
    """Prior state, prior covariance, predicted outputs and model voltage."""

    x_pred: np.ndarray
    p_pred: np.ndarray
    psi: OutputVector
    v_spm: float


class ModelContext:
    """Per-run working context for the filters.

    Holds the cell parameters and filter configuration, and caches the
    discrete model, rebuilding it only when the sample temperature moves more
    than ``rebuild_delta_t`` kelvin from the cached build temperature (or
    when dt changes).  The Arrhenius-adjusted voltage parameters are cheap
    and are refreshed at the exact temperature every step.
    """

    def __init__(self, params: CellParameters, cfg: FilterConfig):
        self.params = params
        self.cfg = cfg
        self._model: DiscreteModel | None = None

    def model_for(self, temperature: float, dt: float) -> DiscreteModel:
        m = self._model
        if (m is None or m.dt != dt
                or abs(temperature - m.temperature) > self.cfg.rebuild_delta_t):
            m = build_discrete(self.params, temperature, dt)
            self._model = m
        return m


def x0_from_soc(soc0: float, p: CellParameters) -> np.ndarray:
    """Initial state for a relaxed cell at a given SOC guess.

    Inverts the electrode SOC mapping with q2 = q1 (no concentration
    gradient at rest).
    """
    if not 0.0 <= soc0 <= 1.0:
        raise ValueError(f"soc0 must be in [0, 1], got {soc0}")
    q1_p = p.c_min_p + soc0 * (p.c_max_p - p.c_min_p)
    q1_n = p.c_min_n + soc0 * (p.c_max_n - p.c_min_n)
    return np.array([q1_p, q1_p, q1_n, q1_n])


def init_state(cfg: FilterConfig) -> FilterState:
    """Fresh filter state from the configured initial conditions."""
    return FilterState(x_hat=cfg.x0.copy(), p_x=cfg.p0_x.copy(),
                       theta_hat=cfg.theta0, p_theta=cfg.p0_theta)


def electrode_soc(q1: float, c_min: float, c_max: float) -> float:
    """Unclamped electrode SOC from the average concentration state."""
    return (q1 - c_min) / (c_max - c_min)


def soc_from_state(x, p: CellParameters) -> tuple[float, float, float]:
    """(soc_p, soc_n, soc_cell) from the posterior states, clamped to [0,1].

    The average concentrations are the q1 states (identity output rows,
    zero feedthrough).  The cell SOC is the mean of the electrode SOCs.
    """
    if isinstance(x, StateVector):
        x = x.as_array()
    soc_p = min(max(electrode_soc(float(x[0]), p.c_min_p, p.c_max_p), 0.0), 1.0)
    soc_n = min(max(electrode_soc(float(x[2]), p.c_min_n, p.c_max_n), 0.0), 1.0)
    return soc_p, soc_n, 0.5 * (soc_p + soc_n)


def model_voltage(m: DiscreteModel, x: np.ndarray, current: float,
                  temperature: float, p: CellParameters,
                  adjusted: TemperatureAdjustedParams,
                  eps: float) -> tuple[float, OutputVector]:
    """Model terminal voltage and concentration outputs at a state.

    The state-space feedthrough consumes the negated measured current; the
    voltage terms consume the measured (discharge-positive) current.
    """
    u = state_space_input(current)
    psi = OutputVector.from_array(m.c_d @ x + m.d_d * u)
    v = terminal_voltage(psi, current, temperature, p, adjusted, eps)
    return v, psi


def voltage_jacobian_states(psi: OutputVector, current: float,
                            temperature: float, p: CellParameters,
                            adjusted: TemperatureAdjustedParams,
                            eps: float = CLAMP_EPS) -> np.ndarray:
    """Row Jacobian of the terminal voltage w.r.t. the four states.

    The output matrix is the identity and the average concentrations do not
    enter the voltage, so only the surface-concentration entries (q2 states)
    are nonzero: dV/dcss_p carries the positive-electrode OCP and
    overpotential slopes, dV/dcss_n the negated negative-electrode ones.
    """
    css_p = clamp_concentration(psi.css_p, eps)
    css_n = clamp_concentration(psi.css_n, eps)
    dv_dcss_p = ocp_eval(p.ocp_p, css_p)[1] + overpotential_slope(
        css_p, current, temperature, "p", p.q_p, adjusted.d_p)
    dv_dcss_n = -(ocp_eval(p.ocp_n, css_n)[1] + overpotential_slope(
        css_n, current, temperature, "n", p.q_n, adjusted.d_n))
    h = np.zeros(N_STATES)
    h[1] = dv_dcss_p
    h[3] = dv_dcss_n
    return h


def voltage_jacobian_fd(m: DiscreteModel, x: np.ndarray, current: float,
                        temperature: float, p: CellParameters,
                        adjusted: TemperatureAdjustedParams, eps: float,
                        h_step: float = 1e-7) -> np.ndarray:
    """Central finite-difference voltage Jacobian (debug path).

    The step shrinks with the distance of the effective surface
    concentration (after the current feedthrough) to the clamp, so the
    stencil stays inside the clamped range and the overpotential curvature
    (which blows up near 0 and 1) stays resolved.
    """
    u = state_space_input(current)
    psi = (m.c_d @ x + m.d_d * u)
    h = np.zeros(N_STATES)
    for i in range(N_STATES):
        c = float(min(max(psi[i], eps), 1.0 - eps))
        h_i = min(h_step, 5e-4 * min(c, 1.0 - c))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h_i
        xm[i] -= h_i
        vp, _ = model_voltage(m, xp, current, temperature, p, adjusted, eps)
        vm, _ = model_voltage(m, xm, current, temperature, p, adjusted, eps)
        h[i] = (vp - vm) / (2.0 * h_i)
    return h


def state_predict(s: FilterState, m: DiscreteModel, step: StepInput,
                  p: CellParameters, cfg: FilterConfig,
                  adjusted: TemperatureAdjustedParams) -> StatePrediction:
    """Time update of the state filter, then voltage prediction.

    Propagates with the previous sample's current; a just-initialized filter
    (no previous current) keeps its initial state and covariance as the
    prior.  The predicted outputs and voltage use the current sample's
    current.
    """
    if s.u_prev is None:
        x_pred = s.x_hat.copy()
        p_pred = s.p_x.copy()
    else:
        u = state_space_input(s.u_prev)
        x_pred = m.a_d @ s.x_hat + m.b_d * u
        p_pred = symmetrize(m.a_d @ s.p_x @ m.a_d.T + cfg.q_x)
    v_spm, psi = model_voltage(m, x_pred, step.current, step.temperature,
                               p, adjusted, cfg.eps)
    return StatePrediction(x_pred=x_pred, p_pred=p_pred, psi=psi, v_spm=v_spm)


def state_update(pred: StatePrediction, m: DiscreteModel, step: StepInput,
                 theta_prev: float, p: CellParameters, cfg: FilterConfig,
                 adjusted: TemperatureAdjustedParams,
                 ) -> tuple[np.ndarray, np.ndarray, float]:
    """Measurement update of the state filter.

    The innovation subtracts the previous bias estimate from the residual so
    the states absorb only what the bias filter has not already explained.
    Returns ``(x_post, p_post, innovation)``.  Covariance uses the Joseph
    form.  A gated (rejected) update returns the prior unchanged.
    """
    if cfg.jacobian == "fd":
        h = voltage_jacobian_fd(m, pred.x_pred, step.current,
                                step.temperature, p, adjusted, cfg.eps)
    else:
        h = voltage_jacobian_states(pred.psi, step.current, step.temperature,
                                    p, adjusted, cfg.eps)
    y = step.v_meas - (pred.v_spm + theta_prev)
    s_var = float(h @ pred.p_pred @ h) + cfg.r_x
    if not (math.isfinite(s_var) and s_var > 0):
        raise NumericalError(
            f"non-positive innovation variance {s_var} in state update",
            stage="state_update", step_index=2)
    if cfg.gate_enabled and abs(y) > cfg.gate_n_sigma * math.sqrt(s_var):
        return pred.x_pred.copy(), pred.p_pred.copy(), y
    k = pred.p_pred @ h / s_var
    x_post = pred.x_pred + k * y
    p_post = joseph_update(pred.p_pred, k, h, cfg.r_x)
    return x_post, p_post, y


def bias_predict(s: FilterState, cfg: FilterConfig) -> tuple[float, float]:
    """Time update of the bias filter under its random-walk model."""
    return s.theta_hat, s.p_theta + cfg.q_theta


def bias_update(theta_pred: float, p_theta_pred: float, v_post: float,
                step: StepInput, cfg: FilterConfig) -> tuple[float, float, float]:
    """Measurement update of the scalar bias filter.

    ``v_post`` is the model voltage re-predicted at the state filter's
    posterior, so the bias sees only the residual the states could not
    explain.  The observation matrix is exactly 1 (the bias is additive in
    the measurement).  Returns ``(theta_post, p_theta_post, innovation)``.
    """
    y = step.v_meas - (v_post + theta_pred)
    s_var = p_theta_pred + cfg.r_theta
    if not (math.isfinite(s_var) and s_var > 0):
        raise NumericalError(
            f"non-positive innovation variance {s_var} in bias update",
            stage="bias_update", step_index=4)
    if cfg.gate_enabled and abs(y) > cfg.gate_n_sigma * math.sqrt(s_var):
        return theta_pred, p_theta_pred, y
    k = p_theta_pred / s_var
    theta_post = theta_pred + k * y
    p_theta_post = (1.0 - k) ** 2 * p_theta_pred + k * k * cfg.r_theta
    return theta_post, p_theta_post, y


def _finish_step(x_post, p_post, theta_post, p_theta_post, v_post,
                 pred, y_x, y_theta, step, p):
    soc_p, soc_n, soc_cell = soc_from_state(x_post, p)
    raw_p = electrode_soc(float(x_post[0]), p.c_min_p, p.c_max_p)
    raw_n = electrode_soc(float(x_post[2]), p.c_min_n, p.c_max_n)
    clamped = not (0.0 <= raw_p <= 1.0 and 0.0 <= raw_n <= 1.0)
    new_state = FilterState(
        x_hat=x_post, p_x=p_post, theta_hat=theta_post,
        p_theta=p_theta_post, last_v_pred=pred.v_spm,
        last_innovation_x=y_x, last_innovation_theta=y_theta,
        u_prev=step.current)
    out = StepOutput(
        soc_cell=soc_cell, soc_p=soc_p, soc_n=soc_n, theta_hat=theta_post,
        v_model=v_post + theta_post, v_spm=v_post, x_hat=x_post.copy(),
        p_x_diag=np.diag(p_post).copy(), p_theta=p_theta_post,
        soc_clamped=clamped)
    return new_state, out


def rbc_dekf_step(s: FilterState, step: StepInput, ctx: ModelContext,
                  ) -> tuple[FilterState, StepOutput]:
    """One dual-filter step: the four-stage coupled sequence.

    1. state predict and voltage predict;
    2. state update against the measured voltage minus the previous bias;
    3. bias predict and voltage re-predict at the posterior states;
    4. bias update.

    The bias stages never touch the state estimate or its covariance within
    a step, and vice versa.
    """
    p, cfg = ctx.params, ctx.cfg
    m = ctx.model_for(step.temperature, step.dt)
    adjusted = arrhenius_adjust(p, step.temperature)
    pred = state_predict(s, m, step, p, cfg, adjusted)
    x_post, p_post, y_x = state_update(pred, m, step, s.theta_hat, p, cfg,
                                       adjusted)
    theta_pred, p_theta_pred = bias_predict(s, cfg)
    v_post, _ = model_voltage(m, x_post, step.current, step.temperature,
                              p, adjusted, cfg.eps)
    theta_post, p_theta_post, y_theta = bias_update(
        theta_pred, p_theta_pred, v_post, step, cfg)
    return _finish_step(x_post, p_post, theta_post, p_theta_post, v_post,
                        pred, y_x, y_theta, step, p)


def ekf_step(s: FilterState, step: StepInput, ctx: ModelContext,
             ) -> tuple[FilterState, StepOutput]:
    """One baseline-EKF step: the state half only, bias carried unchanged.

    Shares every state-filter code path with the dual filter; the bias term
    entering the innovation is whatever ``s.theta_hat`` holds (zero under
    the standard baseline initialization) and is never updated.
    """
    p, cfg = ctx.params, ctx.cfg
    m = ctx.model_for(step.temperature, step.dt)
    adjusted = arrhenius_adjust(p, step.temperature)
    pred = state_predict(s, m, step, p, cfg, adjusted)
    x_post, p_post, y_x = state_update(pred, m, step, s.theta_hat, p, cfg,
                                       adjusted)
    v_post, _ = model_voltage(m, x_post, step.current, step.temperature,
                              p, adjusted, cfg.eps)
    return _finish_step(x_post, p_post, s.theta_hat, s.p_theta, v_post,
                        pred, y_x, math.nan, step, p)
