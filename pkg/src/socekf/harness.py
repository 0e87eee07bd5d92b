"""Truth-model simulation, synthetic profiles, ground truth, and metrics.

The harness closes the loop around the filters: it can fabricate drive
cycles, run the exact discrete cell model forward to produce noiseless truth
voltages plus seeded measurement corruption (bias and Gaussian noise),
compute Coulomb-counting ground-truth SOC, run either filter over a cycle,
and reduce the results to RMSE comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .cell import CellParameters, OutputVector, arrhenius_adjust, \
    state_space_input, terminal_voltage
from .discretize import build_discrete
from .errors import NumericalError, SimulationError
from .filters import FilterConfig, ModelContext, StepInput, ekf_step, \
    electrode_soc, init_state, rbc_dekf_step, x0_from_soc

CELSIUS_OFFSET = 273.15


@dataclass(frozen=True)
class DriveCycle:
    """Uniformly sampled input record: time (s), current (A, discharge
    positive), temperature (K), optional measured voltage (V) and reference
    SOC."""

    t: np.ndarray
    current: np.ndarray
    temperature: np.ndarray
    voltage: np.ndarray | None = None
    soc_ref: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        object.__setattr__(self, "t", t)
        n = t.size
        if t.ndim != 1 or n < 2:
            raise ValueError("need at least two samples")
        for name in ("current", "temperature", "voltage", "soc_ref"):
            a = getattr(self, name)
            if a is None:
                continue
            a = np.asarray(a, dtype=float)
            object.__setattr__(self, name, a)
            if a.shape != t.shape:
                raise ValueError(f"{name} length {a.size} != time length {n}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} contains non-finite values")
        if not np.all(np.isfinite(t)):
            raise ValueError("t contains non-finite values")
        d = np.diff(t)
        if np.any(d <= 0):
            raise ValueError("t must be strictly increasing")
        dt = float(d[0])
        if float(np.max(np.abs(d - dt))) > 1e-6 * dt:
            raise ValueError("t must be uniformly spaced")

    @property
    def n(self) -> int:
        return self.t.size

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])


@dataclass(frozen=True)
class BiasSpec:
    """Injected measurement-bias profile over a cycle.

    Kinds: "none"; "constant" (``value`` volts); "ramp" (linear from
    ``start`` to ``end`` across the trace); "piecewise" (constant segments:
    ``values[i]`` applies from ``times[i]`` on, zero before ``times[0]``).
    """

    kind: str = "none"
    value: float = 0.0
    start: float = 0.0
    end: float = 0.0
    times: np.ndarray | None = None
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("none", "constant", "ramp", "piecewise"):
            raise ValueError(f"unknown bias kind {self.kind!r}")
        if self.kind == "piecewise":
            ts = np.asarray(self.times, dtype=float)
            vs = np.asarray(self.values, dtype=float)
            if ts.ndim != 1 or ts.shape != vs.shape or ts.size == 0:
                raise ValueError("piecewise times/values must be equal-length"
                                 " nonempty 1-D arrays")
            if np.any(np.diff(ts) <= 0):
                raise ValueError("piecewise times must be strictly increasing")
            object.__setattr__(self, "times", ts)
            object.__setattr__(self, "values", vs)

    @classmethod
    def none(cls) -> "BiasSpec":
        return cls("none")

    @classmethod
    def constant(cls, value: float) -> "BiasSpec":
        return cls("constant", value=value)

    @classmethod
    def ramp(cls, start: float, end: float) -> "BiasSpec":
        return cls("ramp", start=start, end=end)

    @classmethod
    def piecewise(cls, times, values) -> "BiasSpec":
        return cls("piecewise", times=np.asarray(times, dtype=float),
                   values=np.asarray(values, dtype=float))

    @classmethod
    def parse(cls, text: str) -> "BiasSpec":
        """Parse "none", "constant:V", "ramp:V0:V1", or
        "piecewise:T=V[,T=V...]" (volts and seconds)."""
        kind, _, rest = text.partition(":")
        try:
            if kind == "none":
                return cls.none()
            if kind == "constant":
                return cls.constant(float(rest))
            if kind == "ramp":
                v0, v1 = rest.split(":")
                return cls.ramp(float(v0), float(v1))
            if kind == "piecewise":
                pairs = [seg.split("=") for seg in rest.split(",")]
                return cls.piecewise([float(a) for a, _ in pairs],
                                     [float(b) for _, b in pairs])
        except ValueError as exc:
            raise ValueError(f"malformed bias spec {text!r}") from exc
        raise ValueError(f"unknown bias kind {kind!r}")

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "none":
            return np.zeros_like(t)
        if self.kind == "constant":
            return np.full_like(t, self.value)
        if self.kind == "ramp":
            span = t[-1] - t[0]
            if span <= 0:
                return np.full_like(t, self.start)
            return self.start + (self.end - self.start) * (t - t[0]) / span
        idx = np.searchsorted(self.times, t, side="right") - 1
        out = np.where(idx >= 0, self.values[np.clip(idx, 0, None)], 0.0)
        return out


@dataclass(frozen=True)
class SyntheticDataset:
    """Forward-simulated dataset: the driving cycle plus truth voltage,
    corrupted measurement, truth SOC, the injected bias profile, and the
    noise seed used."""

    cycle: DriveCycle
    v_true: np.ndarray
    v_meas: np.ndarray
    soc_true: np.ndarray
    bias_profile: np.ndarray
    noise_seed: int

    def measurement_cycle(self) -> DriveCycle:
        """The cycle as a filter input: measured voltage and truth SOC
        attached."""
        return replace(self.cycle, voltage=self.v_meas, soc_ref=self.soc_true)


def simulate_truth(p: CellParameters, cycle: DriveCycle, soc0: float,
                   bias: BiasSpec | None = None, noise_sigma: float = 0.0,
                   seed: int = 0, eps: float = 1e-6) -> SyntheticDataset:
    """Run the exact discrete model forward and corrupt the voltage.

    The truth state starts relaxed at ``soc0``; the discrete model is
    rebuilt whenever the sample temperature changes at all (the truth path
    takes no rebuild tolerance).  The measured voltage is
    ``V_true + bias(t) + sigma * n_k`` with ``n_k`` a seeded standard-normal
    draw; the draw happens even for ``sigma = 0`` so the realization is a
    pure function of the seed.

    Raises a simulation error naming the sample index if a surface
    concentration leaves ``[eps, 1 - eps]`` (over-charge/discharge).
    """
    if not 0.0 <= soc0 <= 1.0:
        raise ValueError(f"soc0 must be in [0, 1], got {soc0}")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    bias = bias if bias is not None else BiasSpec.none()
    n = cycle.n
    dt = cycle.dt
    x = x0_from_soc(soc0, p)
    v_true = np.empty(n)
    soc_true = np.empty(n)
    model = None
    for k in range(n):
        current = float(cycle.current[k])
        temp = float(cycle.temperature[k])
        if model is None or model.temperature != temp:
            model = build_discrete(p, temp, dt)
        adjusted = arrhenius_adjust(p, temp)
        u = state_space_input(current)
        psi = OutputVector.from_array(model.c_d @ x + model.d_d * u)
        for name, css in (("css_p", psi.css_p), ("css_n", psi.css_n)):
            if not eps <= css <= 1.0 - eps:
                raise SimulationError(
                    f"surface concentration {name}={css:.6g} left"
                    f" [{eps}, {1 - eps}]", sample_index=k)
        v_true[k] = terminal_voltage(psi, current, temp, p, adjusted, eps)
        soc_p = electrode_soc(float(x[0]), p.c_min_p, p.c_max_p)
        soc_n = electrode_soc(float(x[2]), p.c_min_n, p.c_max_n)
        soc_true[k] = 0.5 * (soc_p + soc_n)
        if k < n - 1:
            x = model.a_d @ x + model.b_d * u
    bias_profile = bias.evaluate(cycle.t)
    rng = np.random.default_rng(seed)
    noise = noise_sigma * rng.standard_normal(n)
    v_meas = v_true + bias_profile + noise
    return SyntheticDataset(cycle=cycle, v_true=v_true, v_meas=v_meas,
                            soc_true=soc_true, bias_profile=bias_profile,
                            noise_seed=seed)


def coulomb_count(cycle: DriveCycle, q_cell: float, soc0: float,
                  method: str = "rectangle") -> np.ndarray:
    """Ground-truth SOC by current integration (discharge-positive).

    "rectangle" holds each sample's current over the following interval
    (matching zero-order-hold propagation exactly); "trapezoid" averages
    adjacent samples.  Values are reported unclamped.
    """
    if q_cell <= 0:
        raise ValueError("q_cell must be > 0")
    if method not in ("rectangle", "trapezoid"):
        raise ValueError(f"unknown integration method {method!r}")
    current = cycle.current
    if method == "rectangle":
        inc = current[:-1]
    else:
        inc = 0.5 * (current[:-1] + current[1:])
    soc = np.empty(cycle.n)
    soc[0] = soc0
    soc[1:] = soc0 - (cycle.dt / q_cell) * np.cumsum(inc)
    return soc


def gen_profile(kind: str, params: dict | None = None,
                seed: int = 0) -> DriveCycle:
    """Deterministic synthetic current profile at constant temperature.

    Kinds and their parameters (defaults in parentheses):

    * "pulse": square discharge pulses; amplitude (1.0 A), period_s (300),
      duty (0.5), offset (0.0 A).
    * "random-walk": first-order autoregressive current with standard-normal
      stationary distribution scaled to ``level``; level (1.0 A), rho
      (0.99), offset (0.0 A).  The stationary mean absolute value is
      sqrt(2/pi) * level.
    * "scaled-template": a user list of currents tiled to length; template
      (required), scale (1.0).

    Common parameters: n (3600 samples), dt (1.0 s), temp_c (25.0).
    """
    params = dict(params or {})
    n = int(params.pop("n", 3600))
    dt = float(params.pop("dt", 1.0))
    temp_c = float(params.pop("temp_c", 25.0))
    if n < 2:
        raise ValueError("n must be >= 2")
    if dt <= 0:
        raise ValueError("dt must be > 0")
    t = np.arange(n) * dt
    if kind == "pulse":
        amplitude = float(params.pop("amplitude", 1.0))
        period = float(params.pop("period_s", 300.0))
        duty = float(params.pop("duty", 0.5))
        offset = float(params.pop("offset", 0.0))
        if period <= 0 or not 0.0 <= duty <= 1.0:
            raise ValueError("need period_s > 0 and duty in [0, 1]")
        current = offset + amplitude * ((t % period) < duty * period)
    elif kind == "random-walk":
        level = float(params.pop("level", 1.0))
        rho = float(params.pop("rho", 0.99))
        offset = float(params.pop("offset", 0.0))
        if not 0.0 <= rho < 1.0:
            raise ValueError("rho must be in [0, 1)")
        rng = np.random.default_rng(seed)
        w = rng.standard_normal(n)
        x = np.empty(n)
        x[0] = w[0]
        drive = math.sqrt(1.0 - rho * rho)
        for k in range(1, n):
            x[k] = rho * x[k - 1] + drive * w[k]
        current = offset + level * x
    elif kind == "scaled-template":
        template = params.pop("template", None)
        scale = float(params.pop("scale", 1.0))
        if template is None:
            raise ValueError("scaled-template requires a template list")
        base = np.asarray(template, dtype=float).ravel()
        if base.size == 0:
            raise ValueError("template must be nonempty")
        reps = -(-n // base.size)
        current = scale * np.tile(base, reps)[:n]
    else:
        raise ValueError(f"unknown profile kind {kind!r}")
    if params:
        raise ValueError(f"unknown profile parameters {sorted(params)}")
    temperature = np.full(n, temp_c + CELSIUS_OFFSET)
    return DriveCycle(t=t, current=current, temperature=temperature)


def rmse(errors) -> float:
    """Root mean square of a nonempty error series."""
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        raise ValueError("rmse of an empty series")
    return float(np.sqrt(np.mean(np.square(e))))


class RunningRmse:
    """Streaming RMSE accumulator; equal to the batch value bit-for-bit up
    to summation order."""

    def __init__(self):
        self._sum_sq = 0.0
        self._count = 0

    def update(self, errors) -> None:
        e = np.asarray(errors, dtype=float).ravel()
        self._sum_sq += float(np.sum(np.square(e)))
        self._count += e.size

    def result(self) -> float:
        if self._count == 0:
            raise ValueError("rmse of an empty series")
        return math.sqrt(self._sum_sq / self._count)


@dataclass(frozen=True)
class EstimateTrace:
    """Per-step outputs of one filter over a cycle."""

    t: np.ndarray
    soc_cell: np.ndarray
    soc_p: np.ndarray
    soc_n: np.ndarray
    theta_hat: np.ndarray
    v_spm: np.ndarray
    v_model: np.ndarray
    innovation: np.ndarray
    p_x_diag: np.ndarray
    p_theta: np.ndarray
    soc_clamped: np.ndarray


def run_filter(step_fn, cycle: DriveCycle, params: CellParameters,
               cfg: FilterConfig) -> EstimateTrace:
    """Run one filter step function over a measured cycle.

    ``step_fn`` is the baseline or dual-filter step.  The cycle must carry
    measured voltages.  Numerical failures are re-raised with the failing
    sample index prepended.
    """
    if cycle.voltage is None:
        raise ValueError("cycle has no measured voltage")
    n = cycle.n
    dt = cycle.dt
    ctx = ModelContext(params, cfg)
    state = init_state(cfg)
    out = {name: np.empty(n) for name in
           ("soc_cell", "soc_p", "soc_n", "theta_hat", "v_spm", "v_model",
            "innovation", "p_theta")}
    p_x_diag = np.empty((n, 4))
    clamped = np.zeros(n, dtype=bool)
    for k in range(n):
        step = StepInput(current=float(cycle.current[k]),
                         v_meas=float(cycle.voltage[k]),
                         temperature=float(cycle.temperature[k]), dt=dt)
        try:
            state, step_out = step_fn(state, step, ctx)
        except NumericalError as exc:
            raise NumericalError(f"sample {k}: {exc.message}",
                                 stage=exc.stage,
                                 step_index=exc.step_index) from exc
        out["soc_cell"][k] = step_out.soc_cell
        out["soc_p"][k] = step_out.soc_p
        out["soc_n"][k] = step_out.soc_n
        out["theta_hat"][k] = step_out.theta_hat
        out["v_spm"][k] = step_out.v_spm
        out["v_model"][k] = step_out.v_model
        out["innovation"][k] = state.last_innovation_x
        out["p_theta"][k] = step_out.p_theta
        p_x_diag[k] = step_out.p_x_diag
        clamped[k] = step_out.soc_clamped
    return EstimateTrace(t=cycle.t.copy(), soc_cell=out["soc_cell"],
                         soc_p=out["soc_p"], soc_n=out["soc_n"],
                         theta_hat=out["theta_hat"], v_spm=out["v_spm"],
                         v_model=out["v_model"],
                         innovation=out["innovation"], p_x_diag=p_x_diag,
                         p_theta=out["p_theta"], soc_clamped=clamped)


@dataclass(frozen=True)
class ComparisonReport:
    """Side-by-side accuracy summary of the two filters.

    SOC errors in percentage points, voltage errors in millivolts;
    ``improvement_* = 100 * (1 - rbc/ekf)`` where the baseline value is
    positive.  ``failed`` carries a diagnostic when a filter aborted.
    """

    soc_rmse_ekf: float
    soc_rmse_rbc: float
    v_rmse_ekf: float
    v_rmse_rbc: float
    improvement_soc: float
    improvement_v: float
    max_abs_soc_err_ekf: float
    max_abs_soc_err_rbc: float
    n_samples: int
    n_skipped: int
    failed: str | None = None


def _improvement(base: float, improved: float) -> float:
    if base > 0:
        return 100.0 * (1.0 - improved / base)
    return math.nan


def compare(cycle: DriveCycle, params: CellParameters, cfg: FilterConfig,
            soc_true: np.ndarray | None = None, skip_fraction: float = 0.0,
            ) -> tuple[ComparisonReport, EstimateTrace | None,
                       EstimateTrace | None]:
    """Run both filters on identical inputs and summarize accuracy.

    Ground-truth SOC comes from ``soc_true`` or the cycle's reference
    column.  ``skip_fraction`` optionally drops a leading convergence
    window from the metrics (the default keeps the whole trace).  Returns
    the report plus both traces; on a numerical failure the report's
    ``failed`` field names the filter, sample, and stage, and metric fields
    are NaN.
    """
    if soc_true is None:
        soc_true = cycle.soc_ref
    if soc_true is None:
        raise ValueError("no ground-truth SOC supplied")
    soc_true = np.asarray(soc_true, dtype=float)
    if soc_true.shape != cycle.t.shape:
        raise ValueError("ground-truth SOC length mismatch")
    if not 0.0 <= skip_fraction < 1.0:
        raise ValueError("skip_fraction must be in [0, 1)")
    traces = {}
    for name, fn in (("ekf", ekf_step), ("rbc-dekf", rbc_dekf_step)):
        try:
            traces[name] = run_filter(fn, cycle, params, cfg)
        except NumericalError as exc:
            nan = math.nan
            return (ComparisonReport(nan, nan, nan, nan, nan, nan, nan, nan,
                                     n_samples=cycle.n, n_skipped=0,
                                     failed=f"{name}: {exc.args[0]}"),
                    traces.get("ekf"), None)
    start = int(skip_fraction * cycle.n)
    sl = slice(start, None)
    ekf_t, rbc_t = traces["ekf"], traces["rbc-dekf"]
    v_meas = cycle.voltage
    soc_rmse_ekf = 100.0 * rmse(ekf_t.soc_cell[sl] - soc_true[sl])
    soc_rmse_rbc = 100.0 * rmse(rbc_t.soc_cell[sl] - soc_true[sl])
    v_rmse_ekf = 1000.0 * rmse(ekf_t.v_model[sl] - v_meas[sl])
    v_rmse_rbc = 1000.0 * rmse(rbc_t.v_model[sl] - v_meas[sl])
    report = ComparisonReport(
        soc_rmse_ekf=soc_rmse_ekf, soc_rmse_rbc=soc_rmse_rbc,
        v_rmse_ekf=v_rmse_ekf, v_rmse_rbc=v_rmse_rbc,
        improvement_soc=_improvement(soc_rmse_ekf, soc_rmse_rbc),
        improvement_v=_improvement(v_rmse_ekf, v_rmse_rbc),
        max_abs_soc_err_ekf=100.0 * float(
            np.max(np.abs(ekf_t.soc_cell[sl] - soc_true[sl]))),
        max_abs_soc_err_rbc=100.0 * float(
            np.max(np.abs(rbc_t.soc_cell[sl] - soc_true[sl]))),
        n_samples=cycle.n, n_skipped=start)
    return report, ekf_t, rbc_t
