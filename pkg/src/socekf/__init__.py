"""Battery SOC estimation with a residual-bias-compensated dual EKF.

A control-oriented single particle cell model with Arrhenius temperature
scaling, its exact zero-order-hold discretization, a baseline extended
Kalman filter and a dual filter that additionally tracks an additive
voltage-measurement bias, plus a truth-model simulator and an evaluation
harness.
"""

from .cell import CLAMP_EPS, FARADAY, GAS_CONSTANT, T_REF_DEFAULT, \
    CellParameters, ContinuousModel, OcpCurve, OutputVector, StateVector, \
    TemperatureAdjustedParams, arrhenius_adjust, build_continuous, \
    clamp_concentration, ocp_eval, output_map, overpotential, \
    overpotential_slope, state_space_input, terminal_voltage
from .discretize import DiscreteModel, build_discrete, discretize, zoh_block
from .errors import ConfigError, DataError, NumericalError, SimulationError, \
    SocEkfError
from .filters import FilterConfig, FilterState, ModelContext, StepInput, \
    StepOutput, bias_predict, bias_update, ekf_step, electrode_soc, \
    init_state, joseph_update, model_voltage, rbc_dekf_step, \
    soc_from_state, state_predict, state_update, symmetrize, \
    voltage_jacobian_fd, voltage_jacobian_states, x0_from_soc
from .harness import BiasSpec, ComparisonReport, DriveCycle, EstimateTrace, \
    RunningRmse, SyntheticDataset, compare, coulomb_count, gen_profile, \
    rmse, run_filter, simulate_truth
from .io import load_cell_params, load_cycle, load_filter_config, \
    report_text, write_cycle, write_dataset, write_report, write_trace

__version__ = "0.1.0"

__all__ = [
    "BiasSpec", "CLAMP_EPS", "CellParameters", "ComparisonReport",
    "ConfigError", "ContinuousModel", "DataError", "DiscreteModel",
    "DriveCycle", "EstimateTrace", "FARADAY", "FilterConfig", "FilterState",
    "GAS_CONSTANT", "ModelContext", "NumericalError", "OcpCurve",
    "OutputVector", "RunningRmse", "SimulationError", "SocEkfError",
    "StateVector", "StepInput", "StepOutput", "SyntheticDataset",
    "T_REF_DEFAULT", "TemperatureAdjustedParams", "arrhenius_adjust",
    "bias_predict", "bias_update", "build_continuous", "build_discrete",
    "clamp_concentration", "compare", "coulomb_count", "discretize",
    "ekf_step", "electrode_soc", "gen_profile", "init_state",
    "joseph_update", "load_cell_params", "load_cycle", "load_filter_config",
    "model_voltage", "ocp_eval", "output_map", "overpotential",
    "overpotential_slope", "rbc_dekf_step", "report_text", "rmse",
    "run_filter", "simulate_truth", "soc_from_state", "state_predict",
    "state_space_input", "state_update", "symmetrize", "terminal_voltage",
    "voltage_jacobian_fd", "voltage_jacobian_states", "write_cycle",
    "write_dataset", "write_report", "write_trace", "x0_from_soc",
    "zoh_block",
]
