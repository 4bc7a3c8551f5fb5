"""Liquid time-constant networks and continuous-time RNN baselines in numpy."""

from ltcnet.cells import (
    ACTIVATIONS,
    CELL_KINDS,
    CellParams,
    ctrnn_derivative,
    derivative,
    instantaneous_time_constant,
    ltc_derivative,
    neural_net_f,
    node_derivative,
)
from ltcnet.errors import (
    ContractError,
    DegenerateInputError,
    LtcError,
    OverflowStateError,
    ParameterError,
    SingularityError,
    StiffnessError,
)
from ltcnet.numcore import RNG_ALGORITHM, arc_length, gaussian_matrix, pca_top2
from ltcnet.solvers import (
    Trajectory,

    dopri45_integrate,
    euler_step,
    fused_step,
    rk4_step,
    computational_depth,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "ACTIVATIONS",
    "CELL_KINDS",
    "CellParams",
    "ContractError",
    "DegenerateInputError",
    "LtcError",
    "OverflowStateError",
    "ParameterError",
    "RNG_ALGORITHM",
    "SingularityError",
    "StiffnessError",
    "Trajectory",
    "arc_length",

    "computational_depth",
    "ctrnn_derivative",
    "derivative",
    "dopri45_integrate",
    "euler_step",
    "fused_step",
    "gaussian_matrix",
    "instantaneous_time_constant",
    "ltc_derivative",
    "neural_net_f",
    "node_derivative",
    "pca_top2",
    "rk4_step",
    "simulate",
]
