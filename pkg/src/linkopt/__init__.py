"""Closed-form packet error rates and energy-optimal link adaptation for block-fading channels."""

from .modulation import BerLaw, ModulationScheme, ber_awgn, catalog, get_scheme, papr, q_function
from .per import (
    FadingModel,
    GumbelConstants,
    PacketShape,
    RefitConstants,
    avg_per_nakagami_bound,
    avg_per_rayleigh,
    gumbel_constants,
    per_awgn_exact,
    per_awgn_gumbel,
    waterfall_threshold,
)
from .energy import (
    CostCoefficients,
    EnergyParams,
    LinkBudget,
    OperatingPoint,
    ReliabilityTarget,
)
from .optimizer import JointResult, SnrSolution, joint_optimize, required_snr

__version__ = "0.1.0"
