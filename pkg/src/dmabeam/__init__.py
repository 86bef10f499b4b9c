"""Cell-free OFDM downlink simulation with parallel-plate-waveguide dynamic
metasurface antennas (PPW-DMAs) and distributed CSI-robust hybrid
beamforming.

Modules
-------
specfun        self-contained Bessel/Hankel functions of orders 0-2
em_model       Lorentzian polarizabilities, mutual coupling, W_RF
channel        steering vectors, fading, pathloss, CSI corruption
optimizer      per-BS stochastic successive-convex-approximation blocks
coordination   multi-BS message exchange and the iteration loop
harness        scenarios, experiment modes, Monte-Carlo sweeps, export
estimator      scikit-learn style wrapper around one design run
"""

from . import channel, coordination, em_model, harness, optimizer, specfun
from .em_model import (DmaGeometry, LorentzianParams, WaveNumber,
                       analog_beamformer, interaction_matrix,
                       excitation_matrix, polarizability)
from .channel import CsiErrorModel, FadingModel, UePose
from .optimizer import BsVariables, SurrogateState
from .coordination import CellFreeRun, ExchangeLog, run_until_converged
from .harness import (MODES, RunResult, ScenarioConfig, World,
                      build_scenario, run_experiment, sweep_and_export)
from .estimator import DmaBeamformer
from .specfun import DomainError, bessel_jy, hankel2

__version__ = "0.1.0"

__all__ = [
    "DmaGeometry", "LorentzianParams", "WaveNumber", "analog_beamformer",
    "interaction_matrix", "excitation_matrix", "polarizability",
    "CsiErrorModel", "FadingModel", "UePose",
    "BsVariables", "SurrogateState",
    "CellFreeRun", "ExchangeLog", "run_until_converged",
    "MODES", "RunResult", "ScenarioConfig", "World", "build_scenario",
    "run_experiment", "sweep_and_export",
    "DmaBeamformer",
    "DomainError", "bessel_jy", "hankel2",
    "channel", "coordination", "em_model", "harness", "optimizer",
    "specfun",
]
