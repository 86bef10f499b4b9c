"""Estimator-style wrapper around the experiment pipeline.

`DmaBeamformer` follows the scikit-learn estimator conventions
(constructor stores hyperparameters verbatim, `fit` learns the design
variables and exposes them as trailing-underscore attributes, `score`
returns the achieved figure of merit), so runs compose with sklearn
tooling such as `clone` and parameter grids.
"""

from dataclasses import replace

from sklearn.base import BaseEstimator

from .harness import (MODES, ScenarioConfig, World, build_scenario,
                      run_experiment)

__all__ = ["DmaBeamformer"]


class DmaBeamformer(BaseEstimator):
    """Joint precoder / resonance-strength design for one scenario.

    Parameters mirror the optimizer-facing ScenarioConfig fields; channel
    and geometry parameters stay with the scenario passed to `fit`.
    """

    def __init__(self, mode="robust", pmax_dbm=30.0, epsilon=1e-3,
                 max_iters=500, convergence_patience=2,
                 jacobian_mode="analytic"):
        self.mode = mode
        self.pmax_dbm = pmax_dbm
        self.epsilon = epsilon
        self.max_iters = max_iters
        self.convergence_patience = convergence_patience
        self.jacobian_mode = jacobian_mode

    def fit(self, X, y=None):
        """Run the design loop on a World (or a ScenarioConfig, in which
        case realization 0 is instantiated)."""
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if isinstance(X, ScenarioConfig):
            X = build_scenario(X)
        if not isinstance(X, World):
            raise TypeError("fit expects a World or a ScenarioConfig")
        cfg = replace(X.config, mode=self.mode, epsilon=self.epsilon,
                      max_iters=self.max_iters,
                      convergence_patience=self.convergence_patience,
                      jacobian_mode=self.jacobian_mode)
        world = replace(X, config=cfg)
        res = run_experiment(world, self.mode, self.pmax_dbm)
        self.precoders_ = res.final_precoders
        self.resonance_strength_ = res.final_alpha
        self.sum_rate_ = res.sum_rate
        self.n_iter_ = res.iterations
        self.trajectory_ = res.trajectory
        self.objective_trace_ = res.objectives
        self.bytes_exchanged_ = res.bytes_exchanged
        return self

    def score(self, X=None, y=None):
        """Achieved true-channel sum rate (bits/s/Hz) of the fitted design."""
        if not hasattr(self, "sum_rate_"):
            raise RuntimeError("call fit first")
        return self.sum_rate_
