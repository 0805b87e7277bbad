"""scikit-learn style wrapper around the optimization loop.

The optimizer learns a design, not a mapping from data, so ``fit`` takes no
training data.  After fitting, ``transform`` projects raw design fields with
the final filter and projection, which makes it easy to post-process variants
of the optimized design with the same settings.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .fields import REALIZATIONS, RobustProjector
from .model import RunConfig, build_model
from .optimizer import run


class PneuNetOptimizer(BaseEstimator):
    """Robust min-max topology optimization as an estimator.

    Parameters
    ----------
    config : RunConfig, optional
        Problem and schedule settings; ``None`` uses the benchmark defaults.
    verify_gradients : bool
        Run the small-mesh adjoint check before the first iteration.
    early_exit : bool
        Stop once beta is maximal and the design change is below 1e-3.

    Attributes
    ----------
    result_ : OptimizationResult
    design_ : ndarray of shape (n_elements,)
        Optimized raw design variables.
    fields_ : dict
        Final eroded, intermediate and dilated projected fields.
    history_ : list of IterationRecord
    """

    def __init__(self, config: RunConfig | None = None, verify_gradients: bool = True,
                 early_exit: bool = False):
        self.config = config
        self.verify_gradients = verify_gradients
        self.early_exit = early_exit

    def fit(self, X=None, y=None):
        config = self.config if self.config is not None else RunConfig()
        model = build_model(config)
        self.result_ = run(model, config, verify_gradients=self.verify_gradients,
                           early_exit=self.early_exit)
        self.design_ = self.result_.rho.copy()
        self.fields_ = {name: self.result_.triplet.field(name).copy() for name in REALIZATIONS}
        self.history_ = list(self.result_.history)
        self.n_features_in_ = model.n_elements
        self.projector_ = RobustProjector(
            nex=config.nex, ney=config.ney, lx=config.lx, ly=config.ly,
            radius_factor=config.filter_radius_factor, beta=self.result_.triplet.beta,
            delta_eta=config.delta_eta, output="intermediate").fit()
        return self

    def transform(self, X):
        """Intermediate projected field of each raw design row in ``X``."""
        check_is_fitted(self, "result_")
        return self.projector_.transform(check_array(X, dtype=float))

    def score(self, X=None, y=None) -> float:
        """Negated worst-case objective of the optimized design (higher is better)."""
        check_is_fitted(self, "result_")
        return -float(self.result_.objective)

    @property
    def output_displacement_(self) -> float:
        check_is_fitted(self, "result_")
        return float(self.result_.output_displacement["intermediate"])

    def design_image(self) -> np.ndarray:
        """Intermediate field as a (ney, nex) array with row 0 at the top."""
        check_is_fitted(self, "result_")
        cfg = self.result_.config
        return self.fields_["intermediate"].reshape(cfg.ney, cfg.nex)[::-1]
