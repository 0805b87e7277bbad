"""Density filter, threshold projection and the eroded/intermediate/dilated triplet.

Raw design variables ``rho`` go through a linear cone filter and then three
tanh projections with thresholds ``0.5 + delta``, ``0.5`` and ``0.5 - delta``.
:func:`chain_rule` pulls sensitivities with respect to a projected field back
to the raw variables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import ValidationError, check_field


@dataclass(frozen=True)
class FilterOperator:
    """Cone-weighted density filter.

    ``weights[j, k] = v_k * max(0, 1 - d_jk / radius)``; ``normalization[j]``
    is the row sum, so ``filtered = weights @ rho / normalization``.
    """

    weights: sp.csr_matrix
    normalization: np.ndarray
    radius: float

    @classmethod
    def from_points(cls, centroids: np.ndarray, volumes, radius: float) -> "FilterOperator":
        centroids = np.asarray(centroids, dtype=float)
        n = centroids.shape[0]
        volumes = np.broadcast_to(np.asarray(volumes, dtype=float), (n,))
        if radius <= 0:
            raise ValidationError("filter radius must be positive")
        pairs = cKDTree(centroids).query_pairs(radius, output_type="ndarray")
        i = np.concatenate([np.arange(n), pairs[:, 0], pairs[:, 1]])
        j = np.concatenate([np.arange(n), pairs[:, 1], pairs[:, 0]])
        d = np.linalg.norm(centroids[i] - centroids[j], axis=1)
        w = np.maximum(0.0, 1.0 - d / radius) * volumes[j]
        keep = w > 0
        W = sp.csr_matrix((w[keep], (i[keep], j[keep])), shape=(n, n))
        W.sort_indices()
        return cls(W, np.asarray(W.sum(axis=1)).ravel(), float(radius))

    @classmethod
    def from_model(cls, model) -> "FilterOperator":
        mesh = model.mesh
        return cls.from_points(mesh.centroids, mesh.element_area, model.config.filter_radius)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def matrix(self) -> sp.csr_matrix:
        """Row-normalized filter matrix (d filtered_j / d rho_k)."""
        return sp.diags(1.0 / self.normalization) @ self.weights


def apply_filter(rho, F: FilterOperator) -> np.ndarray:
    rho = check_field(rho, F.n, "rho")
    return F.weights @ rho / F.normalization


def filter_transpose(g, F: FilterOperator) -> np.ndarray:
    """Sensitivity back-propagation through the filter: ``H^T g``."""
    return F.weights.T @ (np.asarray(g, dtype=float) / F.normalization)


def project(rho_tilde, beta: float, eta: float) -> np.ndarray:
    rho_tilde = np.asarray(rho_tilde, dtype=float)
    den = np.tanh(beta * eta) + np.tanh(beta * (1.0 - eta))
    return (np.tanh(beta * eta) + np.tanh(beta * (rho_tilde - eta))) / den


def project_derivative(rho_tilde, beta: float, eta: float) -> np.ndarray:
    rho_tilde = np.asarray(rho_tilde, dtype=float)
    den = np.tanh(beta * eta) + np.tanh(beta * (1.0 - eta))
    return beta * (1.0 - np.tanh(beta * (rho_tilde - eta)) ** 2) / den


def chain_rule(df_drho_bar, rho_tilde, beta: float, eta: float, F: FilterOperator,
               passive: np.ndarray | None = None) -> np.ndarray:
    """Map ``df/d rho_bar`` to ``df/d rho`` through projection and filter.

    Entries of passive elements are zeroed on both sides: their projected
    value is frozen and their raw variable is not a design variable.
    """
    g = np.asarray(df_drho_bar, dtype=float) * project_derivative(rho_tilde, beta, eta)
    if passive is not None:
        g = np.where(passive, 0.0, g)
    out = filter_transpose(g, F)
    if passive is not None:
        out[passive] = 0.0
    return out


def robust_thresholds(delta_eta: float) -> tuple[float, float, float]:
    """(eroded, intermediate, dilated) thresholds."""
    if not 0.0 <= delta_eta < 0.5:
        raise ValidationError(f"delta_eta must lie in [0, 0.5), got {delta_eta}")
    return 0.5 + delta_eta, 0.5, 0.5 - delta_eta


REALIZATIONS = ("eroded", "intermediate", "dilated")


@dataclass(frozen=True)
class RobustTriplet:
    rho: np.ndarray
    rho_tilde: np.ndarray
    eroded: np.ndarray
    intermediate: np.ndarray
    dilated: np.ndarray
    beta: float
    etas: tuple[float, float, float]

    def field(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def eta(self, name: str) -> float:
        return self.etas[REALIZATIONS.index(name)]

    def items(self):
        return [(name, getattr(self, name)) for name in REALIZATIONS]


def make_triplet(rho, F: FilterOperator, beta: float, delta_eta: float,
                 passive: np.ndarray | None = None) -> RobustTriplet:
    rho = check_field(rho, F.n, "rho")
    if passive is not None:
        rho = np.where(passive, 0.0, rho)
    rho_tilde = apply_filter(rho, F)
    etas = robust_thresholds(delta_eta)
    fields = []
    for eta in etas:
        rho_bar = project(rho_tilde, beta, eta)
        if passive is not None:
            rho_bar[passive] = 0.0
        fields.append(rho_bar)
    return RobustTriplet(rho, rho_tilde, *fields, beta=float(beta), etas=etas)


class RobustProjector(TransformerMixin, BaseEstimator):
    """Transformer mapping raw design fields to projected physical fields.

    Each row of ``X`` is a raw element field on a ``nex x ney`` grid over an
    ``lx x ly`` rectangle.  ``output`` selects one realization, or ``"all"``
    to stack eroded, intermediate and dilated fields side by side.
    """

    def __init__(self, nex=10, ney=10, lx=1.0, ly=1.0, radius_factor=1.5, beta=1.0,
                 delta_eta=0.15, output="intermediate"):
        self.nex = nex
        self.ney = ney
        self.lx = lx
        self.ly = ly
        self.radius_factor = radius_factor
        self.beta = beta
        self.delta_eta = delta_eta
        self.output = output

    def fit(self, X=None, y=None):
        if self.output not in REALIZATIONS + ("all",):
            raise ValidationError(f"unknown output {self.output!r}")
        robust_thresholds(self.delta_eta)
        dx, dy = self.lx / self.nex, self.ly / self.ney
        xs = (np.arange(self.nex) + 0.5) * dx
        ys = (np.arange(self.ney) + 0.5) * dy
        X_, Y_ = np.meshgrid(xs, ys)
        centroids = np.column_stack([X_.ravel(), Y_.ravel()])
        self.filter_ = FilterOperator.from_points(centroids, dx * dy, self.radius_factor * min(dx, dy))
        self.n_features_in_ = self.nex * self.ney
        if X is not None:
            check_array(X)
        return self

    def transform(self, X):
        check_is_fitted(self, "filter_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValidationError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        rows = []
        for x in X:
            t = make_triplet(x, self.filter_, self.beta, self.delta_eta)
            if self.output == "all":
                rows.append(np.concatenate([t.eroded, t.intermediate, t.dilated]))
            else:
                rows.append(t.field(self.output))
        return np.vstack(rows)
