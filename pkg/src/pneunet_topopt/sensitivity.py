"""Multi-criteria objective, volume constraint, discreteness and adjoint gradients.

The objective of one realization is ``f0 = -s * MSE / SE`` with
``MSE = v^T K u`` (output displacement under the actual load when the dummy
load is a unit force) and ``SE = u^T K u / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import NumericalError, check_field
from .elasticity import ElasticState, MaterialLaw, simp_derivative, solve_elastic, unit_stiffness
from .fields import REALIZATIONS, FilterOperator, RobustTriplet, chain_rule, make_triplet
from .flow import FlowParams, PressureState, flow_element_matrices, flow_partials, solve_flow
from .model import ProblemModel


def objective(pressure: PressureState | None, elastic: ElasticState, s: float) -> tuple[float, float, float]:
    """Return ``(f0, MSE, SE)`` for one solved realization."""
    mse, se = elastic.mse, elastic.se
    if not se > 0.0:
        raise NumericalError(f"strain energy is {se:.3e}; zero load or broken solve")
    return -s * mse / se, mse, se


def scale_factor(ratios) -> float:
    """Scale making the largest initial ``|MSE / SE|`` equal to one."""
    m = float(np.max(np.abs(ratios)))
    if not m > 0:
        raise NumericalError("cannot normalize a zero objective")
    return 1.0 / m


def discreteness(rho_bar) -> float:
    """Discreteness measure in percent (0 for a 0/1 field, 100 for all 0.5)."""
    rho_bar = np.asarray(rho_bar, dtype=float)
    return 100.0 * float(np.sum(4.0 * rho_bar * (1.0 - rho_bar)) / rho_bar.size)


def adjoint_vectors(elastic: ElasticState, s: float) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form adjoints of ``K u = -T p`` and ``K v = F_d`` (full DOF vectors)."""
    mse, se = elastic.mse, elastic.se
    lam2 = s * (elastic.v / se - mse / se ** 2 * elastic.u)
    lam3 = s * elastic.u / se
    return lam2, lam3


def adjoint_gradient(model: ProblemModel, rho_bar, pressure: PressureState, elastic: ElasticState,
                     s: float, params: FlowParams, law: MaterialLaw) -> np.ndarray:
    """``d f0 / d rho_bar`` per element for one realization.

    Combines the explicit stiffness dependence of MSE and SE with the
    adjoint terms of the elastic and flow state equations; the load
    transformation is purely geometric so it contributes nothing.
    """
    rho_bar = check_field(rho_bar, model.n_elements, "rho_bar")
    mse, se = elastic.mse, elastic.se
    u_e = elastic.u[model.displacement_edofs]
    v_e = elastic.v[model.displacement_edofs]
    ke = unit_stiffness(model)
    uku = np.einsum("ei,ij,ej->e", u_e, ke, u_e)
    vku = np.einsum("ei,ij,ej->e", v_e, ke, u_e)
    dE = simp_derivative(rho_bar, law)
    grad = s * dE * (vku / se - 0.5 * mse / se ** 2 * uku)

    lam2, _ = adjoint_vectors(elastic, s)
    rhs = -(pressure.T.T @ lam2)
    lam1 = np.zeros(model.mesh.n_nodes)
    lam1[pressure.free] = pressure.solver.solve(rhs[pressure.free])
    kd, me = flow_element_matrices(model.mesh.dx, model.mesh.dy)
    l_e = lam1[model.pressure_edofs]
    p_e = pressure.p[model.pressure_edofs]
    dK, dD = flow_partials(rho_bar, params)
    grad += dK * np.einsum("ei,ij,ej->e", l_e, kd, p_e) + dD * np.einsum("ei,ij,ej->e", l_e, me, p_e)
    return grad


@dataclass
class ConstraintReport:
    volume: float
    target: float
    value: float
    gradient: np.ndarray = field(repr=False)


def volume_fraction(rho_bar, volumes=None) -> float:
    rho_bar = np.asarray(rho_bar, dtype=float)
    if volumes is None:
        return float(rho_bar.mean())
    volumes = np.broadcast_to(volumes, rho_bar.shape)
    return float(np.sum(volumes * rho_bar) / np.sum(volumes))


def volume_and_gradient(rho_bar_d, triplet: RobustTriplet, F: FilterOperator, target: float,
                        passive: np.ndarray | None = None) -> ConstraintReport:
    """Dilated volume fraction, its distance to ``target`` and ``dV/d rho``."""
    rho_bar_d = np.asarray(rho_bar_d, dtype=float)
    n = rho_bar_d.size
    vol = volume_fraction(rho_bar_d)
    dv = np.full(n, 1.0 / n)
    grad = chain_rule(dv, triplet.rho_tilde, triplet.beta, triplet.eta("dilated"), F, passive)
    return ConstraintReport(vol, float(target), vol - float(target), grad)


@dataclass
class RealizationResult:
    name: str
    rho_bar: np.ndarray = field(repr=False)
    pressure: PressureState = field(repr=False)
    elastic: ElasticState = field(repr=False)
    mse: float
    se: float
    output_dof: int
    grad_rho_bar: np.ndarray | None = field(default=None, repr=False)

    @property
    def ratio(self) -> float:
        return self.mse / self.se

    def f0(self, s: float) -> float:
        return -s * self.ratio

    @property
    def output_displacement(self) -> float:
        """Signed y-displacement of the output node (m)."""
        return float(self.elastic.u[self.output_dof])


@dataclass
class ObjectiveReport:
    """Objectives and raw-variable gradients of all three realizations."""

    s: float
    realizations: dict[str, RealizationResult] = field(repr=False)
    f0: dict[str, float]
    gradients: dict[str, np.ndarray] = field(repr=False)

    @property
    def worst(self) -> str:
        return max(self.f0, key=self.f0.get)


def solve_realization(model: ProblemModel, name: str, rho_bar, params: FlowParams,
                      law: MaterialLaw) -> RealizationResult:
    pressure = solve_flow(model, rho_bar, params)
    elastic = solve_elastic(model, rho_bar, pressure.F, law)
    mse, se = elastic.mse, elastic.se
    if not se > 0.0:
        raise NumericalError(f"{name}: strain energy is {se:.3e}")
    return RealizationResult(name, np.asarray(rho_bar), pressure, elastic, mse, se, model.output_dof)


def evaluate(model: ProblemModel, triplet: RobustTriplet, F: FilterOperator, params: FlowParams,
             law: MaterialLaw, s: float | None = None, gradients: bool = True) -> ObjectiveReport:
    """Solve all three realizations; ``s`` defaults to the normalizing scale."""
    results = {name: solve_realization(model, name, triplet.field(name), params, law)
               for name in REALIZATIONS}
    if s is None:
        s = scale_factor([r.ratio for r in results.values()])
    f0 = {name: r.f0(s) for name, r in results.items()}
    grads = {}
    if gradients:
        passive = model.passive_mask
        for name, r in results.items():
            r.grad_rho_bar = adjoint_gradient(model, r.rho_bar, r.pressure, r.elastic, s, params, law)
            grads[name] = chain_rule(r.grad_rho_bar, triplet.rho_tilde, triplet.beta,
                                     triplet.eta(name), F, passive)
    return ObjectiveReport(s, results, f0, grads)


def full_objective(model: ProblemModel, rho, F: FilterOperator, beta: float, delta_eta: float,
                   params: FlowParams, law: MaterialLaw, s: float) -> dict[str, float]:
    """Objective values of the composed map raw design -> f0 (no gradients)."""
    triplet = make_triplet(rho, F, beta, delta_eta, model.passive_mask)
    return evaluate(model, triplet, F, params, law, s=s, gradients=False).f0
