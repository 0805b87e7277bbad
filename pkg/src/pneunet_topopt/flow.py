"""Design-dependent pressure field: Darcy flow with drainage, and its nodal loads.

The pressure follows ``div(K grad p) - D p = 0`` with a flow coefficient
``K`` that drops from ``K_v`` (void) to ``eps * K_v`` (solid) and a drainage
coefficient ``D`` that switches on in solid.  Consistent structural loads are
``F = -T p`` where ``T`` integrates displacement shape functions against the
pressure gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._assembly import SymmetricSolver
from ._validation import NumericalError, ValidationError, check_field
from .model import GAUSS_POINTS, GAUSS_WEIGHTS, MeshGrid, ProblemModel, RunConfig, shape_functions


@dataclass(frozen=True)
class FlowParams:
    kv: float = 1.0
    contrast: float = 1e-7
    eta_k: float = 0.2
    beta_k: float = 10.0
    ds: float = 0.0
    eta_d: float = 0.3
    beta_d: float = 10.0
    p_ext: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.contrast < 1.0:
            raise ValidationError("flow contrast must lie in (0, 1)")
        if self.ds < 0:
            raise ValidationError("drainage coefficient must be non-negative")
        if self.beta_k <= 0 or self.beta_d <= 0:
            raise ValidationError("flow and drainage slopes must be positive")
        if self.p_ext != 0.0:
            raise ValidationError("only p_ext = 0 is supported")

    @property
    def ks(self) -> float:
        return self.contrast * self.kv


def drainage_from_penetration(ks: float, remainder: float, depth: float) -> float:
    """Drainage coefficient that lets a fraction ``remainder`` of the pressure
    survive a solid wall of thickness ``depth`` (1-D decay ``exp(-x sqrt(D/K))``)."""
    return ks * (np.log(remainder) / depth) ** 2


def flow_params(config: RunConfig) -> FlowParams:
    ks = config.contrast * config.kv
    depth = config.drain_depth_elems * config.element_size
    return FlowParams(
        kv=config.kv, contrast=config.contrast, eta_k=config.eta_k, beta_k=config.beta_k,
        ds=drainage_from_penetration(ks, config.drain_remainder, depth),
        eta_d=config.eta_d, beta_d=config.beta_d,
    )


def smooth_step(x, beta: float, eta: float):
    """tanh step with exact endpoints: 0 at x = 0 and 1 at x = 1."""
    den = np.tanh(beta * eta) + np.tanh(beta * (1.0 - eta))
    return (np.tanh(beta * eta) + np.tanh(beta * (np.asarray(x) - eta))) / den


def smooth_step_derivative(x, beta: float, eta: float):
    den = np.tanh(beta * eta) + np.tanh(beta * (1.0 - eta))
    return beta * (1.0 - np.tanh(beta * (np.asarray(x) - eta)) ** 2) / den


def flow_coefficient(rho, params: FlowParams):
    return params.kv * (1.0 - (1.0 - params.contrast) * smooth_step(rho, params.beta_k, params.eta_k))


def drainage_coefficient(rho, params: FlowParams):
    return params.ds * smooth_step(rho, params.beta_d, params.eta_d)


def flow_partials(rho, params: FlowParams):
    """Return ``(dK/drho, dD/drho)``."""
    dk = -params.kv * (1.0 - params.contrast) * smooth_step_derivative(rho, params.beta_k, params.eta_k)
    dd = params.ds * smooth_step_derivative(rho, params.beta_d, params.eta_d)
    return dk, dd


def flow_element_matrices(dx: float, dy: float, *, lumped: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Diffusion ``int grad(N)^T grad(N)`` and mass ``int N^T N`` on a dx x dy rectangle.

    The diffusion block uses 2x2 Gauss.  The drainage mass uses nodal
    quadrature by default (diagonal, ``area / 4`` per node), which keeps the
    assembled flow matrix an M-matrix on square elements so the pressure obeys
    the discrete maximum principle; ``lumped=False`` gives the consistent
    Gauss-integrated mass instead.
    """
    detj = 0.25 * dx * dy
    kd = np.zeros((4, 4))
    me = np.zeros((4, 4))
    for (xi, eta), w in zip(GAUSS_POINTS, GAUSS_WEIGHTS):
        N, dN = shape_functions(xi, eta)
        grad = np.vstack([dN[0] * 2.0 / dx, dN[1] * 2.0 / dy])
        kd += w * detj * grad.T @ grad
        me += w * detj * np.outer(N, N)
    if lumped:
        me = np.diag(me.sum(axis=1))
    return kd, me


def transformation_element(dx: float, dy: float, thickness: float) -> np.ndarray:
    """8x4 block ``t * int N_u^T grad(N_p)``; rows interleave (x, y) per node."""
    detj = 0.25 * dx * dy
    te = np.zeros((8, 4))
    for (xi, eta), w in zip(GAUSS_POINTS, GAUSS_WEIGHTS):
        N, dN = shape_functions(xi, eta)
        te[0::2] += w * detj * thickness * np.outer(N, dN[0] * 2.0 / dx)
        te[1::2] += w * detj * thickness * np.outer(N, dN[1] * 2.0 / dy)
    return te


def _element_scatter(row_dofs: np.ndarray, col_dofs: np.ndarray, shape, mats: np.ndarray) -> sp.csc_matrix:
    rows = np.repeat(row_dofs, mats.shape[2], axis=1).ravel()
    cols = np.tile(col_dofs, (1, mats.shape[1])).ravel()
    return sp.coo_matrix((mats.ravel(), (rows, cols)), shape=shape).tocsc()


def assemble_flow(model: ProblemModel, rho, params: FlowParams) -> sp.csc_matrix:
    """Global flow matrix ``A = sum_e K_e * Kd + D_e * M`` (no boundary conditions)."""
    rho = check_field(rho, model.n_elements, "rho")
    kd, me = flow_element_matrices(model.mesh.dx, model.mesh.dy)
    assembler = model.flow_assembler
    return assembler.assemble_scaled(flow_coefficient(rho, params), kd,
                                     me, drainage_coefficient(rho, params))


def assemble_T(model) -> sp.csc_matrix:
    """Geometric load transformation (2 * n_nodes x n_nodes); independent of the design."""
    mesh: MeshGrid = getattr(model, "mesh", model)
    te = transformation_element(mesh.dx, mesh.dy, mesh.thickness)
    mats = np.broadcast_to(te, (mesh.n_elements, 8, 4))
    p_edofs = mesh.elements
    u_edofs = np.empty((mesh.n_elements, 8), dtype=np.int64)
    u_edofs[:, 0::2] = 2 * p_edofs
    u_edofs[:, 1::2] = 2 * p_edofs + 1
    return _element_scatter(u_edofs, p_edofs, (2 * mesh.n_nodes, mesh.n_nodes), mats)


def nodal_loads(T: sp.spmatrix, p: np.ndarray) -> np.ndarray:
    if T.shape[1] != np.shape(p)[0]:
        raise ValidationError(f"T has {T.shape[1]} columns but p has {np.shape(p)[0]} entries")
    return -(T @ p)


def solve_pressure(A: sp.spmatrix, nodes, values, *, return_solver: bool = False):
    """Solve ``A p = 0`` with ``p[nodes] = values`` by symmetric elimination."""
    nodes = np.asarray(nodes, dtype=np.int64)
    values = np.broadcast_to(np.asarray(values, dtype=float), nodes.shape)
    if nodes.size == 0:
        raise NumericalError("pressure system is singular: no Dirichlet nodes")
    n = A.shape[0]
    A = sp.csc_matrix(A)
    p = np.zeros(n)
    p[nodes] = values
    free = np.setdiff1d(np.arange(n), nodes)
    solver = SymmetricSolver(A[free][:, free], name="flow")
    if free.size:
        rhs = -(A[free][:, nodes] @ values)
        p[free] = solver.solve(rhs)
    if return_solver:
        return p, solver, free
    return p


@dataclass
class PressureState:
    """Pressure solution for one design realization."""

    A: sp.csc_matrix
    p: np.ndarray
    T: sp.csc_matrix
    F: np.ndarray
    solver: SymmetricSolver
    free: np.ndarray

    def bounds_violation(self, p_in: float) -> float:
        """Largest excursion of ``p`` outside [0, p_in] (0 when the maximum principle holds)."""
        return float(max(0.0, -self.p.min(), self.p.max() - p_in))


def solve_flow(model: ProblemModel, rho, params: FlowParams, T: sp.spmatrix | None = None) -> PressureState:
    """Assemble, solve and convert to loads for one physical density field."""
    A = assemble_flow(model, rho, params)
    nodes, values = model.pressure_bc
    p, solver, free = solve_pressure(A, nodes, values, return_solver=True)
    if T is None:
        T = model.load_transform
    return PressureState(A=A, p=p, T=T, F=nodal_loads(T, p), solver=solver, free=free)
