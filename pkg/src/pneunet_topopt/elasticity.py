"""SIMP-interpolated plane-stress elasticity with a workpiece spring at the output port."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._assembly import SymmetricSolver
from ._validation import NumericalError, ValidationError, check_field
from .model import GAUSS_POINTS, GAUSS_WEIGHTS, ProblemModel, RunConfig, shape_functions


@dataclass(frozen=True)
class MaterialLaw:
    e1: float = 100e6
    e0: float = 100.0
    nu: float = 0.4
    chi: float = 3.0

    def __post_init__(self):
        if not 0 < self.e0 < self.e1:
            raise ValidationError("need 0 < E0 < E1")

    @classmethod
    def from_config(cls, config: RunConfig) -> "MaterialLaw":
        return cls(e1=config.e1, e0=config.e1 * config.e0_ratio, nu=config.nu, chi=config.chi)


def simp_modulus(rho, law: MaterialLaw):
    return law.e0 + np.asarray(rho) ** law.chi * (law.e1 - law.e0)


def simp_derivative(rho, law: MaterialLaw):
    return law.chi * np.asarray(rho) ** (law.chi - 1.0) * (law.e1 - law.e0)


def plane_stress_matrix(E: float, nu: float) -> np.ndarray:
    return E / (1.0 - nu * nu) * np.array([
        [1.0, nu, 0.0],
        [nu, 1.0, 0.0],
        [0.0, 0.0, 0.5 * (1.0 - nu)],
    ])


def element_stiffness(dx: float, dy: float, E: float, nu: float, thickness: float) -> np.ndarray:
    """8x8 bilinear plane-stress stiffness of a dx x dy rectangle, 2x2 Gauss."""
    C = plane_stress_matrix(E, nu)
    detj = 0.25 * dx * dy
    ke = np.zeros((8, 8))
    for (xi, eta), w in zip(GAUSS_POINTS, GAUSS_WEIGHTS):
        _, dN = shape_functions(xi, eta)
        gx, gy = dN[0] * 2.0 / dx, dN[1] * 2.0 / dy
        B = np.zeros((3, 8))
        B[0, 0::2] = gx
        B[1, 1::2] = gy
        B[2, 0::2] = gy
        B[2, 1::2] = gx
        ke += w * detj * thickness * B.T @ C @ B
    return ke


def unit_stiffness(model: ProblemModel) -> np.ndarray:
    """Element stiffness for E = 1; every element of the structured mesh shares it."""
    mesh = model.mesh
    return element_stiffness(mesh.dx, mesh.dy, 1.0, model.config.nu, mesh.thickness)


def _reduced_output_index(model: ProblemModel) -> int:
    idx = np.searchsorted(model.free_dofs, model.output_dof)
    if idx >= model.free_dofs.size or model.free_dofs[idx] != model.output_dof:
        raise ValidationError("output DOF is constrained")
    return int(idx)


def assemble_K(model: ProblemModel, rho, law: MaterialLaw | None = None) -> sp.csc_matrix:
    """Stiffness on the free DOFs (fixed DOFs eliminated), spring ``k_ss`` included."""
    if model.tags.fixed_nodes.size == 0:
        raise NumericalError("stiffness matrix is singular: no displacement boundary conditions")
    law = law or MaterialLaw.from_config(model.config)
    rho = check_field(rho, model.n_elements, "rho")
    K = model.stiffness_assembler.assemble_scaled(simp_modulus(rho, law), unit_stiffness(model))
    if model.tags.kss:
        k = _reduced_output_index(model)
        K = K + sp.csc_matrix(([model.tags.kss], ([k], [k])), shape=K.shape)
    return K


def dummy_load(model: ProblemModel) -> np.ndarray:
    """Unit force at the output node along the desired motion direction (full DOF vector)."""
    fd = np.zeros(2 * model.mesh.n_nodes)
    n = model.tags.output_node
    fd[2 * n:2 * n + 2] = model.tags.output_direction
    return fd


def solve_states(K: sp.spmatrix, F: np.ndarray, F_d: np.ndarray, solver: SymmetricSolver | None = None):
    """One factorization, two back-substitutions: ``K u = F`` and ``K v = F_d``."""
    solver = solver or SymmetricSolver(K, name="stiffness")
    u = solver.solve(F)
    v = u.copy() if np.array_equal(F, F_d) else solver.solve(F_d)
    return u, v


@dataclass
class ElasticState:
    """Displacements of one realization; ``K`` lives on the free DOFs, vectors are full."""

    K: sp.csc_matrix
    u: np.ndarray
    v: np.ndarray
    F: np.ndarray
    F_d: np.ndarray
    free: np.ndarray
    solver: SymmetricSolver

    def reduced(self, x: np.ndarray) -> np.ndarray:
        return x[self.free]

    @property
    def mse(self) -> float:
        return float(self.v[self.free] @ (self.K @ self.u[self.free]))

    @property
    def se(self) -> float:
        uf = self.u[self.free]
        return float(0.5 * uf @ (self.K @ uf))


def solve_elastic(model: ProblemModel, rho, F: np.ndarray, law: MaterialLaw | None = None) -> ElasticState:
    K = assemble_K(model, rho, law)
    free = model.free_dofs
    F_d = dummy_load(model)
    solver = SymmetricSolver(K, name="stiffness")
    uf, vf = solve_states(K, F[free], F_d[free], solver)
    u = np.zeros(2 * model.mesh.n_nodes)
    v = np.zeros_like(u)
    u[free], v[free] = uf, vf
    return ElasticState(K=K, u=u, v=v, F=np.asarray(F, dtype=float), F_d=F_d, free=free, solver=solver)
