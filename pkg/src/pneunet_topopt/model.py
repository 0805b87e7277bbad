"""Structured design domain: mesh, DOF numbering, region tags and run configuration.

Nodes are numbered row-major from the lower-left corner, node ``(i, j)`` has
index ``j * (nex + 1) + i``.  Elements follow the same convention
(``e = ey * nex + ex``) and list their four nodes counter-clockwise starting
at the lower-left corner.  Displacement DOFs are interleaved per node,
``(2n, 2n + 1) = (ux, uy)``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._assembly import ElementAssembler
from ._validation import ValidationError, check_open_unit, check_positive

BAR = 1.0e5  # Pa

# 2x2 Gauss rule on [-1, 1]^2
_G = 1.0 / np.sqrt(3.0)
GAUSS_POINTS = np.array([[-_G, -_G], [_G, -_G], [_G, _G], [-_G, _G]])
GAUSS_WEIGHTS = np.ones(4)
NODE_XI = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def shape_functions(xi: float, eta: float) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear shape functions and their natural-coordinate derivatives.

    Returns ``N`` with shape (4,) and ``dN`` with shape (2, 4), rows being
    d/dxi and d/deta.
    """
    sx, sy = NODE_XI[:, 0], NODE_XI[:, 1]
    N = 0.25 * (1 + sx * xi) * (1 + sy * eta)
    dN = np.vstack([0.25 * sx * (1 + sy * eta), 0.25 * sy * (1 + sx * xi)])
    return N, dN


@dataclass(frozen=True)
class RunConfig:
    """Validated run parameters in SI units.

    Defaults reproduce the PneuNet member benchmark (100 x 150 mesh, 1 bar,
    robust thresholds 0.5 +/- 0.15, 400 MMA iterations).
    """

    lx: float = 0.1
    ly: float = 0.15
    nex: int = 100
    ney: int = 150
    thickness: float = 0.001
    fixed_left_half: str = "upper"
    chamber_radius_factor: float = 0.25
    void_center_x_factor: float = 0.5
    void_center_y_factor: float = 0.75
    void_width_factor: float = 0.5
    void_height_factor: float = 0.1
    pressure: float = 1.0 * BAR
    kss: float = 1.0e4
    e1: float = 100.0e6
    e0_ratio: float = 1.0e-6
    nu: float = 0.4
    chi: float = 3.0
    kv: float = 1.0
    contrast: float = 1.0e-7
    eta_k: float = 0.2
    beta_k: float = 10.0
    drain_remainder: float = 0.1
    drain_depth_elems: float = 1.0
    eta_d: float = 0.3
    beta_d: float = 10.0
    filter_radius_factor: float = 6.0
    delta_eta: float = 0.15
    beta_start: float = 1.0
    beta_max: float = 128.0
    beta_period: int = 50
    volume_target: float = 0.2
    volume_update_period: int = 25
    move_limit: float = 0.1
    max_iters: int = 400
    output_dir: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("lx", "ly", "thickness", "pressure", "e1", "kv", "beta_k",
                     "beta_d", "filter_radius_factor", "beta_start", "beta_max",
                     "chamber_radius_factor", "drain_depth_elems", "void_width_factor",
                     "void_height_factor"):
            check_positive(getattr(self, name), name)
        for name in ("nex", "ney", "beta_period", "volume_update_period", "max_iters"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValidationError(f"{name} must be a positive integer, got {value}")
        if self.fixed_left_half not in ("upper", "lower"):
            raise ValidationError("fixed_left_half must be 'upper' or 'lower'")
        check_open_unit(self.contrast, "contrast")
        check_open_unit(self.e0_ratio, "e0_ratio")
        check_open_unit(self.volume_target, "volume_target")
        check_open_unit(self.drain_remainder, "drain_remainder")
        check_open_unit(self.eta_k, "eta_k")
        check_open_unit(self.eta_d, "eta_d")
        if not 0.0 <= self.delta_eta < 0.5:
            raise ValidationError(f"delta_eta must lie in [0, 0.5), got {self.delta_eta}")
        if not self.beta_max > self.beta_start:
            raise ValidationError("beta schedule must increase (beta_max > beta_start)")
        if not 0.0 < self.move_limit <= 1.0:
            raise ValidationError(f"move_limit must lie in (0, 1], got {self.move_limit}")
        if not -1.0 < self.nu < 0.5:
            raise ValidationError(f"nu must lie in (-1, 0.5), got {self.nu}")
        if self.chi < 1:
            raise ValidationError(f"chi must be >= 1, got {self.chi}")
        if self.kss < 0:
            raise ValidationError("kss must be non-negative")

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @property
    def element_size(self) -> float:
        return min(self.lx / self.nex, self.ly / self.ney)

    @property
    def filter_radius(self) -> float:
        return self.filter_radius_factor * self.element_size


@dataclass(frozen=True)
class MeshGrid:
    lx: float
    ly: float
    nex: int
    ney: int
    thickness: float

    @property
    def dx(self) -> float:
        return self.lx / self.nex

    @property
    def dy(self) -> float:
        return self.ly / self.ney

    @property
    def n_nodes(self) -> int:
        return (self.nex + 1) * (self.ney + 1)

    @property
    def n_elements(self) -> int:
        return self.nex * self.ney

    @property
    def element_area(self) -> float:
        return self.dx * self.dy

    def node_index(self, i, j):
        return np.asarray(j) * (self.nex + 1) + np.asarray(i)

    @cached_property
    def coords(self) -> np.ndarray:
        x = np.linspace(0.0, self.lx, self.nex + 1)
        y = np.linspace(0.0, self.ly, self.ney + 1)
        X, Y = np.meshgrid(x, y)  # shape (ney+1, nex+1), row-major in j
        return np.column_stack([X.ravel(), Y.ravel()])

    @cached_property
    def elements(self) -> np.ndarray:
        ex, ey = np.meshgrid(np.arange(self.nex), np.arange(self.ney))
        ex, ey = ex.ravel(), ey.ravel()
        n0 = self.node_index(ex, ey)
        n1 = n0 + 1
        n3 = n0 + self.nex + 1
        n2 = n3 + 1
        return np.column_stack([n0, n1, n2, n3])

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.coords[self.elements].mean(axis=1)

    def jacobian_det(self) -> float:
        """Constant Jacobian determinant of the reference-to-element map."""
        return 0.25 * self.dx * self.dy

    def boundary_nodes(self) -> np.ndarray:
        i = np.arange(self.nex + 1)
        j = np.arange(self.ney + 1)
        nodes = np.concatenate([
            self.node_index(i, 0), self.node_index(i, self.ney),
            self.node_index(0, j), self.node_index(self.nex, j),
        ])
        return np.unique(nodes)


@dataclass(frozen=True)
class RegionTags:
    fixed_nodes: np.ndarray
    pressure_input_nodes: np.ndarray
    zero_pressure_nodes: np.ndarray
    passive_elements: np.ndarray
    output_node: int
    output_direction: np.ndarray
    kss: float


@dataclass(frozen=True)
class ProblemModel:
    config: RunConfig
    mesh: MeshGrid
    tags: RegionTags
    pressure_edofs: np.ndarray = field(repr=False)
    displacement_edofs: np.ndarray = field(repr=False)

    @property
    def n_elements(self) -> int:
        return self.mesh.n_elements

    @cached_property
    def passive_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_elements, dtype=bool)
        mask[self.tags.passive_elements] = True
        return mask

    @cached_property
    def design_elements(self) -> np.ndarray:
        """Indices of the optimizable elements."""
        return np.flatnonzero(~self.passive_mask)

    @cached_property
    def pressure_bc(self) -> tuple[np.ndarray, np.ndarray]:
        """Dirichlet pressure nodes and their prescribed values (Pa), sorted by node."""
        nodes = np.concatenate([self.tags.pressure_input_nodes, self.tags.zero_pressure_nodes])
        values = np.concatenate([
            np.full(self.tags.pressure_input_nodes.size, self.config.pressure),
            np.zeros(self.tags.zero_pressure_nodes.size),
        ])
        order = np.argsort(nodes)
        return nodes[order], values[order]

    @cached_property
    def fixed_dofs(self) -> np.ndarray:
        n = self.tags.fixed_nodes
        return np.sort(np.concatenate([2 * n, 2 * n + 1]))

    @cached_property
    def free_dofs(self) -> np.ndarray:
        return np.setdiff1d(np.arange(2 * self.mesh.n_nodes), self.fixed_dofs)

    @cached_property
    def flow_assembler(self) -> ElementAssembler:
        return ElementAssembler(self.pressure_edofs, self.mesh.n_nodes)

    @cached_property
    def stiffness_assembler(self) -> ElementAssembler:
        """Assembler onto the free (unconstrained) displacement DOFs."""
        return ElementAssembler(self.displacement_edofs, 2 * self.mesh.n_nodes, free=self.free_dofs)

    @cached_property
    def load_transform(self):
        from .flow import assemble_T

        return assemble_T(self)

    @property
    def output_dof(self) -> int:
        """DOF carrying the spring and the dummy load (y-DOF of the output node)."""
        return 2 * int(self.tags.output_node) + 1


def _chamber_nodes(mesh: MeshGrid, config: RunConfig) -> np.ndarray:
    center = np.array([0.5 * mesh.lx, 0.5 * mesh.ly])
    radius = config.chamber_radius_factor * mesh.lx
    d2 = np.sum((mesh.coords - center) ** 2, axis=1)
    tol = 1e-12 * radius * radius
    return np.flatnonzero(d2 <= radius * radius + tol)


def build_model(config: RunConfig) -> ProblemModel:
    """Mesh the rectangle and resolve every region tag from geometric rules."""
    config.validate()
    mesh = MeshGrid(config.lx, config.ly, int(config.nex), int(config.ney), config.thickness)
    coords = mesh.coords
    tol = 1e-9 * min(mesh.dx, mesh.dy)

    left = np.abs(coords[:, 0]) <= tol
    if config.fixed_left_half == "upper":
        half = coords[:, 1] >= 0.5 * mesh.ly - tol
    else:
        half = coords[:, 1] <= 0.5 * mesh.ly + tol
    fixed = np.flatnonzero(left & half)

    chamber = _chamber_nodes(mesh, config)
    boundary = mesh.boundary_nodes()
    if chamber.size == 0:
        raise ValidationError("pressure chamber contains no mesh node; refine the mesh")
    overlap = np.intersect1d(chamber, boundary)
    if overlap.size:
        raise ValidationError(
            f"pressure chamber reaches the domain boundary ({overlap.size} nodes would carry "
            "both p = P_in and p = 0)")
    zero = np.setdiff1d(boundary, chamber)

    c = mesh.centroids
    cx = config.void_center_x_factor * mesh.lx
    cy = config.void_center_y_factor * mesh.ly
    hw = 0.5 * config.void_width_factor * mesh.lx
    hh = 0.5 * config.void_height_factor * mesh.ly
    passive = np.flatnonzero((np.abs(c[:, 0] - cx) <= hw + tol) & (np.abs(c[:, 1] - cy) <= hh + tol))
    if passive.size >= mesh.n_elements:
        raise ValidationError("every element is passive; nothing to optimize")

    output = int(np.argmin(np.sum((coords - np.array([mesh.lx, 0.0])) ** 2, axis=1)))
    if output in set(fixed.tolist()):
        raise ValidationError("output node coincides with a fixed node")

    tags = RegionTags(
        fixed_nodes=fixed,
        pressure_input_nodes=chamber,
        zero_pressure_nodes=zero,
        passive_elements=passive,
        output_node=output,
        output_direction=np.array([0.0, -1.0]),
        kss=float(config.kss),
    )
    p_edofs, u_edofs = dof_maps(mesh)
    return ProblemModel(config, mesh, tags, p_edofs, u_edofs)


def dof_maps(model) -> tuple[np.ndarray, np.ndarray]:
    """Element gather arrays: (Ne, 4) pressure DOFs and (Ne, 8) displacement DOFs.

    Accepts a :class:`ProblemModel` or a bare :class:`MeshGrid`.
    """
    mesh = getattr(model, "mesh", model)
    p = mesh.elements.copy()
    u = np.empty((mesh.n_elements, 8), dtype=np.int64)
    u[:, 0::2] = 2 * p
    u[:, 1::2] = 2 * p + 1
    return p, u
