import numpy as np
import pytest

from pneunet_topopt import RunConfig, ValidationError, build_model
from pneunet_topopt.model import MeshGrid, dof_maps, shape_functions


def test_flagship_counts():
    model = build_model(RunConfig())
    assert model.mesh.n_elements == 15000
    assert model.mesh.n_nodes == 15251
    assert model.config.chamber_radius_factor * model.config.lx == pytest.approx(0.025)
    # 50 x 15 elements of the 100 x 150 mesh fall inside the Lx/2 x Ly/10 void
    assert model.passive_mask.sum() == 750
    assert model.design_elements.size == 15000 - 750


def test_chamber_matches_geometric_enumeration():
    model = build_model(RunConfig(nex=10, ney=15))
    xs, ys = np.meshgrid(np.linspace(0, 0.1, 11), np.linspace(0, 0.15, 16))
    inside = (xs.ravel() - 0.05) ** 2 + (ys.ravel() - 0.075) ** 2 <= 0.025 ** 2 + 1e-15
    np.testing.assert_array_equal(np.sort(model.tags.pressure_input_nodes), np.flatnonzero(inside))


def test_degenerate_mesh_rejected():
    # every node of a single element lies on the boundary: no valid chamber
    with pytest.raises(ValidationError, match="chamber"):
        build_model(RunConfig(nex=1, ney=1))


def test_chamber_reaching_boundary_rejected():
    with pytest.raises(ValidationError, match="boundary"):
        build_model(RunConfig(nex=10, ney=15, chamber_radius_factor=0.6))


def test_single_element_gathers():
    p, u = dof_maps(MeshGrid(1.0, 1.0, 1, 1, 1.0))
    np.testing.assert_array_equal(p[0], [0, 1, 3, 2])
    # counter-clockwise from lower-left: (0,0), (1,0), (1,1), (0,1)
    mesh = MeshGrid(1.0, 1.0, 1, 1, 1.0)
    np.testing.assert_allclose(mesh.coords[p[0]], [[0, 0], [1, 0], [1, 1], [0, 1]])
    np.testing.assert_array_equal(u[0], np.ravel([[2 * n, 2 * n + 1] for n in p[0]]))


def test_node_numbering_row_major():
    mesh = MeshGrid(2.0, 3.0, 4, 6, 1.0)
    for i, j in [(0, 0), (3, 2), (4, 6)]:
        n = mesh.node_index(i, j)
        assert n == j * 5 + i
        np.testing.assert_allclose(mesh.coords[n], [i * 0.5, j * 0.5])


def test_element_jacobians_positive_and_constant():
    mesh = MeshGrid(0.1, 0.15, 7, 5, 0.001)
    c = mesh.coords[mesh.elements]
    # shoelace area of each quad, positive = counter-clockwise
    x, y = c[..., 0], c[..., 1]
    area = 0.5 * np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)
    np.testing.assert_allclose(area, mesh.element_area)
    assert mesh.jacobian_det() == pytest.approx(mesh.element_area / 4)


def test_dof_maps_are_bijections():
    model = build_model(RunConfig(nex=10, ney=15))
    p, u = dof_maps(model)
    assert set(np.unique(p)) == set(range(model.mesh.n_nodes))
    assert set(np.unique(u)) == set(range(2 * model.mesh.n_nodes))


def test_region_tags():
    model = build_model(RunConfig(nex=10, ney=16))
    mesh, tags = model.mesh, model.tags
    fixed_xy = mesh.coords[tags.fixed_nodes]
    assert np.all(fixed_xy[:, 0] == 0) and np.all(fixed_xy[:, 1] >= 0.075 - 1e-12)
    assert len(tags.fixed_nodes) == 9
    np.testing.assert_allclose(mesh.coords[tags.output_node], [0.1, 0.0])
    np.testing.assert_array_equal(tags.output_direction, [0, -1])
    assert model.output_dof == 2 * tags.output_node + 1
    # every boundary node carries exactly one pressure condition
    nodes, values = model.pressure_bc
    assert np.unique(nodes).size == nodes.size
    assert set(mesh.boundary_nodes()) <= set(nodes)
    assert np.all(values[np.isin(nodes, tags.pressure_input_nodes)] == model.config.pressure)


def test_lower_half_option():
    model = build_model(RunConfig(nex=10, ney=16, fixed_left_half="lower"))
    assert np.all(model.mesh.coords[model.tags.fixed_nodes][:, 1] <= 0.075 + 1e-12)


def test_tagging_idempotent():
    a, b = build_model(RunConfig(nex=10, ney=15)), build_model(RunConfig(nex=10, ney=15))
    for name in ("fixed_nodes", "pressure_input_nodes", "zero_pressure_nodes", "passive_elements"):
        np.testing.assert_array_equal(getattr(a.tags, name), getattr(b.tags, name))


def test_all_passive_rejected():
    with pytest.raises(ValidationError, match="passive"):
        build_model(RunConfig(nex=10, ney=15, void_width_factor=2.0, void_height_factor=2.0,
                              void_center_y_factor=0.5))


@pytest.mark.parametrize("changes", [
    dict(contrast=0.0), dict(contrast=1.0), dict(delta_eta=0.5), dict(delta_eta=-0.1),
    dict(beta_max=1.0), dict(volume_target=0.0), dict(volume_target=1.0), dict(move_limit=0.0),
    dict(move_limit=1.5), dict(nex=0), dict(fixed_left_half="middle"), dict(nu=0.5),
])
def test_config_invariants(changes):
    with pytest.raises(ValidationError):
        RunConfig(**changes)


def test_shape_functions_partition_of_unity():
    for xi, eta in [(-1, -1), (0.3, -0.2), (1, 1)]:
        N, dN = shape_functions(xi, eta)
        assert N.sum() == pytest.approx(1.0)
        np.testing.assert_allclose(dN.sum(axis=1), 0.0, atol=1e-15)
