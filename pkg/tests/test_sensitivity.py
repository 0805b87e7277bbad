import numpy as np
import pytest

from pneunet_topopt import FilterOperator, MaterialLaw, NumericalError, build_model, check_gradients
from pneunet_topopt import sensitivity
from pneunet_topopt.fields import make_triplet
from pneunet_topopt.flow import flow_params
from pneunet_topopt.sensitivity import (adjoint_gradient, discreteness, evaluate, scale_factor,
                                        solve_realization, volume_and_gradient, volume_fraction)

from conftest import small_config


def test_discreteness_endpoints():
    assert discreteness(np.array([0.0, 1.0, 1.0, 0.0])) == 0.0
    assert discreteness(np.full(10, 0.5)) == pytest.approx(100.0, abs=1e-12)


def test_scale_factor():
    assert scale_factor([0.5, -2.0, 1.0]) == 0.5
    with pytest.raises(NumericalError):
        scale_factor([0.0, 0.0])


def test_objective_definition(small_model):
    model = small_model
    rho = np.random.default_rng(2).random(model.n_elements)
    r = solve_realization(model, "intermediate", rho, flow_params(model.config),
                          MaterialLaw.from_config(model.config))
    f0, mse, se = sensitivity.objective(r.pressure, r.elastic, 2.0)
    free = r.elastic.free
    u, v, K = r.elastic.u[free], r.elastic.v[free], r.elastic.K
    assert mse == pytest.approx(v @ K @ u, rel=1e-12)
    assert se == pytest.approx(0.5 * u @ K @ u, rel=1e-12)
    assert f0 == pytest.approx(-2.0 * mse / se, rel=1e-12)


def test_adjoint_gradient_wrt_physical_field(small_model):
    model = small_model
    params, law = flow_params(model.config), MaterialLaw.from_config(model.config)
    rho = np.random.default_rng(5).uniform(0.1, 0.9, model.n_elements)
    r = solve_realization(model, "intermediate", rho, params, law)
    g = adjoint_gradient(model, rho, r.pressure, r.elastic, 1.0, params, law)

    def f(x):
        q = solve_realization(model, "intermediate", x, params, law)
        return -q.mse / q.se

    h = 1e-6
    fd = np.array([(f(rho + h * e) - f(rho - h * e)) / (2 * h) for e in np.eye(model.n_elements)])
    assert np.abs(g - fd).max() <= 1e-5 * np.abs(fd).max()


def test_volume_gradient_fd(small_model):
    model = small_model
    F = FilterOperator.from_model(model)
    rho = np.random.default_rng(7).random(model.n_elements)
    passive = model.passive_mask
    t = make_triplet(rho, F, 4.0, 0.15, passive)
    rep = volume_and_gradient(t.dilated, t, F, 0.3, passive)
    assert rep.value == pytest.approx(volume_fraction(t.dilated) - 0.3)
    h = 1e-6
    for k in range(0, model.n_elements, 5):
        e = np.zeros(model.n_elements)
        e[k] = h
        fd = (volume_fraction(make_triplet(rho + e, F, 4.0, 0.15, passive).dilated)
              - volume_fraction(make_triplet(rho - e, F, 4.0, 0.15, passive).dilated)) / (2 * h)
        assert rep.gradient[k] == pytest.approx(fd, rel=1e-6, abs=1e-10)


def test_evaluate_normalizes_and_orders(small_model):
    model = small_model
    F = FilterOperator.from_model(model)
    t = make_triplet(np.full(model.n_elements, 0.4), F, 1.0, 0.15, model.passive_mask)
    rep = evaluate(model, t, F, flow_params(model.config), MaterialLaw.from_config(model.config))
    assert max(abs(v) for v in rep.f0.values()) == pytest.approx(1.0)
    assert rep.worst == max(rep.f0, key=rep.f0.get)
    for name, g in rep.gradients.items():
        assert np.all(g[model.passive_mask] == 0.0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_full_chain_gradient_check(seed):
    report = check_gradients(small_config(), seed=seed, n_designs=1)
    assert report.passed, report.max_error
    assert report.max_error < 1e-5


def test_fault_injection_negated_flow_derivative(monkeypatch):
    original = sensitivity.flow_partials

    def negated(rho, params):
        dk, dd = original(rho, params)
        return -dk, dd

    monkeypatch.setattr(sensitivity, "flow_partials", negated)
    report = check_gradients(small_config(), seed=42, n_designs=1)
    assert not report.passed


def test_fault_injection_dropped_explicit_term(monkeypatch):
    monkeypatch.setattr(sensitivity, "simp_derivative", lambda rho, law: 0.0 * rho)
    assert not check_gradients(small_config(), seed=42, n_designs=1).passed


def test_zero_strain_energy_rejected(small_model):
    model = small_model
    r = solve_realization(model, "x", np.full(model.n_elements, 0.5), flow_params(model.config),
                          MaterialLaw.from_config(model.config))
    r.elastic.u[:] = 0.0
    with pytest.raises(NumericalError):
        sensitivity.objective(r.pressure, r.elastic, 1.0)
