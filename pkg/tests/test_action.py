import numpy as np
import pytest

from lagrangeflow import (FlowCase, PressureField, action_derivative_analytic,
                          action_derivative_fd,
                          case_names, default_dictionary,
                          gated_tanh_perturbation, get_case,
                          least_action_check, simulate_pu, sine_perturbation,
                          stochastic_action)

from conftest import SEED

E1, E2, E3 = np.eye(3)


def test_default_dictionary_size_and_labels():
    entries = default_dictionary()
    assert len(entries) >= 9
    kinds = {e.kind for e in entries}
    assert kinds == {"deterministic_sine", "deterministic_bump", "adapted_gated"}


@pytest.mark.parametrize("entry", default_dictionary(),
                         ids=lambda e: e.label)
def test_perturbations_vanish_at_endpoints(entry, tg_ensemble):
    h, hdot = entry.realize(tg_ensemble)
    assert np.all(h[:, 0, :] == 0.0)
    assert np.all(h[:, -1, :] == 0.0)
    energy = (hdot**2).sum(axis=-1).sum(axis=1).max() * tg_ensemble.grid.dt
    assert energy <= entry.energy_bound + 1e-9


def test_gated_perturbation_is_causal(tg_ensemble):
    entry = gated_tanh_perturbation(0.5)
    h, _ = entry.realize(tg_ensemble)
    m = tg_ensemble.grid.steps
    assert np.all(h[:, : m // 2, :] == 0.0)
    # the gate reads the path at the activation index only
    gate = np.tanh(tg_ensemble.positions[:, m // 2, :])
    k = 3 * m // 4
    factor = np.sin(np.pi * (tg_ensemble.grid.times[k] - 0.5) / 0.5)
    assert np.allclose(h[:, k, :], factor * gate, atol=1e-15)
    with pytest.raises(ValueError):
        gated_tanh_perturbation(1.5)


def test_zero_flow_action_and_derivative_exact(zero_ensemble):
    case = get_case("zero_flow")
    est = stochastic_action(case, zero_ensemble)
    assert est.value == pytest.approx(-0.5, abs=1e-12)
    assert est.std_error <= 1e-13
    for entry in default_dictionary():
        d = action_derivative_analytic(case, zero_ensemble, entry)
        assert d.value == 0.0 and d.std_error == 0.0
        f = action_derivative_fd(case, zero_ensemble, entry)
        assert f.value == 0.0


def test_action_cross_checks_entropy(tg_ensemble, wiener_ensemble):
    from lagrangeflow import action_entropy_identity
    case = get_case("taylor_green")
    act = stochastic_action(case, tg_ensemble)
    rep = action_entropy_identity(case, tg_ensemble, wiener_ensemble)
    target = rep["H"].value - rep["ln_Zp"].value
    combined = np.hypot(act.std_error, rep["H"].std_error)
    assert abs(act.value - target) <= 3.0 * combined + 2.0 / tg_ensemble.grid.steps


@pytest.mark.parametrize("name", case_names())
def test_fd_matches_analytic_everywhere(name):
    case = get_case(name)
    ens = simulate_pu(case, 1500, 60, SEED + 2)
    for entry in default_dictionary():
        a = action_derivative_analytic(case, ens, entry)
        f = action_derivative_fd(case, ens, entry, eps=1e-2)
        tol = 3.0 * np.hypot(a.std_error, f.std_error) + 1e-4
        assert abs(a.value - f.value) <= tol, entry.label


def test_fd_exact_for_locally_quadratic_pressure(zero_ensemble):
    # constant pressure has no curvature along h, so the central difference
    # reproduces the analytic derivative up to roundoff
    case = get_case("zero_flow")
    h = sine_perturbation(E1)
    a = action_derivative_analytic(case, zero_ensemble, h)
    f = action_derivative_fd(case, zero_ensemble, h, eps=5e-2)
    assert abs(a.value - f.value) <= 1e-12


def test_fd_eps_validation(tg_ensemble):
    case = get_case("taylor_green")
    h = sine_perturbation(E1)
    for bad in (0.0, 1e-5, 0.5):
        with pytest.raises(ValueError):
            action_derivative_fd(case, tg_ensemble, h, eps=bad)


def test_derivative_linear_in_h(tg_ensemble):
    case = get_case("taylor_green")
    d1 = action_derivative_analytic(case, tg_ensemble, sine_perturbation(E1))
    d2 = action_derivative_analytic(case, tg_ensemble, sine_perturbation(E2))
    dsum = action_derivative_analytic(case, tg_ensemble,
                                      sine_perturbation(E1 + E2))
    se = np.hypot(d1.std_error, d2.std_error)
    assert abs(dsum.value - (d1.value + d2.value)) <= max(3.0 * se, 1e-12)


def test_verdict_invariant_under_pressure_shift(tg_ensemble):
    base = get_case("taylor_green")
    shifted = FlowCase(
        name=base.name,           # same measure tag, same ensemble applies
        velocity=base.velocity,
        pressure=PressureField(
            eval=lambda t, x: base.pressure.eval(t, x) + 0.25,
            gradient=base.pressure.gradient,
            bound=base.pressure.bound + 0.25),
        is_exact_solution=base.is_exact_solution,
        symmetries=base.symmetries)
    for entry in default_dictionary():
        a = action_derivative_analytic(base, tg_ensemble, entry)
        b = action_derivative_analytic(shifted, tg_ensemble, entry)
        assert a.value == b.value and a.std_error == b.std_error


def test_least_action_verdicts_small_scale(tg_ensemble, frozen_ensemble):
    report = least_action_check(get_case("taylor_green"), tg_ensemble)
    assert report["verdict"] == "critical"
    assert len(report["entries"]) >= 9
    report = least_action_check(get_case("frozen_taylor_green"), frozen_ensemble)
    assert report["verdict"] == "not critical"
    assert report["max_abs_z"] >= 5.0
    triggering = [e for e in report["entries"] if abs(e["z"]) >= 5.0]
    assert any("gated" in e["h"] for e in triggering)


def test_least_action_zero_flow(zero_ensemble):
    report = least_action_check(get_case("zero_flow"), zero_ensemble)
    assert report["verdict"] == "critical"
    assert report["max_abs_z"] == 0.0
    with pytest.raises(ValueError):
        least_action_check(get_case("zero_flow"), zero_ensemble, dictionary=[])
