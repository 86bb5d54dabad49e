import numpy as np
import pytest
from conftest import config_path, load_system
from scipy.interpolate import PPoly

from slsq.experiments import (DrivenSystem, adt_suite, certificate_suite, closed_loop_suite,
                              default_prop1_inputs, experiment_from_document, gronwall_check,
                              gronwall_suite, load_experiment, prop1_experiment, prop1_suite,
                              quantizer_suite, random_driven_pair, replica_suite, run_experiment,
                              sample_initial_state, scalar_input_gains, switched_integral)
from slsq.switching import AdtBudget, SwitchingSignal
from slsq.util import ConfigError, load_document

TICK = 1e-3


def _ramp(T=2.0):
    return PPoly(np.array([[1.0], [0.0]]), np.array([0.0, T]))


def test_switched_integral():
    for n in (1, 10, 100):
        assert switched_integral(_ramp(), n, 2.0) == pytest.approx(1.0 / n, rel=1e-9)
    one = PPoly(np.array([[1.0]]), np.array([0.0, 2.0]))
    assert switched_integral(one, 10, 2.0) == pytest.approx(0.0, abs=1e-12)
    # an odd number of half-periods leaves one interval uncancelled
    assert switched_integral(one, 3, 1.0) == pytest.approx(-1.0 / 3)


def test_prop1_table():
    table = prop1_experiment()
    assert list(table["n"]) == [1, 10, 100, 1000]
    sup = table["sup_integral"]
    assert np.all(np.diff(sup) < 0)
    assert sup[-1] < 0.004
    assert sup[0] >= 1.0
    assert np.all(table["min_abs_x"][1:] >= 1 - 4.0 / table["n"][1:])
    np.testing.assert_allclose(table["linear_reference"], 1.0 / table["n"])


def test_prop1_inputs():
    inputs = default_prop1_inputs(2.0, random_inputs=5, seed=3)
    assert len(inputs) == 8
    t = np.linspace(0, 2.0, 101)[:-1]
    for u in inputs[3:]:
        assert np.all(np.abs(u(t)) <= 1.0)
    assert inputs[2](0.5) == 1.0 and inputs[2](1.5) == 0.0


def test_scalar_input_gains():
    sys, _, _ = load_system("example1.json")
    assert scalar_input_gains(sys) == (-1.0, 1.0)
    sys, _, _ = load_system("sectionV_system.json")
    with pytest.raises(ConfigError):
        scalar_input_gains(sys)


def test_gronwall_bound():
    rng = np.random.default_rng(5)
    for d in (1, 2, 3):
        s1, s2 = random_driven_pair(rng, d, 500, TICK)
        res = gronwall_check(s1, s2, rng.standard_normal(d), rng.standard_normal(d))
        assert res.holds
        assert len(res.t) == 501
        assert res.lhs[0] == pytest.approx(res.rhs[0])


def test_gronwall_identical_systems():
    sig = SwitchingSignal.from_times(0, [(0.2, 1)], 0.5, TICK)
    ds = DrivenSystem(sig, (np.array([[0.5]]), np.array([[-1.0]])), (np.array([1.0]), np.array([0.0])))
    res = gronwall_check(ds, ds, [0.3], [0.3])
    assert np.all(res.lhs == 0)
    assert res.holds


def test_gronwall_rhs_bounds_exact_integral():
    # x1' = -x1, x2' = -2 x2: dA x2 = x2 and the bound is attained
    sig = SwitchingSignal.constant(0, 1000, TICK)
    s1 = DrivenSystem(sig, (np.array([[-1.0]]),), (np.array([0.0]),))
    s2 = DrivenSystem(sig, (np.array([[-2.0]]),), (np.array([0.0]),))
    res = gronwall_check(s1, s2, [1.0], [0.5])
    exact = np.exp(-res.t) - 0.5 * np.exp(-2 * res.t)
    np.testing.assert_allclose(res.lhs, exact, rtol=1e-12)
    assert np.all(res.rhs >= exact * (1 - 1e-12))
    np.testing.assert_allclose(res.rhs, exact, rtol=2e-6)
    assert res.holds


def test_gronwall_rejects_small_nu():
    rng = np.random.default_rng(0)
    s1, s2 = random_driven_pair(rng, 2, 100, TICK)
    with pytest.raises(ValueError):
        gronwall_check(s1, s2, np.zeros(2), np.zeros(2), nu=-100.0)


def test_load_experiment():
    exp = load_experiment(config_path("sectionV_case1.json"))
    assert exp.cfg.n == 100
    assert exp.cfg.tau_s_ticks == 8
    assert exp.budget == AdtBudget(tau_a=1.0, N0=2)
    assert exp.horizon == 40_000
    assert exp.seed == 7
    assert exp.system_doc["certificate"]["mu2"] == 0.15

    exp = load_experiment(config_path("iterates_case.yaml"))
    assert exp.sys.d == 1 and exp.cfg.n == 10


def test_experiment_document_errors():
    doc = load_document(config_path("sectionV_case1.json"))
    doc["system"] = load_document(config_path("sectionV_system.json"))
    assert experiment_from_document(doc).cfg.alpha == 0.05

    bad = dict(doc, r_K=2.0)
    with pytest.raises(ConfigError):
        experiment_from_document(bad)
    bad = dict(doc, tau_s=0.0085)
    with pytest.raises(ConfigError):
        experiment_from_document(bad)
    bad = {k: v for k, v in doc.items() if k != "adt"}
    with pytest.raises(ConfigError):
        experiment_from_document(bad)
    bad = dict(doc, system={"modes": doc["system"]["modes"]})
    with pytest.raises(ConfigError):
        experiment_from_document(bad)
    with pytest.raises(ConfigError):
        experiment_from_document({"tau_s": 0.008})


def test_initial_states_on_sphere():
    rng = np.random.default_rng(1)
    for _ in range(10):
        assert np.linalg.norm(sample_initial_state(rng, 3, 0.7)) == pytest.approx(0.7)


def test_run_experiment_is_reproducible():
    exp = load_experiment(config_path("iterates_case.yaml"))
    sig_a, trace_a, rep_a = run_experiment(exp, 3)
    sig_b, trace_b, _ = run_experiment(exp, 3)
    assert sig_a.same_events(sig_b)
    assert np.array_equal(trace_a.blocks["r_k"], trace_b.blocks["r_k"])
    assert rep_a.ok
    assert rep_a.admissible


def test_run_experiment_accepts_seed_sequences():
    exp = load_experiment(config_path("iterates_case.yaml"))
    _, a, _ = run_experiment(exp, np.random.SeedSequence(3))
    _, b, _ = run_experiment(exp, 3)
    assert np.array_equal(a.blocks["r_k"], b.blocks["r_k"])
    assert np.array_equal(a.x0, b.x0)


def test_small_suites(plant):
    sys, fb, cert = plant
    rows = [
        certificate_suite(sys, fb, cert, AdtBudget(tau_a=1.0, N0=2), runs=3, horizon=5.0),
        quantizer_suite(d_values=(1, 2), alpha_values=(0.5, 0.1), samples=300),
        adt_suite([AdtBudget(0.25, 0), AdtBudget(1.0, 2)], runs=10, horizon=5000),
        gronwall_suite(runs=5, horizon=0.5),
        prop1_suite(),
    ]
    for row in rows:
        assert row["passed"][0], row


def test_closed_loop_and_replica_suites():
    exp = load_experiment(config_path("iterates_case.yaml"))
    sound, decay = closed_loop_suite([exp], runs=3)
    assert sound["passed"][0] and sound["runs"][0] == 3
    assert decay["passed"][0]
    assert replica_suite(exp, runs=2)["passed"][0]


@pytest.mark.slow
def test_certificate_suite_full(plant):
    sys, fb, cert = plant
    for budget in (AdtBudget(tau_a=1.0, N0=2), AdtBudget(tau_a=0.25, N0=5)):
        row = certificate_suite(sys, fb, cert, budget, runs=100, horizon=20.0, seed=1)
        assert row["runs"][0] == 101
        assert row["violations"][0] == 0
