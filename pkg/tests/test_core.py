import math

import numpy as np
import pytest

from memdde.core import (
    DelayBoundsError,
    DelaySpec,
    DomainError,
    GammaKernel,
    InitialHistory,
    LogisticMemoryModel,
    ModelSpec,
    NonautonomousKernel,
    TabulatedKernel,
    Trajectory,
    gamma_density,
    gamma_truncation_horizon,
    validate,
)


# ---------------------------------------------------------------------------
# Initial histories
# ---------------------------------------------------------------------------

def test_constant_history_values_and_derivative():
    h = InitialHistory.constant([0.7], tau_max=2.0)
    for t in (-2.0, -1.0, 0.0):
        assert h(t) == pytest.approx(0.7)
        assert h.derivative(t) == pytest.approx(0.0)


def test_polynomial_history_matches_coefficients():
    # phi(s) = 1 + 2s + 3s^2
    h = InitialHistory.polynomial([1.0, 2.0, 3.0], tau_max=1.0)
    for s in (-1.0, -0.5, 0.0):
        assert h(s)[0] == pytest.approx(1 + 2 * s + 3 * s * s, abs=1e-14)
        assert h.derivative(s)[0] == pytest.approx(2 + 6 * s, abs=1e-12)


def test_sinusoid_history():
    h = InitialHistory.sinusoid(2.0, 3.0, 0.5, 1.0, tau_max=1.0)
    for s in (-0.9, -0.3, 0.0):
        assert h(s)[0] == pytest.approx(1.0 + 2.0 * math.sin(3.0 * s + 0.5))


def test_tabulated_history_interpolates_samples():
    ts = np.linspace(-1.0, 0.0, 11)
    xs = np.cos(ts)
    h = InitialHistory.tabulated(ts, xs, tau_max=1.0)
    for t, x in zip(ts, xs):
        assert h(t)[0] == pytest.approx(x, abs=1e-12)
    # between nodes the spline stays close to the generating function
    mid = np.linspace(-1.0, 0.0, 101)
    vals = np.array([h(t)[0] for t in mid])
    assert np.max(np.abs(vals - np.cos(mid))) < 1e-5


def test_history_constant_extension_clamps():
    h = InitialHistory.polynomial([0.0, 1.0], tau_max=1.0, extension="constant")
    assert h(-3.0)[0] == pytest.approx(h(-1.0)[0])


def test_history_analytic_extension_keeps_formula():
    h = InitialHistory.polynomial([0.0, 1.0], tau_max=1.0, extension="analytic")
    assert h(-3.0)[0] == pytest.approx(-3.0)


def test_history_eval_many_matches_scalar_calls():
    h = InitialHistory.sinusoid(1.0, 2.0, 0.0, 0.0, tau_max=2.0)
    ts = np.linspace(-2.0, 0.0, 57)
    many = h.eval_many(ts)
    one = np.array([h(t) for t in ts])
    assert np.allclose(many, one, atol=1e-14)


def test_history_rejects_positive_time():
    h = InitialHistory.constant([1.0], tau_max=1.0)
    with pytest.raises(DomainError):
        h(0.5)


def test_continuity_probe_flags_jump():
    jump = InitialHistory.from_callable(
        lambda t: np.array([0.0 if t < -0.5 else 1.0]), tau_max=1.0)
    smooth = InitialHistory.sinusoid(1.0, 1.0, 0.0, 0.0, tau_max=1.0)
    assert not jump.check_continuity()
    assert smooth.check_continuity()


# ---------------------------------------------------------------------------
# Delay specifications
# ---------------------------------------------------------------------------

def test_constant_delay():
    d = DelaySpec.constant(1.5)
    assert d(np.array([3.0]), 0.0) == pytest.approx(1.5)
    assert d.tau_min == d.tau_max == 1.5
    assert d.L_tau == 0.0


def test_affine_delay_clamps_into_band():
    d = DelaySpec.affine(1.0, 0.5, tau_min=0.5, tau_max=2.0)
    assert d(np.array([0.0]), 0.0) == pytest.approx(1.0)
    assert d(np.array([10.0]), 0.0) == pytest.approx(2.0)   # clamped high
    assert d(np.array([-10.0]), 0.0) == pytest.approx(0.5)  # clamped low
    assert d.L_tau == pytest.approx(0.5)


def test_delay_bounds_hold_on_many_random_states():
    d = DelaySpec.affine(1.0, 0.3, tau_min=0.4, tau_max=1.8)
    rng = np.random.default_rng(7)
    xs = rng.normal(scale=50.0, size=10_000)
    for x in xs:
        tau = d(np.array([x]), 0.0)
        assert d.tau_min <= tau <= d.tau_max


def test_callable_delay_violating_band_raises():
    d = DelaySpec.from_callable(lambda x, t: 10.0, tau_min=0.5, tau_max=2.0,
                                L_tau=0.0)
    with pytest.raises(DelayBoundsError):
        d(np.array([0.0]), 0.0)


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

def test_gamma_order2_density_unimodal_with_known_mode():
    for rate in (0.5, 1.0, 3.0):
        k = GammaKernel(order=2, rate=rate)
        s = np.linspace(1e-4, 10.0 / rate, 4001)
        v = k(s)
        assert np.all(v >= 0)
        mode = s[int(np.argmax(v))]
        assert mode == pytest.approx(1.0 / rate, rel=1e-2)


def test_gamma_truncation_horizon_order1_closed_form():
    tol = 1e-10
    for rate in (0.5, 1.0, 2.0):
        H = gamma_truncation_horizon(1, rate, tol)
        assert H == pytest.approx(-math.log(tol) / rate, rel=1e-12)


def test_gamma_truncation_horizon_controls_tail_mass():
    from scipy.special import gammaincc
    for order in (1, 2, 3, 5):
        H = gamma_truncation_horizon(order, 1.3, 1e-8)
        assert gammaincc(order, 1.3 * H) == pytest.approx(1e-8, rel=1e-6)


def test_gamma_density_normalization():
    from scipy.integrate import simpson
    s = np.linspace(0.0, 60.0, 200_001)
    v = gamma_density(2, 1.0, s)
    assert simpson(v, x=s) == pytest.approx(1.0, abs=1e-9)


def test_tabulated_kernel_clamps_outside_support():
    k = TabulatedKernel(np.array([0.0, 1.0, 2.0]), np.array([0.0, 1.0, 0.0]))
    assert k(np.array([-1.0]))[0] == pytest.approx(0.0)
    assert k(np.array([5.0]))[0] == pytest.approx(0.0)
    assert not k.is_zero
    assert TabulatedKernel(np.array([0.0, 1.0]), np.zeros(2)).is_zero


# ---------------------------------------------------------------------------
# Trajectory dense output
# ---------------------------------------------------------------------------

def _sample_trajectory():
    ts = np.linspace(0.0, 2.0, 21)
    vals = np.sin(ts)[:, None]
    derivs = np.cos(ts)[:, None]
    return Trajectory(ts, vals, derivs, n_state=1)


def test_trajectory_reproduces_nodes_exactly():
    traj = _sample_trajectory()
    out = traj.eval_many(traj.ts)
    assert np.max(np.abs(out[:, 0] - np.sin(traj.ts))) <= 1e-14


def test_trajectory_dense_output_is_accurate_between_nodes():
    traj = _sample_trajectory()
    ts = np.linspace(0.0, 2.0, 501)
    out = traj.eval_many(ts)[:, 0]
    # cubic Hermite of sin on h = 0.1: error ~ h^4/384
    assert np.max(np.abs(out - np.sin(ts))) < 1e-5


def test_trajectory_rejects_points_outside_domain():
    traj = _sample_trajectory()
    with pytest.raises(DomainError):
        traj.eval_many(np.array([2.5]))


def test_trajectory_csv_format(tmp_path):
    traj = _sample_trajectory()
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    raw = path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().strip().split("\n")
    assert lines[0] == "t,x_1"
    assert len(lines) == len(traj.ts) + 1
    # 17 significant digits round-trip exactly
    t0, x0 = lines[1].split(",")
    assert float(t0) == traj.ts[0]
    assert float(x0) == traj.values[0, 0]


# ---------------------------------------------------------------------------
# Assumption validation
# ---------------------------------------------------------------------------

def _benchmark_model(delay=None, kernel=None):
    return ModelSpec(
        dimension=1,
        rhs=LogisticMemoryModel(r=1.0, K_c=1.0, alpha=0.5),
        delay=delay or DelaySpec.constant(1.0),
        kernel=kernel or GammaKernel(order=2, rate=1.0),
    )


def test_validate_passes_for_benchmark():
    rep = validate(_benchmark_model(), InitialHistory.constant([0.4], 1.0))
    assert rep.passed, str(rep)


def test_validate_names_delay_bound_failure():
    bad = DelaySpec(tau_min=0.0, tau_max=0.0, L_tau=0.0, form="constant",
                    tau0=0.0)
    rep = validate(_benchmark_model(delay=bad))
    names = [c.name for c in rep.failures()]
    assert any(name.startswith("A1") for name in names)


def test_validate_flags_negative_kernel():
    bad = TabulatedKernel(np.array([0.0, 1.0, 2.0]),
                          np.array([0.5, -0.1, 0.0]))
    rep = validate(_benchmark_model(kernel=bad))
    names = [c.name for c in rep.failures()]
    assert "A2.kernel_nonneg" in names


def test_validate_flags_discontinuous_history():
    jump = InitialHistory.from_callable(
        lambda t: np.array([0.0 if t < -0.5 else 1.0]), tau_max=1.0)
    rep = validate(_benchmark_model(), jump)
    assert "history.continuity" in [c.name for c in rep.failures()]


def test_validate_is_deterministic_for_fixed_seed():
    m = _benchmark_model()
    a = str(validate(m, seed=3))
    b = str(validate(m, seed=3))
    assert a == b


def test_nonautonomous_kernel_evaluates():
    k = NonautonomousKernel(fn=lambda t, s: np.exp(-(t - s)), tau_max=2.0)
    v = k(1.0, np.array([0.5]))
    assert v[0] == pytest.approx(math.exp(-0.5))
