import math

import numpy as np
import pytest

from memdde.analysis import (
    CharacteristicCubic,
    chain_jacobian_cubic,
    characteristic_cubic,
    cubic_roots,
    equilibria,
    hopf_closed_form,
    hopf_threshold_numeric,
    linearize,
    oscillation_onset_scan,
    paper_cubic,
    routh_hurwitz,
    sweep,
)
from memdde.solver import SolveConfig


def _cubic(A, B, C):
    return CharacteristicCubic(A=float(A), B=float(B), C=float(C),
                               provenance="derived")


# ---------------------------------------------------------------------------
# Equilibria
# ---------------------------------------------------------------------------

def test_equilibria_examples():
    assert equilibria(2.0, 10.0, 1.0, 1.0) == pytest.approx([0.0, 5.0])
    assert equilibria(1.0, 3.0, 0.0, 1.0) == pytest.approx([0.0, 3.0])
    assert equilibria(1.0, 1.0, 2.0, 1.0) == [0.0]


def test_equilibria_residuals_on_random_parameters():
    rng = np.random.default_rng(2)
    for _ in range(100):
        r, K_c, alpha = rng.uniform(0.1, 3.0, 3)
        kappa = rng.uniform(0.5, 1.0)
        eqs = equilibria(r, K_c, alpha, kappa)
        for x in eqs:
            assert abs(r * x * (1 - x / K_c) - alpha * kappa * x) \
                <= 1e-12 * max(1.0, r * K_c)
        assert (len(eqs) == 2) == (r > alpha * kappa)


# ---------------------------------------------------------------------------
# Linearization (two documented variants)
# ---------------------------------------------------------------------------

def test_linearize_at_origin():
    lin = linearize(1.7, 1.0, 0.5, 1.0, 0.0, "eq4-direct")
    assert lin.a_inst == pytest.approx(1.7)


def test_linearize_direct_at_positive_equilibrium():
    lin = linearize(1.0, 1.0, 0.5, 1.0, 0.5, "eq4-direct")
    assert lin.a_inst == pytest.approx(0.0)


def test_linearize_simplified_variant_differs():
    lin = linearize(1.0, 1.0, 0.5, 1.0, 0.5, "paper-simplified")
    assert lin.a_inst == pytest.approx(-0.5)


def test_linearize_direct_matches_finite_difference_of_rhs():
    # a_inst is d/dx of r x (1 - x/K_c) at x*, holding the memory input fixed
    r, K_c, alpha, x_star = 1.3, 2.0, 0.4, 2.0 * (1 - 0.4 / 1.3)
    lin = linearize(r, K_c, alpha, 1.0, x_star, "eq4-direct")
    eps = 1e-6
    f = lambda x: r * x * (1 - x / K_c)
    fd = (f(x_star + eps) - f(x_star - eps)) / (2 * eps)
    assert lin.a_inst == pytest.approx(fd, abs=1e-8)


def test_linearize_simplified_needs_positive_equilibrium():
    with pytest.raises(ValueError):
        linearize(1.0, 1.0, 0.5, 1.0, 0.0, "paper-simplified")


# ---------------------------------------------------------------------------
# Characteristic cubics
# ---------------------------------------------------------------------------

def test_derived_cubic_coefficients():
    lin = linearize(1.0, 1.0, 0.5, 1.0, 0.5, "eq4-direct")  # a_inst = 0
    c = characteristic_cubic(lin, 0.5, 1.0)
    assert (c.A, c.B, c.C) == pytest.approx((2.0, 1.0, 0.5))


def test_published_cubic_coefficients():
    c = paper_cubic(1.0, 2.0 / 3.0, 1.0)
    assert (c.A, c.B, c.C) == pytest.approx((7 / 3, 5 / 3, -1 / 3))


def test_memoryless_cubic_factorizes():
    # with no memory coupling the roots are {a, -beta, -beta}
    lin = linearize(1.0, 1.0, 0.0, 1.0, 1.0, "eq4-direct")  # a_inst = -1
    c = characteristic_cubic(lin, 0.0, 2.0)
    roots = sorted(cubic_roots(c), key=lambda z: z.real)
    assert roots[0].real == pytest.approx(-2.0, abs=1e-9)
    assert roots[1].real == pytest.approx(-2.0, abs=1e-9)
    assert roots[2].real == pytest.approx(-1.0, abs=1e-9)


def test_chain_jacobian_agrees_with_derived_cubic():
    rng = np.random.default_rng(9)
    for _ in range(50):
        r = rng.uniform(0.5, 3.0)
        alpha = rng.uniform(0.05, 0.95) * r
        K_c = rng.uniform(0.3, 5.0)
        beta = rng.uniform(0.3, 4.0)
        x1 = K_c * (1 - alpha / r)
        lin = linearize(r, K_c, alpha, 1.0, x1, "eq4-direct")
        c1 = characteristic_cubic(lin, alpha, beta)
        c2 = chain_jacobian_cubic(r, K_c, alpha, beta)
        for a, b in ((c1.A, c2.A), (c1.B, c2.B), (c1.C, c2.C)):
            assert abs(a - b) <= 1e-12 * max(abs(a), abs(b), 1.0)


# ---------------------------------------------------------------------------
# Root solving and the stability criterion
# ---------------------------------------------------------------------------

def test_cubic_roots_cube_roots_of_unity():
    roots = cubic_roots(_cubic(0, 0, -1))
    assert roots[0] == pytest.approx(1.0 + 0j, abs=1e-12)
    assert roots[1] == pytest.approx(-0.5 + 0.8660254037844386j, abs=1e-12)
    assert roots[2] == pytest.approx(-0.5 - 0.8660254037844386j, abs=1e-12)


def test_cubic_roots_ordering_with_ties():
    roots = cubic_roots(_cubic(0, 1, 0))
    assert roots[0] == pytest.approx(1j, abs=1e-12)
    assert roots[1] == pytest.approx(0.0, abs=1e-12)
    assert roots[2] == pytest.approx(-1j, abs=1e-12)


def test_cubic_root_residuals_random():
    rng = np.random.default_rng(4)
    for _ in range(200):
        A, B, C = rng.normal(scale=5.0, size=3)
        c = _cubic(A, B, C)
        scale = max(1.0, abs(A), abs(B), abs(C))
        for z in cubic_roots(c):
            res = abs(z ** 3 + A * z ** 2 + B * z + C)
            assert res <= 1e-10 * scale


def test_routh_hurwitz_examples():
    assert routh_hurwitz(_cubic(2, 1, 0.5)) == "stable"
    assert routh_hurwitz(paper_cubic(1.0, 2 / 3, 1.0)) == "unstable"
    assert routh_hurwitz(_cubic(1, 1, 1)) == "marginal"


def test_routh_hurwitz_agrees_with_root_signs():
    rng = np.random.default_rng(6)
    for _ in range(200):
        A, B, C = rng.normal(scale=3.0, size=3)
        c = _cubic(A, B, C)
        verdict = routh_hurwitz(c)
        max_re = max(z.real for z in cubic_roots(c))
        if verdict == "stable":
            assert max_re < 1e-8
        elif verdict == "unstable":
            assert max_re > -1e-8


# ---------------------------------------------------------------------------
# Critical-threshold computations
# ---------------------------------------------------------------------------

ALPHA_H = (17.0 - math.sqrt(33.0)) / 16.0  # threshold of the derived pipeline
                                           # at r = K_c = rate = 1


def test_closed_form_thresholds():
    h1 = hopf_closed_form(1.0, 1.0)
    assert h1.alpha_H == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert h1.omega_H == pytest.approx(math.sqrt(5.0 / 3.0), abs=1e-12)
    h2 = hopf_closed_form(2.0, 1.0)
    assert h2.alpha_H == pytest.approx(1.5, abs=1e-12)
    assert h2.omega_H == pytest.approx(math.sqrt(2.0), abs=1e-12)


def test_closed_form_threshold_large_rate_limit():
    h = hopf_closed_form(1.0, 1e6)
    assert h.alpha_H == pytest.approx(0.5, abs=1e-5)


def test_numeric_threshold_derived_pipeline():
    res = hopf_threshold_numeric(1.0, 1.0, 1.0, "derived-eq4")
    assert res.status == "found"
    assert res.alpha_H == pytest.approx(ALPHA_H, abs=1e-6)
    assert res.omega_H == pytest.approx(math.sqrt(3.0 - 4.0 * ALPHA_H),
                                        abs=1e-6)


def test_numeric_threshold_published_pipeline_has_no_crossing():
    res = hopf_threshold_numeric(1.0, 1.0, 1.0, "paper-eq7",
                                 alpha_range=(1e-6, 1.0 - 1e-6))
    assert res.status == "no-crossing"


def test_numeric_threshold_respects_restricted_range():
    res = hopf_threshold_numeric(1.0, 1.0, 1.0, "derived-eq4",
                                 alpha_range=(0.05, 0.4))
    assert res.status == "no-crossing"


def test_numeric_threshold_root_pair_on_axis():
    res = hopf_threshold_numeric(1.0, 1.0, 1.0, "derived-eq4")
    roots = sorted(res.roots, key=lambda z: -z.imag)
    pair = [z for z in roots if abs(z.imag) > 1e-6]
    assert len(pair) == 2
    for z in pair:
        assert abs(z.real) <= 1e-8
    third = [z for z in roots if abs(z.imag) <= 1e-6][0]
    assert third.real < 0


def test_frequency_identity_at_numeric_threshold():
    from memdde.analysis import _cubic_for
    res = hopf_threshold_numeric(1.0, 1.0, 1.0, "derived-eq4")
    c = _cubic_for(res.alpha_H, 1.0, 1.0, "derived-eq4")
    assert abs(res.omega_H ** 2 - c.B) <= 1e-8


def test_transversality_at_numeric_threshold():
    from memdde.analysis import _cubic_for

    def max_re(alpha):
        return max(z.real
                   for z in cubic_roots(_cubic_for(alpha, 1.0, 1.0,
                                                   "derived-eq4")))

    res = hopf_threshold_numeric(1.0, 1.0, 1.0, "derived-eq4")
    slope = (max_re(res.alpha_H + 1e-4) - max_re(res.alpha_H - 1e-4)) / 2e-4
    assert slope > 0


def test_threshold_scale_invariance_in_carrying_capacity():
    ref = None
    for K_c in (0.5, 1.0, 10.0):
        x1 = K_c * (1 - 0.5)
        lin = linearize(1.0, K_c, 0.5, 1.0, x1, "eq4-direct")
        c = characteristic_cubic(lin, 0.5, 1.0)
        eqs = equilibria(1.0, K_c, 0.5, 1.0)
        assert eqs[1] == pytest.approx(0.5 * K_c)
        if ref is None:
            ref = (lin.a_inst, c.A, c.B, c.C)
        else:
            assert (lin.a_inst, c.A, c.B, c.C) == pytest.approx(ref, abs=1e-13)


# ---------------------------------------------------------------------------
# Parameter sweep and simulation onset
# ---------------------------------------------------------------------------

def test_sweep_shape_and_order():
    betas = np.linspace(0.5, 2.0, 3)
    alphas = np.linspace(0.1, 0.9, 4)
    rows = sweep(1.0, 1.0, betas, alphas)
    assert len(rows) == 12
    assert [r.beta for r in rows[:4]] == [betas[0]] * 4
    assert [r.alpha for r in rows[:4]] == pytest.approx(list(alphas))


def test_sweep_single_cell_matches_threshold_functions():
    rows = sweep(1.0, 1.0, [1.0], [0.5])
    row = rows[0]
    assert row.alpha_H_closed == pytest.approx(2.0 / 3.0)
    assert row.alpha_H_numeric == pytest.approx(ALPHA_H, abs=1e-6)
    assert row.rh_verdict == "stable"


def test_sweep_crosses_zero_once_along_alpha():
    alphas = np.linspace(0.05, 0.95, 37)
    rows = sweep(1.0, 1.0, [1.0], alphas)
    signs = np.sign([row.max_re_lambda for row in rows])
    changes = np.sum(np.abs(np.diff(signs)) > 0)
    assert changes == 1


def test_sweep_is_deterministic_and_worker_independent():
    betas = np.linspace(0.5, 2.0, 4)
    alphas = np.linspace(0.1, 0.9, 4)
    a = sweep(1.0, 1.0, betas, alphas, workers=1)
    b = sweep(1.0, 1.0, betas, alphas, workers=3)
    assert [repr(r) for r in a] == [repr(r) for r in b]


def test_onset_scan_pure_logistic_settles():
    sim = SolveConfig(h=0.02, t_end=200.0, memory_mode="chain")
    res = oscillation_onset_scan(1.0, 1.0, 1.0, [1e-9, 0.5], sim=sim)
    for row in res.rows:
        assert row.status == "ok"
        assert row.amplitude <= 1e-3
    assert res.alpha_c is None
