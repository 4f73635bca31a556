import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

import oracles
from optipairs import ModelParams, basis_eval, eta, structure_vectors
from optipairs.ou_kernel import KernelConfig
from reference import PHI_AT_B

finite_x = st.floats(-1.0, 1.0, allow_nan=False)
param_sets = st.builds(
    ModelParams,
    a=st.floats(0.3, 3.0),
    b=st.floats(-0.2, 0.2),
    sigma=st.floats(0.2, 1.0),
    rho=st.floats(0.02, 0.5),
    K=st.floats(0.0, 0.01),
    M=st.just(-0.5),
)


def test_eta_at_one():
    assert eta(1.0, ModelParams()) == pytest.approx(math.exp(-0.5), rel=1e-15)
    assert eta(1.0, ModelParams(a=2.0, rho=0.3)) == pytest.approx(math.exp(-0.5), rel=1e-15)


@pytest.mark.parametrize("t", [0.0, -1.0])
def test_eta_domain(t):
    with pytest.raises(ValueError):
        eta(t, ModelParams())


def test_eta_power_law_near_zero():
    p = ModelParams()
    t = np.array([1e-8, 1e-6])
    ratio = eta(t, p) / t ** (p.nu - 1)
    assert np.allclose(ratio, 1.0, rtol=1e-10)


def test_eta_integral_matches_gamma():
    p = ModelParams()
    nu = p.nu
    expected = 2 ** (nu / 2 - 1) * special.gamma(nu / 2)
    # independent route: scipy quad with the algebraic singularity weight
    val, _ = integrate.quad(lambda t: math.exp(-t * t / 2), 0, 1, weight="alg", wvar=(nu - 1, 0))
    tail, _ = integrate.quad(lambda t: eta(t, p), 1, np.inf)
    assert val + tail == pytest.approx(expected, rel=1e-9)
    assert expected == pytest.approx(PHI_AT_B, rel=1e-14)


def test_phi_at_equilibrium_is_gamma_value():
    be = basis_eval(0.0, ModelParams())
    assert be.phi1 == pytest.approx(PHI_AT_B, rel=1e-8)
    assert be.phi2 == pytest.approx(PHI_AT_B, rel=1e-8)


def test_phi_symmetric_at_b():
    p = ModelParams(b=0.13)
    be = basis_eval(p.b, p)
    assert be.phi1 == pytest.approx(be.phi2, rel=1e-12)
    assert be.dphi1 == pytest.approx(-be.dphi2, rel=1e-12)


@pytest.mark.parametrize("x", [-1.0, -0.2, -0.05, 0.0, 0.07, 0.4, 1.0, 3.0])
def test_against_parabolic_cylinder_oracle(x):
    p = ModelParams()
    be = basis_eval(x, p)
    ref = [float(v) for v in oracles.phi(x, p.a, p.b, p.sigma, p.rho)]
    got = [be.phi1, be.phi2, be.dphi1, be.dphi2]
    for g, r in zip(got, ref):
        assert g == pytest.approx(r, rel=1e-10)


def test_ode_residual_random_points():
    p = ModelParams()
    xs = np.random.default_rng(0).uniform(-1, 1, 1000)
    be = basis_eval(xs, p)
    r1, r2 = be.ode_residual(p)
    assert np.max(np.abs(r1) / (1 + np.abs(be.phi1))) <= 1e-8
    assert np.max(np.abs(r2) / (1 + np.abs(be.phi2))) <= 1e-8


def test_derivatives_match_finite_differences():
    p = ModelParams()
    xs = np.linspace(-0.9, 0.9, 37)
    h = 1e-5
    lo, mid, hi = basis_eval(xs - h, p), basis_eval(xs, p), basis_eval(xs + h, p)
    for f, df, d2f in (("phi1", "dphi1", "d2phi1"), ("phi2", "dphi2", "d2phi2")):
        fd1 = (getattr(hi, f) - getattr(lo, f)) / (2 * h)
        fd2 = (getattr(hi, df) - getattr(lo, df)) / (2 * h)
        assert np.allclose(fd1, getattr(mid, df), rtol=1e-6)
        assert np.allclose(fd2, getattr(mid, d2f), rtol=1e-6)


def test_array_and_scalar_agree():
    p = ModelParams()
    xs = np.array([[-0.3, 0.0], [0.2, 0.5]])
    be = basis_eval(xs, p)
    assert be.phi1.shape == (2, 2)
    assert be.phi1[1, 0] == basis_eval(0.2, p).phi1
    assert be.matrix().shape == (2, 2, 2, 2)


def test_nonfinite_x_rejected():
    with pytest.raises(ValueError):
        basis_eval(float("nan"), ModelParams())


def test_far_out_overflows_loudly():
    with pytest.raises(OverflowError):
        basis_eval(40.0, ModelParams())


def test_unreachable_tolerance_raises():
    cfg = KernelConfig(abs_tol=0.0, rel_tol=1e-20, max_intervals=20)
    with pytest.raises(ArithmeticError) as info:
        basis_eval(0.1, ModelParams(), cfg)
    assert hasattr(info.value, "error_estimate")


def test_structure_vectors_identities():
    p = ModelParams()
    xs = np.linspace(-0.5, 0.5, 21)
    R, P1, P2 = structure_vectors(xs, p)
    assert np.allclose(R, [0.0, 1.0], atol=1e-12)
    # P1 - P2 = Phi^-1 (2K, 0)
    be = basis_eval(xs, p)
    diff = P1 - P2
    back0 = be.phi1 * diff[:, 0] + be.phi2 * diff[:, 1]
    back1 = be.dphi1 * diff[:, 0] + be.dphi2 * diff[:, 1]
    assert np.allclose(back0, 2 * p.K, atol=1e-14)
    assert np.allclose(back1, 0.0, atol=1e-14)


def test_structure_vectors_collapse_without_cost():
    p = ModelParams(K=0.0)
    _, P1, P2 = structure_vectors(np.array([-0.1, 0.2]), p)
    assert np.array_equal(P1, P2)


@settings(max_examples=40, deadline=None)
@given(param_sets, finite_x)
def test_basis_invariants(p, x):
    be = basis_eval(x, p)
    assert be.phi1 > 0 and be.phi2 > 0
    assert be.dphi1 > 0 and be.dphi2 < 0
    assert be.det < 0
    r1, r2 = be.ode_residual(p)
    assert abs(r1) <= 1e-8 * (1 + be.phi1)
    assert abs(r2) <= 1e-8 * (1 + be.phi2)


@settings(max_examples=25, deadline=None)
@given(param_sets, st.floats(-0.8, 0.8), st.floats(0.01, 0.5))
def test_basis_monotone(p, x, dx):
    lo, hi = basis_eval(x, p), basis_eval(x + dx, p)
    assert hi.phi1 > lo.phi1
    assert hi.phi2 < lo.phi2


@settings(max_examples=25, deadline=None)
@given(param_sets, st.floats(-0.5, 0.5))
def test_mirror_symmetry(p, d):
    # phi1(b + d) = phi2(b - d)
    left = basis_eval(p.b + d, p)
    right = basis_eval(p.b - d, p)
    assert left.phi1 == pytest.approx(right.phi2, rel=1e-10)
