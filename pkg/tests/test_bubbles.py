import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qcurv.bubbles import (BubbleSpec, Configuration, admissibility,
                           b_profile, bubble_field, config_field, cutoff_chi,
                           radial_polyharmonic_adaptive, residual_radial,
                           residual_sup_ratio, tilde_profile)


def test_cutoff_plateaus_and_midpoint():
    t = np.linspace(0.0, 1.0, 11)
    assert np.allclose(cutoff_chi(t), 1.0)
    t = np.linspace(2.0, 5.0, 11)
    assert np.allclose(cutoff_chi(t), 0.0)
    assert abs(cutoff_chi(1.5) - 0.5) < 1e-14


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 3.0))
def test_cutoff_partition_and_range(t):
    v = cutoff_chi(t)
    assert 0.0 <= v <= 1.0
    assert abs(cutoff_chi(t) + cutoff_chi(3.0 - t) - 1.0) < 1e-12


def test_cutoff_transition_is_smooth():
    # derivatives through order 2k+2 = 6 stay bounded across the transition
    t = np.linspace(0.5, 2.5, 4001)
    h = t[1] - t[0]
    vals = cutoff_chi(t)
    for order in range(1, 7):
        vals = np.gradient(vals, h)
        assert np.all(np.isfinite(vals))
        assert np.max(np.abs(vals)) < 10.0 ** (2 * order)


def test_spec_validation():
    with pytest.raises(ValueError):
        BubbleSpec(center=(1, 0, 0, 0, 0, 0), mu=-1.0)
    with pytest.raises(ValueError):
        BubbleSpec(center=(1, 0, 0, 0, 0, 0), mu=0.1, delta=1.5)
    with pytest.raises(ValueError):
        BubbleSpec(center=(1, 0, 0, 0, 0, 0), mu=0.1, weight=0.0)


def test_admissibility_thresholds(c51, e1):
    spec = BubbleSpec(center=tuple(e1), mu=1e-4)
    rep = admissibility(c51, spec)
    assert rep["lcf_admissible"]
    base = 0.3 / np.sqrt(15.0)
    assert abs(rep["lcf_threshold"] - base ** 2.5) < 1e-15


@pytest.mark.parametrize("n,k", [(5, 1), (7, 2)])
def test_flat_pde_identity(n, k):
    # Delta^k B0 = B0^{2*-1} for the flat extremal profile
    from qcurv.operators import gjms_constants
    cst = gjms_constants(n, k)
    prof = lambda r: b_profile(cst, 1.0, r)
    r = np.linspace(0.2, 3.0, 50)
    vals, _ = radial_polyharmonic_adaptive(prof, r, n, k, h0=0.04, levels=4)
    target = b_profile(cst, 1.0, r) ** (cst.two_star - 1.0)
    assert np.max(np.abs(vals - target)) < 1e-6


def test_tilde_profile_matches_bubble_core_and_green_tail(s5, c51, e1):
    spec = BubbleSpec(center=tuple(e1), mu=0.01, delta=0.3)
    r_core = np.array([0.05, 0.2])
    assert np.allclose(tilde_profile(s5, c51, spec, r_core),
                       b_profile(c51, 0.01, r_core))
    r_far = np.array([0.7, 1.5])
    tail = (c51.c ** c51.s / c51.b * 0.01 ** c51.s
            * c51.b * r_far ** (2 - 5))
    assert np.allclose(tilde_profile(s5, c51, spec, r_far), tail)


def test_bubble_field_radial_consistency(s5, c51, e1):
    spec = BubbleSpec(center=tuple(e1), mu=0.01, delta=0.3)
    chart_dirs = np.array([[np.cos(a), np.sin(a), 0, 0, 0, 0]
                           for a in (0.1, 0.4, 1.0)])
    vt = bubble_field(s5, c51, spec, "Vtilde", chart_dirs)
    from qcurv.bubbles import flat_r
    r = flat_r(s5, e1, chart_dirs)
    assert np.allclose(vt, tilde_profile(s5, c51, spec, r), rtol=1e-12)


def test_config_field_superposes(s5, c51, e1):
    e2 = np.zeros(6)
    e2[1] = 1.0
    s1 = BubbleSpec(center=tuple(e1), mu=0.01, weight=1.0)
    s2 = BubbleSpec(center=tuple(e2), mu=0.02, weight=2.0)
    config = Configuration(model=s5, constants=c51, specs=(s1, s2))
    x = np.array([[np.cos(0.5), np.sin(0.5), 0, 0, 0, 0]])
    total = config_field(config, x)
    parts = (bubble_field(s5, c51, s1, "V", x)
             + 2.0 * bubble_field(s5, c51, s2, "V", x))
    assert np.allclose(total, parts)


def test_residual_vanishes_in_core(s5, c51, e1):
    spec = BubbleSpec(center=tuple(e1), mu=0.01, delta=0.3)
    r = np.geomspace(1e-3, 0.9 * 0.3, 40)
    res = residual_radial(s5, c51, spec, r)
    assert np.max(np.abs(res)) < 1e-6 * 0.01 ** (-(5 + 2) / 2.0)


def test_residual_ratio_mu_stable(s5, c51, e1):
    sups = []
    for mu in (1e-3, 1e-2, 1e-1):
        spec = BubbleSpec(center=tuple(e1), mu=mu, delta=0.3)
        sups.append(residual_sup_ratio(s5, c51, spec)["sup_ratio"])
    assert max(sups) / min(sups) < 10.0
