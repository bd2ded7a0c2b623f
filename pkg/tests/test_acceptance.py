"""End-to-end acceptance checks.

One test per criterion; each prints an explicit PASS/FAIL line through the
shared report sink so the verdicts survive in the terminal summary.
"""

import math

import numpy as np

from qcurv.asymptotics import SweepResult, fit_exponent, run_sweep
from qcurv.barycenter_homology import (ChainComplexGF2, barycenter_complex,
                                       barycentric_subdivision, homology,
                                       triangulate_model)
from qcurv.bubbles import (BubbleSpec, Configuration, b_profile, flat_r,
                           radial_polyharmonic_adaptive, residual_sup_ratio)
from qcurv.energy import (HarmonicTerm, PerturbedField, energy, eps_entry,
                          gap_entry, interactions, pq_interaction,
                          repulsion_layout, select_parameters, self_entry,
                          sum_energy_report)
from qcurv.manifold import (QUOTIENT, SPHERE, chart_at, geodesic_distance,
                            make_model, sphere_volume)
from qcurv.operators import (apply_gjms, gjms_constants, gjms_eigenvalue,
                             green)

from _acceptance_report import record


def _sphere(n):
    return make_model(SPHERE, n)


def _e(i, n_amb=6):
    v = np.zeros(n_amb)
    v[i] = 1.0
    return v


def test_criterion_01_constants():
    worst = 0.0
    for n, k in ((5, 1), (7, 2), (9, 3)):
        cst = gjms_constants(n, k)
        worst = max(worst, abs(cst.c ** cst.s
                               / (cst.b * cst.norm_2star_minus1) - 1.0))
        worst = max(worst, abs(cst.norm_2star ** (2.0 * k / n)
                               / cst.Y_sphere - 1.0))
        rayleigh = gjms_eigenvalue(cst, 0) * sphere_volume(n) ** (2.0 * k / n)
        worst = max(worst, abs(rayleigh / cst.Y_sphere - 1.0))
    ok = worst < 1e-7
    assert record(1, "constants", ok, f"max rel dev {worst:.2e}")


def test_criterion_02_flat_pde():
    worst = 0.0
    for n, k in ((5, 1), (7, 2)):
        cst = gjms_constants(n, k)
        r = np.linspace(0.2, 3.0, 200)
        vals, _ = radial_polyharmonic_adaptive(
            lambda rr: b_profile(cst, 1.0, rr), r, n, k, h0=0.04, levels=4)
        target = b_profile(cst, 1.0, r) ** (cst.two_star - 1.0)
        worst = max(worst, float(np.max(np.abs(vals - target))))
    ok = worst <= 1e-6
    assert record(2, "flat pde identity", ok, f"sup defect {worst:.2e}")


def test_criterion_03_eigenvalues():
    model = _sphere(5)
    cst = gjms_constants(5, 1)
    x_low = np.zeros(6)
    x_low[0], x_low[1] = math.cos(0.3), math.sin(0.3)
    x_high = np.array([0.0, 0.5, 0.6, math.sqrt(1.0 - 0.61), 0.0, 0.0])
    cases = (
        (0, lambda p: np.ones(len(p)), x_low, 1.0),
        (1, lambda p: p[:, 1], x_low, x_low[1]),
        (2, lambda p: p[:, 1] * p[:, 2], x_high, x_high[1] * x_high[2]),
        (3, lambda p: p[:, 1] * p[:, 2] * p[:, 3], x_high,
         x_high[1] * x_high[2] * x_high[3]),
    )
    worst = 0.0
    for ell, f, x, fx in cases:
        chart = chart_at(model, cst, x)
        got = apply_gjms(model, cst, chart, f, x)
        want = gjms_eigenvalue(cst, ell) * fx
        worst = max(worst, abs(got / want - 1.0))
    ok = worst < 1e-4
    assert record(3, "eigenvalue covariance", ok, f"max rel dev {worst:.2e}")


def test_criterion_04_green_and_mass():
    from qcurv.operators import mass
    model = _sphere(5)
    cst = gjms_constants(5, 1)
    x = _e(0)
    theta = 1e-3
    y = math.cos(theta) * _e(0) + math.sin(theta) * _e(1)
    d = float(flat_r(model, x, y[None, :])[0])
    green_dev = abs(green(model, cst, x, y) * d ** 3 / cst.b - 1.0)
    sphere_mass = mass(model, cst, x)
    quotient = make_model(QUOTIENT, 5)
    rng = np.random.default_rng(7)
    values = []
    for _ in range(3):
        xi = rng.normal(size=6)
        xi /= np.linalg.norm(xi)
        rep = mass(quotient, cst, xi)
        values.append(rep.A)
    spread = max(values) - min(values)
    ok = (green_dev < 1e-4 and sphere_mass.converged
          and abs(sphere_mass.A) < 1e-8
          and min(values) > 0 and spread < 1e-8)
    assert record(4, "green function and mass", ok,
                  f"green dev {green_dev:.2e}, sphere mass "
                  f"{sphere_mass.A:.2e}, quotient spread {spread:.2e}")


def test_criterion_05_residual():
    ok = True
    details = []
    for n, k in ((5, 1), (7, 2)):
        model = _sphere(n)
        cst = gjms_constants(n, k)
        sups, cores_ok = [], True
        for mu in np.geomspace(1e-3, 1e-1, 5):
            spec = BubbleSpec(center=tuple(_e(0, n + 1)), mu=mu, delta=0.3)
            rep = residual_sup_ratio(model, cst, spec)
            sups.append(rep["sup_ratio"])
            limit = 1e-6 * mu ** (-(n + 2 * k) / 2.0)
            cores_ok = cores_ok and rep["core_sup"] <= limit
        spread = max(sups) / min(sups)
        ok = ok and spread < 10.0 and cores_ok
        details.append(f"n={n} ratio spread {spread:.2f} core_ok {cores_ok}")
    assert record(5, "residual bounds", ok, "; ".join(details))


def test_criterion_06_interactions():
    model = _sphere(5)
    cst = gjms_constants(5, 1)

    def pair(sep, mu):
        c2 = np.zeros(6)
        c2[0], c2[1] = math.cos(sep), math.sin(sep)
        return (BubbleSpec(center=tuple(_e(0)), mu=mu),
                BubbleSpec(center=tuple(c2), mu=mu))

    ratios = []
    last = None
    for mu in np.geomspace(1e-3, 1e-2, 5):
        config = Configuration(model=model, constants=cst,
                               specs=pair(0.3, mu))
        last = interactions(config)
        ratios.append(last.q_over_eps[0, 1])
    bracket = max(ratios) / min(ratios)
    # the reports iterate from the largest scale down; rebuild at the
    # smallest mu for the comparison against the flat-bubble constant
    config = Configuration(model=model, constants=cst, specs=pair(0.3, 1e-3))
    small = interactions(config)
    limit_dev = abs(small.q_over_eps[0, 1] / cst.norm_2star_minus1 - 1.0)
    l_vs_q = small.l_vs_q[0, 1]

    # mixed-power couplings against the pairwise interaction scale
    slopes = {}
    logs = {}
    for label, p, q in (("q", cst.two_star - 1.0, 1.0),
                        ("balanced", cst.two_star / 2.0, cst.two_star / 2.0)):
        eps_list, val_list = [], []
        for mu in np.geomspace(1e-4, 1e-2, 8):
            config = Configuration(model=model, constants=cst,
                                   specs=pair(0.8, mu))
            eps_list.append(eps_entry(model, cst, *config.specs))
            val_list.append(abs(pq_interaction(config, 0, 1, p, q,
                                               rel_tol=1e-9)))
        order = np.argsort(eps_list)
        sweep = SweepResult(quantity=label, parameter="eps",
                            values=tuple(np.array(eps_list)[order]),
                            measured=tuple(np.array(val_list)[order]),
                            errors=(0.0,) * len(order),
                            template={"p": p, "q": q})
        fit = fit_exponent(sweep)
        slopes[label] = fit.slope
        logs[label] = fit.log_factor
    ok = (bracket < 10.0 and l_vs_q <= 0.05 and limit_dev <= 0.05
          and abs(slopes["q"] - 1.0) <= 0.15 and logs["balanced"])
    assert record(6, "interaction couplings", ok,
                  f"bracket {bracket:.2f}, |L-Q|/Q {l_vs_q:.3f}, limit dev "
                  f"{limit_dev:.3f}, q slope {slopes['q']:.3f}, balanced "
                  f"slope {slopes['balanced']:.3f} log {logs['balanced']}")


def test_criterion_07_decay_slopes():
    model = make_model(QUOTIENT, 5)
    cst = gjms_constants(5, 1)
    center = tuple(_e(0))
    mus = tuple(np.geomspace(1e-3, 2e-2, 8))

    def meas_self(mu):
        v, e = self_entry(model, cst, BubbleSpec(center=center, mu=mu),
                          rel_tol=1e-11)
        return abs(v), e

    def meas_gap(mu):
        v, e = gap_entry(model, cst, BubbleSpec(center=center, mu=mu),
                         rel_tol=1e-11)
        return abs(v), e

    def meas_energy_gap(mu):
        rep = energy(Configuration(model=model, constants=cst,
                                   specs=(BubbleSpec(center=center, mu=mu),)),
                     rel_tol=1e-12)
        return abs(rep.value - cst.Y_sphere), rep.quad_error

    slopes = {}
    for name, fn, target, tol in (("self", meas_self, 3.0, 0.15),
                                  ("gap", meas_gap, 5.0, 0.2),
                                  ("energy", meas_energy_gap, 3.0, 0.15)):
        fit = fit_exponent(run_sweep(name, fn, {}, "mu", mus))
        slopes[name] = (fit.slope, abs(fit.slope - target) <= tol)
    ok = all(flag for _, flag in slopes.values())
    assert record(7, "decay slopes", ok,
                  ", ".join(f"{k} {v:.3f}" for k, (v, _) in slopes.items()))


def test_criterion_08_energy_loss():
    model = _sphere(5)
    cst = gjms_constants(5, 1)
    ok = True
    details = []

    def check(specs):
        config = Configuration(model=model, constants=cst, specs=specs)
        return sum_energy_report(config, rel_tol=1e-9)

    # two antipodal bubbles at a sweep of scales: the strict bound must
    # hold for some scale with a margin well above the quadrature error
    strict_found = False
    loss_all = True
    for mu in (0.01, 0.02, 0.03):
        rep = check((BubbleSpec(center=tuple(_e(0)), mu=mu),
                     BubbleSpec(center=tuple(-_e(0)), mu=mu)))
        loss_all = loss_all and rep["bound_loss_ok"]
        if rep["strict_ok"] and rep["margin_strict"] > 10.0 * rep["quad_error"]:
            strict_found = True
            details.append(f"d=2 mu={mu:g} margin/err "
                           f"{rep['margin_strict'] / rep['quad_error']:.0f}")
    ok = ok and strict_found and loss_all
    for d in (3, 4, 5):
        centers = repulsion_layout(model, cst, d)
        rep = check(tuple(BubbleSpec(center=tuple(c), mu=0.02)
                          for c in centers))
        good = (rep["strict_ok"] and rep["bound_loss_ok"]
                and rep["margin_strict"] > 10.0 * rep["quad_error"])
        ok = ok and good
        details.append(f"d={d} margin/err "
                       f"{rep['margin_strict'] / rep['quad_error']:.0f}")
    assert record(8, "energy loss bounds", ok, ", ".join(details))


def test_criterion_09_selection():
    model = _sphere(5)
    cst = gjms_constants(5, 1)
    c2 = np.zeros(6)
    c2[0], c2[1] = math.cos(2.0), math.sin(2.0)
    truth = (BubbleSpec(center=tuple(_e(0)), mu=0.012, weight=1.0),
             BubbleSpec(center=tuple(c2), mu=0.02, weight=1.4))
    truth_sorted = sorted(truth, key=lambda s: s.center)
    config = Configuration(model=model, constants=cst, specs=truth)

    def errors(res):
        errs = []
        for sp, w, ctr, mu in zip(truth_sorted, res.weights, res.centers,
                                  res.scales):
            errs.append(geodesic_distance(model, sp.center_array,
                                          np.array(ctr)))
            errs.append(abs(mu - sp.mu) / sp.mu)
            errs.append(abs(w - sp.weight) / sp.weight)
        return max(errs)

    res = select_parameters(config, 2, model, cst)
    exact_err = errors(res)
    exact_ok = res.converged and not res.degenerate and exact_err < 1e-6

    # perturbation carrying one percent of the configuration's energy norm
    rep = interactions(config)
    w = np.array([s.weight for s in truth])
    f_sq = float(w @ rep.L @ w)
    lam1 = gjms_eigenvalue(cst, 1)
    h_sq = lam1 * sphere_volume(5) / 6.0
    coef = 0.01 * math.sqrt(f_sq / h_sq)
    # perturb transversally to the plane of the two centers: in-plane
    # directions mostly slide the bubbles along their own degeneracies
    field = PerturbedField(config=config,
                           harmonics=(HarmonicTerm(coef=coef,
                                                   vector=tuple(_e(2))),))
    res_p = select_parameters(field, 2, model, cst)
    pert_err = errors(res_p)
    pert_ok = res_p.converged and not res_p.degenerate and pert_err <= 0.03
    ok = exact_ok and pert_ok
    assert record(9, "parameter selection", ok,
                  f"exact err {exact_err:.2e}, perturbed err {pert_err:.2e}")


def test_criterion_10_topology():
    circle = triangulate_model("circle", 4)
    sphere2 = triangulate_model("sphere2", 1)
    pair = barycenter_complex(circle, 2)
    dd_ok = all(
        ChainComplexGF2([[frozenset(s) for s in lev]
                         for lev in cx.simplices]).check_dd_zero()
        for cx in (circle, sphere2, pair.ambient))
    top_ok = (homology(circle)[-1] == 1 and homology(sphere2)[-1] == 1)
    rel = homology(pair, relative=True)
    rel_ok = rel[3] >= 1
    sub_ok = all(homology(cx) == homology(barycentric_subdivision(cx))
                 for cx in (circle, sphere2))
    ok = dd_ok and top_ok and rel_ok and sub_ok
    assert record(10, "barycenter topology", ok,
                  f"dd_zero {dd_ok}, top classes {top_ok}, relative "
                  f"{tuple(rel)}, subdivision stable {sub_ok}")
