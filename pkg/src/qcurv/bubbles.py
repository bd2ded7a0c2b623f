"""Canonical, truncated, and glued bubbles, and their PDE residual.

The canonical profile B0(x) = (1 + |x|^2/c)^{(2k-n)/2} solves
Delta_0^k B0 = B0^{2*-1} on R^n. Its transplant onto a model manifold is
glued from the rescaled profile and the flat-gauge Green profile:

    B_{xi,mu}(x)  = mu^{s} / (mu^2 + c^{-1} d^2)^{s},   d = d_{g_xi}(x, xi),
    U             = chi(d/delta) B,
    Vtilde        = U + c^{s} b^{-1} mu^{s} (1 - chi(d/delta)) G_{g_xi}(x, xi),
    V             = Lambda_xi Vtilde,

with s = (n-2k)/2. In the exactly flat gauge all of these are radial in
d = |w|, so the residual P_g V - V^{2*-1} reduces to radial closed forms:
it vanishes identically on the core d < delta (exact identity) and beyond
2 delta (the Green profile is polyharmonic there); only the gluing annulus
needs differencing, done with nested 8th-order radial stencils.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .manifold import ManifoldModel, QUOTIENT, geodesic_distance
from .operators import GjmsConstants, gauge_green_profile


# ---------------------------------------------------------------------------
# Cutoff profile


def _f_exp(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def cutoff_chi(t):
    """chi(t) = f(2-t)/(f(2-t)+f(t-1)), f(s) = exp(-1/s) for s>0 else 0.

    Smooth, 1 on [0,1], 0 on [2,inf), chi(1.5) = 1/2.
    """
    t = np.asarray(t, dtype=float)
    scalar = (t.ndim == 0)
    t = np.atleast_1d(t)
    up = _f_exp(2.0 - t)
    down = _f_exp(t - 1.0)
    out = np.where(up + down > 0.0, up / np.where(up + down > 0, up + down, 1.0), 0.0)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class CutoffProfile:
    """Named transition profile; the default is the symmetric exp profile."""

    name: str = "symmetric-exp"

    def __call__(self, t):
        return cutoff_chi(t)


# ---------------------------------------------------------------------------
# Specs and configurations


@dataclass(frozen=True)
class BubbleSpec:
    """Center, scale, cutoff radius (flat-gauge units), and weight."""

    center: tuple
    mu: float
    delta: float = 0.3
    weight: float = 1.0

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("scale mu must be positive")
        if not (0 < self.delta < 1):
            raise ValueError("cutoff radius delta must lie in (0,1)")
        if self.weight <= 0:
            raise ValueError("weight must be positive")
        object.__setattr__(self, "center",
                           tuple(float(v) for v in np.asarray(self.center, dtype=float)))

    @property
    def center_array(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)


def admissibility(constants: GjmsConstants, spec: BubbleSpec) -> dict:
    """Both smallness branches, reported (not enforced by the operations)."""
    base = spec.delta / math.sqrt(constants.c)
    lcf_threshold = base ** (constants.n / 2.0)
    general_threshold = base ** 3
    return {
        "lcf_threshold": lcf_threshold,
        "general_threshold": general_threshold,
        "lcf_admissible": spec.mu < lcf_threshold,
        "general_admissible": spec.mu < general_threshold,
    }


@dataclass(frozen=True)
class Configuration:
    """A candidate field sum a_i V_{xi_i, mu_i} on a model."""

    model: ManifoldModel
    constants: GjmsConstants
    specs: tuple

    def __post_init__(self):
        if len(self.specs) == 0:
            raise ValueError("configuration needs at least one bubble")
        object.__setattr__(self, "specs", tuple(self.specs))
        for s in self.specs:
            self.model.check_point(s.center_array)

    @property
    def d(self) -> int:
        return len(self.specs)


# ---------------------------------------------------------------------------
# Radial profiles in the flat gauge (r = |w| = flat distance to the center)


def flat_r(model: ManifoldModel, center: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Flat-gauge distance d_{g_xi}(x, xi) = 2 tan(d_g(x, xi)/2)."""
    d = geodesic_distance(model, np.atleast_2d(np.asarray(x, dtype=float)), center)
    return 2.0 * np.tan(np.minimum(d, np.pi - 1e-15) / 2.0)


def b_profile(constants: GjmsConstants, mu: float, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    s = constants.s
    return mu ** s / (mu ** 2 + r ** 2 / constants.c) ** s


def tilde_profile(model: ManifoldModel, constants: GjmsConstants,
                  spec: BubbleSpec, r) -> np.ndarray:
    """Radial profile of Vtilde in the chart at the center."""
    r = np.asarray(r, dtype=float)
    chi = cutoff_chi(r / spec.delta)
    out = chi * b_profile(constants, spec.mu, r)
    tail_coef = constants.c ** constants.s / constants.b * spec.mu ** constants.s
    tail = np.zeros_like(r)
    mask = chi < 1.0
    if np.any(mask):
        tail[mask] = (1.0 - chi[mask]) * gauge_green_profile(model, constants, r[mask])
    return out + tail_coef * tail


def lam_profile(constants: GjmsConstants, r) -> np.ndarray:
    """Lambda_xi as a function of r = |w|."""
    r = np.asarray(r, dtype=float)
    return (1.0 + r ** 2 / 4.0) ** constants.s


def _green_vec(model: ManifoldModel, constants: GjmsConstants,
               x: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Vectorized manifold Green function with second argument xi."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    p = 2 * constants.k - constants.n
    if model.kind == QUOTIENT:
        d1 = np.linalg.norm(x - xi, axis=1)
        d2 = np.linalg.norm(x + xi, axis=1)
        return constants.b * (d1 ** p + d2 ** p)
    d = np.linalg.norm(x - xi, axis=1)
    return constants.b * d ** p


BUBBLE_KINDS = ("B0", "B", "U", "Vtilde", "V")


def bubble_field(model: ManifoldModel, constants: GjmsConstants,
                 spec: BubbleSpec, kind: str, x) -> np.ndarray:
    """Evaluate one of the bubble stages at manifold points (or at Euclidean
    points for kind B0)."""
    if kind not in BUBBLE_KINDS:
        raise ValueError(f"unknown bubble kind {kind!r}")
    if kind == "B0":
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        r2 = np.sum(pts * pts, axis=1)
        return (1.0 + r2 / constants.c) ** (-constants.s)
    center = spec.center_array
    r = flat_r(model, center, x)
    if kind == "B":
        return b_profile(constants, spec.mu, r)
    if kind == "U":
        return cutoff_chi(r / spec.delta) * b_profile(constants, spec.mu, r)
    if kind == "Vtilde":
        return tilde_profile(model, constants, spec, r)
    # kind == "V": assemble stably; the far branch uses the manifold Green
    # function directly so the chart antipode never enters.
    chi = cutoff_chi(r / spec.delta)
    core = lam_profile(constants, r) * chi * b_profile(constants, spec.mu, r)
    tail_coef = (constants.c ** constants.s / constants.b
                 * spec.mu ** constants.s)
    tail = np.zeros_like(r)
    mask = chi < 1.0
    if np.any(mask):
        pts = np.atleast_2d(np.asarray(x, dtype=float))[mask]
        tail[mask] = (1.0 - chi[mask]) * _green_vec(model, constants, pts, center)
    return core + tail_coef * tail


def config_field(config: Configuration, x) -> np.ndarray:
    """The weighted bubble sum as a plain field."""
    total = None
    for spec in config.specs:
        v = spec.weight * bubble_field(config.model, config.constants, spec, "V", x)
        total = v if total is None else total + v
    return total


# ---------------------------------------------------------------------------
# Radial polyharmonic differencing

_D1_STENCIL = np.array([1.0 / 280, -4.0 / 105, 1.0 / 5, -4.0 / 5, 0.0,
                        4.0 / 5, -1.0 / 5, 4.0 / 105, -1.0 / 280])
_D2_STENCIL = np.array([-1.0 / 560, 8.0 / 315, -1.0 / 5, 8.0 / 5, -205.0 / 72,
                        8.0 / 5, -1.0 / 5, 8.0 / 315, -1.0 / 560])


def radial_polyharmonic(profile, r0, n: int, k: int, h: float) -> np.ndarray:
    """(-Delta)^k of a radial function at radii r0, via nested 1D stencils.

    Delta u = u'' + (n-1)/r u' for a radial profile; 8th-order central
    differences on a local grid, the valid window shrinking by 4 per nesting.
    """
    r0 = np.atleast_1d(np.asarray(r0, dtype=float))
    pad = 4 * k
    offs = np.arange(-pad, pad + 1)
    grid = r0[:, None] + h * offs[None, :]  # (m, 2*pad+1)
    u = np.asarray(profile(grid.ravel()), dtype=float).reshape(grid.shape)
    half = pad
    for _ in range(k):
        m = u.shape[1]
        core = slice(4, m - 4)
        d2 = np.zeros((u.shape[0], m - 8))
        d1 = np.zeros((u.shape[0], m - 8))
        for j in range(9):
            sl = u[:, j:m - 8 + j]
            d2 += _D2_STENCIL[j] * sl
            d1 += _D1_STENCIL[j] * sl
        d2 /= h ** 2
        d1 /= h
        rs = grid[:, core]
        u = -(d2 + (n - 1) / rs * d1)
        grid = rs
    return u[:, 0] if u.shape[1] == 1 else u.ravel()


def radial_polyharmonic_adaptive(profile, r0, n: int, k: int, h0: float,
                                 levels: int = 3):
    """Geometric step ladder; per radius, the value at the pair of adjacent
    steps with the smallest discrepancy. Returns (values, discrepancies)."""
    vals = [radial_polyharmonic(profile, r0, n, k, h0 * 0.5 ** i)
            for i in range(levels)]
    vals = np.stack([np.atleast_1d(v) for v in vals])
    discs = np.abs(np.diff(vals, axis=0))
    pick = np.argmin(discs, axis=0)
    idx = np.arange(vals.shape[1])
    return vals[pick + 1, idx], discs[pick, idx]


def tilde_polyharmonic(model: ManifoldModel, constants: GjmsConstants,
                       spec: BubbleSpec, r) -> np.ndarray:
    """Delta_0^k Vtilde as a radial function: exact on core and far region,
    differenced on the gluing annulus."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.zeros_like(r)
    core = r < spec.delta
    ann = (r >= spec.delta) & (r <= 2.0 * spec.delta)
    if np.any(core):
        out[core] = b_profile(constants, spec.mu, r[core]) ** (constants.two_star - 1.0)
    if np.any(ann):
        h0 = spec.delta / 40.0
        prof = lambda rr: tilde_profile(model, constants, spec, rr)
        vals, _ = radial_polyharmonic_adaptive(prof, r[ann], constants.n,
                                               constants.k, h0)
        out[ann] = vals
    return out


# ---------------------------------------------------------------------------
# Residual and its bound


def residual_radial(model: ManifoldModel, constants: GjmsConstants,
                    spec: BubbleSpec, r) -> np.ndarray:
    """(P_g V - V^{2*-1}) as a function of the flat distance r to the center."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    p_tilde = tilde_polyharmonic(model, constants, spec, r)
    vt = tilde_profile(model, constants, spec, r)
    q = (constants.n + 2 * constants.k) / (constants.n - 2 * constants.k)
    lam = lam_profile(constants, r)
    return lam ** q * (p_tilde - vt ** (constants.two_star - 1.0))


def residual(model: ManifoldModel, constants: GjmsConstants,
             spec: BubbleSpec, x) -> np.ndarray:
    """Pointwise residual at manifold points."""
    r = flat_r(model, spec.center_array, x)
    return residual_radial(model, constants, spec, r)


def residual_bound_radial(constants: GjmsConstants, spec: BubbleSpec, r,
                          variant: str = "lcf") -> np.ndarray:
    """Indicator-weighted bound terms with unit constants.

    general: mu^s (mu+d)^{4-n} on d <= 2 delta, plus the two shared terms;
    lcf: the first term is absent.
    """
    if variant not in ("general", "lcf"):
        raise ValueError(f"unknown variant {variant!r}")
    r = np.atleast_1d(np.asarray(r, dtype=float))
    n, k, s = constants.n, constants.k, constants.s
    mu, delta = spec.mu, spec.delta
    out = np.zeros_like(r)
    if variant == "general":
        out += mu ** s * (mu + r) ** (4 - n) * (r <= 2 * delta)
    out += mu ** s * delta ** (-2 * k) * ((r >= delta) & (r <= 2 * delta))
    out += mu ** (s + 2 * k) * (mu + r) ** (-(n + 2 * k)) * (r >= delta)
    return out


def residual_bound(constants: GjmsConstants, spec: BubbleSpec, x,
                   variant: str = "lcf", model: ManifoldModel = None) -> np.ndarray:
    if model is None:
        raise ValueError("model required to compute the flat distance")
    r = flat_r(model, spec.center_array, x)
    return residual_bound_radial(constants, spec, r, variant)


def residual_sup_ratio(model: ManifoldModel, constants: GjmsConstants,
                       spec: BubbleSpec, variant: str = "lcf",
                       n_samples: int = 160) -> dict:
    """Sup over a focused radial grid of |residual| / bound, plus the core sup.

    The grid clusters log-uniformly from mu/10 out to the chart range and is
    densest across the gluing annulus where the bound is active.
    """
    delta, mu = spec.delta, spec.mu
    r_far_max = 1.9 if model.kind == QUOTIENT else 4.0
    grid = np.concatenate([
        np.geomspace(mu / 10.0, 0.9 * delta, n_samples // 4),
        np.linspace(delta, 2.0 * delta, n_samples // 2),
        np.geomspace(2.0 * delta * 1.0001, r_far_max, n_samples // 4),
    ])
    res = residual_radial(model, constants, spec, grid)
    bound = residual_bound_radial(constants, spec, grid, variant)
    active = bound > 0
    ratio = np.abs(res[active]) / bound[active]
    core = grid <= 0.9 * delta
    return {
        "sup_ratio": float(np.max(ratio)),
        "argmax_r": float(grid[active][int(np.argmax(ratio))]),
        "core_sup": float(np.max(np.abs(res[core]))),
        "grid": grid,
        "residual": res,
        "bound": bound,
    }
