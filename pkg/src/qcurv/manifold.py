"""Model geometries, conformal charts, and quadrature.

Two model manifolds are supported: the unit round sphere S^n in R^{n+1} and
its antipodal quotient. Both are locally conformally flat, and the
stereographic gauge used here makes the conformally rescaled metric exactly
Euclidean in chart coordinates:

    w(x) = 2 E^T x / (1 + x.xi),        |w(x)| = 2 tan(r/2),
    Lambda_xi(x) = (2 / (1 + x.xi))^{(n-2k)/2} = (1 + |w|^2/4)^{(n-2k)/2},
    dv_g = (1 + |w|^2/4)^{-n} dw,

with r the geodesic distance to the pole xi and E a fixed orthonormal basis
of xi's orthogonal complement. Lambda_xi(xi) = 1 and grad Lambda_xi(xi) = 0
hold exactly.

Every manifold integral is pulled to w-coordinates. integrate() localizes
around the supplied focus centers with a smooth partition of unity, uses
adaptive composite Gauss-Legendre panels in the radial direction (panels
clustered geometrically toward each center), product Gauss-Legendre rules in
the polar angles and a uniform trapezoid rule in the azimuth, and splits the
smooth remainder over two hemisphere charts so the point at infinity never
enters. Quotient integrals are half the covering-sphere integral of the lift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

SPHERE = "round-sphere"
QUOTIENT = "antipodal-quotient"

_EPS_COORD = 1e-12


class QuadratureError(RuntimeError):
    """Raised when refinement exhausts its budget far from the target.

    Carries the partial value and the achieved error estimate.
    """

    def __init__(self, message: str, value: float, error: float):
        super().__init__(message)
        self.value = value
        self.error = error


@dataclass(frozen=True)
class ManifoldModel:
    """A model geometry: round sphere or its antipodal quotient."""

    kind: str
    n: int

    def __post_init__(self):
        if self.kind not in (SPHERE, QUOTIENT):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.n < 3:
            raise ValueError(f"dimension n={self.n} must be >= 3")

    @property
    def ambient_dim(self) -> int:
        return self.n + 1

    def check_point(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.ambient_dim,):
            raise ValueError(f"point has shape {x.shape}, expected ({self.ambient_dim},)")
        if abs(np.linalg.norm(x) - 1.0) > 1e-12:
            raise ValueError("point representative is not a unit vector")
        return x

    def canon(self, x: np.ndarray) -> np.ndarray:
        """Canonical representative; on the quotient the first nonzero
        coordinate is made positive."""
        x = np.asarray(x, dtype=float)
        if self.kind == SPHERE:
            return x
        flat = x.reshape(-1, self.ambient_dim)
        nz = np.abs(flat) > _EPS_COORD
        first = np.argmax(nz, axis=1)
        sign = np.sign(flat[np.arange(len(flat)), first])
        out = flat * sign[:, None]
        return out.reshape(x.shape)

    def lifts(self, x: np.ndarray) -> list[np.ndarray]:
        x = np.asarray(x, dtype=float)
        if self.kind == SPHERE:
            return [x]
        return [x, -x]


def make_model(kind: str, n: int) -> ManifoldModel:
    return ManifoldModel(kind, n)


def random_point(model: ManifoldModel, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=model.ambient_dim)
    v /= np.linalg.norm(v)
    return model.canon(v)


def geodesic_distance(model: ManifoldModel, x, y) -> float:
    """Great-circle distance; on the quotient, the minimum over lifts."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dot = np.clip(np.sum(x * y, axis=-1), -1.0, 1.0)
    if model.kind == QUOTIENT:
        dot = np.abs(dot)
    return np.arccos(dot)


def orthonormal_basis(xi: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of xi's orthogonal complement,
    returned as columns of an (m, m-1) matrix."""
    xi = np.asarray(xi, dtype=float)
    m = len(xi)
    skip = int(np.argmax(np.abs(xi)))
    cols = []
    for i in range(m):
        if i == skip:
            continue
        v = np.zeros(m)
        v[i] = 1.0
        v -= np.dot(v, xi) * xi
        for c in cols:
            v -= np.dot(v, c) * c
        v /= np.linalg.norm(v)
        cols.append(v)
    return np.stack(cols, axis=1)


@dataclass(frozen=True)
class Chart:
    """Stereographic conformal chart at a pole xi.

    The flat coordinates satisfy |w(x)| = 2 tan(r/2), and the gauged metric
    g_xi = Lambda_xi^{4/(n-2k)} g is exactly Euclidean in them.
    """

    model: ManifoldModel
    pole: np.ndarray
    basis: np.ndarray  # (n+1, n) orthonormal, orthogonal to pole
    lam_power: float  # (n - 2k)/2

    @property
    def n(self) -> int:
        return self.model.n

    def _lift(self, x: np.ndarray) -> np.ndarray:
        """On the quotient, choose the lift on the pole's side."""
        if self.model.kind == SPHERE:
            return x
        dots = x @ self.pole
        sign = np.where(dots >= 0.0, 1.0, -1.0)
        return x * sign[..., None]

    def to_chart(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        x = self._lift(x)
        denom = 1.0 + x @ self.pole
        if np.any(denom < 1e-15):
            raise ValueError("chart undefined at the antipode of the pole")
        return 2.0 * (x @ self.basis) / denom[:, None]

    def from_chart(self, w: np.ndarray) -> np.ndarray:
        w = np.atleast_2d(np.asarray(w, dtype=float))
        r2 = np.sum(w * w, axis=1)
        denom = 1.0 + r2 / 4.0
        x = ((1.0 - r2 / 4.0)[:, None] * self.pole + w @ self.basis.T) / denom[:, None]
        return x

    def lam_of_w(self, w: np.ndarray) -> np.ndarray:
        w = np.atleast_2d(np.asarray(w, dtype=float))
        r2 = np.sum(w * w, axis=1)
        return (1.0 + r2 / 4.0) ** self.lam_power

    def lam(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        x = self._lift(x)
        denom = 1.0 + x @ self.pole
        return (2.0 / denom) ** self.lam_power

    def flat_distance(self, x: np.ndarray) -> np.ndarray:
        """d_{g_xi}(x, xi) = |w(x)| = 2 tan(r/2)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        x = self._lift(x)
        dot = np.clip(x @ self.pole, -1.0, 1.0)
        r = np.arccos(dot)
        return 2.0 * np.tan(r / 2.0)


def chart_at(model: ManifoldModel, constants, xi) -> Chart:
    """Chart at xi; `constants` fixes k for the Lambda exponent."""
    xi = model.check_point(np.asarray(xi, dtype=float))
    if model.n < 2 * constants.k + 1:
        raise ValueError(f"n={model.n} violates n >= 2k+1 for k={constants.k}")
    basis = orthonormal_basis(xi)
    return Chart(model=model, pole=xi, basis=basis,
                 lam_power=(model.n - 2 * constants.k) / 2.0)


@dataclass(frozen=True)
class GridField:
    """A scalar field on the model, evaluated in batches of points."""

    evaluator: Callable[[np.ndarray], np.ndarray]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self.evaluator(points), dtype=float)


def as_field(f) -> GridField:
    if isinstance(f, GridField):
        return f
    return GridField(evaluator=f)


# ---------------------------------------------------------------------------
# Quadrature rules


@lru_cache(maxsize=64)
def _leggauss(q: int):
    x, w = np.polynomial.legendre.leggauss(q)
    return x, w


@lru_cache(maxsize=64)
def sphere_rule(m: int, n_polar: int, n_az: int):
    """Product quadrature on the unit sphere S^m in R^{m+1}.

    Gauss-Legendre in each polar angle (weight sin^{m-i} folded in) and a
    uniform trapezoid rule in the azimuth. Returns (nodes (N, m+1), weights).
    """
    if m < 1:
        raise ValueError("sphere dimension must be >= 1")
    phis = 2.0 * np.pi * np.arange(n_az) / n_az
    az_w = np.full(n_az, 2.0 * np.pi / n_az)
    if m == 1:
        nodes = np.stack([np.cos(phis), np.sin(phis)], axis=1)
        return nodes, az_w
    xg, wg = _leggauss(n_polar)
    thetas = 0.5 * np.pi * (xg + 1.0)
    th_w = 0.5 * np.pi * wg
    # angles[0..m-2] polar, then azimuth
    grids = np.meshgrid(*([thetas] * (m - 1) + [phis]), indexing="ij")
    wgrids = np.meshgrid(*([th_w] * (m - 1) + [az_w]), indexing="ij")
    weight = np.ones_like(grids[0])
    for i in range(m - 1):
        weight = weight * wgrids[i] * np.sin(grids[i]) ** (m - 1 - i)
    weight = weight * wgrids[m - 1]
    coords = []
    sin_prod = np.ones_like(grids[0])
    for i in range(m - 1):
        coords.append(sin_prod * np.cos(grids[i]))
        sin_prod = sin_prod * np.sin(grids[i])
    coords.append(sin_prod * np.cos(grids[m - 1]))
    coords.append(sin_prod * np.sin(grids[m - 1]))
    nodes = np.stack([c.ravel() for c in coords], axis=1)
    return nodes, weight.ravel()


def _angular_orders(rel_tol: float):
    if rel_tol >= 1e-5:
        return 8, 10
    if rel_tol >= 1e-8:
        return 12, 16
    return 16, 20


# ---------------------------------------------------------------------------
# Adaptive radial integration


def _initial_panels(a: float, b: float, scale: float) -> list:
    """Geometric partition of [a, b] clustered toward a, first width scale/4."""
    h = max(scale / 4.0, (b - a) * 1e-12)
    edges = [a]
    x = a
    while x + h < b:
        x += h
        edges.append(x)
        h *= 2.0
        if len(edges) > 200:
            break
    edges.append(b)
    return edges


def adaptive_radial(g, a: float, b: float, scale: float, tol_abs: float,
                    max_panels: int = 400):
    """Integrate the vectorized scalar function g over [a, b].

    Embedded 7/15-point Gauss pairs per panel; the worst panels are bisected
    until the summed discrepancy falls below tol_abs or the budget runs out.
    Returns (value, error_estimate, l1_mass).
    """
    x7, w7 = _leggauss(7)
    x15, w15 = _leggauss(15)

    def panel_eval(lo, hi):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        r = np.concatenate([mid + half * x15, mid + half * x7])
        vals = g(r)
        i15 = half * float(np.dot(vals[:15], w15))
        i7 = half * float(np.dot(vals[15:], w7))
        return i15, abs(i15 - i7), half * float(np.dot(np.abs(vals[:15]), w15))

    edges = _initial_panels(a, b, scale)
    panels = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        panels.append((lo, hi) + panel_eval(lo, hi))
    while len(panels) < max_panels:
        total_err = math.fsum(p[3] for p in panels)
        if total_err <= tol_abs:
            break
        worst = max(range(len(panels)), key=lambda i: panels[i][3])
        lo, hi = panels[worst][:2]
        mid = 0.5 * (lo + hi)
        panels[worst] = (lo, mid) + panel_eval(lo, mid)
        panels.append((mid, hi) + panel_eval(mid, hi))
    value = math.fsum(p[2] for p in panels)
    err = math.fsum(p[3] for p in panels)
    mass = math.fsum(p[4] for p in panels)
    return value, err, mass


# ---------------------------------------------------------------------------
# Manifold integration


def _exp_bump(s):
    return np.where(s > 0.0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)


def _cutoff_chi(t):
    """Smooth transition, 1 on [0,1] and 0 on [2, inf)."""
    t = np.asarray(t, dtype=float)
    up = _exp_bump(2.0 - t)
    down = _exp_bump(t - 1.0)
    return up / (up + down)


def _normalize_centers(model: ManifoldModel, focus_centers) -> list:
    centers = []
    for c in focus_centers or []:
        if isinstance(c, tuple):
            pt, scale = c
        else:
            pt, scale = c, 0.1
        pt = np.asarray(pt, dtype=float)
        merged = False
        for i, (q, s) in enumerate(centers):
            if geodesic_distance(model, pt, q) < 1e-9:
                centers[i] = (q, min(s, scale))
                merged = True
                break
        if not merged:
            centers.append((pt, float(scale)))
    return centers


def _chart_ball_part(chart: Chart, f, wmax: float, scale: float,
                     ang_nodes, ang_w, tol_abs: float, weight_fn=None):
    """Integral over {|w| <= wmax} in a chart of f * dv_g, optionally times a
    weight function of the manifold point."""
    n = chart.n

    def g(rs):
        rs = np.asarray(rs, dtype=float)
        w = rs[:, None, None] * ang_nodes[None, :, :]
        pts = chart.from_chart(w.reshape(-1, n))
        vals = f(pts)
        if weight_fn is not None:
            vals = vals * weight_fn(pts)
        vals = vals.reshape(len(rs), -1)
        jac = (1.0 + rs ** 2 / 4.0) ** (-n) * rs ** (n - 1)
        return (vals @ ang_w) * jac

    return adaptive_radial(g, 0.0, wmax, scale, tol_abs)


def _integrate_sphere_once(model: ManifoldModel, f, centers, rel_tol: float,
                           orders, max_panels: int):
    """One full pass at fixed angular orders. Returns (value, radial_err, mass)."""
    n = model.n
    n_polar, n_az = orders
    ang_nodes, ang_w = sphere_rule(n - 1, n_polar, n_az)

    if centers:
        seps = [geodesic_distance(model, p, q)
                for i, (p, _) in enumerate(centers)
                for (q, _) in centers[i + 1:]]
        min_sep = min(seps) if seps else np.pi
        rho = min(np.pi / 3.0, 0.49 * min_sep)
    else:
        rho = None

    def bump_weight(pole):
        def wfn(pts):
            d = geodesic_distance(model, pts, pole)
            return _cutoff_chi(2.0 * d / rho)
        return wfn

    def remainder_weight(pts):
        total = np.ones(len(pts))
        for (p, _) in centers:
            d = geodesic_distance(model, pts, p)
            total = total - _cutoff_chi(2.0 * d / rho)
        return total

    parts = []  # (chart, wmax, scale, weight_fn)
    lam_dummy = 0.0
    for (p, s) in centers:
        basis = orthonormal_basis(p)
        chart = Chart(model=model, pole=p, basis=basis, lam_power=lam_dummy)
        wmax = 2.0 * np.tan(rho / 2.0)
        parts.append((chart, wmax, min(s, wmax / 4.0), bump_weight(p)))
    pole_n = np.zeros(n + 1)
    pole_n[-1] = 1.0
    for hemi_pole in (pole_n, -pole_n):
        basis = orthonormal_basis(hemi_pole)
        chart = Chart(model=model, pole=hemi_pole, basis=basis, lam_power=lam_dummy)
        wfn = remainder_weight if centers else None
        parts.append((chart, 2.0, 0.25, wfn))

    # Coarse pass to set the absolute tolerance, then refine each part.
    coarse = []
    for (chart, wmax, scale, wfn) in parts:
        coarse.append(_chart_ball_part(chart, f, wmax, scale, ang_nodes, ang_w,
                                       tol_abs=np.inf, weight_fn=wfn))
    mass = math.fsum(c[2] for c in coarse)
    tol_abs = rel_tol * max(mass, 1e-300) / len(parts)
    vals, errs = [], []
    for (chart, wmax, scale, wfn) in parts:
        v, e, _ = _chart_ball_part(chart, f, wmax, scale, ang_nodes, ang_w,
                                   tol_abs=tol_abs, weight_fn=wfn,)
        vals.append(v)
        errs.append(e)
    return math.fsum(vals), math.fsum(errs), mass


def integrate(model: ManifoldModel, field, focus_centers=None,
              rel_tol: float = 1e-8, max_panels: int = 400):
    """Integrate a scalar field over the model, with an error estimate.

    focus_centers is a sequence of points or (point, length_scale) pairs
    marking concentration spots; the quadrature localizes around them.
    Returns (value, error_estimate). Deterministic for fixed inputs.
    """
    if not (1e-12 <= rel_tol <= 1e-2):
        raise ValueError("rel_tol must lie in [1e-12, 1e-2]")
    f = as_field(field)

    if model.kind == QUOTIENT:
        cover = ManifoldModel(SPHERE, model.n)
        lifted = GridField(evaluator=lambda pts: f(model.canon(pts)))
        lifted_centers = []
        for c in focus_centers or []:
            pt, s = (c if isinstance(c, tuple) else (c, 0.1))
            for lift in model.lifts(np.asarray(pt, dtype=float)):
                lifted_centers.append((lift, s))
        value, err = integrate(cover, lifted, lifted_centers, rel_tol, max_panels)
        return 0.5 * value, 0.5 * err

    centers = _normalize_centers(model, focus_centers)
    n_polar, n_az = _angular_orders(rel_tol)
    v_main, e_main, _ = _integrate_sphere_once(model, f, centers, rel_tol,
                                               (n_polar, n_az), max_panels)
    v_comp, _, mass = _integrate_sphere_once(model, f, centers, rel_tol,
                                             (max(n_polar - 3, 4), max(n_az - 4, 6)),
                                             max_panels)
    err = e_main + abs(v_main - v_comp)
    target = rel_tol * max(mass, 1e-300)
    if err > 1e3 * max(target, 1e-15 * max(mass, 1.0)):
        raise QuadratureError(
            f"quadrature did not reach the target (err={err:.3e}, target={target:.3e})",
            value=v_main, error=err)
    return v_main, err


def sphere_volume(m: int) -> float:
    """omega_m, the volume of the unit m-sphere."""
    return 2.0 * np.pi ** ((m + 1) / 2.0) / math.gamma((m + 1) / 2.0)
