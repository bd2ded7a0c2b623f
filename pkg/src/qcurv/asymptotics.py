"""Parameter sweeps and exponent fits.

Most of the estimates this package checks are stated with implicit constants:
a quantity is O(mu^q), or a ratio stays bounded as a scale degenerates. This
module turns such statements into data. `run_sweep` evaluates a measurement
over a log-spaced grid, recording per-point diagnostics and continuing past
individual failures; `fit_exponent` fits a least-squares line in log-log
coordinates over a window that discards the pre-asymptotic and
noise-dominated ends, flags a multiplicative log factor when a power-times-log
model with unit log coefficient explains the residuals markedly better, and
reports a bounded-ratio verdict for quantities expected to stay O(1).

No exponent is hard-coded into the measurement path; the slopes quoted in the
acceptance suite all come out of these fits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SweepResult:
    """One measured quantity over a monotone parameter grid."""

    quantity: str
    parameter: str
    values: tuple          # parameter grid
    measured: tuple        # measured quantity, NaN where the point failed
    errors: tuple          # per-point quadrature / discretization estimates
    template: dict
    failures: tuple = ()   # (index, message) pairs

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if len(v) < 2:
            raise ValueError("a sweep needs at least two points")
        dv = np.diff(v)
        if not (np.all(dv > 0) or np.all(dv < 0)):
            raise ValueError("parameter values must be strictly monotone")

    def rows(self):
        """CSV-ready rows: parameter, value, error_estimate, quantity_id."""
        return [(p, m, e, self.quantity)
                for p, m, e in zip(self.values, self.measured, self.errors)]


@dataclass(frozen=True)
class ExponentFit:
    """Log-log line fit over a window of a sweep."""

    slope: float
    intercept: float
    r_squared: float
    window: tuple            # indices into the sweep actually used
    log_factor: bool         # power-times-log model fits markedly better
    bounded_ratio: float     # max/min of measured/nominal over the window
    bounded: bool


def run_sweep(quantity: str, measure, template: dict, parameter: str,
              values) -> SweepResult:
    """Evaluate `measure` over a parameter grid, one point at a time.

    `measure` is called with the template dict updated at `parameter` and
    returns either a float or a (value, error_estimate) pair. A failing
    point is recorded and the sweep continues.
    """
    values = tuple(float(v) for v in values)
    if len(values) < 5:
        raise ValueError("a sweep needs at least 5 points")
    measured, errors, failures = [], [], []
    for i, v in enumerate(values):
        params = dict(template)
        params[parameter] = v
        try:
            out = measure(**params)
        except Exception as exc:  # record and keep sweeping
            measured.append(float("nan"))
            errors.append(float("nan"))
            failures.append((i, f"{type(exc).__name__}: {exc}"))
            continue
        if np.isscalar(out):
            val, err = float(out), 0.0
        else:
            val, err = float(out[0]), float(out[1])
        if not np.isfinite(val):
            measured.append(float("nan"))
            errors.append(float("nan"))
            failures.append((i, "non-finite measurement"))
            continue
        measured.append(val)
        errors.append(err)
    return SweepResult(quantity=quantity, parameter=parameter, values=values,
                       measured=tuple(measured), errors=tuple(errors),
                       template=dict(template), failures=tuple(failures))


def default_window(sweep: SweepResult):
    """Indices kept by default: drop the two largest and the one smallest
    parameter values (pre-asymptotic and noise-dominated ends)."""
    order = np.argsort(np.asarray(sweep.values, dtype=float))
    kept = order[1:-2] if len(order) > 3 else order
    return tuple(int(i) for i in sorted(kept))


def _line_fit(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.dot(y - y.mean(), y - y.mean()))
    if ss_tot > 0.0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res == 0.0 else 0.0
    return float(coef[0]), float(coef[1]), r2, ss_res


def fit_exponent(sweep: SweepResult, window=None, nominal=None,
                 ratio_threshold: float = 10.0) -> ExponentFit:
    """Least-squares line in log-log coordinates over the window.

    `nominal` (same length as the sweep, or None for all-ones) normalizes
    the bounded-ratio verdict; the verdict is max/min of measured/nominal
    over the window against `ratio_threshold`.
    """
    if window is None:
        window = default_window(sweep)
    window = tuple(int(i) for i in window)
    if len(window) < 4:
        raise ValueError("fit window needs at least 4 points")
    if any(i < 0 or i >= len(sweep.values) for i in window):
        raise ValueError("fit window outside the sweep")
    x = np.array([sweep.values[i] for i in window], dtype=float)
    y = np.array([sweep.measured[i] for i in window], dtype=float)
    if np.any(~np.isfinite(y)) or np.any(y <= 0.0) or np.any(x <= 0.0):
        raise ValueError("degenerate (failed, zero or negative) values "
                         "in the fit window")
    lx, ly = np.log(x), np.log(y)
    slope, intercept, r2, ss_res = _line_fit(lx, ly)

    # power-times-log alternative with unit log coefficient:
    # y = C x^q log(1/x), i.e. log y - log log(1/x) is linear in log x.
    # The flag asks whether that model explains at least 5% more of the
    # residual variation the pure power fit leaves behind.
    log_factor = False
    if ss_res > 0.0 and np.all(x < 1.0) and np.all(np.log(1.0 / x) > 0.0):
        ly_adj = ly - np.log(np.log(1.0 / x))
        _, _, _, ss_adj = _line_fit(lx, ly_adj)
        log_factor = bool(1.0 - ss_adj / ss_res > 0.05)

    if nominal is None:
        nom = np.ones_like(y)
    else:
        nom = np.array([nominal[i] for i in window], dtype=float)
    ratio = y / nom
    bounded_ratio = float(np.max(ratio) / np.min(ratio))
    return ExponentFit(slope=slope, intercept=intercept, r_squared=r2,
                       window=window, log_factor=log_factor,
                       bounded_ratio=bounded_ratio,
                       bounded=bool(bounded_ratio < ratio_threshold))
