"""Single-parameter polarisability fits and the uncertainty budget.

One polarisability alpha (A^3) is shared by every dataset; each dataset keeps
its own molecule mass, absorption cross section, geometry and velocity
distribution.  The loss is the weighted chi-square of the velocity-averaged
model against the measured visibilities (unit weights where a point has no
error bar).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .datasets import VisibilityPoint
from .errors import BracketError, DomainError, InsufficientDataError, NotApplicableError
from .physics import velocity_quadrature, visibility_avg
from .presets import POWER_CALIBRATION_REL, WAIST_REL

COARSE_POINTS = 49
# refinement reuses one velocity rule, resolved up to this multiple of the bracket top
PLAN_MARGIN = 1.5


@dataclass(frozen=True)
class FitOptions:
    alpha_bracket: tuple = (1.0, 500.0)
    alpha_tol: float = 1e-3
    power_calibration: float = 1.0
    # systematic inputs of the budget (relative)
    power_calibration_rel: float = POWER_CALIBRATION_REL
    waist_rel: float = WAIST_REL
    budget_mode: str = "quadrature"

    def __post_init__(self):
        lo, hi = self.alpha_bracket
        if not 0 < lo < hi:
            raise DomainError(f"alpha bracket must be ordered and positive, got {self.alpha_bracket}")
        if not self.alpha_tol > 0:
            raise DomainError("alpha_tol must be positive")
        if not self.power_calibration > 0:
            raise DomainError("power_calibration must be positive")
        if self.budget_mode not in ("quadrature", "linear"):
            raise DomainError(f"unknown budget mode {self.budget_mode!r}")


@dataclass(frozen=True)
class FitResult:
    alpha: float
    chi2: float
    dof: int
    stat_interval: tuple
    envelope_interval: Optional[tuple] = None
    budget: tuple = ()
    total_rel_uncertainty: Optional[float] = None
    sigma_abs_shift: Optional[float] = None
    warnings: tuple = field(default=())

    def to_dict(self):
        return {
            "alpha_A3": self.alpha,
            "chi2": self.chi2,
            "dof": self.dof,
            "stat_interval_A3": list(self.stat_interval),
            "envelope_interval_A3": None if self.envelope_interval is None else list(self.envelope_interval),
            "sigma_abs_shift_rel": self.sigma_abs_shift,
            "budget": [{"component": name, "relative": r} for name, r in self.budget],
            "total_rel_uncertainty": self.total_rel_uncertainty,
            "warnings": list(self.warnings),
        }


def _n_points(datasets):
    return sum(len(ds.points) for ds in datasets)


def model_visibilities(alpha, dataset, options=FitOptions(), nodes=None):
    mol = dataset.molecule.with_alpha(alpha)
    return np.atleast_1d(
        visibility_avg(
            mol,
            dataset.geometry,
            dataset.velocity,
            dataset.powers,
            power_calibration=options.power_calibration,
            nodes=nodes,
        )
    )


def frozen_nodes(datasets, alpha, options=FitOptions()):
    """Per-dataset velocity rules resolved for every alpha up to ``alpha``.

    The adaptive rule changes with alpha in small steps; holding it fixed makes
    chi-square a smooth function of alpha for the local minimiser.
    """
    return [
        velocity_quadrature(
            ds.molecule.with_alpha(alpha),
            ds.geometry,
            ds.velocity,
            float(np.max(ds.powers)) * options.power_calibration,
        )
        for ds in datasets
    ]


def chi_square(alpha, datasets, options=FitOptions(), *, nodes=None):
    """Weighted sum of squared residuals over all points of all datasets.

    ``nodes`` optionally fixes the velocity rule per dataset (see ``frozen_nodes``).
    """
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if not datasets:
        raise DomainError("no datasets given")
    if nodes is None:
        nodes = [None] * len(datasets)
    residuals = [
        (model_visibilities(alpha, ds, options, q) - ds.visibilities) / ds.sigmas for ds, q in zip(datasets, nodes)
    ]
    r = np.concatenate(residuals)
    return float(np.sum(r * r))


def _coarse_grid(options):
    lo, hi = options.alpha_bracket
    return np.geomspace(lo, hi, COARSE_POINTS)


def _local_minima(values):
    inner = (values[1:-1] < values[:-2]) & (values[1:-1] <= values[2:])
    return np.flatnonzero(inner) + 1


def _refine(datasets, options, left, right, nodes):
    res = minimize_scalar(
        lambda a: chi_square(a, datasets, options, nodes=nodes),
        bounds=(left, right),
        method="bounded",
        options={"xatol": options.alpha_tol / 10},
    )
    return float(res.x), float(res.fun)


def _check_edge(alpha, options):
    lo, hi = options.alpha_bracket
    if alpha - lo < options.alpha_tol or hi - alpha < options.alpha_tol:
        raise BracketError(f"fitted alpha {alpha:.4g} A^3 sits on the bracket edge; widen alpha_bracket")


def _minimize(datasets, options):
    grid = _coarse_grid(options)
    values = np.array([chi_square(a, datasets, options) for a in grid])
    best = int(np.argmin(values))
    if best == 0 or best == grid.size - 1:
        raise BracketError(
            f"chi-square minimum lies at the bracket edge ({grid[best]:.4g} A^3); widen alpha_bracket {options.alpha_bracket}"
        )
    warnings = []
    minima = _local_minima(values)
    if minima.size > 1:
        where = ", ".join(f"{grid[i]:.4g}" for i in minima)
        warnings.append(f"chi-square is not unimodal on the coarse scan; local minima near {where} A^3")
    nodes = frozen_nodes(datasets, PLAN_MARGIN * grid[best + 1], options)
    alpha, chi2 = _refine(datasets, options, grid[best - 1], grid[best + 1], nodes)
    _check_edge(alpha, options)
    return alpha, chi2, grid, values, tuple(warnings), nodes


def _minimize_from(datasets, options, start):
    """Walk downhill from ``start`` in coarse-grid steps until bracketed, then refine."""
    lo, hi = options.alpha_bracket
    step = (hi / lo) ** (1.0 / (COARSE_POINTS - 1))
    start = min(max(start, lo * step), hi / step)

    def chi2(a):
        return chi_square(a, datasets, options)

    points = [start / step, start, start * step]
    values = [chi2(a) for a in points]
    while values[0] < values[1]:
        if points[0] <= lo:
            raise BracketError(f"chi-square decreases towards the bracket edge {lo:.4g} A^3; widen alpha_bracket")
        a = max(points[0] / step, lo)
        points.insert(0, a)
        values.insert(0, chi2(a))
        points.pop()
        values.pop()
    while values[2] < values[1]:
        if points[2] >= hi:
            raise BracketError(f"chi-square decreases towards the bracket edge {hi:.4g} A^3; widen alpha_bracket")
        a = min(points[2] * step, hi)
        points.append(a)
        values.append(chi2(a))
        points.pop(0)
        values.pop(0)
    nodes = frozen_nodes(datasets, PLAN_MARGIN * points[2], options)
    alpha, chi2_min = _refine(datasets, options, points[0], points[2], nodes)
    _check_edge(alpha, options)
    return alpha, chi2_min, np.array(points), np.array(values), nodes


def _delta_chi2_interval(datasets, options, alpha, chi2_min, grid, values, nodes):
    target = chi2_min + 1.0
    lo, hi = options.alpha_bracket

    def excess(a):
        return chi_square(a, datasets, options, nodes=nodes) - target

    left = np.flatnonzero((grid < alpha) & (values >= target))
    if left.size:
        a = grid[left[-1]]
        lower = float(brentq(excess, a, alpha, xtol=options.alpha_tol / 10))
    else:
        lower = lo if excess(lo) < 0 else float(brentq(excess, lo, alpha, xtol=options.alpha_tol / 10))
    right = np.flatnonzero((grid > alpha) & (values >= target))
    if right.size:
        b = grid[right[0]]
        upper = float(brentq(excess, alpha, b, xtol=options.alpha_tol / 10))
    else:
        upper = hi if excess(hi) < 0 else float(brentq(excess, alpha, hi, xtol=options.alpha_tol / 10))
    return (min(lower, alpha), max(upper, alpha))


def fit_alpha(datasets, options=FitOptions(), *, interval=True, start=None):
    """Best-fit polarisability (A^3) with a Delta-chi^2 = 1 interval.

    A log-spaced scan over the bracket locates the basin and flags multiple
    minima; bounded Brent minimisation then refines it.  With ``start`` (a
    nearby earlier fit) the scan is replaced by a downhill walk from there,
    which skips the multi-minimum check.  With unit weights the interval is
    conditional on those weights, not calibrated.
    """
    datasets = list(datasets)
    n = _n_points(datasets)
    if n < 3:
        raise InsufficientDataError(f"insufficient points: {n} given, at least 3 needed")
    if start is None:
        alpha, chi2, grid, values, warnings, nodes = _minimize(datasets, options)
    else:
        alpha, chi2, grid, values, nodes = _minimize_from(datasets, options, start)
        warnings = ()
    if interval:
        stat = _delta_chi2_interval(datasets, options, alpha, chi2, grid, values, nodes)
    else:
        stat = (alpha, alpha)
    return FitResult(alpha=alpha, chi2=chi2, dof=n - 1, stat_interval=stat, warnings=warnings)


def _shift_dataset(ds, sign):
    points = []
    for p in ds.points:
        if p.sigma_v is None:
            points.append(p)
            continue
        v = min(max(p.visibility + sign * p.sigma_v, 0.0), 1.0)
        points.append(VisibilityPoint(p.power, v, p.sigma_v))
    return ds.replace(points=tuple(points))


def envelope_uncertainty(datasets, options=FitOptions(), *, start=None):
    """Refit with every point moved to the top and to the bottom of its error bar.

    Returns the two fitted alphas, ordered.  ``start`` seeds both refits.
    """
    datasets = list(datasets)
    if not any(ds.has_error_bars for ds in datasets):
        raise NotApplicableError("envelope fit needs error bars on at least one point")
    upper = fit_alpha([_shift_dataset(ds, +1) for ds in datasets], options, interval=False, start=start).alpha
    lower = fit_alpha([_shift_dataset(ds, -1) for ds in datasets], options, interval=False, start=start).alpha
    return (min(upper, lower), max(upper, lower))


def sigma_abs_sensitivity(datasets, options=FitOptions(), rel_change=0.5, *, base=None):
    """Largest relative change of fitted alpha when sigma_abs is scaled by 1 +/- rel_change.

    ``base`` is the unperturbed fit, if already known; it also seeds the refits.
    """
    datasets = list(datasets)
    if not 0 <= rel_change < 1:
        raise DomainError("rel_change must lie in [0, 1)")
    if rel_change == 0 or all(ds.molecule.sigma_abs == 0 for ds in datasets):
        return 0.0
    if base is None:
        base = fit_alpha(datasets, options, interval=False).alpha
    shifts = []
    for factor in (1 + rel_change, 1 - rel_change):
        scaled = [ds.replace(molecule=ds.molecule.with_sigma_abs(ds.molecule.sigma_abs * factor)) for ds in datasets]
        alpha = fit_alpha(scaled, options, interval=False, start=base).alpha
        shifts.append(abs(alpha - base) / base)
    return max(shifts)


def combine_budget(components, mode="quadrature"):
    """Total relative uncertainty of independent contributions.

    ``components`` holds relative uncertainties or (name, relative) pairs.
    ``mode="quadrature"`` adds in quadrature; ``"linear"`` adds linearly.
    """
    values = [c[1] if isinstance(c, (tuple, list)) else c for c in components]
    for v in values:
        if not v >= 0:
            raise DomainError(f"budget components must be non-negative, got {v}")
    if mode == "quadrature":
        return math.sqrt(math.fsum(v * v for v in values))
    if mode == "linear":
        return math.fsum(values)
    raise DomainError(f"unknown budget mode {mode!r}")


def analyze(datasets, options=FitOptions(), rel_change=0.5):
    """Fit plus envelope interval, sigma_abs sensitivity and combined budget."""
    datasets = list(datasets)
    result = fit_alpha(datasets, options)
    alpha = result.alpha
    envelope = None
    if any(ds.has_error_bars for ds in datasets):
        envelope = envelope_uncertainty(datasets, options, start=alpha)
        statistical = max(abs(envelope[1] - alpha), abs(alpha - envelope[0])) / alpha
    else:
        lo, hi = result.stat_interval
        statistical = 0.5 * (hi - lo) / alpha
    shift = sigma_abs_sensitivity(datasets, options, rel_change, base=alpha)
    budget = (
        ("power_calibration", options.power_calibration_rel),
        ("waist_wy", options.waist_rel),
        ("sigma_abs", shift),
        ("statistical", statistical),
    )
    return replace(
        result,
        envelope_interval=envelope,
        budget=budget,
        total_rel_uncertainty=combine_budget(budget, options.budget_mode),
        sigma_abs_shift=shift,
    )
