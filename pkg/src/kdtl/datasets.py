"""Visibility datasets, fringe scans, and seeded synthetic data.

Dataset documents are JSON with lab units in the key names::

    {
      "label": "C70 run b",
      "molecule": {"name": "C70", "mass_amu": 840.77, "alpha_A3": 117,
                   "sigma_abs_cm2": 2.1e-17},
      "geometry": {"d_nm": 266, "f": 0.42, "L_mm": 105, "lambda_nm": 532,
                   "wy_um": 900, "wx_um": 20},
      "velocity": {"form": "gaussian", "vm_mps": 117.3, "dv_mps": 14.4},
      "points": [{"power_W": 0.5, "visibility": 0.01, "sigma_v": 0.005}, ...]
    }

``alpha_A3`` and ``wx_um`` are optional, ``sigma_v`` is optional per point
and a point may give ``power_mW`` instead of ``power_W``.  A tabulated beam
uses ``{"form": "tabulated", "table": [[v_mps, weight], ...]}``.  Unknown keys
are rejected.

Numbers are converted to SI with correctly rounded exact arithmetic, and the
serializer picks decimal strings that convert back to the identical float, so
``parse_dataset(serialize_dataset(ds)) == ds`` holds field by field.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import DegenerateSignalError, DomainError, ParseError, ValidationError
from .physics import AMU, InterferometerGeometry, Molecule, VelocityDistribution, visibility_avg

NM = 1e-9
UM = 1e-6
MM = 1e-3
MW = 1e-3
ANGSTROM3 = 1e-30
CM2 = 1e-4


@dataclass(frozen=True)
class VisibilityPoint:
    power: float
    visibility: float
    sigma_v: Optional[float] = None

    def __post_init__(self):
        if not (self.power >= 0 and math.isfinite(self.power)):
            raise ValidationError("power must be non-negative", "points.power")
        if not 0 <= self.visibility <= 1:
            raise ValidationError(f"visibility {self.visibility} outside [0, 1]", "points.visibility")
        if self.sigma_v is not None and not (self.sigma_v > 0 and math.isfinite(self.sigma_v)):
            raise ValidationError("sigma_v must be positive when present", "points.sigma_v")


@dataclass(frozen=True)
class VisibilityDataset:
    label: str
    molecule: Molecule
    geometry: InterferometerGeometry
    velocity: VelocityDistribution
    points: tuple

    def __post_init__(self):
        pts = tuple(sorted(self.points, key=lambda p: p.power))
        if len(pts) < 2:
            raise ValidationError("a dataset needs at least 2 points", "points")
        for a, b in zip(pts, pts[1:]):
            if not b.power > a.power:
                raise ValidationError(f"duplicate power {a.power} W", "points.power")
        object.__setattr__(self, "points", pts)

    @property
    def powers(self):
        return np.array([p.power for p in self.points])

    @property
    def visibilities(self):
        return np.array([p.visibility for p in self.points])

    @property
    def sigmas(self):
        """Per-point standard deviations; missing error bars count as 1."""
        return np.array([1.0 if p.sigma_v is None else p.sigma_v for p in self.points])

    @property
    def has_error_bars(self):
        return any(p.sigma_v is not None for p in self.points)

    def replace(self, **changes):
        fields = dict(
            label=self.label,
            molecule=self.molecule,
            geometry=self.geometry,
            velocity=self.velocity,
            points=self.points,
        )
        fields.update(changes)
        return VisibilityDataset(**fields)


# --------------------------------------------------------------------------
# document parsing


def _to_si(value, scale, field):
    if isinstance(value, bool) or not isinstance(value, (int, float, Decimal)):
        raise ParseError(f"expected a number, got {value!r}", field)
    if isinstance(value, float):
        value = Decimal(repr(value))
    if isinstance(value, Decimal) and not value.is_finite():
        raise ParseError("number must be finite", field)
    return float(Fraction(value) * _exact_scale(scale))


def _exact_scale(scale):
    # 1e-6 means 10**-6, not the nearest binary double
    return Fraction(repr(scale)) if isinstance(scale, float) else Fraction(scale)


def _check_keys(obj, field, required, optional=()):
    if not isinstance(obj, dict):
        raise ParseError("expected an object", field)
    unknown = set(obj) - set(required) - set(optional)
    if unknown:
        raise ParseError(f"unknown key(s) {sorted(unknown)}", field)
    for key in required:
        if key not in obj:
            raise ParseError("missing required key", f"{field}.{key}" if field else key)


def _parse_molecule(obj):
    _check_keys(obj, "molecule", ("name", "mass_amu", "sigma_abs_cm2"), ("alpha_A3",))
    if not isinstance(obj["name"], str):
        raise ParseError("expected text", "molecule.name")
    alpha = obj.get("alpha_A3")
    return Molecule(
        name=obj["name"],
        mass=_to_si(obj["mass_amu"], AMU, "molecule.mass_amu"),
        alpha_vol=None if alpha is None else _to_si(alpha, ANGSTROM3, "molecule.alpha_A3"),
        sigma_abs=_to_si(obj["sigma_abs_cm2"], CM2, "molecule.sigma_abs_cm2"),
    )


def _parse_geometry(obj):
    _check_keys(obj, "geometry", ("d_nm", "f", "L_mm", "lambda_nm", "wy_um"), ("wx_um",))
    wx = obj.get("wx_um")
    return InterferometerGeometry(
        d=_to_si(obj["d_nm"], NM, "geometry.d_nm"),
        f=_to_si(obj["f"], 1, "geometry.f"),
        L=_to_si(obj["L_mm"], MM, "geometry.L_mm"),
        lambda_L=_to_si(obj["lambda_nm"], NM, "geometry.lambda_nm"),
        w_y=_to_si(obj["wy_um"], UM, "geometry.wy_um"),
        w_x=None if wx is None else _to_si(wx, UM, "geometry.wx_um"),
    )


def _parse_velocity(obj):
    if not isinstance(obj, dict):
        raise ParseError("expected an object", "velocity")
    form = obj.get("form")
    if form == "gaussian":
        _check_keys(obj, "velocity", ("form", "vm_mps", "dv_mps"))
        return VelocityDistribution.gaussian(
            _to_si(obj["vm_mps"], 1, "velocity.vm_mps"),
            _to_si(obj["dv_mps"], 1, "velocity.dv_mps"),
        )
    if form == "tabulated":
        _check_keys(obj, "velocity", ("form", "table"))
        table = obj["table"]
        if not isinstance(table, list) or not table:
            raise ParseError("expected a non-empty list of [v_mps, weight] pairs", "velocity.table")
        pairs = []
        for i, row in enumerate(table):
            if not isinstance(row, list) or len(row) != 2:
                raise ParseError("expected a [v_mps, weight] pair", f"velocity.table[{i}]")
            pairs.append(
                (_to_si(row[0], 1, f"velocity.table[{i}]"), _to_si(row[1], 1, f"velocity.table[{i}]"))
            )
        return VelocityDistribution.tabulated(pairs)
    raise ParseError(f"form must be 'gaussian' or 'tabulated', got {form!r}", "velocity.form")


def _parse_point(obj, i):
    field = f"points[{i}]"
    if not isinstance(obj, dict):
        raise ParseError("expected an object", field)
    if ("power_W" in obj) == ("power_mW" in obj):
        raise ParseError("exactly one of power_W / power_mW is required", field)
    power_key = "power_W" if "power_W" in obj else "power_mW"
    _check_keys(obj, field, (power_key, "visibility"), ("sigma_v",))
    power = _to_si(obj[power_key], 1 if power_key == "power_W" else MW, f"{field}.{power_key}")
    sigma = obj.get("sigma_v")
    try:
        return VisibilityPoint(
            power=power,
            visibility=_to_si(obj["visibility"], 1, f"{field}.visibility"),
            sigma_v=None if sigma is None else _to_si(sigma, 1, f"{field}.sigma_v"),
        )
    except ValidationError as exc:
        raise ValidationError(str(exc).split(": ", 1)[-1], field) from None


def _load_json(document):
    if isinstance(document, dict):
        return document
    try:
        return json.loads(document, parse_float=Decimal)
    except json.JSONDecodeError as exc:
        raise ParseError(f"not valid JSON ({exc})") from None


def parse_model(document):
    """Parse the model part of a document (points optional and ignored).

    Returns ``(label, molecule, geometry, velocity)``.
    """
    obj = _load_json(document)
    _check_keys(obj, "", ("label", "molecule", "geometry", "velocity"), ("points",))
    if not isinstance(obj["label"], str):
        raise ParseError("expected text", "label")
    return (
        obj["label"],
        _parse_molecule(obj["molecule"]),
        _parse_geometry(obj["geometry"]),
        _parse_velocity(obj["velocity"]),
    )


def parse_dataset(document):
    """Parse a dataset document (JSON text or an already-decoded dict)."""
    obj = _load_json(document)
    _check_keys(obj, "", ("label", "molecule", "geometry", "velocity", "points"))
    label, molecule, geometry, velocity = parse_model(obj)
    points = obj["points"]
    if not isinstance(points, list):
        raise ParseError("expected a list", "points")
    return VisibilityDataset(
        label=label,
        molecule=molecule,
        geometry=geometry,
        velocity=velocity,
        points=tuple(_parse_point(p, i) for i, p in enumerate(points)),
    )


def load_dataset(path):
    with open(path, encoding="utf-8") as fh:
        return parse_dataset(fh.read())


# --------------------------------------------------------------------------
# serialization


class _Exact(str):
    """A decimal literal that must be emitted verbatim into the JSON text."""


def _from_doc(literal, scale):
    return float(Fraction(Decimal(literal)) * _exact_scale(scale))


def _doc_number(x, scale):
    """Shortest decimal literal whose SI conversion reproduces ``x`` exactly."""
    if scale == 1:
        return x
    guess = x / scale
    for candidate in (guess, *_neighbours(guess, 3)):
        if _from_doc(repr(candidate), scale) == x:
            return candidate
    exact = Fraction(x) / _exact_scale(scale)
    for digits in (17, 20, 25, 30, 40):
        literal = _format_fraction(exact, digits)
        if _from_doc(literal, scale) == x:
            return _Exact(literal)
    raise AssertionError(f"no exact decimal representation found for {x!r}")


def _neighbours(x, n):
    up = down = x
    for _ in range(n):
        up = float(np.nextafter(up, math.inf))
        down = float(np.nextafter(down, -math.inf))
        yield up
        yield down


def _format_fraction(frac, digits):
    from decimal import localcontext

    with localcontext() as ctx:
        ctx.prec = digits
        value = Decimal(frac.numerator) / Decimal(frac.denominator)
    return format(value, "E") if value.adjusted() < -6 or value.adjusted() > 20 else format(value, "f")


def dataset_to_dict(dataset, *, include_points=True):
    mol = dataset.molecule
    molecule = {"name": mol.name, "mass_amu": _doc_number(mol.mass, AMU)}
    if mol.alpha_vol is not None:
        molecule["alpha_A3"] = _doc_number(mol.alpha_vol, ANGSTROM3)
    molecule["sigma_abs_cm2"] = _doc_number(mol.sigma_abs, CM2)
    geo = dataset.geometry
    geometry = {
        "d_nm": _doc_number(geo.d, NM),
        "f": geo.f,
        "L_mm": _doc_number(geo.L, MM),
        "lambda_nm": _doc_number(geo.lambda_L, NM),
        "wy_um": _doc_number(geo.w_y, UM),
    }
    if geo.w_x is not None:
        geometry["wx_um"] = _doc_number(geo.w_x, UM)
    vel = dataset.velocity
    if vel.form == "gaussian":
        velocity = {"form": "gaussian", "vm_mps": vel.v_m, "dv_mps": vel.delta_v}
    else:
        velocity = {"form": "tabulated", "table": [[v, w] for v, w in vel.table]}
    out = {"label": dataset.label, "molecule": molecule, "geometry": geometry, "velocity": velocity}
    if include_points:
        points = []
        for p in dataset.points:
            entry = {"power_W": p.power, "visibility": p.visibility}
            if p.sigma_v is not None:
                entry["sigma_v"] = p.sigma_v
            points.append(entry)
        out["points"] = points
    return out


_EXACT_TOKEN = re.compile(r'"@@exact:([^"]+)@@"')


def dumps_exact(obj, **kwargs):
    """json.dumps that writes :class:`_Exact` literals as bare numbers."""

    def mark(o):
        if isinstance(o, _Exact):
            return f"@@exact:{o}@@"
        if isinstance(o, dict):
            return {k: mark(v) for k, v in o.items()}
        if isinstance(o, list):
            return [mark(v) for v in o]
        return o

    text = json.dumps(mark(obj), **kwargs)
    return _EXACT_TOKEN.sub(r"\1", text)


def serialize_dataset(dataset):
    return dumps_exact(dataset_to_dict(dataset), indent=2) + "\n"


def save_dataset(dataset, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_dataset(dataset))


# --------------------------------------------------------------------------
# fringe scans


@dataclass(eq=False)
class FringeScan:
    """Transmitted counts versus G3 shift (positions in m)."""

    positions: np.ndarray
    counts: np.ndarray
    period_hint: float

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)
        if self.positions.shape != self.counts.shape or self.positions.ndim != 1:
            raise ValidationError("positions and counts must be 1-D and equally long", "scan")
        if self.positions.size < 8:
            raise ValidationError("a scan needs at least 8 samples", "scan")
        step = np.diff(self.positions)
        if not (np.all(step > 0) or np.all(step < 0)):
            raise ValidationError("positions must be strictly monotone", "scan.positions")
        if not np.all(np.isfinite(self.counts)) or np.any(self.counts < 0):
            raise ValidationError("counts must be finite and non-negative", "scan.counts")
        if not self.period_hint > 0:
            raise ValidationError("period must be positive", "scan.period_hint")


@dataclass(frozen=True)
class FringeVisibility:
    """Visibility estimates from one fringe scan.

    ``visibility``, ``phase`` (fringe maximum position, m, in [0, d)), ``mean``
    and ``sigma_v`` come from the least-squares sinusoid fit; ``visibility_maxmin``
    is (S_max - S_min)/(S_max + S_min) of the raw counts.
    """

    visibility: float
    phase: float
    mean: float
    sigma_v: float
    visibility_maxmin: float


def parse_scan(text, period_hint):
    """Parse a two-column ``position_nm, counts`` table.

    Comma or whitespace delimited; ``#`` starts a comment line; a single
    non-numeric header line is allowed.
    """
    positions, counts = [], []
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cols = [c for c in re.split(r"[,\s;]+", line) if c]
        try:
            values = [float(c) for c in cols]
        except ValueError:
            if header_seen or positions:
                raise ParseError(f"line {lineno}: non-numeric row {line!r}") from None
            header_seen = True
            continue
        if len(values) != 2:
            raise ParseError(f"line {lineno}: expected 2 columns, got {len(values)}")
        positions.append(values[0] * NM)
        counts.append(values[1])
    return FringeScan(np.array(positions), np.array(counts), period_hint)


def load_scan(path, period_hint):
    with open(path, encoding="utf-8") as fh:
        return parse_scan(fh.read(), period_hint)


def extract_visibility(scan):
    """Fit S(x) = S0 (1 + V cos(2 pi (x - x0) / d)) by linear least squares."""
    x, s, d = scan.positions, scan.counts, scan.period_hint
    if not np.any(s > 0):
        raise DegenerateSignalError("all counts are zero")
    steps = np.abs(np.diff(x))
    if np.ptp(x) + np.median(steps) < d * (1 - 1e-9):
        raise DomainError(f"scan covers {np.ptp(x) + np.median(steps):.4g} m, less than one period {d:.4g} m")

    theta = 2.0 * np.pi * x / d
    design = np.column_stack([np.ones_like(x), np.cos(theta), np.sin(theta)])
    coef, _, rank, _ = np.linalg.lstsq(design, s, rcond=None)
    if rank < 3:
        raise DomainError("scan sampling does not resolve the fringe period")
    a, b, c = coef
    if not a > 0:
        raise DegenerateSignalError("fitted mean signal is not positive")
    amp = math.hypot(b, c)
    v = amp / a
    phase = (math.atan2(c, b) * d / (2.0 * np.pi)) % d

    dof = x.size - 3
    resid = s - design @ coef
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(design.T @ design)
    if amp > 0:
        grad = np.array([-v / a, b / (a * amp), c / (a * amp)])
        var = float(grad @ cov @ grad)
    else:
        var = 0.5 * (cov[1, 1] + cov[2, 2]) / a**2
    smax, smin = float(s.max()), float(s.min())
    return FringeVisibility(
        visibility=float(min(max(v, 0.0), 1.0)),
        phase=phase,
        mean=float(a),
        sigma_v=math.sqrt(max(var, 0.0)),
        visibility_maxmin=(smax - smin) / (smax + smin),
    )


# --------------------------------------------------------------------------
# synthetic data


def rng_for(seed):
    """Counter-based Philox generator: same stream on every platform."""
    return np.random.Generator(np.random.Philox(int(seed)))


def synth_dataset(
    molecule, geometry, velocity, powers, noise_sigma, seed, *, label="synthetic", power_calibration=1.0
):
    """Forward-model visibilities plus seeded Gaussian noise, clipped to [0, 1].

    Points carry ``sigma_v = noise_sigma`` when noise is added and no error
    bar otherwise.
    """
    powers = np.asarray(powers, dtype=float)
    if powers.size == 0:
        raise DomainError("powers must not be empty")
    if not noise_sigma >= 0:
        raise DomainError("noise_sigma must be non-negative")
    model = np.atleast_1d(
        visibility_avg(molecule, geometry, velocity, powers, power_calibration=power_calibration)
    )
    if noise_sigma > 0:
        model = model + noise_sigma * rng_for(seed).standard_normal(model.size)
    values = np.clip(model, 0.0, 1.0)
    sigma = float(noise_sigma) if noise_sigma > 0 else None
    points = tuple(VisibilityPoint(float(p), float(v), sigma) for p, v in zip(powers, values))
    return VisibilityDataset(label, molecule, geometry, velocity, points)


def synth_scan(visibility, mean, period, positions, *, phase=0.0, seed=None):
    """Sinusoidal fringe scan, Poisson-sampled when ``seed`` is given."""
    positions = np.asarray(positions, dtype=float)
    rate = mean * (1.0 + visibility * np.cos(2.0 * np.pi * (positions - phase) / period))
    counts = rate if seed is None else rng_for(seed).poisson(rate).astype(float)
    return FringeScan(positions, counts, period)


def format_scan(scan):
    lines = ["# position_nm, counts"]
    lines += [f"{float(x) / NM!r}, {float(c)!r}" for x, c in zip(scan.positions, scan.counts)]
    return "\n".join(lines) + "\n"
