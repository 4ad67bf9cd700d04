"""Phase calibration, phase-locked fringe fitting and bootstrap errors.

A scan tilts the glass plate in one photon's long arm; the induced optical
phase follows from geometric optics and Snell's law,

    phi = k t (n1 - n2 + (n2 - n1 cos(alpha - beta)) / cos(beta)),
    beta = arcsin(n1 sin(alpha) / n2),   k = 2 pi / lambda,

with plate thickness t, ambient index n1 and glass index n2.  Plates are
pre-tilted so that a usable fraction of a fringe fits into a couple of
degrees; scan phases are quoted relative to the pre-tilt position.

Fringe estimation is phase locked: f(phi) = a1 [1 + V1 sin(b1 phi + c1)]
is fitted to the odd-parity (BBB-set) counts by iterative least squares,
then the even-parity (AAA-set) counts are fitted with b1 and c1 frozen,
which is linear and solved in closed form.  The two curves are expected to
be complementary, hence share frequency and phase.  Visibility errors come
from refitting Poisson-resampled copies of the data.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

MAX_ITERATIONS = 200
PARAM_TOL = 1e-10


class FitError(RuntimeError):
    """Fit did not converge or was handed unusable data."""


@dataclass(frozen=True)
class PlateSpec:
    """Tilted glass plate in one interferometer arm."""

    wavelength: float           # meters
    thickness: float = 3.0e-3   # meters
    ambient_index: float = 1.0
    glass_index: float = 1.5
    pre_tilt: float = math.radians(3.0)  # radians

    def __post_init__(self):
        if not self.thickness > 0:
            raise ValueError("plate thickness must be positive")
        if not self.glass_index > self.ambient_index >= 1.0:
            raise ValueError("need glass_index > ambient_index >= 1")
        if abs(self.pre_tilt) >= math.pi / 2:
            raise ValueError("pre-tilt must stay below 90 degrees")


def plate_angle_to_phase(alpha, spec: PlateSpec):
    """Absolute plate phase at tilt angle ``alpha`` (radians); even in alpha."""
    a = np.asarray(alpha, dtype=float)
    if np.any(np.abs(a) >= math.pi / 2):
        raise ValueError("tilt angle must stay below 90 degrees")
    n1, n2 = spec.ambient_index, spec.glass_index
    k = 2.0 * math.pi / spec.wavelength
    beta = np.arcsin(n1 * np.sin(a) / n2)
    phi = k * spec.thickness * (n1 - n2 + (n2 - n1 * np.cos(a - beta)) / np.cos(beta))
    return phi if phi.shape else float(phi)


def scan_phase(alpha, spec: PlateSpec):
    """Phase relative to the pre-tilt zero position: phi(pre+alpha) - phi(pre)."""
    return plate_angle_to_phase(np.asarray(alpha, dtype=float) + spec.pre_tilt,
                                spec) - plate_angle_to_phase(spec.pre_tilt, spec)


# ---------------------------------------------------------------------------
# Fringe model and fits
# ---------------------------------------------------------------------------

def fringe_model(phi, offset, visibility, frequency, phase):
    return offset * (1.0 + visibility * np.sin(frequency * np.asarray(phi) + phase))


@dataclass
class FringeFit:
    offset: float
    visibility: float        # clamped to [0, 1]
    frequency: float
    phase: float
    offset_err: float = math.nan
    visibility_err: float = math.nan
    frequency_err: float = math.nan
    phase_err: float = math.nan
    visibility_raw: float = math.nan  # unclamped magnitude estimator
    rmse: float = math.nan
    clamped: bool = False
    degenerate: bool = False
    locked: bool = False      # frequency/phase frozen from the partner curve
    antiphase: bool = False   # locked modulation came out pi out of phase

    def params(self):
        return (self.offset, self.visibility, self.frequency, self.phase)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "offset", "visibility", "frequency", "phase", "offset_err",
            "visibility_err", "frequency_err", "phase_err", "visibility_raw",
            "rmse", "clamped", "degenerate", "locked", "antiphase")}


def _initial_guess(phi, counts):
    a0 = float(np.mean(counts))
    lo, hi = float(np.min(counts)), float(np.max(counts))
    v0 = (hi - lo) / (hi + lo) if hi + lo > 0 else 0.0
    b0 = 1.0
    c0 = math.pi / 2 - b0 * float(phi[int(np.argmax(counts))])
    return a0, min(v0, 0.99), b0, c0


def _finish(fit: FringeFit) -> FringeFit:
    raw = fit.visibility
    fit.visibility_raw = raw
    if raw < 0.0 or raw > 1.0:
        fit.visibility = min(max(raw, 0.0), 1.0)
        fit.clamped = True
        warnings.warn(f"fitted visibility {raw:.3f} clamped to [0, 1]",
                      stacklevel=3)
    return fit


def fit_free_fringe(phi, counts) -> FringeFit:
    """Four-parameter fit of a [1 + V sin] fringe to one curve."""
    phi = np.asarray(phi, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if len(phi) < 5:
        raise FitError("need at least five scan points")
    if np.ptp(phi) <= 0:
        raise FitError("scan points must span a phase range")
    if np.ptp(counts) == 0:
        return _finish(FringeFit(offset=float(counts[0]), visibility=0.0,
                                 frequency=1.0, phase=0.0, degenerate=True,
                                 rmse=0.0))
    a0, v0, b0, c0 = _initial_guess(phi, counts)

    def residual(p):
        return fringe_model(phi, *p) - counts

    sol = least_squares(residual, x0=(a0, max(v0, 1e-3), b0, c0),
                        xtol=PARAM_TOL, max_nfev=MAX_ITERATIONS * 5)
    if not sol.success:
        raise FitError(f"fringe fit did not converge: {sol.message}")
    a, v, b, c = sol.x
    if a < 0:  # push to the equivalent positive-offset branch
        a, v = -a, -v
    if b < 0:  # sin(-bx + c) = sin(bx + (pi - c)) with flipped amplitude
        b, c, v = -b, math.pi - c, -v
    if v < 0:  # a(1 + v sin) = a(1 + |v| sin(... + pi))
        v, c = -v, c + math.pi
    c = math.remainder(c, 2.0 * math.pi)
    errs = _param_errors(sol, counts)
    fit = FringeFit(offset=a, visibility=v, frequency=b, phase=c,
                    offset_err=errs[0], visibility_err=errs[1],
                    frequency_err=errs[2], phase_err=errs[3],
                    rmse=float(np.sqrt(np.mean(sol.fun**2))))
    return _finish(fit)


def fit_locked_fringe(phi, counts, frequency, phase) -> FringeFit:
    """Fit with frozen frequency/phase; linear in (a, a V), solved exactly.

    A complementary curve modulates pi out of phase with its partner, so
    the signed amplitude comes out negative there; the reported visibility
    is the modulation magnitude, with the sign kept in ``antiphase``.
    """
    phi = np.asarray(phi, dtype=float)
    counts = np.asarray(counts, dtype=float)
    s = np.sin(frequency * phi + phase)
    design = np.column_stack([np.ones_like(phi), s])
    (p, q), res, rank, _ = np.linalg.lstsq(design, counts, rcond=None)
    if p <= 0 or rank < 2:
        # pathological data (all-zero counts or degenerate design)
        fit = FringeFit(offset=float(p), visibility=0.0, frequency=frequency,
                        phase=phase, degenerate=True, locked=True,
                        rmse=float(np.sqrt(np.mean((counts - p) ** 2))))
        return _finish(fit)
    v = q / p
    model_vals = design @ (p, q)
    resid = counts - model_vals
    rmse = float(np.sqrt(np.mean(resid**2)))
    dof = max(len(counts) - 2, 1)
    cov = np.linalg.inv(design.T @ design) * float(resid @ resid) / dof
    p_err, q_err = np.sqrt(np.diag(cov))
    v_err = abs(v) * math.sqrt((q_err / q) ** 2 + (p_err / p) ** 2) if q else q_err / p
    fit = FringeFit(offset=float(p), visibility=float(abs(v)), frequency=frequency,
                    phase=phase, offset_err=float(p_err),
                    visibility_err=float(v_err), frequency_err=0.0,
                    phase_err=0.0, rmse=rmse, locked=True, antiphase=bool(v < 0))
    return _finish(fit)


def _param_errors(sol, counts):
    try:
        _, s, vt = np.linalg.svd(sol.jac, full_matrices=False)
        s = s[s > 1e-12 * s[0]]
        vt = vt[: s.size]
        dof = max(len(counts) - len(sol.x), 1)
        cov = (vt.T / s**2) @ vt * 2 * sol.cost / dof
        return np.sqrt(np.diag(cov))
    except np.linalg.LinAlgError:  # pragma: no cover
        return np.full(4, math.nan)


def fit_fringe_pair(bbb_points, aaa_points, independent: bool = False,
                    fit_first: str = "bbb") -> tuple[FringeFit, FringeFit]:
    """Phase-locked complementary fit of the two parity-set fringes.

    ``bbb_points`` / ``aaa_points`` are (phase, count) sequences.  The BBB
    curve is fitted free, then AAA inherits the frequency and phase; pass
    ``fit_first='aaa'`` to swap the roles, or ``independent=True`` to fit
    both curves free (typically yields slightly higher visibilities).
    Returns (bbb_fit, aaa_fit) in that order regardless of fit order.
    """
    phi_b, y_b = _split_points(bbb_points)
    phi_a, y_a = _split_points(aaa_points)
    if independent:
        return fit_free_fringe(phi_b, y_b), fit_free_fringe(phi_a, y_a)
    if fit_first not in ("bbb", "aaa"):
        raise ValueError("fit_first must be 'bbb' or 'aaa'")
    if fit_first == "bbb":
        first = fit_free_fringe(phi_b, y_b)
        second = fit_locked_fringe(phi_a, y_a, first.frequency, first.phase)
        return first, second
    first = fit_free_fringe(phi_a, y_a)
    second = fit_locked_fringe(phi_b, y_b, first.frequency, first.phase)
    return second, first


def _split_points(points):
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("points must be an (n, 2) array of (phase, count)")
    return arr[:, 0], arr[:, 1]


# ---------------------------------------------------------------------------
# Bootstrap visibility error and combinations
# ---------------------------------------------------------------------------

def visibility_error(bbb_points, aaa_points, n_samples: int = 10,
                     seed: int = 0, independent: bool = False,
                     fit_first: str = "bbb") -> tuple[float, float]:
    """Poisson-bootstrap standard deviation of (V_bbb, V_aaa).

    Draws ``n_samples`` new data sets from Poisson distributions whose
    means are the measured counts, refits each with the same phase-locked
    procedure and returns the standard deviation of the visibilities.
    Resamples whose fit fails are dropped (with a warning); at least half
    must survive.
    """
    phi_b, y_b = _split_points(bbb_points)
    phi_a, y_a = _split_points(aaa_points)
    if np.any(y_b < 0) or np.any(y_a < 0):
        raise ValueError("counts must be non-negative for Poisson resampling")
    rng = np.random.default_rng(seed)
    vs_b, vs_a = [], []
    for _ in range(n_samples):
        rb = rng.poisson(y_b)
        ra = rng.poisson(y_a)
        try:
            fb, fa = fit_fringe_pair(np.column_stack([phi_b, rb]),
                                     np.column_stack([phi_a, ra]),
                                     independent=independent, fit_first=fit_first)
        except FitError as exc:
            warnings.warn(f"bootstrap resample dropped: {exc}", stacklevel=2)
            continue
        vs_b.append(fb.visibility)
        vs_a.append(fa.visibility)
    if len(vs_b) < max(n_samples // 2, 2):
        raise FitError("more than half of the bootstrap resamples failed to fit")
    return float(np.std(vs_b)), float(np.std(vs_a))


def average_visibility(v_aaa: float, sigma_aaa: float, v_bbb: float,
                       sigma_bbb: float) -> tuple[float, float]:
    """Arithmetic mean of two visibilities with combined uncertainty."""
    return (0.5 * (v_aaa + v_bbb),
            0.5 * math.sqrt(sigma_aaa**2 + sigma_bbb**2))


def visibility_bound_from_car(car: float) -> float:
    """Upper bound CAR/(CAR+1) that uncorrelated background puts on visibility.

    The published number (CAR about 14 bounding visibilities at 93%) does
    not come with an explicit formula; CAR/(CAR+1) reproduces it and is
    used here.
    """
    if not car > 1:
        raise ValueError("CAR must exceed 1")
    return car / (car + 1.0)


def order_sensitivity(bbb_points, aaa_points) -> dict:
    """Appendix-style diagnostic: how much fit order changes each visibility.

    On genuinely complementary fringes both orders recover nearly the same
    visibilities; with an interference-free data set the phase-locked fit
    of the second curve collapses, so the order swing is large.
    """
    b1, a1 = fit_fringe_pair(bbb_points, aaa_points, fit_first="bbb")
    b2, a2 = fit_fringe_pair(bbb_points, aaa_points, fit_first="aaa")
    return {
        "v_bbb_first": (b1.visibility, a1.visibility),
        "v_aaa_first": (b2.visibility, a2.visibility),
        "delta_bbb": abs(b1.visibility - b2.visibility),
        "delta_aaa": abs(a1.visibility - a2.visibility),
        "max_delta": max(abs(b1.visibility - b2.visibility),
                         abs(a1.visibility - a2.visibility)),
    }
