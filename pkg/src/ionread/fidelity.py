"""Detection fidelity and its optimization over light level and threshold.

State discrimination by thresholding: declare "dark" when the count n is
at or below a threshold d, "bright" when strictly greater. The fidelity
of a single readout is the worse of the two correct-identification
probabilities,

    F = min( sum_{n<=d} p_dark(n), 1 - sum_{n<=d} p_bright(n) ).

Longer detection (larger lambda0) separates the Poisson peaks but gives
the dark ion more chances to leak bright, so F has an interior optimum in
lambda0 at fixed leak strengths. The optimizer fixes the leak ratios at
their zero-power floors (saturation -> 0, detuning 0), scans lambda0 on a
coarse grid under 3*ln(eta/alpha1), refines by golden section, and scans
the threshold exhaustively at each light level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .angular import Scheme
from .detmodel import (
    DetectionConfig,
    IonSpecies,
    LeakParams,
    detection_params,
    histogram_cutoff,
    p_bright,
    p_dark,
)
from .errors import DomainError

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class DiscriminationResult:
    """Outcome of one threshold choice at one light level.

    d is the largest count still declared dark, dark_fidelity the
    probability a dark ion stays at or below d, bright_fidelity the
    probability a bright ion exceeds d, and fidelity their minimum.
    """

    d: int
    lambda0_opt: float
    fidelity: float
    dark_fidelity: float
    bright_fidelity: float


def _cdf_pair(params: LeakParams, eta: float, n_max: int):
    dark_cum = []
    bright_cum = []
    td = 0.0
    tb = 0.0
    for n in range(n_max + 1):
        td += p_dark(n, params, eta)
        tb += p_bright(n, params, eta)
        dark_cum.append(min(td, 1.0))
        bright_cum.append(min(tb, 1.0))
    return dark_cum, bright_cum


def fidelity_at(d: int, params: LeakParams, eta: float) -> DiscriminationResult:
    """Both one-sided fidelities and their minimum at threshold d."""
    if not isinstance(d, int) or isinstance(d, bool) or d < 0:
        raise DomainError(f"threshold must be a non-negative integer, got {d!r}")
    dark_fid = math.fsum(p_dark(n, params, eta) for n in range(d + 1))
    bright_fid = 1.0 - math.fsum(p_bright(n, params, eta) for n in range(d + 1))
    dark_fid = min(dark_fid, 1.0)
    bright_fid = max(min(bright_fid, 1.0), 0.0)
    return DiscriminationResult(
        d=d,
        lambda0_opt=params.lambda0,
        fidelity=min(dark_fid, bright_fid),
        dark_fidelity=dark_fid,
        bright_fidelity=bright_fid,
    )


def best_threshold(params: LeakParams, eta: float) -> DiscriminationResult:
    """Exhaustive threshold scan over d in [0, n_max] at fixed lambda0."""
    n_max = histogram_cutoff(params.lambda0)
    dark_cum, bright_cum = _cdf_pair(params, eta, n_max)
    best = None
    for d in range(n_max + 1):
        f = min(dark_cum[d], 1.0 - bright_cum[d])
        if best is None or f > best.fidelity:
            best = DiscriminationResult(
                d=d,
                lambda0_opt=params.lambda0,
                fidelity=f,
                dark_fidelity=dark_cum[d],
                bright_fidelity=1.0 - bright_cum[d],
            )
    return best


def floor_leak_ratios(species: IonSpecies, scheme) -> tuple[float, float]:
    """(alpha1, alpha2) at zero saturation and zero detuning.

    These are the unavoidable leak strengths of the scheme: saturation and
    detuning only increase them. Polarization impurity is taken as zero,
    so the upper-level scheme has alpha2 = 0 while the deliberately
    driven lower-level scheme keeps its intrinsic alpha2.
    """
    config = DetectionConfig(
        scheme=Scheme(scheme), s=0.0, delta=0.0, tau_d=1.0, eta=1.0
    )
    lp = detection_params(species, config)
    return lp.alpha1, lp.alpha2


def _lambda0_bound(alpha1: float, eta: float) -> float:
    a1 = alpha1 / eta
    if not 0 < a1 < 1:
        raise DomainError(f"optimization needs 0 < alpha1/eta < 1, got {a1}")
    return 3.0 * math.log(1.0 / a1)


def optimize_at(
    alpha1: float,
    alpha2: float,
    eta: float,
    *,
    grid_points: int = 200,
    rel_tol: float = 1e-4,
) -> DiscriminationResult:
    """Best fidelity over lambda0 in (0, 3*ln(eta/alpha1)] at fixed leaks.

    Coarse grid to localize the peak, golden-section refinement of
    lambda0 to the requested relative width, threshold re-optimized at
    every light level evaluated. Deterministic.
    """
    if grid_points < 3:
        raise DomainError(f"grid must have at least 3 points, got {grid_points}")
    hi = _lambda0_bound(alpha1, eta)

    def eval_at(lam0: float) -> DiscriminationResult:
        return best_threshold(LeakParams(lam0, alpha1, alpha2), eta)

    step = hi / grid_points
    grid = [step * (i + 1) for i in range(grid_points)]
    results = [eval_at(lam0) for lam0 in grid]
    k = max(range(len(results)), key=lambda i: results[i].fidelity)
    best = results[k]

    a = grid[k - 1] if k > 0 else step * 0.5
    b = grid[k + 1] if k + 1 < len(results) else hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1 = eval_at(x1)
    f2 = eval_at(x2)
    while (b - a) > rel_tol * max(1.0, best.lambda0_opt):
        if f1.fidelity >= f2.fidelity:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = eval_at(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = eval_at(x2)
        cand = f1 if f1.fidelity >= f2.fidelity else f2
        if cand.fidelity > best.fidelity:
            best = cand
    return best


def optimize_detection(species: IonSpecies, scheme, eta: float) -> DiscriminationResult:
    """Best achievable fidelity of a species/scheme at collection eta.

    Applies the zero-power idealization (leak ratios at their floors) and
    jointly maximizes over the light level and the integer threshold.
    """
    if not (isinstance(eta, (int, float)) and 0 < eta <= 1):
        raise DomainError(f"collection efficiency must be in (0, 1], got {eta!r}")
    alpha1, alpha2 = floor_leak_ratios(species, scheme)
    return optimize_at(alpha1, alpha2, eta)


class ApproxFidelity(NamedTuple):
    """Leading-order estimate: error dominated by dark ions leaking early."""

    fidelity: float
    lambda0: float


def approx_fidelity(eta: float, alpha1: float) -> ApproxFidelity:
    """F ~ 1 - (alpha1/eta)*ln(eta/alpha1) at lambda0 ~ ln(eta/alpha1)."""
    if not (isinstance(eta, (int, float)) and eta > 0):
        raise DomainError(f"eta must be > 0, got {eta!r}")
    if not 0 < alpha1 < eta:
        raise DomainError(
            f"approximation needs 0 < alpha1 < eta, got alpha1={alpha1}, eta={eta}"
        )
    log_term = math.log(eta / alpha1)
    return ApproxFidelity(fidelity=1.0 - (alpha1 / eta) * log_term, lambda0=log_term)


def max_clock_fidelity(gamma: float, omega_hfp: float) -> float:
    """Ceiling on direct readout of the field-insensitive hyperfine pair.

    Off-resonant coupling of the detection light to the other excited
    hyperfine level caps the fidelity at 1 - (4/9)*(gamma/(2*omega_hfp))^2
    regardless of light level. Arguments are angular frequencies in rad/s
    (any common unit works since only the ratio enters).
    """
    if not gamma > 0:
        raise DomainError(f"gamma must be > 0, got {gamma}")
    if not omega_hfp > 0:
        raise DomainError(f"omega_hfp must be > 0, got {omega_hfp}")
    return 1.0 - (4.0 / 9.0) * (gamma / (2.0 * omega_hfp)) ** 2


def composed_fidelity(f_ceiling: float, f_discrimination: float) -> float:
    """Total readout fidelity as the product of independent loss factors."""
    for name, v in (("f_ceiling", f_ceiling), ("f_discrimination", f_discrimination)):
        if not 0.0 <= v <= 1.0:
            raise DomainError(f"{name} must lie in [0, 1], got {v}")
    return f_ceiling * f_discrimination


def fidelity_curve(species: IonSpecies, scheme, eta_grid) -> list[dict]:
    """Optimal infidelity versus collection efficiency, one row per eta.

    Each row carries the numeric optimum next to the leading-order
    estimate so the quality of the approximation is visible across the
    whole efficiency range.
    """
    scheme = Scheme(scheme)
    alpha1, alpha2 = floor_leak_ratios(species, scheme)
    rows = []
    for eta in eta_grid:
        if not 0 < eta <= 1:
            raise DomainError(f"eta grid values must be in (0, 1], got {eta}")
        best = optimize_at(alpha1, alpha2, eta)
        approx = approx_fidelity(eta, alpha1)
        rows.append(
            {
                "eta": eta,
                "infidelity_numeric": 1.0 - best.fidelity,
                "infidelity_approx": 1.0 - approx.fidelity,
                "lambda0_opt": best.lambda0_opt,
                "d_opt": best.d,
            }
        )
    return rows


def format_curve_csv(rows) -> str:
    """CSV table with the documented fixed header."""
    lines = ["eta,infidelity_numeric,infidelity_approx,lambda0_opt,d_opt"]
    for row in rows:
        lines.append(
            "%.9g,%.9g,%.9g,%.9g,%d"
            % (
                row["eta"],
                row["infidelity_numeric"],
                row["infidelity_approx"],
                row["lambda0_opt"],
                row["d_opt"],
            )
        )
    return "\n".join(lines) + "\n"
