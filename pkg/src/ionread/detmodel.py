"""Leak parameters and exact photon-count distributions for qubit readout.

The model: a hyperfine qubit is read out by driving a cycling transition
from the upper ground level ("bright" state) while the lower ground level
("dark" state) sits a hyperfine splitting away from resonance. Two small
leak processes limit the fidelity. A dark ion can be pumped into the
bright manifold through off-resonant excitation (relative strength alpha1
per cycling-rate photon), after which it fluoresces for the remaining
detection time; a bright ion can be pumped dark through off-resonant
excitation by polarization-impure light (alpha2). Detection of mean
lambda0 photons is Poissonian, so the observed count histograms are
Poisson distributions convolved with the exponential law of the leak
time.

Both leak-time convolutions integrate in closed form. With a1 = alpha1/eta
(the leak probability per detected photon) the dark-state distribution is

    p_dark(n) = exp(-a1*lambda0) * [ delta_{n,0}
                + a1/(1-a1)^(n+1) * P(n+1, (1-a1)*lambda0) ]

and with a2 = alpha2/eta the bright-state distribution is

    p_bright(n) = exp(-(1+a2)*lambda0) * lambda0^n/n!
                + a2/(1+a2)^(n+1) * P(n+1, (1+a2)*lambda0),

where P is the regularized lower incomplete gamma function. The dark form
requires a1 < 1; a1 >= 1 would mean the ion is more likely to leak than to
yield a detected photon, outside the validity of the derivation.

Unit conventions: frequencies are stored as angular frequencies in rad/s;
every file or constructor input quoted in MHz/GHz is converted by 2*pi
exactly once at parse time. Detection time in seconds, wavelengths in nm.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from .angular import Scheme, branching_ratios
from .errors import ConfigError, DomainError
from .specfun import log_poisson_pmf, reg_inc_gamma

TWO_PI = 2.0 * math.pi


def _require_positive(name: str, value) -> None:
    if value is not None and not (isinstance(value, (int, float)) and value > 0):
        raise DomainError(f"{name} must be > 0, got {value!r}")


@dataclass(frozen=True)
class IonSpecies:
    """Atomic constants of one ion species, angular frequencies in rad/s.

    gamma_* are the natural linewidths of the two possible excited levels,
    omega_hfs is the ground-state hyperfine splitting, omega_hfp* are the
    excited-state hyperfine splittings. Species measured only on the lower
    excited level (no published upper-level data) leave the p32 fields
    None; requesting that scheme then raises a DomainError.
    """

    name: str
    nuclear_spin: float
    omega_hfs: float
    gamma_p32: float | None = None
    omega_hfp32: float | None = None
    wavelength_p32_nm: float | None = None
    gamma_p12: float | None = None
    omega_hfp12: float | None = None
    wavelength_p12_nm: float | None = None

    def __post_init__(self):
        if not self.name:
            raise DomainError("species name must be non-empty")
        doubled = 2 * self.nuclear_spin
        if doubled < 0 or abs(doubled - round(doubled)) > 1e-12:
            raise DomainError(
                f"nuclear spin must be a non-negative multiple of 1/2, got {self.nuclear_spin}"
            )
        _require_positive("omega_hfs", self.omega_hfs)
        for fname in (
            "gamma_p32",
            "omega_hfp32",
            "wavelength_p32_nm",
            "gamma_p12",
            "omega_hfp12",
            "wavelength_p12_nm",
        ):
            _require_positive(fname, getattr(self, fname))

    @classmethod
    def from_frequencies(
        cls,
        name: str,
        nuclear_spin: float,
        *,
        omega_hfs_ghz: float,
        gamma_p32_mhz: float | None = None,
        omega_hfp32_ghz: float | None = None,
        wavelength_p32_nm: float | None = None,
        gamma_p12_mhz: float | None = None,
        omega_hfp12_ghz: float | None = None,
        wavelength_p12_nm: float | None = None,
    ) -> "IonSpecies":
        """Build a species from ordinary frequencies as usually quoted.

        This is the single place the 2*pi conversion happens.
        """

        def mhz(v):
            return None if v is None else TWO_PI * v * 1e6

        def ghz(v):
            return None if v is None else TWO_PI * v * 1e9

        return cls(
            name=name,
            nuclear_spin=nuclear_spin,
            omega_hfs=ghz(omega_hfs_ghz),
            gamma_p32=mhz(gamma_p32_mhz),
            omega_hfp32=ghz(omega_hfp32_ghz),
            wavelength_p32_nm=wavelength_p32_nm,
            gamma_p12=mhz(gamma_p12_mhz),
            omega_hfp12=ghz(omega_hfp12_ghz),
            wavelength_p12_nm=wavelength_p12_nm,
        )

    def to_frequency_dict(self) -> dict:
        """Inverse of from_frequencies, for writing registry files."""

        def mhz(v):
            return None if v is None else v / (TWO_PI * 1e6)

        def ghz(v):
            return None if v is None else v / (TWO_PI * 1e9)

        raw = {
            "nuclear_spin": self.nuclear_spin,
            "omega_hfs_ghz": ghz(self.omega_hfs),
            "gamma_p32_mhz": mhz(self.gamma_p32),
            "omega_hfp32_ghz": ghz(self.omega_hfp32),
            "wavelength_p32_nm": self.wavelength_p32_nm,
            "gamma_p12_mhz": mhz(self.gamma_p12),
            "omega_hfp12_ghz": ghz(self.omega_hfp12),
            "wavelength_p12_nm": self.wavelength_p12_nm,
        }
        return {k: v for k, v in raw.items() if v is not None}


BUILTIN_SPECIES: Mapping[str, IonSpecies] = {
    "cd111": IonSpecies.from_frequencies(
        "cd111",
        0.5,
        omega_hfs_ghz=14.5,
        gamma_p32_mhz=60.0,
        omega_hfp32_ghz=0.8,
        wavelength_p32_nm=214.5,
        gamma_p12_mhz=50.0,
        omega_hfp12_ghz=2.0,
        wavelength_p12_nm=226.5,
    ),
    "yb171": IonSpecies.from_frequencies(
        "yb171",
        0.5,
        omega_hfs_ghz=12.6,
        gamma_p12_mhz=23.0,
        omega_hfp12_ghz=2.1,
        wavelength_p12_nm=369.5,
    ),
    "hg199": IonSpecies.from_frequencies(
        "hg199",
        0.5,
        omega_hfs_ghz=40.5,
        gamma_p12_mhz=70.0,
        omega_hfp12_ghz=6.9,
        wavelength_p12_nm=194.0,
    ),
}


def get_species(name: str, extra: Mapping[str, IonSpecies] | None = None) -> IonSpecies:
    """Look up a species by name in the built-in registry plus extras."""
    if extra and name in extra:
        return extra[name]
    try:
        return BUILTIN_SPECIES[name]
    except KeyError:
        known = sorted(set(BUILTIN_SPECIES) | set(extra or ()))
        raise DomainError(f"unknown species {name!r}; known: {', '.join(known)}") from None


_SPECIES_KEYS = {
    "nuclear_spin",
    "omega_hfs_ghz",
    "gamma_p32_mhz",
    "omega_hfp32_ghz",
    "wavelength_p32_nm",
    "gamma_p12_mhz",
    "omega_hfp12_ghz",
    "wavelength_p12_nm",
}


def species_from_dict(name: str, fields: Mapping) -> IonSpecies:
    """Parse one species definition in the quoted-frequency key format."""
    if not isinstance(fields, Mapping):
        raise ConfigError(f"species {name!r} must map to an object")
    unknown = set(fields) - _SPECIES_KEYS
    if unknown:
        raise ConfigError(
            f"species {name!r} has unknown keys: {', '.join(sorted(unknown))}"
        )
    if "nuclear_spin" not in fields or "omega_hfs_ghz" not in fields:
        raise ConfigError(
            f"species {name!r} needs at least nuclear_spin and omega_hfs_ghz"
        )
    kwargs = dict(fields)
    spin = kwargs.pop("nuclear_spin")
    try:
        return IonSpecies.from_frequencies(name, spin, **kwargs)
    except DomainError as exc:
        raise ConfigError(f"species {name!r}: {exc}") from exc


def load_species_file(path) -> dict[str, IonSpecies]:
    """Read a JSON species registry {name: {frequency keys...}}.

    Keys carry their units in the name (gamma_p32_mhz, omega_hfs_ghz);
    unknown keys are rejected rather than ignored.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"species file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"species file {path} must hold an object of species")
    return {name: species_from_dict(name, fields) for name, fields in doc.items()}


def write_species_file(path, registry: Mapping[str, IonSpecies]) -> None:
    """Write a registry back out in the quoted-frequency JSON format."""
    doc = {name: sp.to_frequency_dict() for name, sp in registry.items()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class DetectionConfig:
    """Experimental settings of one detection interval.

    s is the saturation parameter of the detection beam, delta the laser
    detuning from the cycling resonance in rad/s (it only enters squared),
    tau_d the detection time in seconds, eta the overall photon collection
    plus detector efficiency, and p_pi/p_minus the fractional impurity
    power in the two unwanted polarizations.
    """

    scheme: Scheme
    s: float
    delta: float
    tau_d: float
    eta: float
    p_pi: float = 0.0
    p_minus: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not self.s >= 0:
            raise DomainError(f"saturation parameter must be >= 0, got {self.s}")
        if not math.isfinite(self.delta):
            raise DomainError(f"detuning must be finite, got {self.delta}")
        if not self.tau_d > 0:
            raise DomainError(f"detection time must be > 0, got {self.tau_d}")
        if not 0 < self.eta <= 1:
            raise DomainError(f"collection efficiency must be in (0, 1], got {self.eta}")
        if self.p_pi < 0 or self.p_minus < 0:
            raise DomainError("polarization impurities must be >= 0")
        if self.p_pi + self.p_minus >= 1:
            raise DomainError(
                f"impurity fractions must sum below 1, got {self.p_pi + self.p_minus}"
            )


@dataclass(frozen=True)
class LeakParams:
    """The three numbers the count distributions depend on.

    lambda0 is the mean detected photon number of an ideal bright ion,
    alpha1 the dark -> bright and alpha2 the bright -> dark leak
    probability per emitted cycling photon. Divide by eta to get the leak
    probability per detected photon.
    """

    lambda0: float
    alpha1: float
    alpha2: float

    def __post_init__(self):
        for fname in ("lambda0", "alpha1", "alpha2"):
            v = getattr(self, fname)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise DomainError(f"{fname} must be finite and >= 0, got {v!r}")


class HistKind(str, Enum):
    ANALYTIC = "analytic"
    SIMULATED = "simulated"
    MEASURED = "measured"


@dataclass
class PhotonHistogram:
    """A count histogram: values[n] is the probability of, or number of
    trials yielding, exactly n detected photons."""

    values: tuple
    kind: HistKind
    trials: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = HistKind(self.kind)
        vals = tuple(float(v) for v in self.values)
        if len(vals) == 0:
            raise DomainError("histogram must have at least one bin")
        if any(not math.isfinite(v) or v < 0 for v in vals):
            raise DomainError("histogram bins must be finite and >= 0")
        self.values = vals
        total = math.fsum(vals)
        if self.kind is HistKind.ANALYTIC:
            if abs(total - 1.0) > 1e-9:
                raise DomainError(
                    f"analytic histogram must sum to 1 within 1e-9, got {total}"
                )
        elif self.trials is not None:
            if abs(total - self.trials) > 0.5:
                raise DomainError(
                    f"histogram bins sum to {total} but trials={self.trials}"
                )

    @property
    def total(self) -> float:
        return math.fsum(self.values)

    def frequencies(self) -> tuple:
        total = self.total
        if total <= 0:
            raise DomainError("histogram has no counts")
        return tuple(v / total for v in self.values)


def _scheme_constants(species: IonSpecies, scheme: Scheme):
    """(gamma, detuning_1, detuning_2) for the requested scheme, rad/s."""
    if scheme is Scheme.P32:
        if species.gamma_p32 is None or species.omega_hfp32 is None:
            raise DomainError(
                f"species {species.name!r} has no upper-level data for the p32 scheme"
            )
        gamma = species.gamma_p32
        detuning_1 = species.omega_hfs - species.omega_hfp32
        detuning_2 = species.omega_hfp32
    else:
        if species.gamma_p12 is None or species.omega_hfp12 is None:
            raise DomainError(
                f"species {species.name!r} has no lower-level data for the p12 scheme"
            )
        gamma = species.gamma_p12
        detuning_1 = species.omega_hfs + species.omega_hfp12
        detuning_2 = species.omega_hfp12
    if detuning_1 == 0 or detuning_2 == 0:
        raise DomainError("leak detunings must be non-zero")
    return gamma, detuning_1, detuning_2


def detection_params(species: IonSpecies, config: DetectionConfig) -> LeakParams:
    """Map a species and detection settings to (lambda0, alpha1, alpha2).

    The bright scattering gives lambda0 = tau_d * eta * s*(gamma/2) /
    (1 + s + (2*delta/gamma)^2). The dark-state leak is the off-resonant
    excitation strength (gamma/2Delta1)^2 times the saturation factor and
    the branching ratio into the bright manifold. For the p32 scheme the
    bright-state leak is driven only by the impure polarization fractions;
    for the p12 scheme all polarizations are applied deliberately and the
    2/9 branching ratio applies directly.
    """
    scheme = config.scheme
    gamma, detuning_1, detuning_2 = _scheme_constants(species, scheme)
    ratios = branching_ratios(species.nuclear_spin, scheme)
    sat = 1.0 + config.s + (2.0 * config.delta / gamma) ** 2
    lambda0 = config.tau_d * config.eta * config.s * (gamma / 2.0) / sat
    alpha1 = ratios.m1 * sat * (gamma / (2.0 * detuning_1)) ** 2
    if scheme is Scheme.P32:
        impurity = config.p_pi + config.p_minus
        pumping = ratios.m2_pi * config.p_pi + ratios.m2_minus * config.p_minus
        alpha2 = sat * (gamma / (2.0 * detuning_2)) ** 2 * pumping / (1.0 - impurity)
    else:
        alpha2 = ratios.m2_pi * sat * (gamma / (2.0 * detuning_2)) ** 2
    return LeakParams(lambda0=lambda0, alpha1=alpha1, alpha2=alpha2)


def _leak_fractions(params: LeakParams, eta: float) -> tuple[float, float]:
    if not 0 < eta <= 1:
        raise DomainError(f"collection efficiency must be in (0, 1], got {eta}")
    a1 = params.alpha1 / eta
    a2 = params.alpha2 / eta
    if a1 >= 1.0:
        raise DomainError(
            f"alpha1/eta must be < 1 for the dark distribution to hold, got {a1}"
        )
    return a1, a2


def dark_point_mass(params: LeakParams, eta: float) -> float:
    """Probability that a dark ion never leaks: exp(-alpha1*lambda0/eta)."""
    a1, _ = _leak_fractions(params, eta)
    return math.exp(-a1 * params.lambda0)


def dark_leak_density(lam: float, params: LeakParams, eta: float) -> float:
    """Density of the latent mean count lambda of a leaking dark ion.

    A leak at the fraction t/tau_d of the detection window leaves mean
    count lambda = (1 - t/tau_d)*lambda0, distributed with density
    (alpha1/eta) * exp((lambda - lambda0)*alpha1/eta) on (0, lambda0].
    The point mass at lambda = 0 is reported separately by
    ``dark_point_mass``.
    """
    a1, _ = _leak_fractions(params, eta)
    if not 0.0 < lam <= params.lambda0:
        raise DomainError(
            f"latent mean must lie in (0, lambda0={params.lambda0}], got {lam}"
        )
    return a1 * math.exp((lam - params.lambda0) * a1)


def _count_index(n) -> int:
    if isinstance(n, float):
        if not n.is_integer():
            raise DomainError(f"count must be a non-negative integer, got {n}")
        n = int(n)
    if not isinstance(n, int) or isinstance(n, bool) or n < 0:
        raise DomainError(f"count must be a non-negative integer, got {n!r}")
    return n


def p_dark(n, params: LeakParams, eta: float) -> float:
    """Probability a dark ion yields exactly n detected photons."""
    n = _count_index(n)
    a1, _ = _leak_fractions(params, eta)
    lam0 = params.lambda0
    point = math.exp(-a1 * lam0)
    if a1 == 0.0 or lam0 == 0.0:
        return point if n == 0 else 0.0
    tail = reg_inc_gamma(n + 1, (1.0 - a1) * lam0)
    if tail > 0.0:
        # a1/(1-a1)^(n+1) in log space so large n cannot overflow
        tail *= math.exp(math.log(a1) - (n + 1) * math.log1p(-a1))
    base = point if n == 0 else 0.0
    return base + point * tail


def p_bright(n, params: LeakParams, eta: float) -> float:
    """Probability a bright ion yields exactly n detected photons."""
    n = _count_index(n)
    _, a2 = _leak_fractions(params, eta)
    lam0 = params.lambda0
    survived = math.exp(log_poisson_pmf(n, lam0) - a2 * lam0)
    if a2 == 0.0 or lam0 == 0.0:
        return survived
    leaked = reg_inc_gamma(n + 1, (1.0 + a2) * lam0)
    if leaked > 0.0:
        leaked *= math.exp(math.log(a2) - (n + 1) * math.log1p(a2))
    return survived + leaked


def histogram_cutoff(lambda0: float) -> int:
    """Bin count that bounds the neglected upper tail below ~1e-12."""
    if not (math.isfinite(lambda0) and lambda0 >= 0):
        raise DomainError(f"lambda0 must be finite and >= 0, got {lambda0}")
    return math.ceil(lambda0 + 12.0 * math.sqrt(lambda0) + 30.0)


def pmf_arrays(params: LeakParams, eta: float, n_max: int | None = None):
    """Dark and bright pmfs tabulated on 0..n_max inclusive."""
    if n_max is None:
        n_max = histogram_cutoff(params.lambda0)
    n_max = _count_index(n_max)
    dark = [p_dark(n, params, eta) for n in range(n_max + 1)]
    bright = [p_bright(n, params, eta) for n in range(n_max + 1)]
    return dark, bright


def analytic_histograms(
    params: LeakParams, eta: float, n_max: int | None = None
) -> tuple[PhotonHistogram, PhotonHistogram]:
    """Dark and bright distributions as PhotonHistogram objects.

    The final bin absorbs the truncated upper tail so both histograms sum
    to exactly 1 and downstream consumers can treat them as complete.
    """
    dark, bright = pmf_arrays(params, eta, n_max)
    dark[-1] += max(0.0, 1.0 - math.fsum(dark))
    bright[-1] += max(0.0, 1.0 - math.fsum(bright))
    meta = {"lambda0": params.lambda0, "alpha1": params.alpha1, "alpha2": params.alpha2, "eta": eta}
    return (
        PhotonHistogram(tuple(dark), HistKind.ANALYTIC, meta=dict(meta, state="dark")),
        PhotonHistogram(tuple(bright), HistKind.ANALYTIC, meta=dict(meta, state="bright")),
    )
