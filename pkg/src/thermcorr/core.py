"""Units, line shapes, Bose-Einstein occupation and the frequency integrals.

Every correlator in this package is an integral over one Lorentzian
absorption line.  With ``x = (omega - omega0) / Omega_c`` and
``d omega / 2 pi = Omega_c dx / 2 pi`` the three quantities of interest are

    C_kl = (alpha_k alpha_l f**2 / N) Omega_c J_var
    I_k  = alpha_k f Omega_c J_1
    C_kk = alpha_k**2 f**2 Omega_c J_2 + I_k

with the dimensionless line integrals

    J_var = (1/2pi) int var(x) dx
    J_1   = (1/2pi) int <1 - sigma>(x) dx
    J_2   = (1/2pi) int <1 - sigma>(x)**2 dx

where ``var = <sigma^2> - <sigma>^2`` is the ensemble variance of the first
spectral moment of the scattering strengths.  The lower frequency limit
``omega = 0`` sits at ``x = -omega0/Omega_c``; since the line is narrow it
is pushed to ``-inf``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .quadrature import IntegrationError, QuadratureResult, integrate_real_line

DEFAULT_RTOL = 1e-8


class UnitSystem(str, enum.Enum):
    """Reduced-unit conventions attached to a :class:`CorrelatorResult`.

    ``WAVEGUIDE_FIG2``
        C_kl in Omega_c l f^2 a_k a_l / (N xi0), C_kk - I_k in
        Omega_c (l f a_k / xi0)^2 and I_k in Omega_c l f a_k / xi0.
    ``CAVITY_FIG3``
        C_kl in Omega_c f^2 a_k a_l / N, C_kk - I_k in Omega_c f^2 a_k^2 and
        I_k in Omega_c f a_k.
    ``ABSOLUTE``
        Everything in rad/s (counts per second).
    """

    WAVEGUIDE_FIG2 = "waveguide-fig2"
    CAVITY_FIG3 = "cavity-fig3"
    ABSOLUTE = "absolute"


# --------------------------------------------------------------------------
# Bose-Einstein occupation


@dataclass(frozen=True)
class BoseEinsteinInput:
    """Photon energy over thermal energy, ``hbar omega / (k_B T)``."""

    photon_energy_over_thermal: float

    def __post_init__(self):
        if not self.photon_energy_over_thermal > 0:
            raise ValueError("hbar*omega/(k_B*T) must be strictly positive")

    @classmethod
    def from_physical(cls, omega: float, temperature: float) -> "BoseEinsteinInput":
        """Build the ratio from an angular frequency (rad/s) and a temperature (K)."""
        hbar = 1.054571817e-34
        k_b = 1.380649e-23
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        return cls(hbar * omega / (k_b * temperature))

    @property
    def occupation(self) -> float:
        return float(bose_einstein(self.photon_energy_over_thermal))


def bose_einstein(ratio):
    """Mean photon number per mode, ``1 / (exp(ratio) - 1)``.

    Parameters
    ----------
    ratio : float or array_like
        ``hbar omega / (k_B T)``, strictly positive.

    Returns
    -------
    f : float or ndarray
        Occupation number.  ``expm1`` keeps the Rayleigh-Jeans end accurate.

    Raises
    ------
    ValueError
        If any ratio is nonpositive or NaN.
    """
    r = np.asarray(ratio, dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("bose_einstein requires a strictly positive ratio")
    with np.errstate(over="ignore"):
        f = 1.0 / np.expm1(r)
    return float(f) if f.ndim == 0 else f


# --------------------------------------------------------------------------
# Line shape and detectors


@dataclass(frozen=True)
class LorentzianLine:
    """Lorentzian absorption line ``eps''(omega) = eps''_0 / (1 + x**2)``.

    ``peak_strength`` is the geometry-specific absorption parameter at line
    centre: ``s0 = L / xi0`` for the waveguide and ``gamma0`` for the cavity.
    """

    center_frequency: float
    half_width: float
    peak_strength: float = 0.0

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        if self.center_frequency <= 0:
            raise ValueError("center_frequency must be positive")
        if self.peak_strength < 0:
            raise ValueError("peak_strength must be nonnegative")

    @property
    def narrow(self) -> bool:
        """True when ``Omega_c <= 0.01 omega0``, where the ``x -> -inf`` extension is harmless."""
        return self.half_width <= 0.01 * self.center_frequency

    def detuning(self, omega):
        return (np.asarray(omega, dtype=float) - self.center_frequency) / self.half_width

    def waveguide_strength(self, x):
        """``s(x) = s0 / sqrt(1 + x**2)``."""
        return self.peak_strength / np.sqrt(1.0 + np.asarray(x, dtype=float) ** 2)

    def xi_ratio(self, x):
        """Absorption length relative to line centre, ``xi / xi0 = sqrt(1 + x**2)``."""
        return np.sqrt(1.0 + np.asarray(x, dtype=float) ** 2)

    def cavity_gamma(self, x):
        """``gamma(x) = gamma0 / (1 + x**2)``."""
        return self.peak_strength / (1.0 + np.asarray(x, dtype=float) ** 2)


@dataclass(frozen=True)
class DetectorPair:
    """Efficiencies of detectors k and l and the occupation at line centre."""

    alpha_k: float = 1.0
    alpha_l: float = 1.0
    occupation: float = 1.0

    def __post_init__(self):
        for name in ("alpha_k", "alpha_l"):
            a = getattr(self, name)
            if not 0.0 <= a <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {a}")
        if not self.occupation >= 0:
            raise ValueError("occupation must be nonnegative")


# --------------------------------------------------------------------------
# Moments and results


@dataclass(frozen=True)
class SpectralMoments:
    """Ensemble averages of the first and second spectral moments.

    Fields may be scalars or arrays (one entry per evaluation point).  When
    the variance is known analytically it should be passed explicitly, since
    ``mean_sigma_sq - mean_sigma**2`` cancels catastrophically when both are
    close to one.
    """

    mean_sigma: float | np.ndarray
    mean_sigma_sq: float | np.ndarray
    se_mean: float | np.ndarray = 0.0
    se_sq: float | np.ndarray = 0.0
    variance: float | np.ndarray | None = None
    se_variance: float | np.ndarray | None = None
    flags: tuple = ()
    absorption: float | np.ndarray | None = None

    @classmethod
    def from_absorption(cls, absorptance, variance, **kw) -> "SpectralMoments":
        """Build from ``<1 - sigma>`` and the variance directly."""
        a = np.asarray(absorptance, dtype=float)
        v = np.asarray(variance, dtype=float)
        mean = 1.0 - a
        return cls(mean_sigma=mean, mean_sigma_sq=v + mean * mean, variance=v,
                   absorption=a, **kw)

    @property
    def absorptance(self):
        if self.absorption is not None:
            return np.asarray(self.absorption)
        return 1.0 - np.asarray(self.mean_sigma)

    @property
    def var(self):
        if self.variance is not None:
            return np.asarray(self.variance)
        m = np.asarray(self.mean_sigma)
        return np.asarray(self.mean_sigma_sq) - m * m

    @property
    def var_error(self):
        if self.se_variance is not None:
            return np.asarray(self.se_variance)
        # linear error propagation, ignoring the covariance of the two means
        return np.asarray(self.se_sq) + 2.0 * np.abs(self.mean_sigma) * np.asarray(self.se_mean)

    def violations(self, n_sigma: float = 3.0, atol: float = 1e-12) -> list[str]:
        """Return a list of broken invariants, empty if the moments are consistent.

        Statistical estimates are allowed to miss by ``n_sigma`` standard errors.
        """
        m = np.asarray(self.mean_sigma)
        m2 = np.asarray(self.mean_sigma_sq)
        se_m = n_sigma * np.asarray(self.se_mean) + atol
        se_2 = n_sigma * np.asarray(self.se_sq) + atol
        out = []
        if np.any(m < -se_m) or np.any(m > 1 + se_m):
            out.append("mean_sigma outside [0, 1]")
        if np.any(m2 < -se_2):
            out.append("mean_sigma_sq negative")
        if np.any(m2 > m + se_m + se_2):
            out.append("mean_sigma_sq exceeds mean_sigma")
        if np.any(self.var < -(n_sigma * self.var_error + atol)):
            out.append("negative variance")
        return out


@dataclass(frozen=True)
class CorrelatorResult:
    """Cross correlation, short-range correlation and mean current.

    ``short_range`` is the wave-noise part ``C_kk - I_k``; the full
    autocorrelation is only meaningful in absolute units, where the two
    terms share a unit (see :attr:`auto`).
    """

    cross: float
    short_range: float
    current: float
    units: UnitSystem = UnitSystem.ABSOLUTE
    errors: dict = field(default_factory=dict)
    flags: tuple = ()

    @property
    def auto(self) -> float | None:
        if self.units is UnitSystem.ABSOLUTE:
            return self.short_range + self.current
        return None

    def cross_ratio(self) -> float:
        """``C_kl / sqrt(I_k I_l)`` for identical detectors, in the result's units."""
        return self.cross / self.current if self.current > 0 else 0.0

    def short_ratio(self) -> float:
        """``(C_kk - I_k) / I_k`` in the result's units."""
        return self.short_range / self.current if self.current > 0 else 0.0

    @classmethod
    def zero(cls, units: UnitSystem = UnitSystem.ABSOLUTE, flags: tuple = ()) -> "CorrelatorResult":
        return cls(0.0, 0.0, 0.0, units, {"cross": 0.0, "short_range": 0.0, "current": 0.0}, flags)


# --------------------------------------------------------------------------
# Integration


def line_integral(
    integrand: Callable[[np.ndarray], np.ndarray],
    line: LorentzianLine,
    *,
    rtol: float = DEFAULT_RTOL,
    breakpoints: Sequence[float] = (),
    full_output: bool = False,
):
    """Evaluate ``int g(omega) d omega / 2 pi = (Omega_c / 2 pi) int g(x) dx``.

    Parameters
    ----------
    integrand : callable
        Vectorised ``g(x)``; may return shape ``(k, n)`` for ``k`` integrands.
    line : LorentzianLine
        Supplies ``Omega_c``.
    rtol : float
        Relative tolerance of the quadrature.
    breakpoints : sequence of float
        Points in ``x`` where ``g`` changes scale.
    full_output : bool
        Return the :class:`QuadratureResult` (scaled) instead of the value.

    Raises
    ------
    IntegrationError
        If the integral does not converge.  The exception carries a ``tail``
        attribute: the contribution per decade of ``|x|`` near ``|x| = 1e8``,
        which stays finite for a log-divergent integrand.
    """
    scale = line.half_width / (2.0 * np.pi)
    try:
        res = integrate_real_line(integrand, rtol=rtol, breakpoints=breakpoints)
    except IntegrationError as exc:
        far = np.array([-1e8, 1e8])
        g = np.abs(np.asarray(integrand(far), dtype=float))
        exc.tail = scale * float(np.sum(g)) * 1e8 * math.log(10.0)
        exc.value = scale * np.asarray(exc.value)
        exc.error = scale * np.asarray(exc.error)
        raise
    if full_output:
        return QuadratureResult(scale * res.value, scale * res.error, res.panels)
    v = scale * res.value
    return float(v) if np.ndim(v) == 0 else v


MomentsProfile = Callable[[np.ndarray], SpectralMoments]


def line_moment_integrals(
    profile: MomentsProfile,
    *,
    rtol: float = DEFAULT_RTOL,
    breakpoints: Sequence[float] = (),
    probe_points: int = 401,
    probe_profile: MomentsProfile | None = None,
):
    """Dimensionless integrals ``(J_var, J_1, J_2)`` and their quadrature errors.

    The profile (or ``probe_profile``, when the integrated profile is in
    rescaled units) is also probed on a fixed grid to flag negative
    variances and broken moment ordering beyond the statistical errors.

    Returns
    -------
    values : ndarray, shape (3,)
    errors : ndarray, shape (3,)
    flags : tuple of str
    """

    def g(x):
        m = profile(x)
        a = m.absorptance
        return np.stack([m.var, a, a * a])

    res = integrate_real_line(g, rtol=rtol, breakpoints=breakpoints)
    values = res.value / (2.0 * np.pi)
    errors = res.error / (2.0 * np.pi)

    flags = []
    theta = np.linspace(-0.5 * np.pi, 0.5 * np.pi, probe_points + 2)[1:-1]
    probe = (probe_profile or profile)(np.tan(theta))
    bad = probe.violations()
    if "negative variance" in bad:
        flags.append("negative-variance")
    if any(b != "negative variance" for b in bad):
        flags.append("moment-ordering")
    flags.extend(f for f in probe.flags if f not in flags)
    return values, errors, tuple(flags)


def correlators_from_moments(
    moments_profile: MomentsProfile,
    line: LorentzianLine,
    detectors: DetectorPair,
    N: int,
    *,
    rtol: float = DEFAULT_RTOL,
    breakpoints: Sequence[float] = (),
) -> CorrelatorResult:
    """Correlators in absolute units from a profile of spectral moments.

    Parameters
    ----------
    moments_profile : callable
        Maps an array of detunings ``x`` to :class:`SpectralMoments` with
        array fields.
    line : LorentzianLine
    detectors : DetectorPair
    N : int
        Number of modes.
    rtol, breakpoints
        Passed to the quadrature.

    Returns
    -------
    CorrelatorResult
        ``cross`` = C_kl, ``short_range`` = C_kk - I_k, ``current`` = I_k,
        all in rad/s.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    (jv, j1, j2), (ev, e1, e2), flags = line_moment_integrals(
        moments_profile, rtol=rtol, breakpoints=breakpoints
    )
    f = detectors.occupation
    ak, al = detectors.alpha_k, detectors.alpha_l
    w = line.half_width
    pre_c = ak * al * f * f * w / N
    pre_s = ak * ak * f * f * w
    pre_i = ak * f * w
    return CorrelatorResult(
        cross=pre_c * jv,
        short_range=pre_s * j2,
        current=pre_i * j1,
        units=UnitSystem.ABSOLUTE,
        errors={"cross": pre_c * ev, "short_range": pre_s * e2, "current": pre_i * e1},
        flags=flags,
    )


def rescale(result: CorrelatorResult, detectors: DetectorPair, N: int, half_width: float,
            length_unit: float = 1.0) -> CorrelatorResult:
    """Convert a reduced result to absolute units.

    ``length_unit`` is ``l / xi0`` for waveguide results and 1 for cavities.
    """
    if result.units is UnitSystem.ABSOLUTE:
        return result
    f = detectors.occupation
    ak, al = detectors.alpha_k, detectors.alpha_l
    lu = length_unit if result.units is UnitSystem.WAVEGUIDE_FIG2 else 1.0
    pc = half_width * lu * f * f * ak * al / N
    ps = half_width * (lu * f * ak) ** 2
    pi = half_width * lu * f * ak
    errs = {"cross": pc * result.errors.get("cross", 0.0),
            "short_range": ps * result.errors.get("short_range", 0.0),
            "current": pi * result.errors.get("current", 0.0)}
    return replace(result, cross=pc * result.cross, short_range=ps * result.short_range,
                   current=pi * result.current, units=UnitSystem.ABSOLUTE, errors=errs)


# --------------------------------------------------------------------------
# Geometry


@dataclass(frozen=True)
class CoherenceGeometry:
    d_c: float
    N: int
    crossover_distance: float


def coherence_geometry(wavelength: float, source_diameter: float, distance: float,
                       area: float) -> CoherenceGeometry:
    """Transverse coherence length, mode count and crossover distance.

    Parameters
    ----------
    wavelength, source_diameter, distance : float
        lambda, a and r in metres.
    area : float
        Cross-section A of the waveguide in square metres.

    Returns
    -------
    CoherenceGeometry
        ``d_c = lambda r / a``, ``N = round(2 pi A / lambda**2)`` and the
        distance ``r (lambda / a)**(1/3)`` beyond which long-range
        correlations dominate.
    """
    for name, v in (("wavelength", wavelength), ("source_diameter", source_diameter),
                    ("distance", distance), ("area", area)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    ratio = wavelength / source_diameter
    return CoherenceGeometry(
        d_c=ratio * distance,
        N=int(round(2.0 * np.pi * area / wavelength**2)),
        crossover_distance=distance * ratio ** (1.0 / 3.0),
    )
