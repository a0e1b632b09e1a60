"""Correlators of thermal radiation from a disordered, weakly absorbing waveguide.

In the regime ``1/N << l/xi << 1`` the first spectral moment of the
scattering strengths has mean and variance

    <1 - sigma>           = (4 l / 3 xi) tanh(s / 2)
    <sigma^2> - <sigma>^2 = (2 l / 3 xi) B(s)

with ``s = L / xi``.  On a Lorentzian line ``xi = xi0 sqrt(1 + x**2)`` and
``s = s0 / sqrt(1 + x**2)``.  All results are returned in the reduced units
of :attr:`UnitSystem.WAVEGUIDE_FIG2`, where the factors ``l / xi0`` are
stripped off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DEFAULT_RTOL,
    CorrelatorResult,
    DetectorPair,
    SpectralMoments,
    UnitSystem,
    line_moment_integrals,
)

# Taylor coefficients of B(s) = sum_k c_k s**(2k+3)
_B_SERIES = np.array([
    2.0 / 15.0,
    -1.0 / 28.0,
    179.0 / 25200.0,
    -491.0 / 399168.0,
    8227.0 / 42042000.0,
    -18269.0 / 622702080.0,
])
_B_SERIES_CUTOFF = 0.2


@dataclass(frozen=True)
class WaveguideParams:
    """Mode count ``N``, ``s0 = L / xi0`` and ``lr = l / xi0``."""

    N: int
    s0: float
    lr: float

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if not self.s0 >= 0:
            raise ValueError("s0 must be nonnegative")
        if not self.lr > 0:
            raise ValueError("lr must be positive")

    @property
    def regime(self) -> str:
        """``"valid"`` when ``N lr > 10`` and ``lr < 0.1``, otherwise ``"extrapolated"``."""
        return "valid" if (self.N * self.lr > 10 and self.lr < 0.1) else "extrapolated"


def _csch(s):
    # 2 e^{-s} / (1 - e^{-2s}); finite for every s > 0 and free of overflow
    return 2.0 * np.exp(-s) / -np.expm1(-2.0 * s)


def variance_bracket(s):
    """The factor ``B(s)`` in ``var = (2 l / 3 xi) B(s)``.

    ``B(s) = coth^3 s - 3 csch s + s csch^2 s + (s coth s - 1) csch^3 s - s csch^4 s``

    Each term is of order ``s**-3`` near the origin while their sum is of
    order ``s**3``, so a Taylor series through ``s**13`` is used below
    ``s = 0.2`` (truncation error below 1e-10 relative).

    Parameters
    ----------
    s : float or array_like
        Nonnegative.

    Returns
    -------
    float or ndarray
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("variance_bracket requires s >= 0")
    out = np.empty_like(s)
    small = s < _B_SERIES_CUTOFF
    if np.any(small):
        ss = s[small]
        u = ss * ss
        out[small] = ss**3 * np.polynomial.polynomial.polyval(u, _B_SERIES)
    big = ~small
    if np.any(big):
        sb = s[big]
        c = _csch(sb)
        coth = 1.0 / np.tanh(sb)
        out[big] = (coth**3 - 3.0 * c + sb * c**2 + (sb * coth - 1.0) * c**3 - sb * c**4)
    return float(out) if out.ndim == 0 else out


def mean_absorptance(s, lr):
    """``<1 - sigma> = (4 lr / 3) tanh(s / 2)`` with ``lr = l / xi`` at the same frequency."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("mean_absorptance requires s >= 0")
    v = (4.0 / 3.0) * np.asarray(lr, dtype=float) * np.tanh(0.5 * s)
    return float(v) if np.ndim(v) == 0 else v


def moments_profile(params: WaveguideParams, reduced: bool = True):
    """Spectral moments along the line as a function of detuning ``x``.

    With ``reduced=True`` (the default) the mean absorptance and the
    variance are divided by ``l / xi0``, so that the integrals come out in
    reduced units; the ``mean_sigma`` field then has no direct meaning.
    """
    s0 = params.s0
    lr = 1.0 if reduced else params.lr

    def profile(x):
        root = np.sqrt(1.0 + np.asarray(x, dtype=float) ** 2)
        s = s0 / root
        lr_x = lr / root
        return SpectralMoments.from_absorption(
            mean_absorptance(s, lr_x), (2.0 / 3.0) * lr_x * variance_bracket(s)
        )

    return profile


def waveguide_correlators(params: WaveguideParams, detectors: DetectorPair | None = None,
                          *, rtol: float = DEFAULT_RTOL) -> CorrelatorResult:
    """Integrate the waveguide moments over a Lorentzian line.

    Parameters
    ----------
    params : WaveguideParams
    detectors : DetectorPair, optional
        Not needed for the reduced values; accepted for a uniform signature.
    rtol : float
        Quadrature tolerance.

    Returns
    -------
    CorrelatorResult
        In :attr:`UnitSystem.WAVEGUIDE_FIG2` units: ``cross`` in
        ``Omega_c l f^2 a_k a_l / (N xi0)``, ``short_range`` in
        ``Omega_c (l f a_k / xi0)^2`` and ``current`` in ``Omega_c l f a_k / xi0``.
        Flags carry the validity regime.
    """
    flags = () if params.regime == "valid" else ("extrapolated",)
    if params.s0 == 0:
        return CorrelatorResult.zero(UnitSystem.WAVEGUIDE_FIG2, flags)
    s0 = params.s0
    # s(x) crosses 1 near |x| = s0, where the hyperbolic functions turn over
    bps = (-s0, s0) if s0 > 1 else ()
    (jv, j1, j2), (ev, e1, e2), qflags = line_moment_integrals(
        moments_profile(params), rtol=rtol, breakpoints=bps,
        probe_profile=moments_profile(params, reduced=False),
    )
    return CorrelatorResult(
        cross=float(jv), short_range=float(j2), current=float(j1),
        units=UnitSystem.WAVEGUIDE_FIG2,
        errors={"cross": float(ev), "short_range": float(e2), "current": float(e1)},
        flags=flags + qflags,
    )


def thin_sample_asymptotics(params: WaveguideParams, detectors: DetectorPair | None = None) -> CorrelatorResult:
    """Leading small-``s0`` forms ``s0**3/45``, ``(4/9pi) s0**2`` and ``s0/3``.

    These are returned exactly as the closed forms read.  The middle one
    does not agree with the integral of the moments: integrating
    ``(4/3 tanh(s/2))**2 / (1 + x**2)`` at small ``s0`` gives ``s0**2 / 9``,
    a factor ``pi/4`` below ``(4/9pi) s0**2``.  Compare with
    :func:`waveguide_correlators` for the value that follows from the moments.
    """
    s0 = params.s0
    return CorrelatorResult(
        cross=s0**3 / 45.0,
        short_range=4.0 / (9.0 * np.pi) * s0**2,
        current=s0 / 3.0,
        units=UnitSystem.WAVEGUIDE_FIG2,
    )


def thick_sample_limits(detectors: DetectorPair, N: int) -> dict:
    """Large-``s0`` limits of the cross ratio and of the reduced short-range term.

    Returns
    -------
    dict
        ``cross_ratio_limit = f sqrt(a_k a_l) / (2N)`` for
        ``C_kl / sqrt(I_k I_l)`` and ``short_range_limit = 8/9`` in reduced
        units.  A blind detector (``alpha_k = 0``) gives zero for both.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    ak, al, f = detectors.alpha_k, detectors.alpha_l, detectors.occupation
    cross = f * np.sqrt(ak * al) / (2.0 * N)
    short = 8.0 / 9.0 if ak > 0 else 0.0
    return {"cross_ratio_limit": float(cross), "short_range_limit": short}
