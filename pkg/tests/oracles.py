"""Independent reference computations used by the tests.

Nothing here imports from ``thermcorr``: the variance bracket and the line
integrals are evaluated with mpmath at high precision (tanh-sinh
quadrature), and the cavity line integrals with scipy's QUADPACK.
"""

import math

import mpmath as mp
import numpy as np
from scipy import integrate

# Frozen high-precision values (mpmath, 30-120 digits) used where a live
# evaluation would be slow.
B_AT_1 = 0.103662204091638897607
BOSE_AT_1 = 0.581976706869326424385
CROSSOVER_500NM_1MM_1M = 0.0793700525984099737376
MEAN_ABSORPTANCE_S2_LR001 = 0.0101545887460768651749
# (1/2pi) int dx tanh(1/(2 sqrt(1+x^2))) / sqrt(1+x^2)
LINE_TANH_S0_1 = 0.240304056593184842279

# reduced waveguide integrals (C_kl, I_k, C_kk - I_k), mpmath at dps 20
WAVEGUIDE_REDUCED = {
    0.01: (2.22217758010498e-8, 0.00333331944454861, 1.11109722238619e-5),
    1.0: (0.018399841927667, 0.320405408790913, 0.0986937748935088),
    100.0: (0.972688259409747, 2.30196108994522, 0.877569340427939),
    1000.0: (1.46134976458133, 3.27924313075366, 0.887757118542976),
    10000.0: (1.94997387465126, 4.25649094150323, 0.888775712038606),
}


def bracket_mp(s, dps=120):
    """``B(s)`` from the five-term hyperbolic expression in extended precision."""
    with mp.workdps(dps):
        s = mp.mpf(s)
        if s == 0:
            return mp.mpf(0)
        sh = mp.sinh(s)
        ct = mp.coth(s)
        v = ct**3 - 3 / sh + s / sh**2 + (s * ct - 1) / sh**3 - s / sh**4
    return +v


def waveguide_reduced_mp(s0, dps=20):
    """Reduced (C_kl, I_k, C_kk - I_k) by direct mpmath quadrature."""
    with mp.workdps(dps):
        s0 = mp.mpf(s0)
        root = lambda x: mp.sqrt(1 + x * x)  # noqa: E731
        pts = [-mp.inf, -s0, 0, s0, mp.inf]
        c = mp.quad(lambda x: mp.mpf(2) / 3 / root(x) * bracket_mp(s0 / root(x)), pts)
        i = mp.quad(lambda x: mp.mpf(4) / 3 / root(x) * mp.tanh(s0 / root(x) / 2), pts)
        k = mp.quad(lambda x: mp.mpf(16) / 9 / (1 + x * x) * mp.tanh(s0 / root(x) / 2) ** 2, pts)
        tp = 2 * mp.pi
        return float(c / tp), float(i / tp), float(k / tp)


def cavity_line_integrals_quadpack(absorb, var, gamma0):
    """(J_var, J_1, J_2) for moment functions of gamma, via scipy.integrate.quad.

    Uses the symmetric half line and the substitution ``x = tan(theta)``.
    """
    def g(theta, f):
        x = math.tan(theta)
        gam = gamma0 / (1 + x * x)
        return f(gam) / math.cos(theta) ** 2

    out = []
    for f in (var, absorb, lambda gm: absorb(gm) ** 2):
        v, _ = integrate.quad(g, 0, math.pi / 2, args=(f,), epsabs=0, epsrel=1e-9, limit=1000)
        out.append(2 * v / (2 * math.pi))
    return tuple(out)


def haar_abs2_mean_bruteforce(n, samples, rng):
    """Mean of ``|U_ij|^2`` using Gram-Schmidt on Gaussian columns (no QR routine)."""
    vals = []
    for _ in range(samples):
        z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2)
        cols = []
        for k in range(n):
            v = z[:, k].copy()
            for c in cols:
                v -= np.vdot(c, v) * c
            cols.append(v / np.linalg.norm(v))
        vals.append(np.abs(cols[0][0]) ** 2)
    return float(np.mean(vals)), float(np.std(vals) / math.sqrt(samples))
