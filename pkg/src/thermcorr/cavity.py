"""Absorbing chaotic cavity: Monte Carlo spectral moments and line-integrated correlators.

Reflection matrix
-----------------
A cavity with ``M`` internal levels, coupled ideally to ``N`` channels and
absorbing uniformly at rate ``1/tau_a``, has (energies in units of the
mean level spacing, band centre ``E = 0``)

    r = (1 - iK) (1 + iK)^-1,
    K = (1/pi) sum_m c_m c_m^T / (i a - e_m),     a = gamma N / (4 pi).

``e_m`` are unfolded Gaussian-ensemble levels and ``c_m`` are independent
standard normal vectors (complex for the unitary ensemble), which is the
ideal-coupling normalisation ``<K> = -i`` for ``a >> 1``.  Absorption shifts
every pole into the lower half plane, so ``Im K <= 0`` and ``r`` is
sub-unitary; ``K`` is complex symmetric for the orthogonal ensemble, so
``r = r^T``.

``M`` levels cover only ``|e| < M/2``.  Strong absorption (``a`` of order
``M``) would see the band edge, so the spectrum is completed beyond it
with equally spaced levels, grouped into bins of at least ``N`` levels
that grow geometrically.  The ``n`` levels of a bin are lumped into one
Wishart matrix ``sum c c^T`` weighted by the bin average of
``1/(ia - e)``; everything above ``1e8`` contributes its mean.  This
is the wide-band limit used for the tables.  The direct resolvent
construction ``r = 1 - 2 pi i W^+ (E - H + i pi W W^+ + i Gamma/2)^-1 W`` is
available with ``wide_band=False``.

All random numbers are drawn independently of ``gamma``, so one
realisation yields reflection matrices for a whole grid of absorption
rates (common random numbers).
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import eigvalsh_tridiagonal

from .core import (
    DEFAULT_RTOL,
    CorrelatorResult,
    DetectorPair,
    SpectralMoments,
    UnitSystem,
    line_moment_integrals,
)
from .rmt import ScatteringSystem
from .stats import jackknife

TABLE_VERSION = 1
TABLE_COLUMNS = ("gamma", "mean_sigma", "mean_sigma_sq", "se_mean", "se_sq", "N", "samples")
ENSEMBLES = ("goe", "gue")

_FAR_RATIO = 1.3
_FAR_TOP = 1e8
_CHUNK = 50


class SamplingError(RuntimeError):
    """A sampled reflection matrix broke sub-unitarity: a construction bug."""


@dataclass(frozen=True)
class CavityParams:
    """Open channels ``N``, line-centre absorption ``gamma0`` and ``M_res / N``."""

    N: int
    gamma0: float
    resonance_factor: int = 10

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if not self.gamma0 >= 0:
            raise ValueError("gamma0 must be nonnegative")
        if self.resonance_factor < 5:
            raise ValueError("resonance_factor must be at least 5")

    @property
    def M_res(self) -> int:
        return self.resonance_factor * self.N


# --------------------------------------------------------------------------
# Realisations


def _beta(ensemble: str) -> int:
    if ensemble not in ENSEMBLES:
        raise ValueError(f"ensemble must be one of {ENSEMBLES}")
    return 1 if ensemble == "goe" else 2


def _gaussian_levels(M: int, beta: int, rng: np.random.Generator) -> np.ndarray:
    """Eigenvalues of an ``M x M`` Gaussian ensemble via its tridiagonal form."""
    diag = rng.standard_normal(M)
    off = np.sqrt(rng.chisquare(beta * np.arange(M - 1, 0, -1))) / np.sqrt(2.0)
    return eigvalsh_tridiagonal(diag, off, lapack_driver="sterf")


def _unfold(lam: np.ndarray, M: int, beta: int) -> np.ndarray:
    """Map levels to unit mean spacing with the semicircle staircase."""
    x = np.clip(lam / np.sqrt(2.0 * beta * M), -1.0, 1.0)
    F = 0.5 + (x * np.sqrt(1.0 - x * x) + np.arcsin(x)) / np.pi
    return M * (F - 0.5)


def _coupling(rng, shape, beta):
    if beta == 1:
        return rng.standard_normal(shape)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _far_layout(M: int, N: int):
    """Bins of levels beyond the band edge ``M/2``.

    Bins hold at least ``N`` levels (so that the Bartlett factorisation
    applies) and grow geometrically by ``_FAR_RATIO`` once that is larger.
    Returns the bin edges and the top of the last bin.
    """
    edge = 0.5 * M
    lo, hi = [], []
    u = 0
    while edge + u < _FAR_TOP:
        nxt = max(u + N, math.ceil(u * _FAR_RATIO))
        lo.append(u)
        hi.append(nxt)
        u = nxt
    return edge + np.array(lo, float), edge + np.array(hi, float), edge + u


_LAYOUT_CACHE: dict = {}


def _layout(M, N):
    key = (M, N)
    if key not in _LAYOUT_CACHE:
        _LAYOUT_CACHE[key] = _far_layout(M, N)
    return _LAYOUT_CACHE[key]


def _wishart_batch(N: int, dof: np.ndarray, beta: int, rng) -> np.ndarray:
    """Stack of Wishart matrices ``sum_{j<n} c_j c_j^+`` via the Bartlett factor (``n >= N``)."""
    B = len(dof)
    A = np.zeros((B, N, N), dtype=float if beta == 1 else complex)
    df = beta * (dof[:, None] - np.arange(N)[None, :])
    A[:, np.arange(N), np.arange(N)] = np.sqrt(rng.chisquare(df) / beta)
    il = np.tril_indices(N, -1)
    A[:, il[0], il[1]] = _coupling(rng, (B, len(il[0])), beta)
    return A @ np.conj(np.swapaxes(A, 1, 2))


@dataclass
class _Realisation:
    levels: np.ndarray       # (L,) explicit level positions
    coupling: np.ndarray     # (N, L) coupling vectors
    wish_pos: np.ndarray     # (B, N, N) lumped positive-side bins
    wish_neg: np.ndarray     # (B, N, N) lumped negative-side bins
    lo: np.ndarray
    hi: np.ndarray
    top: float
    beta: int


def _draw(N: int, M: int, beta: int, rng: np.random.Generator, wide_band: bool = True) -> _Realisation:
    lev = _unfold(_gaussian_levels(M, beta, rng), M, beta)
    lo, hi, top = _layout(M, N)
    c = _coupling(rng, (N, lev.size), beta)
    if wide_band:
        dof = (hi - lo).astype(int)
        wp = _wishart_batch(N, dof, beta, rng)
        wn = _wishart_batch(N, dof, beta, rng)
    else:
        wp = wn = np.zeros((0, N, N))
        lo = hi = np.zeros(0)
        top = np.inf
    return _Realisation(lev, c, wp, wn, lo, hi, top, beta)


def _kmatrix(real: _Realisation, a: np.ndarray) -> np.ndarray:
    """``K`` for every absorption parameter ``a`` (shape ``(G, N, N)``)."""
    N = real.coupling.shape[0]
    lev = real.levels
    c = real.coupling
    if real.beta == 1:
        iu = np.triu_indices(N)
        P = c[iu[0], :] * c[iu[1], :]                   # (T, L) real
        den = lev[None, :] ** 2 + a[:, None] ** 2
        re = (-lev[None, :] / den) @ P.T
        im = (-a[:, None] / den) @ P.T
        kt = re + 1j * im
        if real.lo.size:
            h_pos = (np.log(1j * a[:, None] - real.lo) - np.log(1j * a[:, None] - real.hi))
            h_neg = (np.log(1j * a[:, None] + real.hi) - np.log(1j * a[:, None] + real.lo))
            n = real.hi - real.lo
            wp = real.wish_pos[:, iu[0], iu[1]]
            wn = real.wish_neg[:, iu[0], iu[1]]
            kt = kt + (h_pos / n) @ wp + (h_neg / n) @ wn
        K = np.zeros((a.size, N, N), dtype=complex)
        K[:, iu[0], iu[1]] = kt
        K[:, iu[1], iu[0]] = kt
    else:
        P = (c[:, None, :] * np.conj(c[None, :, :])).reshape(N * N, -1)
        d = 1.0 / (1j * a[:, None] - lev[None, :])
        K = (d @ P.T).reshape(-1, N, N)
        if real.lo.size:
            h_pos = (np.log(1j * a[:, None] - real.lo) - np.log(1j * a[:, None] - real.hi))
            h_neg = (np.log(1j * a[:, None] + real.hi) - np.log(1j * a[:, None] + real.lo))
            n = real.hi - real.lo
            K = K + ((h_pos / n) @ real.wish_pos.reshape(-1, N * N)).reshape(-1, N, N)
            K = K + ((h_neg / n) @ real.wish_neg.reshape(-1, N * N)).reshape(-1, N, N)
    K = K / np.pi
    if np.isfinite(real.top):
        tail = -(2j / np.pi) * (0.5 * np.pi - np.arctan2(real.top, a))
        K = K + tail[:, None, None] * np.eye(N)
    return K


def _reflection_wide(real: _Realisation, gammas: np.ndarray) -> np.ndarray:
    N = real.coupling.shape[0]
    a = gammas * N / (4.0 * np.pi)
    K = _kmatrix(real, a)
    eye = np.eye(N)
    X = np.linalg.inv(eye + 1j * K)
    return 2.0 * X - eye


def _reflection_direct(N: int, M: int, gammas: np.ndarray, beta: int, rng) -> np.ndarray:
    """Resolvent form with a dense ``M x M`` Gaussian Hamiltonian.

    ``H`` has semicircle radius ``R = sqrt(2 beta M)``, hence mean spacing
    ``Delta = pi R / (2M)`` at the band centre.
    """
    if beta == 1:
        g = rng.standard_normal((M, M))
        H = (g + g.T) / 2.0
    else:
        g = (rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))) / np.sqrt(2.0)
        H = (g + np.conj(g.T)) / np.sqrt(2.0)
    R = math.sqrt(2.0 * beta * M)
    delta = math.pi * R / (2.0 * M)
    W = np.zeros((M, N))
    W[np.arange(N), np.arange(N)] = math.sqrt(M * delta / math.pi**2)
    base = -H + 1j * math.pi * (W @ W.T)
    out = np.empty((gammas.size, N, N), dtype=complex)
    for i, g_ in enumerate(gammas):
        Gam = g_ * N * delta / (2.0 * math.pi)
        sol = np.linalg.solve(base + 0.5j * Gam * np.eye(M), W)
        out[i] = np.eye(N) - 2j * math.pi * (W.T @ sol)
    return out


def _check_subunitary(r: np.ndarray, tol: float = 1e-10):
    """Abort if any singular value of ``r`` exceeds ``1 + tol``.

    ``sigma_max <= 1 + tol`` is equivalent to ``1 - r r^+ + (2 tol + tol^2)``
    being positive definite, which a Cholesky factorisation decides cheaply;
    the SVD only runs to produce the error message.
    """
    n = r.shape[-1]
    q = np.eye(n) - r @ np.conj(np.swapaxes(r, -1, -2))
    try:
        np.linalg.cholesky(q + (2.0 * tol + tol * tol) * np.eye(n))
    except np.linalg.LinAlgError:
        smax = np.linalg.norm(r, ord=2, axis=(-2, -1))
        if np.any(smax > 1.0 + tol):
            raise SamplingError(f"reflection singular value {smax.max():.15g} exceeds 1") from None


def _rng_for(seed, N: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(N), int(chunk)]))


def reflection_batch(N: int, gammas, samples: int, seed: int = 0, *, M_res: int | None = None,
                     ensemble: str = "goe", wide_band: bool = True, first: int = 0) -> np.ndarray:
    """Reflection matrices for ``samples`` realisations on a grid of ``gammas``.

    Returns an array of shape ``(samples, len(gammas), N, N)``.  Sample ``j``
    is reproducible from ``(seed, N, j)`` alone: realisations are drawn in
    chunks of 50 with a stream per chunk, so different sample counts share
    their leading realisations.
    """
    beta = _beta(ensemble)
    M = 10 * N if M_res is None else int(M_res)
    if M < 5 * N:
        raise ValueError("M_res must be at least 5 N")
    g = np.atleast_1d(np.asarray(gammas, dtype=float))
    if np.any(g < 0):
        raise ValueError("gamma must be nonnegative")
    out = np.empty((samples, g.size, N, N), dtype=complex)
    for j in range(samples):
        idx = first + j
        if j == 0 or idx % _CHUNK == 0:
            rng = _rng_for(seed, N, idx // _CHUNK)
            for _ in range(idx % _CHUNK):  # align a mid-chunk start
                _skip(N, M, beta, rng, wide_band, g)
        out[j] = _one(N, M, beta, rng, wide_band, g)
    return out


def _one(N, M, beta, rng, wide_band, g):
    if wide_band:
        r = _reflection_wide(_draw(N, M, beta, rng), g)
    else:
        r = _reflection_direct(N, M, g, beta, rng)
    _check_subunitary(r)
    return r


def _skip(N, M, beta, rng, wide_band, g):
    if wide_band:
        _draw(N, M, beta, rng)
    else:
        _reflection_direct(N, M, g[:1], beta, rng)


def sample_cavity_reflection(N: int, gamma: float, M_res: int | None = None, seed=0, *,
                             ensemble: str = "goe", wide_band: bool = True) -> ScatteringSystem:
    """One reflection matrix of the absorbing cavity.

    Parameters
    ----------
    N : int
        Open channels.
    gamma : float
        Dimensionless absorption rate (dwell time over absorption time).
    M_res : int, optional
        Number of internal levels, at least ``5 N``; default ``10 N``.
    seed : int
        Realisation seed.
    ensemble : {"goe", "gue"}
        Orthogonal (time-reversal symmetric, reciprocal) or unitary.
    wide_band : bool
        Use the completed K-matrix form (default) or the direct resolvent.

    Returns
    -------
    ScatteringSystem
        Reflection-only system.
    """
    r = reflection_batch(N, [gamma], 1, seed, M_res=M_res, ensemble=ensemble,
                         wide_band=wide_band)[0, 0]
    return ScatteringSystem(r=r, reciprocal=(ensemble == "goe"))


def cavity_sampler(gamma: float, *, resonance_factor: int = 10, ensemble: str = "goe",
                   wide_band: bool = True):
    """A ``sampler(N, samples, seed) -> QQ^+ stack`` for :mod:`thermcorr.rmt` checks."""

    def sampler(N: int, samples: int, seed: int) -> np.ndarray:
        r = reflection_batch(N, [gamma], samples, seed, M_res=resonance_factor * N,
                             ensemble=ensemble, wide_band=wide_band)[:, 0]
        q = np.eye(N) - r @ np.conj(np.swapaxes(r, -1, -2))
        return 0.5 * (q + np.conj(np.swapaxes(q, -1, -2)))

    return sampler


# --------------------------------------------------------------------------
# Moments


def absorption_samples(N: int, gammas, samples: int, seed: int = 0, *, M_res: int | None = None,
                       ensemble: str = "goe", wide_band: bool = True, workers: int = 1):
    """Per-sample ``a1 = tr(Q)/N`` and ``a2 = tr(Q^2)/N`` with ``Q = 1 - r r^+``.

    Returns two arrays of shape ``(samples, len(gammas))``.  With
    ``workers > 1`` chunks run in separate processes; the result is
    identical to the serial one.
    """
    g = np.atleast_1d(np.asarray(gammas, dtype=float))
    starts = list(range(0, samples, _CHUNK))
    args = [(N, g, min(_CHUNK, samples - s), seed, M_res, ensemble, wide_band, s) for s in starts]
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_absorption_chunk, args))
    else:
        parts = [_absorption_chunk(a) for a in args]
    a1 = np.concatenate([p[0] for p in parts])
    a2 = np.concatenate([p[1] for p in parts])
    return a1, a2


def _absorption_chunk(args):
    N, g, n, seed, M_res, ensemble, wide_band, first = args
    r = reflection_batch(N, g, n, seed, M_res=M_res, ensemble=ensemble, wide_band=wide_band,
                         first=first)
    q = np.eye(N) - r @ np.conj(np.swapaxes(r, -1, -2))
    a1 = np.real(np.einsum("sgii->sg", q)) / N
    a2 = np.einsum("sgij,sgij->sg", q, np.conj(q)).real / N
    return a1, a2


def _moments_from_samples(a1, a2, tolerance=None):
    """Jackknifed absorptance, second moment and variance from per-sample data."""
    S = a1.shape[0]

    def est(m1, m2):
        return np.stack([m1, m2, m2 - m1 * m1])

    val, err = jackknife((a1, a2), est)
    absorb, m2q, var = val
    se_a, se_m2q, se_var = err
    mean = 1.0 - absorb
    # <sigma^2> = 1 - 2<q> + <q^2>; its error follows from the jackknife of that combination
    _, se_sq = jackknife((a1, a2), lambda m1, m2: 1.0 - 2.0 * m1 + m2)
    flags = ()
    if tolerance is not None and (np.any(se_a > tolerance) or np.any(se_sq > tolerance)):
        flags = ("insufficient-sampling",)
    return dict(absorb=absorb, var=var, mean=mean, mean_sq=var + mean * mean,
                se_mean=se_a, se_sq=se_sq, se_var=se_var, samples=S, flags=flags)


def _richardson(N1, m1, e1, N2, m2, e2):
    """Remove the ``1/N`` term from two estimates at ``N1 < N2``."""
    w = N2 - N1
    val = (N2 * m2 - N1 * m1) / w
    err = np.sqrt((N2 * e2) ** 2 + (N1 * e1) ** 2) / w
    return val, err


def estimate_moments(N, gamma, samples: int, seed: int = 0, *, tolerance: float | None = None,
                     M_res_factor: int = 10, ensemble: str = "goe", wide_band: bool = True,
                     workers: int = 1) -> SpectralMoments:
    """Monte Carlo spectral moments at one or more absorption rates.

    Parameters
    ----------
    N : int or pair of int
        Channel number.  With two values the moments are extrapolated to
        ``N -> inf`` assuming a ``1/N`` correction.
    gamma : float or array_like
    samples : int
        At least 100.
    tolerance : float, optional
        Flag ``"insufficient-sampling"`` when a standard error exceeds it.

    Returns
    -------
    SpectralMoments
        Array-valued when ``gamma`` is an array.  The variance and the
        absorptance are stored directly.
    """
    if samples < 100:
        raise ValueError("estimate_moments needs at least 100 samples")
    g = np.atleast_1d(np.asarray(gamma, dtype=float))
    Ns = [int(N)] if np.ndim(N) == 0 else sorted(int(n) for n in N)
    if len(Ns) not in (1, 2):
        raise ValueError("give one N or two N values")
    res = []
    for n in Ns:
        a1, a2 = absorption_samples(n, g, samples, seed, M_res=M_res_factor * n,
                                    ensemble=ensemble, wide_band=wide_band, workers=workers)
        res.append(_moments_from_samples(a1, a2, tolerance))
    if len(res) == 1:
        m = res[0]
        absorb, var = m["absorb"], m["var"]
        se_a, se_var, se_sq = m["se_mean"], m["se_var"], m["se_sq"]
        flags = m["flags"]
    else:
        (n1, r1), (n2, r2) = zip(Ns, res)
        absorb, se_a = _richardson(n1, r1["absorb"], r1["se_mean"], n2, r2["absorb"], r2["se_mean"])
        var, se_var = _richardson(n1, r1["var"], r1["se_var"], n2, r2["var"], r2["se_var"])
        _, se_sq = _richardson(n1, 0.0, r1["se_sq"], n2, 0.0, r2["se_sq"])
        flags = tuple(sorted(set(r1["flags"]) | set(r2["flags"])))
        if tolerance is not None and (np.any(se_a > tolerance) or np.any(se_sq > tolerance)):
            flags = tuple(sorted(set(flags) | {"insufficient-sampling"}))
    mean = 1.0 - absorb
    sq = lambda v: float(np.ravel(v)[0]) if np.ndim(gamma) == 0 else v  # noqa: E731
    return SpectralMoments(
        mean_sigma=sq(mean), mean_sigma_sq=sq(var + mean * mean), se_mean=sq(se_a),
        se_sq=sq(se_sq), variance=sq(var), se_variance=sq(se_var), flags=flags,
        absorption=sq(absorb),
    )


# --------------------------------------------------------------------------
# Tables


def log_grid(lo: float = 1e-3, hi: float = 1e4, per_decade: int = 6) -> np.ndarray:
    n = int(round(per_decade * math.log10(hi / lo))) + 1
    return np.logspace(math.log10(lo), math.log10(hi), n)


@dataclass
class MomentRows:
    """Moments for one channel number (``N = inf`` for extrapolated rows)."""

    N: float
    samples: int
    gamma: np.ndarray
    absorb: np.ndarray
    var: np.ndarray
    se_mean: np.ndarray
    se_sq: np.ndarray
    se_var: np.ndarray | None = None

    @property
    def mean_sigma(self):
        return 1.0 - self.absorb

    @property
    def mean_sigma_sq(self):
        m = self.mean_sigma
        return self.var + m * m


@dataclass
class MomentTable:
    """Spectral moments tabulated on a grid of absorption rates.

    ``rows`` holds one :class:`MomentRows` per channel number and, when two
    were sampled, the ``N = inf`` extrapolation, which is then used for
    interpolation.
    """

    rows: list
    config: dict = field(default_factory=dict)
    seed: int | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def primary(self) -> MomentRows:
        for r in self.rows:
            if math.isinf(r.N):
                return r
        return self.rows[-1]

    @property
    def gamma_grid(self) -> np.ndarray:
        return self.primary.gamma

    @property
    def N_values(self) -> list:
        return [r.N for r in self.rows]

    def moments(self) -> SpectralMoments:
        p = self.primary
        return SpectralMoments(p.mean_sigma, p.mean_sigma_sq, p.se_mean, p.se_sq,
                               variance=p.var, se_variance=p.se_var, absorption=p.absorb)

    # ---- interpolation

    def interpolator(self):
        """Moments as a function of ``gamma``; see :class:`TableInterpolator`."""
        return TableInterpolator(self.primary)

    # ---- serialisation

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        cfg = dict(self.config)
        cfg.setdefault("table_version", TABLE_VERSION)
        buf.write(f"# config: {_json(cfg)}\n")
        buf.write(f"# seed: {self.seed}\n")
        buf.write(f"# version: {TABLE_VERSION}\n")
        if self.diagnostics:
            buf.write(f"# diagnostics: {_json(self.diagnostics)}\n")
        buf.write(",".join(TABLE_COLUMNS) + "\n")
        for r in self.rows:
            n_txt = "inf" if math.isinf(r.N) else str(int(r.N))
            for i in range(r.gamma.size):
                vals = (r.gamma[i], r.mean_sigma[i], r.mean_sigma_sq[i], r.se_mean[i], r.se_sq[i])
                buf.write(",".join(f"{v:.12g}" for v in vals) + f",{n_txt},{r.samples}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text: str) -> "MomentTable":
        if "\n" in path_or_text:
            lines = path_or_text.splitlines()
        else:
            with open(path_or_text) as fh:
                lines = fh.read().splitlines()
        meta = {}
        body = []
        for ln in lines:
            if ln.startswith("#"):
                key, _, val = ln[1:].partition(":")
                meta[key.strip()] = val.strip()
            elif ln.strip():
                body.append(ln)
        if not body or tuple(body[0].split(",")) != TABLE_COLUMNS:
            raise ValueError("not a moment table: header mismatch")
        version = int(meta.get("version", TABLE_VERSION))
        if version != TABLE_VERSION:
            raise ValueError(f"unsupported moment table version {version}")
        groups: dict = {}
        for ln in body[1:]:
            parts = ln.split(",")
            g, m, m2, sm, s2 = (float(p) for p in parts[:5])
            key = (float(parts[5]), int(parts[6]))
            groups.setdefault(key, []).append((g, m, m2, sm, s2))
        rows = []
        for (n, s), vals in groups.items():
            a = np.array(vals)
            mean = a[:, 1]
            rows.append(MomentRows(n, s, a[:, 0], 1.0 - mean, a[:, 2] - mean * mean, a[:, 3], a[:, 4]))
        import json
        cfg = json.loads(meta["config"]) if "config" in meta else {}
        seed = meta.get("seed")
        seed = int(seed) if seed not in (None, "None") else None
        diag = json.loads(meta["diagnostics"]) if "diagnostics" in meta else {}
        return cls(rows, cfg, seed, diag)


def _json(obj) -> str:
    import json
    return json.dumps(obj, sort_keys=True, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o))


class TableInterpolator:
    """Monotone cubic interpolation of ``ln <1-sigma>`` and ``ln var`` in ``ln gamma``.

    Below the smallest positive tabulated rate the weak-absorption forms
    ``<1 - sigma> = gamma`` and ``var = gamma**2`` take over; above the
    largest one a :class:`ValueError` is raised.
    """

    def __init__(self, rows: MomentRows):
        pos = rows.gamma > 0
        g = rows.gamma[pos]
        a = rows.absorb[pos]
        v = rows.var[pos]
        if g.size < 2:
            raise ValueError("need at least two positive grid points to interpolate")
        if np.any(a <= 0) or np.any(v <= 0):
            raise ValueError("absorptance and variance must be positive for log interpolation")
        self.gamma_min = float(g[0])
        self.gamma_max = float(g[-1])
        lg = np.log(g)
        self._a = PchipInterpolator(lg, np.log(a), extrapolate=False)
        self._v = PchipInterpolator(lg, np.log(v), extrapolate=False)
        self.knots = g

    def __call__(self, gamma):
        g = np.asarray(gamma, dtype=float)
        if np.any(g > self.gamma_max * (1 + 1e-12)):
            raise ValueError(f"gamma {g.max():.6g} above table range {self.gamma_max:.6g}")
        g = np.minimum(g, self.gamma_max)
        low = g < self.gamma_min
        with np.errstate(divide="ignore"):
            lg = np.log(np.where(low, self.gamma_min, g))
        a = np.where(low, g, np.exp(self._a(lg)))
        v = np.where(low, g * g, np.exp(self._v(lg)))
        return a, v


def _diagnose(rows: MomentRows) -> dict:
    pos = rows.gamma > 0
    a = rows.absorb[pos]
    da = np.diff(a)
    tol = 3.0 * np.hypot(rows.se_mean[pos][1:], rows.se_mean[pos][:-1])
    v = rows.var[pos]
    return {
        "N": "inf" if math.isinf(rows.N) else int(rows.N),
        "mean_sigma_strictly_decreasing": bool(np.all(da > 0)),
        "monotonicity_violations_beyond_3se": int(np.sum(da < -tol)),
        "variance_argmax_gamma": float(rows.gamma[pos][int(np.argmax(v))]) if v.size else None,
        "variance_first": float(v[0]) if v.size else None,
        "variance_last": float(v[-1]) if v.size else None,
    }


def build_moment_table(N_list: Sequence[int], gamma_grid, samples: int, seed: int = 0, *,
                       M_res_factor: int = 10, ensemble: str = "goe", wide_band: bool = True,
                       workers: int = 1, tolerance: float | None = None) -> MomentTable:
    """Sample the moments for each ``N`` and, with two ``N``, extrapolate to ``N -> inf``.

    The precondition that the grid is log-spaced over at least
    ``[1e-3, 1e4]`` is recorded in the diagnostics (``"grid_covers_default"``)
    rather than enforced, so that small tables remain usable for tests.
    """
    g = np.sort(np.atleast_1d(np.asarray(gamma_grid, dtype=float)))
    if np.any(g < 0):
        raise ValueError("gamma grid must be nonnegative")
    Ns = sorted(int(n) for n in N_list)
    if len(Ns) not in (1, 2):
        raise ValueError("give one or two N values")
    rows = []
    flags = set()
    for n in Ns:
        a1, a2 = absorption_samples(n, g, samples, seed, M_res=M_res_factor * n,
                                    ensemble=ensemble, wide_band=wide_band, workers=workers)
        m = _moments_from_samples(a1, a2, tolerance)
        flags.update(m["flags"])
        rows.append(MomentRows(n, samples, g, m["absorb"], m["var"], m["se_mean"], m["se_sq"],
                               m["se_var"]))
    if len(Ns) == 2:
        r1, r2 = rows
        absorb, se_a = _richardson(r1.N, r1.absorb, r1.se_mean, r2.N, r2.absorb, r2.se_mean)
        var, se_var = _richardson(r1.N, r1.var, r1.se_var, r2.N, r2.var, r2.se_var)
        _, se_sq = _richardson(r1.N, 0.0, r1.se_sq, r2.N, 0.0, r2.se_sq)
        # gamma = 0 is exact for every N
        zero = g == 0
        absorb[zero] = 0.0
        var[zero] = 0.0
        rows.append(MomentRows(math.inf, samples, g, absorb, var, se_a, se_sq, se_var))
    pos = g[g > 0]
    diagnostics = {
        "rows": [_diagnose(r) for r in rows],
        "grid_covers_default": bool(pos.size > 0 and pos[0] <= 1e-3 and pos[-1] >= 1e4),
        "flags": sorted(flags),
    }
    config = {"N_list": Ns, "samples": samples, "M_res_factor": M_res_factor,
              "ensemble": ensemble, "wide_band": wide_band, "gamma_grid": g.tolist()}
    return MomentTable(rows, config, seed, diagnostics)


# --------------------------------------------------------------------------
# Correlators


def cavity_moments_profile(gamma0: float, table: MomentTable):
    """Spectral moments along the line, ``gamma(x) = gamma0 / (1 + x**2)``."""
    interp = table.interpolator()

    def profile(x):
        gam = gamma0 / (1.0 + np.asarray(x, dtype=float) ** 2)
        a, v = interp(gam)
        return SpectralMoments.from_absorption(a, v)

    return profile, interp


def cavity_correlators(params: CavityParams, detectors: DetectorPair | None, table: MomentTable,
                       *, rtol: float = DEFAULT_RTOL) -> CorrelatorResult:
    """Line-integrated cavity correlators in :attr:`UnitSystem.CAVITY_FIG3` units.

    ``cross`` is in ``Omega_c f^2 a_k a_l / N``, ``short_range`` in
    ``Omega_c f^2 a_k^2`` and ``current`` in ``Omega_c f a_k``; the ratios
    ``cross/current`` and ``short_range/current`` are those plotted against
    ``gamma0`` in units of ``f sqrt(a_k a_l) / N`` and ``f a_k``.

    Raises
    ------
    ValueError
        If ``gamma0`` exceeds the largest tabulated rate.
    """
    g0 = params.gamma0
    if g0 == 0:
        return CorrelatorResult.zero(UnitSystem.CAVITY_FIG3)
    profile, interp = cavity_moments_profile(g0, table)
    if g0 > interp.gamma_max * (1 + 1e-12):
        raise ValueError(f"gamma0 = {g0:.6g} above table range {interp.gamma_max:.6g}")
    flags = []
    if interp.gamma_min > 1e-4 * g0:
        flags.append("table-below-coverage")
    knots = interp.knots[interp.knots < g0]
    xs = np.sqrt(g0 / knots - 1.0)
    bps = np.concatenate([-xs, xs])
    (jv, j1, j2), (ev, e1, e2), qflags = line_moment_integrals(profile, rtol=rtol, breakpoints=bps)
    return CorrelatorResult(
        cross=float(jv), short_range=float(j2), current=float(j1),
        units=UnitSystem.CAVITY_FIG3,
        errors={"cross": float(ev), "short_range": float(e2), "current": float(e1)},
        flags=tuple(flags) + qflags,
    )


def cavity_strong_limits(detectors: DetectorPair, N: int) -> dict:
    """Strong-absorption limits of ``C_kl / sqrt(I_k I_l)`` and ``(C_kk - I_k) / I_k``.

    ``0.062 f sqrt(a_k a_l) / N`` and ``f a_k / 2``; the first constant is
    only known to two digits.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    ak, al, f = detectors.alpha_k, detectors.alpha_l, detectors.occupation
    return {"cross_ratio_limit": 0.062 * f * math.sqrt(ak * al) / N,
            "short_range_ratio_limit": 0.5 * f * ak}
