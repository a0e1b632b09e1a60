"""Scattering-matrix containers, Haar sampling and checks of the large-N approximations.

The checks consume a *sampler*: a callable ``sampler(N, samples, seed)``
returning an array of shape ``(samples, N, N)`` with one ``QQ^dagger`` per
realisation.  :func:`thermcorr.cavity.cavity_sampler` builds one from the
absorbing-cavity ensemble.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .stats import jackknife

Sampler = Callable[[int, int, int], np.ndarray]

QQ_CLAMP = 1e-10
QQ_FATAL = 1e-8


class SubunitarityError(ValueError):
    """Raised when ``QQ^dagger`` has eigenvalues clearly outside ``[0, 1]``."""


@dataclass
class ScatteringSystem:
    """Blocks of a scattering matrix.

    A reflection-only system (a cavity with no transmission) has ``t`` and
    ``t_prime`` set to ``None``.  ``r`` may be a single ``N x N`` matrix or a
    stack of shape ``(..., N, N)``.
    """

    r: np.ndarray
    t: np.ndarray | None = None
    t_prime: np.ndarray | None = None
    r_prime: np.ndarray | None = None
    reciprocal: bool = False

    @property
    def N(self) -> int:
        return self.r.shape[-1]

    @property
    def two_sided(self) -> bool:
        return self.t is not None

    @property
    def dimension(self) -> int:
        return 2 * self.N if self.two_sided else self.N

    @classmethod
    def from_smatrix(cls, S: np.ndarray, reciprocal: bool = False) -> "ScatteringSystem":
        """Split ``S = [[r, t], [t', r']]`` into its four ``N x N`` blocks.

        With this layout the rows of ``(r, t)`` are the amplitudes reaching
        the left-hand modes, so unitarity gives ``r r^+ + t t^+ = 1``.
        """
        S = np.asarray(S)
        if S.shape[-1] % 2:
            raise ValueError("S must have even dimension")
        n = S.shape[-1] // 2
        return cls(r=S[..., :n, :n], t=S[..., :n, n:], t_prime=S[..., n:, :n],
                   r_prime=S[..., n:, n:], reciprocal=reciprocal)

    def reciprocity_error(self) -> float:
        """Largest ``|r - r^T|`` (and the analogous block relations if present)."""
        def tr(a):
            return np.swapaxes(a, -1, -2)
        errs = [np.max(np.abs(self.r - tr(self.r)))]
        if self.r_prime is not None:
            errs.append(np.max(np.abs(self.r_prime - tr(self.r_prime))))
        if self.t is not None and self.t_prime is not None:
            errs.append(np.max(np.abs(self.t - tr(self.t_prime))))
        return float(max(errs))

    def qq(self, clamp: bool = True) -> np.ndarray:
        return qq_dagger(self, clamp=clamp)


def haar_unitary(n: int, seed=None, size: int | None = None) -> np.ndarray:
    """Haar-distributed unitary matrix (or a stack of ``size`` of them).

    QR decomposition of a complex Ginibre matrix, with the phases of the
    diagonal of R moved into Q so that the result is exactly Haar.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    shape = (n, n) if size is None else (size, n, n)
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    ph = d / np.abs(d)
    return q * ph[..., None, :]


def qq_dagger(system: ScatteringSystem, clamp: bool = True) -> np.ndarray:
    """``QQ^dagger = 1 - r r^dagger - t t^dagger`` (``t`` omitted when absent).

    Eigenvalues are allowed to stray outside ``[0, 1]`` by roundoff.  With
    ``clamp=True`` strays up to ``1e-8`` are projected back; anything larger
    raises :class:`SubunitarityError`.
    """
    r = np.asarray(system.r)
    n = r.shape[-1]
    eye = np.eye(n)
    q = eye - r @ np.conj(np.swapaxes(r, -1, -2))
    if system.t is not None:
        t = np.asarray(system.t)
        q = q - t @ np.conj(np.swapaxes(t, -1, -2))
    q = 0.5 * (q + np.conj(np.swapaxes(q, -1, -2)))
    w, v = np.linalg.eigh(q)
    if np.any(w < -QQ_FATAL) or np.any(w > 1 + QQ_FATAL):
        raise SubunitarityError(
            f"QQ^dagger spectrum [{w.min():.3e}, {w.max():.3e}] leaves [0, 1]"
        )
    if clamp and (np.any(w < 0) or np.any(w > 1)):
        w = np.clip(w, 0.0, 1.0)
        q = (v * w[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))
    return q


# --------------------------------------------------------------------------
# Reports


@dataclass
class CheckReport:
    """Outcome of one validation check, serialisable to JSON."""

    check: str
    N: int | list
    samples: int
    estimate: float | list | dict
    error: float | list | dict
    verdict: str
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict in ("pass", "degenerate")

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def memoized(sampler: Sampler) -> Sampler:
    """Wrap a sampler so repeated ``(N, samples, seed)`` requests reuse one ensemble."""
    cache: dict = {}

    def inner(N: int, samples: int, seed: int) -> np.ndarray:
        key = (int(N), int(samples), int(seed))
        if key not in cache:
            cache[key] = sampler(N, samples, seed)
        return cache[key]

    return inner


def _is_degenerate(qq: np.ndarray) -> bool:
    return float(np.max(np.abs(qq))) < 1e-12


def equivalent_channel_check(sampler: Sampler, N: int, samples: int, seed: int = 0,
                             n_sigma: float = 3.0, uniformity_z: float = 5.0) -> CheckReport:
    """Test that all channels are statistically equivalent.

    Two things are measured on the same ensemble:

    * the trace identity ``<tr (QQ^+)^2> = N(N-1) <|QQ^+_kl|^2> + N <(QQ^+_kk)^2>``
      with one fixed pair ``(k, l) = (0, 1)`` and ``k = 0`` on the right.
      Averaging over all pairs would make it an algebraic identity; a single
      pair turns it into a statement about channel symmetry.  The residual
      per sample has zero mean, and must be within ``n_sigma`` errors of 0.
    * uniformity of ``<|QQ^+_kl|^2>`` over the off-diagonal pairs: each
      pair's mean is compared with the pooled mean, and the worst z-score
      must stay below ``uniformity_z``.
    """
    qq = sampler(N, samples, seed)
    if _is_degenerate(qq):
        return CheckReport("equivalent_channel", N, samples, 0.0, 0.0, "degenerate",
                           {"reason": "QQ^dagger vanishes identically"})
    abs2 = np.abs(qq) ** 2
    trq2 = abs2.sum(axis=(1, 2))
    if N == 1:
        res = trq2 - np.real(qq[:, 0, 0]) ** 2
        est, err = float(res.mean()), float(res.std(ddof=1) / np.sqrt(samples))
        return CheckReport("equivalent_channel", N, samples, est, err,
                           "pass" if abs(est) <= n_sigma * err + 1e-14 else "fail",
                           {"note": "single channel: identity reduces to <tr Q^2> = <Q_11^2>"})
    res = trq2 - N * (N - 1) * abs2[:, 0, 1] - N * abs2[:, 0, 0]
    est = float(res.mean())
    err = float(res.std(ddof=1) / np.sqrt(samples))
    scale = float(trq2.mean())

    iu = np.triu_indices(N, 1)
    pair_vals = abs2[:, iu[0], iu[1]]
    pair_mean = pair_vals.mean(axis=0)
    pair_se = pair_vals.std(axis=0, ddof=1) / np.sqrt(samples)
    pooled = pair_mean.mean()
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(pair_se > 0, (pair_mean - pooled) / pair_se, 0.0)
    worst = int(np.argmax(np.abs(z)))
    ok_identity = abs(est) <= n_sigma * err + 1e-14 * scale
    ok_uniform = abs(z[worst]) <= uniformity_z
    return CheckReport(
        "equivalent_channel", N, samples, est, err,
        "pass" if (ok_identity and ok_uniform) else "fail",
        {
            "identity_sigma": est / err if err > 0 else 0.0,
            "mean_trace_qq2": scale,
            "pooled_offdiag": float(pooled),
            "worst_pair": [int(iu[0][worst]), int(iu[1][worst])],
            "worst_pair_z": float(z[worst]),
            "identity_ok": bool(ok_identity),
            "uniformity_ok": bool(ok_uniform),
        },
    )


def _diag_moments(qq: np.ndarray):
    d = np.real(np.diagonal(qq, axis1=1, axis2=2))
    # channel-averaged per sample, so each sample is one jackknife unit
    return d.mean(axis=1), (d * d).mean(axis=1)


def factorization_check(sampler: Sampler, N_list: Sequence[int], samples: int, seed: int = 0,
                        target: float = 1.0, tolerance: float = 0.3) -> CheckReport:
    """Measure ``d(N) = <(QQ^+_kk)^2> / <QQ^+_kk>^2 - 1`` and fit ``d ~ N^-p``.

    ``d(N)`` is estimated with a jackknife at every ``N``; ``p`` comes from a
    weighted least-squares fit of ``ln d`` against ``ln N``.  The verdict is
    ``pass`` when ``|p - target| <= tolerance``.
    """
    N_list = sorted(int(n) for n in N_list)
    if len(N_list) < 2:
        raise ValueError("factorization_check needs at least two N values")
    ds, es = [], []
    for n in N_list:
        qq = sampler(n, samples, seed)
        if _is_degenerate(qq):
            return CheckReport("factorization", N_list, samples, None, None, "degenerate",
                               {"reason": "QQ^dagger vanishes identically"})
        m1, m2 = _diag_moments(qq)
        d, e = jackknife((m1, m2), lambda a, b: b / (a * a) - 1.0)
        ds.append(float(d))
        es.append(float(e))
    ds_a, es_a = np.array(ds), np.array(es)
    if np.all(np.abs(ds_a) < 1e-14):
        return CheckReport("factorization", N_list, samples, {"p": None, "d": ds},
                           {"p": None, "d": es}, "pass",
                           {"note": "deterministic system: d(N) = 0 for every N"})
    if np.any(ds_a <= 0):
        return CheckReport("factorization", N_list, samples, {"p": None, "d": ds},
                           {"p": None, "d": es}, "fail",
                           {"reason": "nonpositive d(N); power-law fit impossible"})
    x = np.log(np.array(N_list, dtype=float))
    y = np.log(ds_a)
    w = (ds_a / es_a) ** 2  # 1 / var(ln d)
    A = np.stack([np.ones_like(x), -x], axis=1)
    cov = np.linalg.inv(A.T @ (A * w[:, None]))
    coef = cov @ (A.T @ (w * y))
    p, p_err = float(coef[1]), float(np.sqrt(cov[1, 1]))
    chi2 = float(np.sum(w * (y - A @ coef) ** 2))
    verdict = "pass" if abs(p - target) <= tolerance else "fail"
    return CheckReport("factorization", N_list, samples, {"p": p, "d": ds}, {"p": p_err, "d": es},
                       verdict, {"prefactor": float(np.exp(coef[0])), "chi2": chi2,
                                 "target": target, "tolerance": tolerance})


def covariance_identity_check(sampler: Sampler, N: int, samples: int, seed: int = 0,
                              C: float = 1.0, n_sigma: float = 3.0) -> CheckReport:
    """Compare ``<|QQ^+_kl|^2>`` with ``N^-2 <tr (QQ^+)^2> - N^-3 <tr QQ^+>^2``.

    The direct side pools all ``k != l``.  Both sides come from the same
    samples, so the error is a jackknife of their difference.  The verdict
    is ``pass`` when the deviation lies within ``n_sigma`` errors plus the
    ``C / N^2`` remainder.
    """
    if N < 2:
        raise ValueError("covariance_identity_check needs N >= 2")
    qq = sampler(N, samples, seed)
    if _is_degenerate(qq):
        return CheckReport("covariance_identity", N, samples, 0.0, 0.0, "degenerate",
                           {"reason": "QQ^dagger vanishes identically"})
    abs2 = np.abs(qq) ** 2
    trq2 = abs2.sum(axis=(1, 2))
    diag2 = np.real(np.einsum("sii->s", abs2))
    off = (trq2 - diag2) / (N * (N - 1))
    trq = np.real(np.einsum("sii->s", qq))

    def deviation(o, t2, t1):
        return o - (t2 / N**2 - t1 * t1 / N**3)

    dev, dev_err = jackknife((off, trq2, trq), deviation)
    direct = float(off.mean())
    expr = float(trq2.mean() / N**2 - trq.mean() ** 2 / N**3)
    band = n_sigma * float(dev_err) + C / N**2
    return CheckReport(
        "covariance_identity", N, samples, float(dev), float(dev_err),
        "pass" if abs(dev) <= band else "fail",
        {"direct": direct, "trace_expression": expr, "band": band,
         "relative_deviation": float(dev) / direct if direct else 0.0},
    )
