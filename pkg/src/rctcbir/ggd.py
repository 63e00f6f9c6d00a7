"""Zero-mean generalized Gaussian modelling of subband coefficients.

Density: ``p(x) = beta / (2*alpha*Gamma(1/beta)) * exp(-(|x|/alpha)**beta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, gammaln, polygamma

from .errors import DegenerateSamplesError

ALPHA_MIN, ALPHA_MAX = 1e-8, 1e8
BETA_MIN, BETA_MAX = 0.05, 10.0
BETA_TOL = 1e-8
MAX_ITER = 200
MIN_SAMPLES = 16

# fallback parameters substituted by callers for degenerate subbands
DEGENERATE_PARAMS = (ALPHA_MIN, 2.0)


@dataclass(frozen=True)
class GgdParams:
    """Fitted (scale, shape) pair.

    ``note`` records estimator events ("clamped", "mme_fallback",
    "degenerate") and does not take part in equality.
    """

    alpha: float
    beta: float
    note: str | None = field(default=None, compare=False)

    def logpdf(self, x) -> np.ndarray:
        x = np.abs(np.asarray(x, dtype=np.float64))
        return (math.log(self.beta) - math.log(2.0 * self.alpha) - gammaln(1.0 / self.beta)
                - (x / self.alpha) ** self.beta)

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.logpdf(x))

    def loglikelihood(self, samples) -> float:
        return float(np.sum(self.logpdf(samples)))


def mme_ratio(beta):
    """``Gamma(2/b)**2 / (Gamma(1/b) * Gamma(3/b))`` = (E|x|)^2 / E[x^2] for a GGD."""
    b = np.asarray(beta, dtype=np.float64)
    r = np.exp(2.0 * gammaln(2.0 / b) - gammaln(1.0 / b) - gammaln(3.0 / b))
    return float(r) if r.ndim == 0 else r


def _prepare(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain non-finite values")
    if np.ptp(x) == 0.0:
        raise DegenerateSamplesError("samples are constant")
    return x


def _clamp_alpha(alpha: float) -> tuple[float, bool]:
    clamped = min(max(alpha, ALPHA_MIN), ALPHA_MAX)
    return clamped, clamped != alpha


def fit_mme(samples) -> GgdParams:
    """Moment-matching estimate from mean |x| and mean x**2.

    Raises :class:`DegenerateSamplesError` for constant input.
    """
    x = _prepare(samples)
    a = np.abs(x)
    m1 = float(np.mean(a))
    m2 = float(np.mean(x * x))
    target = m1 * m1 / m2
    lo, hi = BETA_MIN, BETA_MAX
    note = None
    if target <= mme_ratio(lo):
        beta, note = lo, "clamped"
    elif target >= mme_ratio(hi):
        beta, note = hi, "clamped"
    else:
        while hi - lo >= BETA_TOL:
            mid = 0.5 * (lo + hi)
            if mme_ratio(mid) < target:
                lo = mid
            else:
                hi = mid
        beta = 0.5 * (lo + hi)
    alpha = m1 * math.exp(gammaln(1.0 / beta) - gammaln(2.0 / beta))
    alpha, hit = _clamp_alpha(alpha)
    if hit:
        note = "clamped"
    return GgdParams(alpha, beta, note)


class _ShapeEquation:
    """MLE shape equation g(beta) and its derivative for fixed samples.

    Samples are rescaled by their mean absolute value; g is invariant to
    that scaling and the powers |x|**beta stay representable.
    """

    def __init__(self, x: np.ndarray):
        a = np.abs(x)
        self.n = a.size
        self.scale = float(np.mean(a))
        nz = a[a > 0] / self.scale
        self.log_a = np.log(nz)

    def sums(self, beta: float):
        # shift powers by the max exponent to avoid overflow at large beta
        e = beta * self.log_a
        shift = float(e.max())
        w = np.exp(e - shift)
        s0 = float(w.sum())
        s1 = float(np.dot(w, self.log_a))
        s2 = float(np.dot(w, self.log_a * self.log_a))
        return s0, s1, s2, shift

    def value_and_slope(self, beta: float) -> tuple[float, float]:
        s0, s1, s2, shift = self.sums(beta)
        r = s1 / s0
        log_term = math.log(beta / self.n) + math.log(s0) + shift
        inv = 1.0 / beta
        g = 1.0 + float(digamma(inv)) * inv - r + log_term * inv
        dg = (-float(polygamma(1, inv)) * inv ** 3 - float(digamma(inv)) * inv ** 2
              - (s2 / s0 - r * r) + (inv + r) * inv - log_term * inv ** 2)
        return g, dg

    def alpha(self, beta: float) -> float:
        s0, _, _, shift = self.sums(beta)
        log_mean_pow = math.log(beta / self.n) + math.log(s0) + shift
        return self.scale * math.exp(log_mean_pow / beta)


def fit_mle(samples) -> GgdParams:
    """Maximum-likelihood estimate via safeguarded Newton on the shape equation.

    Starts from the moment-matching estimate. Newton steps that leave the
    current sign-change bracket are replaced by bisection. Without a root in
    [0.05, 10] the shape is clamped to the better endpoint; if the iteration
    does not settle in 200 steps the moment-matching fit is returned.
    """
    x = _prepare(samples)
    start = fit_mme(x)
    eq = _ShapeEquation(x)
    lo, hi = BETA_MIN, BETA_MAX
    g_lo, _ = eq.value_and_slope(lo)
    g_hi, _ = eq.value_and_slope(hi)
    note = None
    if g_lo * g_hi > 0:
        cands = [GgdParams(eq.alpha(b), b) for b in (lo, hi)]
        best = max(cands, key=lambda p: p.loglikelihood(x))
        beta, note = best.beta, "clamped"
    elif g_lo == 0 or g_hi == 0:
        beta = lo if g_lo == 0 else hi
    else:
        # orient so that g(lo) < 0 < g(hi)
        sign = 1.0 if g_lo < 0 else -1.0
        beta = min(max(start.beta, lo), hi)
        converged = False
        for _ in range(MAX_ITER):
            g, dg = eq.value_and_slope(beta)
            if g == 0:
                converged = True
                break
            if sign * g < 0:
                lo = beta
            else:
                hi = beta
            step_ok = dg != 0 and math.isfinite(dg)
            new = beta - g / dg if step_ok else math.nan
            if not (lo < new < hi):
                new = 0.5 * (lo + hi)
            if abs(new - beta) < BETA_TOL or hi - lo < BETA_TOL:
                beta = new
                converged = True
                break
            beta = new
        if not converged:
            return GgdParams(start.alpha, start.beta, "mme_fallback")
    alpha, hit = _clamp_alpha(eq.alpha(beta))
    if hit:
        note = "clamped"
    return GgdParams(alpha, beta, note)


def _kl_arrays(a1, b1, a2, b2):
    lg1 = gammaln(1.0 / b1)
    val = (np.log(b1 / b2) + np.log(a2 / a1) + gammaln(1.0 / b2) - lg1
           + np.exp(b2 * np.log(a1 / a2) + gammaln((b2 + 1.0) / b1) - lg1) - 1.0 / b1)
    # identical parameters diverge by exactly zero, not by rounding residue
    return np.where((a1 == a2) & (b1 == b2), 0.0, np.maximum(val, 0.0))


def kld_ggd(p: GgdParams, q: GgdParams) -> float:
    """Closed-form KL divergence D(p || q) between two zero-mean GGDs."""
    return float(_kl_arrays(np.float64(p.alpha), np.float64(p.beta),
                            np.float64(q.alpha), np.float64(q.beta)))


def skld(p: GgdParams, q: GgdParams) -> float:
    """Symmetrised divergence D(p||q) + D(q||p)."""
    return kld_ggd(p, q) + kld_ggd(q, p)


def skld_arrays(a1, b1, a2, b2) -> np.ndarray:
    """Vectorised :func:`skld` over broadcastable parameter arrays."""
    a1, b1, a2, b2 = (np.asarray(v, dtype=np.float64) for v in (a1, b1, a2, b2))
    return _kl_arrays(a1, b1, a2, b2) + _kl_arrays(a2, b2, a1, b1)
