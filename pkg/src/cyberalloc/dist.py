"""Lattice distributions and the arithmetic the loss model needs.

A :class:`DiscreteDistribution` puts mass ``masses[k]`` on the point ``k * step``.
Everything downstream (per-incident sums, threat mixtures, compound annual
losses, retentions, tail measures) is computed on such lattices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import fft as sfft
from scipy import special, stats

from . import _kernels
from .errors import ConfigError, LatticeError, NumericError, ResolutionError, UnsupportedFamilyError

MASS_TOL = 1e-9
DEFAULT_MAX_POINTS = 2**22
DIRECT_CONVOLVE_MAX = 4096
RECURSION_MAX_SEVERITY = 2048
# F(x) >= level is tested with this slack so that cumulative sums such as
# 0.1 + ... + 0.1 (nine terms) still reach a level of 0.9.
CDF_SLACK = 1e-12


class Family(str, Enum):
    LOGNORMAL = "lognormal"
    WEIBULL = "weibull"
    PARETO = "pareto"


# ---------------------------------------------------------------------------
# severity


@dataclass(frozen=True)
class SeverityModel:
    """Zero-inflated positive loss: 0 with probability ``q``, else a draw from
    ``family`` conditioned on not exceeding ``upper``.

    params: lognormal (mu, sigma) of log-loss; weibull (shape, scale);
    pareto (shape, scale) of the Lomax law with density a s^a / (x + s)^(a+1).
    """

    q: float
    family: Family
    params: tuple[float, float]
    upper: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if not 0.0 <= self.q <= 1.0:
            raise ConfigError(f"zero-loss probability must lie in [0, 1], got {self.q}")
        if len(self.params) != 2:
            raise ConfigError(f"{self.family.value} takes two parameters")
        a, b = self.params
        if self.family is Family.LOGNORMAL:
            ok = math.isfinite(a) and b > 0
        else:
            ok = a > 0 and b > 0
        if not ok:
            raise ConfigError(f"invalid {self.family.value} parameters {self.params}")
        if not self.upper > 0:
            raise ConfigError(f"loss ceiling must be positive, got {self.upper}")

    @classmethod
    def lognormal(cls, q: float, mu: float, sigma: float, upper: float = math.inf) -> "SeverityModel":
        return cls(q, Family.LOGNORMAL, (mu, sigma), upper)

    @property
    def degenerate(self) -> bool:
        return self.q >= 1.0

    def positive_law(self):
        return self._law

    @cached_property
    def _law(self):
        # freezing a scipy law is slow; the model is immutable so build it once
        a, b = self.params
        if self.family is Family.LOGNORMAL:
            return stats.lognorm(s=b, scale=math.exp(a))
        if self.family is Family.WEIBULL:
            return stats.weibull_min(c=a, scale=b)
        return stats.lomax(c=a, scale=b)

    def _mass_below_upper(self) -> float:
        if math.isinf(self.upper):
            return 1.0
        return float(self.positive_law().cdf(self.upper))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return 1.0 - self.sf(x)

    def sf(self, x):
        """P(X > x), computed from survival functions to keep tail cells accurate."""
        x = np.asarray(x, dtype=float)
        if self.degenerate:
            return np.where(x < 0.0, 1.0, 0.0)
        law = self.positive_law()
        g_upper = self._mass_below_upper()
        s_upper = 0.0 if math.isinf(self.upper) else float(law.sf(self.upper))
        xc = np.clip(x, 0.0, None)
        pos = (law.sf(xc) - s_upper) / g_upper
        out = (1.0 - self.q) * np.clip(pos, 0.0, 1.0)
        out = np.where(x >= self.upper, 0.0, out)
        return np.where(x < 0.0, 1.0, out)

    def isf(self, tail: float) -> float:
        """Smallest x with P(X > x) <= tail."""
        if self.degenerate or tail >= 1.0 - self.q:
            return 0.0
        law = self.positive_law()
        g_upper = self._mass_below_upper()
        s_upper = 0.0 if math.isinf(self.upper) else float(law.sf(self.upper))
        target = s_upper + tail / (1.0 - self.q) * g_upper
        return float(min(law.isf(target), self.upper))

    def positive_mean(self) -> float:
        """E[X | X > 0] under the truncated positive law."""
        a, b = self.params
        c = self.upper
        if self.family is Family.LOGNORMAL:
            mu, sigma = a, b
            full = math.exp(mu + 0.5 * sigma * sigma)
            if math.isinf(c):
                return full
            z = (math.log(c) - mu) / sigma
            return full * special.ndtr(z - sigma) / special.ndtr(z)
        if self.family is Family.WEIBULL:
            k, lam = a, b
            full = lam * special.gamma(1.0 + 1.0 / k)
            if math.isinf(c):
                return full
            t = (c / lam) ** k
            return full * special.gammainc(1.0 + 1.0 / k, t) / -special.expm1(-t)
        alpha, s = a, b
        if math.isinf(c):
            return s / (alpha - 1.0) if alpha > 1.0 else math.inf
        # E[X; X <= c] = int_0^c S(x) dx - c S(c)
        surv_c = (s / (s + c)) ** alpha
        if abs(alpha - 1.0) < 1e-12:
            integral = s * math.log1p(c / s)
        else:
            integral = s / (alpha - 1.0) * (1.0 - (s / (s + c)) ** (alpha - 1.0))
        return (integral - c * surv_c) / (1.0 - surv_c)

    def mean(self) -> float:
        if self.degenerate:
            return 0.0
        return (1.0 - self.q) * self.positive_mean()

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        out = np.zeros(size)
        if self.degenerate or size == 0:
            return out
        positive = rng.random(size) >= self.q
        npos = int(positive.sum())
        law = self.positive_law()
        u = rng.random(npos) * self._mass_below_upper()
        out[positive] = law.ppf(u)
        return out

    def describe(self) -> str:
        a, b = self.params
        if self.family is Family.LOGNORMAL:
            body = f"LN(mu={a:.4g}, sigma={b:.4g})"
        elif self.family is Family.WEIBULL:
            body = f"W(shape={a:.4g}, scale={b:.6g})"
        else:
            body = f"P(shape={a:.4g}, scale={b:.6g})"
        cap = "" if math.isinf(self.upper) else f" <= {self.upper:.4g}"
        return f"q={self.q:.4g}, {body}{cap}"


def scale_severity(s: SeverityModel, theta_j: float) -> SeverityModel:
    """Law of theta_j * X for X ~ s."""
    if not 0.0 <= theta_j <= 1.0:
        raise ConfigError(f"control factor must lie in [0, 1], got {theta_j}")
    if theta_j == 0.0:
        return SeverityModel(1.0, s.family, s.params, s.upper)
    if theta_j == 1.0:
        return s
    a, b = s.params
    if s.family is Family.LOGNORMAL:
        params = (a + math.log(theta_j), b)
    else:
        params = (a, b * theta_j)
    return SeverityModel(s.q, s.family, params, s.upper * theta_j)


# ---------------------------------------------------------------------------
# lattice distributions


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    step: float
    masses: np.ndarray

    def __init__(self, step: float, masses, check: bool = True):
        step = float(step)
        if not step > 0 or not math.isfinite(step):
            raise ConfigError(f"lattice step must be positive, got {step}")
        arr = np.array(masses, dtype=float).ravel()
        if arr.size == 0:
            raise NumericError("a distribution needs at least one support point")
        if check:
            if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
                raise NumericError("masses must be finite and non-negative")
            total = float(arr.sum())
            if abs(total - 1.0) > MASS_TOL:
                raise NumericError(f"masses sum to {total!r}, not 1")
        arr.setflags(write=False)
        object.__setattr__(self, "step", step)
        object.__setattr__(self, "masses", arr)

    @classmethod
    def from_weights(cls, step: float, weights) -> "DiscreteDistribution":
        """Clip round-off negatives and renormalize."""
        w = np.array(weights, dtype=float).ravel()
        w[w < 0.0] = 0.0
        total = w.sum()
        if not total > 0 or not math.isfinite(total):
            raise NumericError("cannot normalize a distribution with no mass")
        return cls(step, w / total)

    @classmethod
    def point_mass(cls, value: float, step: float) -> "DiscreteDistribution":
        k = int(round(value / step))
        if k < 0:
            raise ConfigError("support must be non-negative")
        m = np.zeros(k + 1)
        m[k] = 1.0
        return cls(step, m)

    @classmethod
    def zero(cls, step: float) -> "DiscreteDistribution":
        return cls(step, [1.0])

    def __len__(self) -> int:
        return self.masses.shape[0]

    @property
    def support(self) -> np.ndarray:
        return np.arange(len(self)) * self.step

    @property
    def max_value(self) -> float:
        return (len(self) - 1) * self.step

    def is_zero(self) -> bool:
        return len(self) == 1 or not np.any(self.masses[1:] > 0.0)

    def mean(self) -> float:
        return float(np.dot(self.support, self.masses))

    def variance(self) -> float:
        x = self.support
        mu = self.mean()
        return float(np.dot((x - mu) ** 2, self.masses))

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.masses)

    def trimmed(self, tol: float = 1e-12) -> "DiscreteDistribution":
        """Drop the right tail once at most ``tol`` mass remains, then renormalize."""
        rev = np.cumsum(self.masses[::-1])[::-1]
        keep = int(np.searchsorted(-rev, -tol, side="right"))
        keep = max(keep, 1)
        if keep >= len(self):
            return self
        return DiscreteDistribution.from_weights(self.step, self.masses[:keep])

    def to_text(self) -> str:
        lines = [f"# step={self.step!r}", "support\tmass"]
        lines += [f"{x!r}\t{p!r}" for x, p in zip(self.support.tolist(), self.masses.tolist())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DiscreteDistribution":
        rows = [ln for ln in text.splitlines() if ln.strip()]
        if not rows or not rows[0].startswith("# step="):
            raise ConfigError("distribution text must start with a '# step=' header")
        step = float(rows[0].split("=", 1)[1])
        masses = []
        for ln in rows[2:]:
            x, p = ln.split("\t")
            k = round(float(x) / step)
            if k != len(masses):
                raise ConfigError(f"support point {x} is out of lattice order")
            masses.append(float(p))
        return cls(step, masses)


def _same_lattice(a: DiscreteDistribution, b: DiscreteDistribution) -> None:
    if abs(a.step - b.step) > 1e-12 * max(a.step, b.step):
        raise LatticeError(f"lattice steps differ ({a.step} vs {b.step}); re-grid first")


def discretize(
    s: SeverityModel,
    step: float,
    max_mass_deficit: float = 1e-9,
    max_points: int = DEFAULT_MAX_POINTS,
) -> DiscreteDistribution:
    """Rounding discretization: cell ((k - 1/2) h, (k + 1/2) h] goes to kh.

    The support ends at the ``1 - max_mass_deficit`` quantile (or at the
    severity ceiling, whichever is lower) and the result is renormalized.
    """
    if not step > 0:
        raise ConfigError(f"lattice step must be positive, got {step}")
    if not 0.0 < max_mass_deficit <= 1e-6:
        raise ConfigError("max_mass_deficit must lie in (0, 1e-6]")
    if s.degenerate:
        return DiscreteDistribution.zero(step)
    x_max = s.isf(max_mass_deficit)
    k_max = int(math.floor(x_max / step + 0.5))
    if k_max + 1 > max_points:
        raise ResolutionError(
            f"support up to {x_max:.4g} needs {k_max + 1} points at step {step:g}, "
            f"above the cap of {max_points}; use a coarser step or a loss ceiling"
        )
    edges = (np.arange(k_max + 1) + 0.5) * step
    sf = s.sf(edges)
    sf[-1] = float(s.sf(x_max))
    masses = np.empty(k_max + 1)
    masses[0] = 1.0 - sf[0]
    masses[1:] = sf[:-1] - sf[1:]
    return DiscreteDistribution.from_weights(step, masses)


def convolve(a: DiscreteDistribution, b: DiscreteDistribution) -> DiscreteDistribution:
    """Law of the sum of independent draws from ``a`` and ``b``."""
    _same_lattice(a, b)
    # a one-point lattice distribution is the point mass at 0
    if len(a) == 1:
        return b
    if len(b) == 1:
        return a
    if max(len(a), len(b)) <= DIRECT_CONVOLVE_MAX:
        out = np.convolve(a.masses, b.masses)
    else:
        out = fft_convolve(a.masses, b.masses)
    return DiscreteDistribution.from_weights(a.step, out)


def fft_convolve(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    n = len(p) + len(q) - 1
    size = sfft.next_fast_len(n, real=True)
    out = sfft.irfft(sfft.rfft(p, size) * sfft.rfft(q, size), size)[:n]
    out[out < 0.0] = 0.0
    return out


def convolve_all(parts: Sequence[DiscreteDistribution], step: float) -> DiscreteDistribution:
    out = DiscreteDistribution.zero(step)
    for part in parts:
        out = convolve(out, part)
    return out


def mix(components: Sequence[DiscreteDistribution], weights) -> DiscreteDistribution:
    w = np.asarray(weights.p if isinstance(weights, ThreatMixture) else weights, dtype=float)
    if len(components) != w.shape[0]:
        raise ConfigError(f"{len(components)} components but {w.shape[0]} weights")
    if not components:
        raise ConfigError("mixture needs at least one component")
    step = components[0].step
    for c in components[1:]:
        _same_lattice(components[0], c)
    out = np.zeros(max(len(c) for c in components))
    for c, wi in zip(components, w):
        out[: len(c)] += wi * c.masses
    return DiscreteDistribution(step, out)


# ---------------------------------------------------------------------------
# frequency and compound laws


@dataclass(frozen=True)
class FrequencyModel:
    """Poisson (``mean``) or negative binomial (``size`` r, ``mean``)."""

    family: str
    mean: float
    size: float | None = None

    def __post_init__(self):
        if self.family not in ("poisson", "negative_binomial"):
            raise UnsupportedFamilyError(f"frequency family {self.family!r} is not in the (a,b,0) class")
        if not self.mean >= 0 or not math.isfinite(self.mean):
            raise ConfigError(f"frequency mean must be finite and non-negative, got {self.mean}")
        if self.family == "negative_binomial" and not (self.size is not None and self.size > 0):
            raise ConfigError("negative binomial needs a positive size")

    @classmethod
    def poisson(cls, lam: float) -> "FrequencyModel":
        return cls("poisson", float(lam))

    @classmethod
    def negative_binomial(cls, size: float, mean: float) -> "FrequencyModel":
        return cls("negative_binomial", float(mean), float(size))

    @property
    def beta(self) -> float:
        return self.mean / self.size

    def ab(self) -> tuple[float, float]:
        if self.family == "poisson":
            return 0.0, self.mean
        a = self.beta / (1.0 + self.beta)
        return a, (self.size - 1.0) * a

    def pgf(self, z):
        if self.family == "poisson":
            return np.exp(self.mean * (z - 1.0))
        return (1.0 - self.beta * (z - 1.0)) ** (-self.size)

    def variance(self) -> float:
        if self.family == "poisson":
            return self.mean
        return self.mean * (1.0 + self.beta)

    def pmf(self, k):
        k = np.asarray(k)
        if self.family == "poisson":
            return stats.poisson.pmf(k, self.mean)
        return stats.nbinom.pmf(k, self.size, self.size / (self.size + self.mean))

    def sample(self, rng: np.random.Generator, size: int | tuple = None):
        if self.family == "poisson":
            return rng.poisson(self.mean, size)
        return rng.negative_binomial(self.size, self.size / (self.size + self.mean), size)

    def describe(self) -> str:
        if self.family == "poisson":
            return f"Poisson(lambda={self.mean:.4g})"
        return f"NB(size={self.size:.4g}, mean={self.mean:.4g})"


@dataclass(frozen=True, eq=False)
class ThreatMixture:
    p: np.ndarray

    def __init__(self, p):
        arr = np.array(p, dtype=float).ravel()
        if arr.size == 0 or np.any(arr < 0.0) or abs(arr.sum() - 1.0) > 1e-9:
            raise ConfigError(f"threat probabilities must be non-negative and sum to 1, got {arr.tolist()}")
        arr.setflags(write=False)
        object.__setattr__(self, "p", arr)

    def __len__(self) -> int:
        return self.p.shape[0]


def panjer_compound(
    freq: FrequencyModel,
    sev: DiscreteDistribution,
    tol: float = MASS_TOL,
    max_points: int = DEFAULT_MAX_POINTS,
    method: str = "auto",
) -> DiscreteDistribution:
    """Law of N independent copies of ``sev`` summed, N ~ ``freq``.

    ``method``: "recursion" (direct (a,b,0) recursion, O(K x support)),
    "transform" (exponentially tilted FFT of the probability generating
    function) or "auto" (recursion for short severities).
    The support grows until at most ``tol`` mass is left out or the cap is hit;
    the result is renormalized either way.
    """
    if method not in ("auto", "recursion", "transform"):
        raise ConfigError(f"unknown compound method {method!r}")
    if freq.mean == 0.0 or sev.is_zero():
        return DiscreteDistribution.zero(sev.step)
    if method == "auto":
        method = "recursion" if len(sev) <= RECURSION_MAX_SEVERITY else "transform"
    if method == "recursion":
        return _compound_recursion(freq, sev, tol, max_points)
    return _compound_transform(freq, sev, tol, max_points)


def _compound_recursion(freq, sev, tol, max_points):
    a, b = freq.ab()
    fz = sev.masses
    seed = float(freq.pgf(fz[0]))
    if seed <= 0.0:
        raise NumericError("compound mass at zero underflows; use the transform method")
    out = _kernels.panjer(a, b, fz, seed, tol, max_points)
    return DiscreteDistribution.from_weights(sev.step, out)


def _compound_transform(freq, sev, tol, max_points, tilt: float = 6.0):
    fz = sev.masses
    mean_z = float(np.dot(np.arange(len(fz)), fz))
    var_z = float(np.dot(np.arange(len(fz)) ** 2, fz)) - mean_z**2
    mean_s = freq.mean * mean_z
    sd_s = math.sqrt(max(freq.mean * var_z + freq.variance() * mean_z**2, 0.0))
    need = max(2 * len(fz), int(mean_s + 12.0 * sd_s) + 1, 1024)
    n = min(1 << (need - 1).bit_length(), max_points)
    while True:
        t = tilt / n
        x = np.arange(n)
        damp = np.exp(-t * x)
        head = fz[:n] * damp[: min(n, len(fz))]
        phi = sfft.rfft(head, n)
        g = sfft.irfft(freq.pgf(phi), n) / damp
        g[g < 0.0] = 0.0
        total = g.sum()
        if total >= 1.0 - tol or n >= max_points:
            break
        n = min(2 * n, max_points)
    cum = np.cumsum(g)
    keep = int(np.searchsorted(cum, 1.0 - tol)) + 1
    return DiscreteDistribution.from_weights(sev.step, g[: min(keep, n)])


# ---------------------------------------------------------------------------
# risk measures


@dataclass(frozen=True)
class TailSummary:
    """Tail statistics of R beyond its VaR: h(R) = 1{R > VaR} / P(R > VaR),
    or the weak version when the strict tail carries no mass."""

    level: float
    var: float
    prob: float
    mean: float
    variance: float
    strict: bool

    def deviance(self, center: float) -> float:
        """E[(R - center)^2 h(R)]."""
        return self.variance + (self.mean - center) ** 2


def _var_index(d: DiscreteDistribution, level: float) -> int:
    if not 0.0 < level < 1.0:
        raise ConfigError(f"confidence level must lie in (0, 1), got {level}")
    cdf = d.cdf()
    idx = int(np.searchsorted(cdf, level - CDF_SLACK, side="left"))
    return min(idx, len(d) - 1)


def _tail_slice(d: DiscreteDistribution, level: float) -> tuple[int, int, bool]:
    idx = _var_index(d, level)
    if d.masses[idx + 1 :].sum() > 0.0:
        return idx, idx + 1, True
    return idx, idx, False


def value_at_risk(d: DiscreteDistribution, level: float) -> float:
    return _var_index(d, level) * d.step


def tail_summary(d: DiscreteDistribution, level: float) -> TailSummary:
    idx, start, strict = _tail_slice(d, level)
    p = d.masses[start:]
    x = np.arange(start, len(d)) * d.step
    prob = float(p.sum())
    mean = float(np.dot(x, p) / prob)
    variance = float(np.dot((x - mean) ** 2, p) / prob)
    return TailSummary(level, idx * d.step, prob, mean, variance, strict)


def tail_mean(d: DiscreteDistribution, level: float) -> float:
    """E[R | R > VaR], falling back to E[R | R >= VaR] when the strict tail is empty."""
    _, start, _ = _tail_slice(d, level)
    p = d.masses[start:]
    x = np.arange(start, len(d)) * d.step
    return float(np.dot(x, p) / p.sum())


def tail_conditional_moment(d: DiscreteDistribution, level: float, center: float) -> float:
    _, start, _ = _tail_slice(d, level)
    p = d.masses[start:]
    x = np.arange(start, len(d)) * d.step
    return float(np.dot((x - center) ** 2, p) / p.sum())


# ---------------------------------------------------------------------------
# deductible insurance


def snap_deductible(deductible: float, step: float) -> int:
    """Index of the lattice point nearest to ``deductible``."""
    if deductible < 0:
        raise ConfigError("deductible must be non-negative")
    return int(math.floor(deductible / step + 0.5))


def apply_deductible(d: DiscreteDistribution, deductible: float) -> tuple[DiscreteDistribution, float]:
    """Split S into the retained S ^ d and the mean of the indemnity (S - d)+."""
    kd = snap_deductible(deductible, d.step)
    if kd + 1 >= len(d):
        return d, 0.0
    retained = np.empty(kd + 1)
    retained[:kd] = d.masses[:kd]
    retained[kd] = d.masses[kd:].sum()
    over = np.arange(1, len(d) - kd) * d.step
    indemnity = float(np.dot(over, d.masses[kd + 1 :]))
    return DiscreteDistribution(d.step, retained), indemnity


def net_premium(d: DiscreteDistribution, deductible: float | None) -> float:
    """E[(S - d)+]; ``None`` means no cover."""
    if deductible is None:
        return 0.0
    return apply_deductible(d, deductible)[1]
