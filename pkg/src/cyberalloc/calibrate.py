"""Maximum-likelihood calibration of severities, frequencies and threat shares.

Severity pools hold raw losses per (threat, vulnerability, asset) triple and
are modeled as zero-inflated: the zero share is estimated directly and the
candidate families are fitted to the positive part only. Annual counts per
threat-asset pair are fitted by Poisson and negative binomial laws. Families
are ranked by AIC = 2k - 2 loglik.
"""

from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import optimize, stats

from .cascade import CascadeModel
from .dist import Family, FrequencyModel, SeverityModel, ThreatMixture
from .errors import ConfigError, DataError, InsufficientDataError

SEVERITY_FAMILIES = (Family.LOGNORMAL, Family.WEIBULL, Family.PARETO)
FREQUENCY_FAMILIES = ("poisson", "negative_binomial")
GRAD_TOL = 1e-8
AIC_TIE_TOL = 1e-9
# beyond this size the negative binomial is numerically the Poisson law
NB_SIZE_CEILING = 1e8


@dataclass(frozen=True)
class CandidateFit:
    family: str
    params: tuple[float, ...]
    loglik: float
    aic: float
    converged: bool = True
    note: str = ""

    @property
    def n_params(self) -> int:
        return len(self.params)


@dataclass(frozen=True)
class FitReport:
    kind: str
    candidates: tuple[CandidateFit, ...]
    selected: str
    n_total: int
    n_zero: int = 0
    q: float = 0.0
    tie: bool = False

    @property
    def n_positive(self) -> int:
        return self.n_total - self.n_zero

    def candidate(self, family: str) -> CandidateFit:
        for c in self.candidates:
            if c.family == family:
                return c
        raise KeyError(family)

    @property
    def best(self) -> CandidateFit:
        return self.candidate(self.selected)

    def severity_model(self, family: str | None = None, upper: float = math.inf) -> SeverityModel:
        if self.kind != "severity":
            raise ConfigError("not a severity fit")
        c = self.candidate(family or self.selected)
        return SeverityModel(self.q, Family(c.family), c.params, upper)

    def frequency_model(self, family: str | None = None) -> FrequencyModel:
        if self.kind != "frequency":
            raise ConfigError("not a frequency fit")
        c = self.candidate(family or self.selected)
        if c.family == "poisson":
            return FrequencyModel.poisson(c.params[0])
        size, mean = c.params
        return FrequencyModel.negative_binomial(size, mean)


def _rank(kind: str, fits: list[CandidateFit], **extra) -> FitReport:
    usable = [f for f in fits if f.converged and math.isfinite(f.aic)]
    if not usable:
        raise InsufficientDataError(f"no {kind} candidate converged")
    best_aic = min(f.aic for f in usable)
    tied = [f for f in usable if f.aic - best_aic <= AIC_TIE_TOL * max(1.0, abs(best_aic))]
    # candidate order breaks ties between equally sized families
    winner = min(tied, key=lambda f: f.n_params)
    return FitReport(kind, tuple(fits), winner.family, tie=len(tied) > 1, **extra)


# ---------------------------------------------------------------------------
# severity


def _weibull_nll(theta, z):
    u, v = theta
    k = math.exp(u)
    t = np.exp(np.clip(k * (z - v), -700.0, 700.0))
    n = z.shape[0]
    ll = n * (u - k * v) + (k - 1.0) * z.sum() - t.sum()
    dk = n / k - n * v + z.sum() - np.dot(t, z - v)
    dv = -n * k + k * t.sum()
    return -ll, -np.array([k * dk, dv])


def _lomax_nll(theta, y):
    a, b = theta
    alpha, s = math.exp(a), math.exp(b)
    n = y.shape[0]
    log_ys = np.log(y + s)
    ll = n * (a + alpha * b) - (alpha + 1.0) * log_ys.sum()
    dalpha = n / alpha + n * b - log_ys.sum()
    ds = n * alpha / s - (alpha + 1.0) * np.sum(1.0 / (y + s))
    return -ll, -np.array([alpha * dalpha, s * ds])


def _newton_polish(fun, x, data, iters: int = 20):
    """Newton steps on a finite-difference Hessian of the analytic gradient."""
    for _ in range(iters):
        f0, g = fun(x, data)
        if np.linalg.norm(g) / data.shape[0] < 1e-13:
            break
        h = 1e-6
        H = np.empty((2, 2))
        for c in range(2):
            e = np.zeros(2)
            e[c] = h
            H[:, c] = (fun(x + e, data)[1] - fun(x - e, data)[1]) / (2 * h)
        H = 0.5 * (H + H.T)
        try:
            delta = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        step = 1.0
        while step > 1e-6:
            cand = x - step * delta
            if fun(cand, data)[0] <= f0:
                x = cand
                break
            step *= 0.5
        else:
            break
    return x


def _multistart(fun, starts, data):
    best = None
    for x0 in starts:
        res = optimize.minimize(fun, np.asarray(x0, float), args=(data,), jac=True, method="BFGS",
                                options={"gtol": 1e-10, "maxiter": 2000})
        x = _newton_polish(fun, res.x, data)
        nll, g = fun(x, data)
        if not math.isfinite(nll):
            continue
        if best is None or nll < best[1]:
            best = (x, nll, g)
    return best


def _fit_lognormal(y: np.ndarray) -> CandidateFit:
    z = np.log(y)
    mu = float(z.mean())
    sigma = float(np.sqrt(np.mean((z - mu) ** 2)))
    if sigma <= 0:
        return CandidateFit(Family.LOGNORMAL.value, (mu, sigma), math.nan, math.nan, False, "zero log-variance")
    ll = float(stats.lognorm.logpdf(y, s=sigma, scale=math.exp(mu)).sum())
    return CandidateFit(Family.LOGNORMAL.value, (mu, sigma), ll, 4.0 - 2.0 * ll)


def _fit_weibull(y: np.ndarray) -> CandidateFit:
    z = np.log(y)
    sd = float(z.std())
    k0 = math.pi / (math.sqrt(6.0) * sd) if sd > 0 else 1.0
    starts = []
    for f in (0.5, 1.0, 2.0):
        k = k0 * f
        starts.append((math.log(k), float(z.mean()) + 0.5772 / k))
    best = _multistart(_weibull_nll, starts, z)
    return _candidate(Family.WEIBULL.value, best, z.shape[0])


def _fit_lomax(y: np.ndarray) -> CandidateFit:
    med = float(np.median(y))
    starts = [(math.log(a), math.log(med * f)) for a, f in ((0.5, 0.2), (1.0, 1.0), (2.0, 2.0))]
    best = _multistart(_lomax_nll, starts, y)
    return _candidate(Family.PARETO.value, best, y.shape[0])


def _candidate(family: str, best, n: int) -> CandidateFit:
    if best is None:
        return CandidateFit(family, (math.nan, math.nan), math.nan, math.nan, False, "no finite optimum")
    x, nll, g = best
    nll = float(nll)
    params = (math.exp(x[0]), math.exp(x[1]))
    gnorm = float(np.linalg.norm(g)) / n
    converged = gnorm < GRAD_TOL
    note = "" if converged else f"gradient norm {gnorm:.2e}"
    return CandidateFit(family, params, -nll, 4.0 + 2.0 * nll, converged, note)


_SEVERITY_FITTERS = {
    Family.LOGNORMAL: _fit_lognormal,
    Family.WEIBULL: _fit_weibull,
    Family.PARETO: _fit_lomax,
}


def fit_severity(losses: Iterable[float], candidates: Sequence = SEVERITY_FAMILIES) -> FitReport:
    x = np.asarray(list(losses), dtype=float)
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise DataError("losses must be finite and non-negative")
    y = x[x > 0]
    if y.shape[0] < 2:
        raise InsufficientDataError(f"need at least 2 positive losses, got {y.shape[0]}")
    fams = [Family(c) for c in candidates]
    fits = [_SEVERITY_FITTERS[f](y) for f in fams]
    n_zero = int(x.shape[0] - y.shape[0])
    return _rank("severity", fits, n_total=int(x.shape[0]), n_zero=n_zero, q=n_zero / x.shape[0])


# ---------------------------------------------------------------------------
# frequency


def _nb_profile_nll(log_r: float, counts: np.ndarray, mean: float) -> float:
    r = math.exp(log_r)
    p = r / (r + mean)
    return -float(stats.nbinom.logpmf(counts, r, p).sum())


def fit_frequency(annual_counts: Iterable[int], candidates: Sequence[str] = FREQUENCY_FAMILIES) -> FitReport:
    c = np.asarray(list(annual_counts))
    if c.shape[0] < 2:
        raise InsufficientDataError(f"need at least 2 annual counts, got {c.shape[0]}")
    if np.any(c < 0) or np.any(c != np.round(c)):
        raise DataError("annual counts must be non-negative integers")
    c = c.astype(np.int64)
    mean = float(c.mean())
    fits = []
    for fam in candidates:
        if fam == "poisson":
            ll = float(stats.poisson.logpmf(c, mean).sum()) if mean > 0 else 0.0
            fits.append(CandidateFit("poisson", (mean,), ll, 2.0 - 2.0 * ll))
        elif fam == "negative_binomial":
            fits.append(_fit_nb(c, mean))
        else:
            raise ConfigError(f"unknown frequency family {fam!r}")
    return _rank("frequency", fits, n_total=int(c.shape[0]))


def _fit_nb(c: np.ndarray, mean: float) -> CandidateFit:
    # the mean's MLE is the sample mean; only the size needs a search
    if mean == 0.0:
        return CandidateFit("negative_binomial", (NB_SIZE_CEILING, 0.0), 0.0, 4.0, True, "all counts zero")
    lo, hi = math.log(1e-6), math.log(NB_SIZE_CEILING)
    res = optimize.minimize_scalar(_nb_profile_nll, bounds=(lo, hi), args=(c, mean), method="bounded",
                                   options={"xatol": 1e-10})
    log_r = float(res.x)
    note = ""
    if hi - log_r < 1e-3:
        note = "size at ceiling (Poisson limit)"
    nll = _nb_profile_nll(log_r, c, mean)
    return CandidateFit("negative_binomial", (math.exp(log_r), mean), -nll, 4.0 + 2.0 * nll, True, note)


# ---------------------------------------------------------------------------
# incidents


@dataclass(frozen=True)
class IncidentRecord:
    """One loss observation. ``scope`` is "firm" for the company's own
    incidents (they drive frequencies and threat shares) or "industry" for
    external observations used only to enlarge severity pools."""

    year: int
    threat: str
    vulnerability: str | None
    asset: str
    loss: float
    scope: str = "firm"


def estimate_threat_mixture(incidents: Sequence[IncidentRecord], model: CascadeModel) -> ThreatMixture:
    firm = [r for r in incidents if r.scope == "firm"]
    if not firm:
        raise InsufficientDataError("no incidents to estimate threat shares from")
    counts = Counter(model.threat_index(r.threat) for r in firm)
    p = np.array([counts.get(i, 0) for i in range(model.l)], dtype=float)
    return ThreatMixture(p / p.sum())


def severity_pools(incidents: Iterable[IncidentRecord], model: CascadeModel) -> dict[tuple[int, int, int], list[float]]:
    pools: dict = defaultdict(list)
    for r in incidents:
        if not r.vulnerability:
            continue
        key = (model.threat_index(r.threat), model.vulnerability_index(r.vulnerability), model.asset_index(r.asset))
        pools[key].append(r.loss)
    return dict(pools)


def observation_window(incidents: Iterable[IncidentRecord]) -> tuple[int, int]:
    years = [r.year for r in incidents if r.scope == "firm"]
    if not years:
        raise InsufficientDataError("no firm incidents")
    return min(years), max(years)


def annual_counts(
    incidents: Sequence[IncidentRecord],
    model: CascadeModel,
    window: tuple[int, int] | None = None,
) -> tuple[dict[tuple[int, int], np.ndarray], np.ndarray]:
    """Per-pair and corporate incident counts for every year of the window."""
    first, last = window or observation_window(incidents)
    nyears = last - first + 1
    per_pair = {(i, k): np.zeros(nyears, dtype=np.int64) for i in range(model.l) for k in range(model.n)}
    total = np.zeros(nyears, dtype=np.int64)
    for r in incidents:
        if r.scope != "firm" or not first <= r.year <= last:
            continue
        i, k = model.threat_index(r.threat), model.asset_index(r.asset)
        per_pair[(i, k)][r.year - first] += 1
        total[r.year - first] += 1
    return per_pair, total


@dataclass
class Calibration:
    severity: dict[tuple[int, int, int], FitReport]
    frequency: dict[tuple[int, int], FitReport]
    corporate_frequency: FitReport | None
    mixture: ThreatMixture | None
    window: tuple[int, int]
    notes: list[str] = field(default_factory=list)


def calibrate(
    incidents: Sequence[IncidentRecord],
    model: CascadeModel,
    severity_candidates: Sequence = SEVERITY_FAMILIES,
    frequency_candidates: Sequence[str] = FREQUENCY_FAMILIES,
    window: tuple[int, int] | None = None,
) -> Calibration:
    pools = severity_pools(incidents, model)
    notes = []
    sev = {}
    for triple in model.structural_paths():
        losses = pools.get(triple, [])
        try:
            sev[triple] = fit_severity(losses, severity_candidates)
        except InsufficientDataError as exc:
            i, j, k = triple
            raise InsufficientDataError(f"(T{i + 1}, V{j + 1}, A{k + 1}): {exc}") from None
    for triple in sorted(set(pools) - set(sev)):
        i, j, k = triple
        notes.append(f"losses recorded on (T{i + 1}, V{j + 1}, A{k + 1}) which has no viable path; ignored")
    window = window or observation_window(incidents)
    per_pair, total = annual_counts(incidents, model, window)
    paired = {(i, k) for i, _, k in model.structural_paths()}
    freq = {pair: fit_frequency(per_pair[pair], frequency_candidates) for pair in sorted(paired)}
    corp = fit_frequency(total, frequency_candidates)
    mixture = estimate_threat_mixture(incidents, model)
    return Calibration(sev, freq, corp, mixture, window, notes)


def generate_synthetic_incidents(
    model: CascadeModel,
    severities: Mapping[tuple[int, int, int], SeverityModel],
    frequencies: Mapping[tuple[int, int], FrequencyModel],
    years: int,
    seed: int,
    start_year: int = 1997,
    industry_positive: int | Mapping[tuple[int, int, int], int] = 0,
) -> list[IncidentRecord]:
    """Seeded stand-in for a proprietary incident database.

    Firm incidents: N_ik ~ frequency per year; each incident is attributed to
    one viable vulnerability (uniformly) and carries a raw loss from that
    triple's severity. ``industry_positive`` adds, per triple, industry
    records until that many positive losses exist (zeros interleaved at the
    model's zero share).
    """
    rng = np.random.default_rng(seed)
    out: list[IncidentRecord] = []
    T, V, A = model.threats, model.vulnerabilities, model.assets
    for (i, k), freq in sorted(frequencies.items()):
        vulns = model.pair_vulnerabilities(i, k)
        if freq.mean == 0.0 or not vulns:
            continue
        counts = freq.sample(rng, years)
        for y, cnt in enumerate(counts):
            for _ in range(int(cnt)):
                j = vulns[int(rng.integers(len(vulns)))]
                loss = float(severities[(i, j, k)].sample(rng, 1)[0])
                out.append(IncidentRecord(start_year + y, T[i], V[j], A[k], loss))
    for triple in model.structural_paths():
        want = industry_positive.get(triple, 0) if isinstance(industry_positive, Mapping) else industry_positive
        if want <= 0:
            continue
        sev = severities[triple]
        if sev.degenerate:
            continue
        zeros = int(rng.negative_binomial(want, 1.0 - sev.q)) if sev.q > 0 else 0
        positive = SeverityModel(0.0, sev.family, sev.params, sev.upper).sample(rng, want)
        losses = np.concatenate([positive, np.zeros(zeros)])
        rng.shuffle(losses)
        yrs = rng.integers(start_year, start_year + max(years, 1), size=losses.shape[0])
        i, j, k = triple
        out += [IncidentRecord(int(y), T[i], V[j], A[k], float(x), "industry") for y, x in zip(yrs, losses)]
    return out


# ---------------------------------------------------------------------------
# delimited incident files

REQUIRED_COLUMNS = ("year", "threat", "vulnerability", "asset", "loss")


@dataclass
class IngestResult:
    records: list[IncidentRecord]
    rejected: list[tuple[int, str]]

    @property
    def reject_share(self) -> float:
        total = len(self.records) + len(self.rejected)
        return len(self.rejected) / total if total else 0.0


def read_incidents(path: str | Path, model: CascadeModel) -> IngestResult:
    """Parse a delimited incident file (comma or tab, header row required)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read incident file {path}: {exc}") from None
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise InsufficientDataError(f"incident file {path} is empty")
    dialect = "excel-tab" if "\t" in lines[0] else "excel"
    reader = csv.DictReader(lines, dialect=dialect)
    header = [h.strip().lower() for h in (reader.fieldnames or [])]
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise DataError(f"incident file {path} lacks columns {missing}")
    reader.fieldnames = header
    records, rejected = [], []
    for lineno, row in enumerate(reader, start=2):
        try:
            records.append(_parse_row(row, model))
        except (ValueError, ConfigError) as exc:
            rejected.append((lineno, str(exc)))
    if not records:
        raise InsufficientDataError(f"incident file {path} has no usable rows")
    return IngestResult(records, rejected)


def _parse_row(row: dict, model: CascadeModel) -> IncidentRecord:
    year = int(str(row["year"]).strip())
    threat = str(row["threat"]).strip()
    vuln = (row.get("vulnerability") or "").strip() or None
    asset = str(row["asset"]).strip()
    loss = float(str(row["loss"]).strip())
    if not math.isfinite(loss) or loss < 0:
        raise ValueError(f"loss must be finite and non-negative, got {row['loss']}")
    model.threat_index(threat)
    model.asset_index(asset)
    if vuln is not None:
        model.vulnerability_index(vuln)
    scope = (row.get("scope") or "firm").strip() or "firm"
    if scope not in ("firm", "industry"):
        raise ValueError(f"scope must be 'firm' or 'industry', got {scope!r}")
    return IncidentRecord(year, threat, vuln, asset, loss, scope)


def write_incidents(path: str | Path, records: Iterable[IncidentRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(REQUIRED_COLUMNS + ("scope",))
        for r in records:
            w.writerow([r.year, r.threat, r.vulnerability or "", r.asset, repr(r.loss), r.scope])
