"""Holistic capital allocation: investment, deductible insurance, loss reserves.

For a fixed investment and insurance choice the reserves have closed forms:

* standalone reserve  Kbar_ik = E[R_ik h(R_ik)] - nu_ik / (2 omega_ik), same at corporate level;
* unconstrained       K_ik = Kbar_ik - W_ik (sum Kbar_ik - Kbar) with harmonic weights;
* non-negative        the same with only the competing (delta = 1) pairs in the weights;
* budget-binding      K_ik = Kbar_ik - W_ik (sum_J Kbar - b) over the active set J.

The outer problem is a finite enumeration of investment x insurance menus.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

from .aggregate import LossModel, PairLossCache
from .cascade import InvestmentMenu, apply_investment
from .dist import DiscreteDistribution, TailSummary, apply_deductible, convolve, snap_deductible, tail_summary
from .errors import ConfigError, SolverError

BRUTE_FORCE_MAX_PAIRS = 16
UNLIMITED = None


# ---------------------------------------------------------------------------
# weights


def _matrix(value, shape, name) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), shape).copy()
    if np.any(arr < 0):
        raise ConfigError(f"weights {name} must be non-negative")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class WeightSet:
    """Objective weights. ``omega_E*`` are the unit-exchange factors (1/currency);
    NaN marks a pair whose retained loss is identically zero."""

    eta_j: np.ndarray
    eta: float
    alpha_ik: np.ndarray
    alpha: float
    nu_ik: np.ndarray
    nu: float
    omega_I_ik: np.ndarray
    omega_I: float
    omega_E_ik: np.ndarray
    omega_E: float = math.nan
    level: float = 0.9

    @classmethod
    def uniform(cls, l: int, m: int, n: int, value: float = 1.0, level: float = 0.9) -> "WeightSet":
        return cls.build(l, m, n, eta=value, alpha=value, nu=value, omega_I=value, level=level)

    @classmethod
    def build(
        cls,
        l: int,
        m: int,
        n: int,
        eta=1.0,
        eta_j=None,
        alpha=1.0,
        alpha_ik=None,
        nu=1.0,
        nu_ik=None,
        omega_I=1.0,
        omega_I_ik=None,
        omega_E=math.nan,
        omega_E_ik=None,
        level: float = 0.9,
    ) -> "WeightSet":
        pair = (l, n)
        return cls(
            eta_j=_matrix(eta if eta_j is None else eta_j, (m,), "eta_j"),
            eta=float(eta),
            alpha_ik=_matrix(alpha if alpha_ik is None else alpha_ik, pair, "alpha_ik"),
            alpha=float(alpha),
            nu_ik=_matrix(nu if nu_ik is None else nu_ik, pair, "nu_ik"),
            nu=float(nu),
            omega_I_ik=_matrix(omega_I if omega_I_ik is None else omega_I_ik, pair, "omega_I_ik"),
            omega_I=float(omega_I),
            omega_E_ik=np.broadcast_to(
                np.asarray(omega_E if omega_E_ik is None else omega_E_ik, dtype=float), pair
            ).copy(),
            omega_E=float(omega_E),
            level=float(level),
        )

    def __post_init__(self):
        for name in ("eta", "alpha", "nu", "omega_I"):
            if getattr(self, name) < 0:
                raise ConfigError(f"weight {name} must be non-negative")
        if not 0.0 < self.level < 1.0:
            raise ConfigError(f"tail level must lie in (0, 1), got {self.level}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.alpha_ik.shape

    @property
    def omega_ik(self) -> np.ndarray:
        return self.omega_I_ik * self.omega_E_ik

    @property
    def omega(self) -> float:
        return self.omega_I * self.omega_E

    def with_exchange(self, omega_E_ik, omega_E: float) -> "WeightSet":
        return replace(self, omega_E_ik=np.asarray(omega_E_ik, dtype=float), omega_E=float(omega_E))

    def updated(self, **changes) -> "WeightSet":
        """Copy with some weights replaced; scalars broadcast to the matrix fields."""
        l, n = self.shape
        shapes = {"eta_j": (self.eta_j.shape[0],), "alpha_ik": (l, n), "nu_ik": (l, n), "omega_I_ik": (l, n)}
        out = {}
        for key, value in changes.items():
            if key in shapes:
                out[key] = _matrix(value, shapes[key], key)
            else:
                out[key] = float(value)
        return replace(self, **out)


# ---------------------------------------------------------------------------
# reserve solvers


@dataclass(frozen=True, eq=False)
class ReserveSolution:
    K: np.ndarray
    active: np.ndarray
    binding: bool = False
    diagnostic: str = ""

    @property
    def total(self) -> float:
        return float(self.K.sum())


def _competitors(w: WeightSet) -> np.ndarray:
    om = w.omega_ik
    return np.isfinite(om) & (om > 0)


def _inv_corporate(w: WeightSet) -> float:
    om = w.omega
    if not math.isfinite(om) or om <= 0:
        return math.inf
    return 1.0 / om


def unconstrained_reserves(kbar: np.ndarray, kbar_total: float, w: WeightSet) -> ReserveSolution:
    kbar = np.asarray(kbar, dtype=float)
    comp = _competitors(w)
    K = np.zeros_like(kbar)
    if comp.any():
        inv = 1.0 / w.omega_ik[comp]
        W = inv / (_inv_corporate(w) + inv.sum())
        K[comp] = kbar[comp] - W * (kbar[comp].sum() - kbar_total)
    return ReserveSolution(K, comp.copy())


def harmonic_weights(w: WeightSet, active: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """(W_ik, W) over the active competitors; they sum to one."""
    comp = _competitors(w) if active is None else np.asarray(active, bool) & _competitors(w)
    inv = np.where(comp, 1.0 / np.where(comp, w.omega_ik, 1.0), 0.0)
    inv_c = _inv_corporate(w)
    if math.isinf(inv_c):
        return np.zeros_like(inv), 1.0
    denom = inv_c + inv.sum()
    return inv / denom, inv_c / denom


def fixed_point_reserves(kbar_c: np.ndarray, inv_c: np.ndarray, inv_corp: float, kbar_total: float,
                         delta: np.ndarray) -> np.ndarray:
    """K_i for every competitor given the competition flags ``delta``: pair i is
    always counted in its own weight, the others only when delta_j = 1."""
    d = delta.astype(float)
    others_k = np.dot(d, kbar_c) - d * kbar_c
    others_inv = np.dot(d, inv_c) - d * inv_c
    W = inv_c / (inv_corp + inv_c + others_inv)
    return kbar_c - W * (others_k + kbar_c - kbar_total)


def _consistent(K: np.ndarray, delta: np.ndarray) -> bool:
    return bool(np.array_equal(K >= 0, delta.astype(bool)))


def _brute_force_pattern(kbar_c, inv_c, inv_corp, kbar_total) -> np.ndarray:
    c = kbar_c.shape[0]
    found = []
    for bits in itertools.product((1, 0), repeat=c):
        delta = np.array(bits, dtype=bool)
        K = fixed_point_reserves(kbar_c, inv_c, inv_corp, kbar_total, delta)
        if _consistent(K, delta):
            found.append(delta)
    if not found:
        raise SolverError("no consistent competition pattern exists")
    if len(found) > 1:
        # pick the pattern with the lowest quadratic objective
        def objective(delta):
            K = np.maximum(fixed_point_reserves(kbar_c, inv_c, inv_corp, kbar_total, delta), 0.0)
            corp = 0.0 if math.isinf(inv_corp) else (K.sum() - kbar_total) ** 2 / inv_corp
            return float(np.sum((K - kbar_c) ** 2 / inv_c) + corp)

        found.sort(key=objective)
    return found[0]


def nonneg_reserves(kbar: np.ndarray, kbar_total: float, w: WeightSet, method: str = "iterative") -> ReserveSolution:
    """Non-negative reserves with competition flags delta_ik.

    "iterative": start with every pair competing, drop pairs whose reserve comes
    out negative and recompute until none does; the final flags are checked
    against the full fixed-point system and exhaustive search takes over if
    they fail. "brute": exhaustive search over flag patterns only.
    """
    kbar = np.asarray(kbar, dtype=float)
    comp = _competitors(w)
    K = np.zeros_like(kbar)
    active = np.zeros(kbar.shape, dtype=bool)
    if not comp.any():
        return ReserveSolution(K, active)
    kbar_c = kbar[comp]
    inv_c = 1.0 / w.omega_ik[comp]
    inv_corp = _inv_corporate(w)
    c = kbar_c.shape[0]
    diagnostic = ""
    if method == "brute":
        if c > BRUTE_FORCE_MAX_PAIRS:
            raise SolverError(f"exhaustive search over {c} pairs is too large")
        delta = _brute_force_pattern(kbar_c, inv_c, inv_corp, kbar_total)
    elif method == "iterative":
        delta = np.ones(c, dtype=bool)
        for _ in range(c + 1):
            Kc = fixed_point_reserves(kbar_c, inv_c, inv_corp, kbar_total, delta)
            drop = delta & (Kc < 0)
            if not drop.any():
                break
            delta &= ~drop
        Kc = fixed_point_reserves(kbar_c, inv_c, inv_corp, kbar_total, delta)
        if not _consistent(Kc, delta):
            if c > BRUTE_FORCE_MAX_PAIRS:
                raise SolverError("deactivation did not reach a consistent pattern")
            delta = _brute_force_pattern(kbar_c, inv_c, inv_corp, kbar_total)
            diagnostic = "deactivation inconsistent; exhaustive search used"
    else:
        raise ConfigError(f"unknown method {method!r}")
    Kc = fixed_point_reserves(kbar_c, inv_c, inv_corp, kbar_total, delta)
    K[comp] = np.maximum(Kc, 0.0)
    active[comp] = delta
    return ReserveSolution(K, active, diagnostic=diagnostic)


def active_set(kbar: np.ndarray, w: WeightSet, b: float) -> list[tuple[int, int]] | None:
    """Pairs sharing a binding budget ``b``: sort by omega * Kbar and drop from
    the bottom until the smallest kept pair's reserve is non-negative."""
    kbar = np.asarray(kbar, dtype=float)
    comp = _competitors(w)
    idx = [tuple(int(v) for v in x) for x in np.argwhere(comp)]
    om = w.omega_ik
    key = np.array([om[p] * kbar[p] for p in idx])
    order = [idx[t] for t in np.argsort(key, kind="stable")]
    for start in range(len(order)):
        J = order[start:]
        head = J[0]
        slack = b + sum(om[head] / om[p] * kbar[head] - kbar[p] for p in J)
        if slack >= 0:
            return J
    return None


def budget_reserves(kbar: np.ndarray, w: WeightSet, b: float, kbar_total: float | None = None) -> ReserveSolution:
    """Reserves under sum K <= b. With ``kbar_total`` the non-negative solution
    is tried first and returned when it fits the budget."""
    kbar = np.asarray(kbar, dtype=float)
    if kbar_total is not None:
        loose = nonneg_reserves(kbar, kbar_total, w)
        if loose.total <= b:
            return loose
    K = np.zeros_like(kbar)
    active = np.zeros(kbar.shape, dtype=bool)
    J = active_set(kbar, w, b)
    if J is None:
        return ReserveSolution(K, active, binding=True, diagnostic="budget too small for any positive reserve")
    inv = np.array([1.0 / w.omega_ik[p] for p in J])
    W = inv / inv.sum()
    excess = sum(kbar[p] for p in J) - b
    for p, wp in zip(J, W):
        # non-negative in exact arithmetic by the choice of J
        K[p] = max(kbar[p] - wp * excess, 0.0)
        active[p] = True
    return ReserveSolution(K, active, binding=True)


def solve_reserves(kbar: np.ndarray, kbar_total: float, w: WeightSet, b: float | None) -> ReserveSolution:
    loose = nonneg_reserves(kbar, kbar_total, w)
    if b is None or loose.total <= b:
        return loose
    return budget_reserves(kbar, w, max(b, 0.0))


# ---------------------------------------------------------------------------
# cost terms

TailInput = TailSummary | DiscreteDistribution | None


def _as_tail(x: TailInput, level: float) -> TailSummary | None:
    if x is None:
        return None
    if isinstance(x, DiscreteDistribution):
        return None if x.is_zero() else tail_summary(x, level)
    return x


def _pair_tails(retained, shape, level) -> dict:
    if isinstance(retained, Mapping):
        return {p: _as_tail(retained.get(p), level) for p in np.ndindex(*shape)}
    return {p: _as_tail(retained[p], level) for p in np.ndindex(*shape)}


def unit_exchange_weights(retained, corporate: TailInput, level: float = 0.9,
                          shape: tuple[int, int] | None = None) -> tuple[np.ndarray, float]:
    """omega_E = 1 / E[R h(R)]; NaN where the retained loss is identically 0."""
    shape = shape or _infer_shape(retained)
    tails = _pair_tails(retained, shape, level)
    out = np.full(shape, np.nan)
    for p, t in tails.items():
        if t is not None and t.mean > 0:
            out[p] = 1.0 / t.mean
    ct = _as_tail(corporate, level)
    corp = 1.0 / ct.mean if ct is not None and ct.mean > 0 else math.nan
    return out, corp


def _infer_shape(retained) -> tuple[int, int]:
    if isinstance(retained, Mapping):
        keys = list(retained)
        return (max(k[0] for k in keys) + 1, max(k[1] for k in keys) + 1)
    return np.shape(retained)[:2]


def standalone_reserves(retained, corporate: TailInput, w: WeightSet) -> tuple[np.ndarray, float]:
    tails = _pair_tails(retained, w.shape, w.level)
    kbar = np.zeros(w.shape)
    om = w.omega_ik
    for p, t in tails.items():
        if t is None or t.mean == 0.0:
            continue
        if not (math.isfinite(om[p]) and om[p] > 0):
            raise ConfigError(f"pair (T{p[0] + 1}, A{p[1] + 1}) carries loss but has no positive mismatch weight")
        kbar[p] = t.mean - w.nu_ik[p] / (2.0 * om[p])
    ct = _as_tail(corporate, w.level)
    if ct is None or ct.mean == 0.0:
        return kbar, 0.0
    if not (math.isfinite(w.omega) and w.omega > 0):
        raise ConfigError("corporate loss is positive but the corporate mismatch weight is not")
    return kbar, ct.mean - w.nu / (2.0 * w.omega)


def residual_cost(retained, corporate: TailInput, reserves: ReserveSolution, w: WeightSet) -> float:
    tails = _pair_tails(retained, w.shape, w.level)
    K = reserves.K
    om = w.omega_ik
    cost = float(np.sum(w.nu_ik * K))
    for p, t in tails.items():
        if t is not None:
            cost += om[p] * t.deviance(K[p])
    total = float(K.sum())
    cost += w.nu * total
    ct = _as_tail(corporate, w.level)
    if ct is not None:
        cost += w.omega * ct.deviance(total)
    return cost


def investment_cost(M, w: WeightSet) -> float:
    M = np.asarray(M, dtype=float)
    if np.any(M < 0):
        raise ConfigError("investments must be non-negative")
    return float(np.dot(w.eta_j, M) + w.eta * M.sum())


def premium_cost(premiums, w: WeightSet) -> float:
    pi = np.asarray(premiums, dtype=float)
    if np.any(pi < 0):
        raise ConfigError("premiums must be non-negative")
    return float(np.sum(w.alpha_ik * pi) + w.alpha * pi.sum())


# ---------------------------------------------------------------------------
# strategies


@dataclass(frozen=True, eq=False)
class AllocationProblem:
    losses: LossModel
    menu: InvestmentMenu
    weights: WeightSet
    deductibles: np.ndarray
    budget: float | None = None

    def __post_init__(self):
        l, m, n = self.losses.cascade.shape
        if len(self.menu) != m:
            raise ConfigError(f"investment menu has {len(self.menu)} controls, cascade has {m}")
        if self.weights.shape != (l, n) or self.weights.eta_j.shape != (m,):
            raise ConfigError("weight shapes do not match the cascade")
        d = np.broadcast_to(np.asarray(self.deductibles, dtype=float), (l, n)).copy()
        if np.any(d < 0):
            raise ConfigError("deductibles must be non-negative")
        d.setflags(write=False)
        object.__setattr__(self, "deductibles", d)
        if self.budget is not None and self.budget < 0:
            raise ConfigError("budget must be non-negative")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.losses.cascade.shape

    def investment_options(self) -> list[tuple[int, ...]]:
        return list(itertools.product((0, 1), repeat=len(self.menu)))

    def insurance_options(self) -> list[tuple[int, ...]]:
        """One flag per pair in row-major (threat, asset) order; NaN deductibles are not insurable."""
        l, _, n = self.shape
        offered = [np.isfinite(self.deductibles[i, k]) for i in range(l) for k in range(n)]
        choices = [(0, 1) if ok else (0,) for ok in offered]
        return list(itertools.product(*choices))

    def with_changes(self, **changes) -> "AllocationProblem":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class StrategyOutcome:
    investment: tuple[int, ...]
    insurance: tuple[int, ...]
    theta: np.ndarray
    M: np.ndarray
    deductibles: np.ndarray
    premiums: np.ndarray
    reserves: ReserveSolution
    kbar: np.ndarray
    kbar_total: float
    g_c: float
    g_I: float
    g_r: float
    budget: float | None
    feasible: bool

    @property
    def total(self) -> float:
        return self.g_c + self.g_I + self.g_r

    @property
    def investment_total(self) -> float:
        return float(self.M.sum())

    @property
    def premium_total(self) -> float:
        return float(self.premiums.sum())

    @property
    def reserve_total(self) -> float:
        return self.reserves.total

    @property
    def cash_cost(self) -> float:
        return self.investment_total + self.premium_total + self.reserve_total

    def insured(self, i: int, k: int) -> bool:
        n = self.premiums.shape[1]
        return bool(self.insurance[i * n + k])

    def rank_key(self) -> tuple:
        return (not self.feasible, self.total, self.investment_total + self.premium_total, self.investment,
                self.insurance)


@dataclass
class PairState:
    retained: DiscreteDistribution
    premium: float
    tail: TailSummary | None


@dataclass
class StrategyEvaluator:
    """Memoizes the distribution work shared by strategies and scenarios."""

    losses: LossModel
    _pairs: PairLossCache = field(init=False)
    _retained: dict = field(default_factory=dict, init=False)
    _corporate: dict = field(default_factory=dict, init=False)

    def __post_init__(self):
        self._pairs = PairLossCache(self.losses)

    def pair_loss(self, theta, i: int, k: int) -> DiscreteDistribution:
        return self._pairs.get(theta, i, k)

    def pair_state(self, theta, i: int, k: int, deductible: float | None, level: float) -> PairState:
        if self.losses.loss_free(i, k):
            zero = DiscreteDistribution.zero(self.losses.step)
            return PairState(zero, 0.0, None)
        kd = None if deductible is None else snap_deductible(deductible, self.losses.step)
        key = (self._pairs.key(theta, i, k), kd, level)
        if key not in self._retained:
            S = self._pairs.get(theta, i, k)
            if kd is None:
                R, premium = S, 0.0
            else:
                R, premium = apply_deductible(S, kd * self.losses.step)
            tail = None if R.is_zero() else tail_summary(R, level)
            self._retained[key] = PairState(R, premium, tail)
        return self._retained[key]

    def corporate_tail(self, theta, deductibles: Mapping, level: float) -> TailSummary | None:
        parts = []
        for (i, k) in self.losses.pairs:
            if self.losses.loss_free(i, k):
                continue
            d = deductibles.get((i, k))
            kd = None if d is None else snap_deductible(d, self.losses.step)
            parts.append((self._pairs.key(theta, i, k), kd))
        key = (tuple(parts), level)
        if key not in self._corporate:
            total = DiscreteDistribution.zero(self.losses.step)
            for (i, k) in self.losses.pairs:
                if not self.losses.loss_free(i, k):
                    total = convolve(total, self.pair_state(theta, i, k, deductibles.get((i, k)), level).retained)
            self._corporate[key] = None if total.is_zero() else tail_summary(total, level)
        return self._corporate[key]

    def evaluate(self, problem: AllocationProblem, investment: Sequence[int], insurance: Sequence[int],
                 weights: WeightSet | None = None, budget: Any = "problem") -> StrategyOutcome:
        w = problem.weights if weights is None else weights
        beta = problem.budget if budget == "problem" else budget
        l, _, n = problem.shape
        ins = tuple(int(x) for x in insurance)
        if len(ins) != l * n:
            raise ConfigError(f"expected {l * n} insurance flags, got {len(ins)}")
        controls, M = apply_investment(problem.menu, investment)
        theta = controls.theta
        ded = {}
        ded_arr = np.full((l, n), np.nan)
        for i in range(l):
            for k in range(n):
                if ins[i * n + k]:
                    d = float(problem.deductibles[i, k])
                    if not math.isfinite(d):
                        raise ConfigError(f"pair (T{i + 1}, A{k + 1}) is not insurable")
                    ded[(i, k)] = d
                    ded_arr[i, k] = snap_deductible(d, self.losses.step) * self.losses.step
        states = {(i, k): self.pair_state(theta, i, k, ded.get((i, k)), w.level) for i in range(l) for k in range(n)}
        premiums = np.array([[states[(i, k)].premium for k in range(n)] for i in range(l)])
        tails = {p: s.tail for p, s in states.items()}
        corp = self.corporate_tail(theta, ded, w.level)
        om_e, om_e_corp = unit_exchange_weights(tails, corp, w.level, (l, n))
        wx = w.with_exchange(om_e, om_e_corp)
        kbar, kbar_total = standalone_reserves(tails, corp, wx)
        spend = float(M.sum() + premiums.sum())
        b = None if beta is None else beta - spend
        sol = solve_reserves(kbar, kbar_total, wx, b)
        feasible = beta is None or spend <= beta * (1.0 + 1e-12)
        return StrategyOutcome(
            investment=tuple(int(x) for x in investment),
            insurance=ins,
            theta=theta,
            M=M,
            deductibles=ded_arr,
            premiums=premiums,
            reserves=sol,
            kbar=kbar,
            kbar_total=kbar_total,
            g_c=investment_cost(M, wx),
            g_I=premium_cost(premiums, wx),
            g_r=residual_cost(tails, corp, sol, wx),
            budget=beta,
            feasible=feasible,
        )


def evaluate_strategy(problem: AllocationProblem, investment: Sequence[int], insurance: Sequence[int],
                      evaluator: StrategyEvaluator | None = None, **kwargs) -> StrategyOutcome:
    evaluator = evaluator or StrategyEvaluator(problem.losses)
    return evaluator.evaluate(problem, investment, insurance, **kwargs)


@dataclass
class Enumeration:
    outcomes: list[StrategyOutcome]
    n_feasible: int

    @property
    def best(self) -> StrategyOutcome | None:
        return self.outcomes[0] if self.n_feasible else None

    def feasible(self) -> list[StrategyOutcome]:
        return self.outcomes[: self.n_feasible]

    def distinct(self, losses: LossModel) -> list[StrategyOutcome]:
        """Outcomes with insurance on loss-free pairs folded into the uninsured twin."""
        n = losses.cascade.n
        seen, out = set(), []
        for o in self.outcomes:
            key = (o.investment, tuple(f if not losses.loss_free(idx // n, idx % n) else 0
                                       for idx, f in enumerate(o.insurance)))
            if key not in seen:
                seen.add(key)
                out.append(o)
        return out


def enumerate_strategies(problem: AllocationProblem, evaluator: StrategyEvaluator | None = None,
                         **kwargs) -> Enumeration:
    """Evaluate every investment x insurance combination; feasible outcomes come
    first, ranked by total objective, then cash outlay, then decision vectors."""
    inv_opts = problem.investment_options()
    ins_opts = problem.insurance_options()
    if not inv_opts or not ins_opts:
        raise ConfigError("empty decision menus")
    evaluator = evaluator or StrategyEvaluator(problem.losses)
    outcomes = [evaluator.evaluate(problem, inv, ins, **kwargs) for inv in inv_opts for ins in ins_opts]
    outcomes.sort(key=StrategyOutcome.rank_key)
    return Enumeration(outcomes, sum(o.feasible for o in outcomes))


# ---------------------------------------------------------------------------
# sensitivity

WEIGHT_KEYS = ("eta", "eta_j", "alpha", "alpha_ik", "nu", "nu_ik", "omega_I", "omega_I_ik", "level")
SCENARIO_KEYS = WEIGHT_KEYS + ("investment_costs", "theta_effective", "budget", "deductible")


@dataclass(frozen=True)
class Scenario:
    name: str
    overrides: Mapping[str, Any] = field(default_factory=dict)
    title: str = ""

    def __post_init__(self):
        for key in self.overrides:
            if key not in SCENARIO_KEYS:
                raise ConfigError(f"unknown scenario key {key!r} in scenario {self.name!r}")

    @property
    def label(self) -> str:
        return self.title or self.name


def _control_index(problem: AllocationProblem, key) -> int:
    if isinstance(key, int) or (isinstance(key, str) and key.isdigit()):
        j = int(key)
        if not 0 <= j < len(problem.menu):
            raise ConfigError(f"control index {j} out of range")
        return j
    return problem.losses.cascade.vulnerability_index(key)


def apply_overrides(problem: AllocationProblem, overrides: Mapping[str, Any]) -> AllocationProblem:
    weight_changes = {k: v for k, v in overrides.items() if k in WEIGHT_KEYS}
    # a scalar weight also sets its per-target counterpart unless that is given too
    for scalar, matrix in (("eta", "eta_j"), ("alpha", "alpha_ik"), ("nu", "nu_ik"), ("omega_I", "omega_I_ik")):
        if scalar in weight_changes and matrix not in weight_changes:
            weight_changes[matrix] = weight_changes[scalar]
    changes: dict = {}
    if weight_changes:
        changes["weights"] = problem.weights.updated(**weight_changes)
    menu = problem.menu
    for key, cost in dict(overrides.get("investment_costs", {})).items():
        menu = menu.with_cost(_control_index(problem, key), float(cost))
    for key, theta in dict(overrides.get("theta_effective", {})).items():
        menu = menu.with_theta(_control_index(problem, key), float(theta))
    if menu is not problem.menu:
        changes["menu"] = menu
    if "budget" in overrides:
        b = overrides["budget"]
        changes["budget"] = None if b in (None, "unlimited") else float(b)
    if "deductible" in overrides:
        changes["deductibles"] = overrides["deductible"]
    return problem.with_changes(**changes) if changes else problem


@dataclass
class SweepRow:
    scenario: Scenario
    budget: float | None
    best: StrategyOutcome | None
    n_feasible: int


def sensitivity_sweep(problem: AllocationProblem, scenarios: Sequence[Scenario],
                      budgets: Sequence[float | None] | None = None,
                      evaluator: StrategyEvaluator | None = None,
                      include_benchmark: bool = True) -> list[SweepRow]:
    """Optimal strategy per scenario and budget mode; the benchmark comes first."""
    evaluator = evaluator or StrategyEvaluator(problem.losses)
    budgets = list(budgets) if budgets is not None else [problem.budget]
    todo = list(scenarios)
    if include_benchmark and not any(s.name == "benchmark" for s in todo):
        todo.insert(0, Scenario("benchmark", {}, "Benchmark"))
    rows = []
    for sc in todo:
        varied = apply_overrides(problem, sc.overrides)
        modes = [varied.budget] if "budget" in sc.overrides else budgets
        for beta in modes:
            res = enumerate_strategies(varied, evaluator, budget=beta)
            rows.append(SweepRow(sc, beta, res.best, res.n_feasible))
    return rows
