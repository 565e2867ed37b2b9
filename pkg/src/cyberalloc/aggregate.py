"""From the cascade and raw severities to annual loss distributions.

Per incident of threat i on asset k the loss is Z_ik = sum_j D_ijk X0_ijk
(independent summands, so a convolution over the viable vulnerabilities).
Annual pair losses S_ik are compound sums of Z_ik with frequency N_ik.
The threat-mixture route builds the per-incident corporate loss
L = sum_i p_i Z_i with Z_i = sum_k Z_ik, compounded with the corporate N.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .cascade import CascadeModel, ControlVector, build_tensor
from .dist import (
    DEFAULT_MAX_POINTS,
    DiscreteDistribution,
    FrequencyModel,
    SeverityModel,
    ThreatMixture,
    convolve,
    convolve_all,
    discretize,
    mix,
    panjer_compound,
    scale_severity,
)
from .errors import ConfigError

Triple = tuple[int, int, int]
Pair = tuple[int, int]


@dataclass(frozen=True)
class LossModel:
    """Everything needed to turn a control vector into loss distributions."""

    cascade: CascadeModel
    severities: Mapping[Triple, SeverityModel]
    frequencies: Mapping[Pair, FrequencyModel]
    mixture: ThreatMixture | None = None
    corporate_frequency: FrequencyModel | None = None
    step: float = 1e4
    max_mass_deficit: float = 1e-9
    max_points: int = DEFAULT_MAX_POINTS

    def __post_init__(self):
        l, m, n = self.cascade.shape
        for i, j, k in self.severities:
            if not (0 <= i < l and 0 <= j < m and 0 <= k < n):
                raise ConfigError(f"severity index {(i, j, k)} outside the cascade")
        for i, j, k in self.cascade.structural_paths():
            if (i, j, k) not in self.severities:
                raise ConfigError(
                    f"no severity for viable path (T{i + 1}, V{j + 1}, A{k + 1})"
                )
        for i, k in self.frequencies:
            if not (0 <= i < l and 0 <= k < n):
                raise ConfigError(f"frequency index {(i, k)} outside the cascade")
        if self.mixture is not None and len(self.mixture) != l:
            raise ConfigError(f"threat mixture has {len(self.mixture)} entries, cascade has {l} threats")

    @property
    def pairs(self) -> list[Pair]:
        return [(i, k) for i in range(self.cascade.l) for k in range(self.cascade.n)]

    def pair_controls(self, i: int, k: int) -> list[int]:
        return self.cascade.pair_vulnerabilities(i, k)

    def loss_free(self, i: int, k: int) -> bool:
        """True when the pair can never produce a positive annual loss."""
        freq = self.frequencies.get((i, k))
        if freq is None or freq.mean == 0.0:
            return True
        return all(self.severities[(i, j, k)].degenerate for j in self.pair_controls(i, k))

    def discretize(self, sev: SeverityModel) -> DiscreteDistribution:
        return discretize(sev, self.step, self.max_mass_deficit, self.max_points)


def incident_loss(model: LossModel, theta, i: int, k: int) -> DiscreteDistribution:
    """Distribution of Z_ik under control vector ``theta``."""
    controls = theta if isinstance(theta, ControlVector) else ControlVector(theta)
    D = build_tensor(model.cascade, controls).D
    parts = [
        model.discretize(scale_severity(model.severities[(i, j, k)], float(D[i, j, k])))
        for j in range(model.cascade.m)
        if D[i, j, k] > 0
    ]
    return convolve_all(parts, model.step)


def annual_pair_loss(model: LossModel, theta, i: int, k: int, method: str = "auto") -> DiscreteDistribution:
    """Distribution of S_ik."""
    freq = model.frequencies.get((i, k))
    if freq is None or model.loss_free(i, k):
        return DiscreteDistribution.zero(model.step)
    z = incident_loss(model, theta, i, k)
    return panjer_compound(freq, z, model.max_mass_deficit, model.max_points, method)


def threat_incident_loss(model: LossModel, theta, i: int) -> DiscreteDistribution:
    """Distribution of Z_i = sum_k Z_ik."""
    return convolve_all([incident_loss(model, theta, i, k) for k in range(model.cascade.n)], model.step)


def corporate_incident_loss(model: LossModel, theta) -> DiscreteDistribution:
    """Distribution of L = sum_i p_i Z_i."""
    if model.mixture is None:
        raise ConfigError("the threat-mixture route needs threat probabilities")
    comps = [threat_incident_loss(model, theta, i) for i in range(model.cascade.l)]
    return mix(comps, model.mixture)


def corporate_annual_loss_mixture(model: LossModel, theta, method: str = "auto") -> DiscreteDistribution:
    """S via the corporate frequency and the threat mixture."""
    if model.corporate_frequency is None:
        raise ConfigError("the threat-mixture route needs a corporate frequency")
    L = corporate_incident_loss(model, theta)
    return panjer_compound(model.corporate_frequency, L, model.max_mass_deficit, model.max_points, method)


def corporate_annual_loss_pairs(model: LossModel, theta) -> DiscreteDistribution:
    """S = sum of independent S_ik."""
    out = DiscreteDistribution.zero(model.step)
    for i, k in model.pairs:
        out = convolve(out, annual_pair_loss(model, theta, i, k))
    return out


@dataclass
class PairLossCache:
    """Memoizes S_ik by the control factors that actually touch the pair."""

    model: LossModel
    _store: dict = field(default_factory=dict)

    def key(self, theta: np.ndarray, i: int, k: int) -> tuple:
        return (i, k) + tuple(float(theta[j]) for j in self.model.pair_controls(i, k))

    def get(self, theta: np.ndarray, i: int, k: int) -> DiscreteDistribution:
        key = self.key(theta, i, k)
        if key not in self._store:
            self._store[key] = annual_pair_loss(self.model, theta, i, k)
        return self._store[key]
