"""Threat -> vulnerability -> asset cascade and its danger tensor.

Indices are 0-based everywhere in code; labels such as ``T1`` or ``V3`` are
only used for display.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError


def _binary_matrix(values, name: str, shape: tuple[int, int] | None = None) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 2:
        raise ConfigError(f"{name} must be a 2-d matrix, got shape {arr.shape}")
    if shape is not None and arr.shape != shape:
        raise ConfigError(f"{name} has shape {arr.shape}, expected {shape}")
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise ConfigError(f"{name} must contain only 0 and 1 entries")
    out = arr.astype(np.int8)
    out.setflags(write=False)
    return out


def _labels(values: Sequence[str], name: str) -> tuple[str, ...]:
    labels = tuple(str(v) for v in values)
    if not labels:
        raise ConfigError(f"{name} must be non-empty")
    if len(set(labels)) != len(labels):
        raise ConfigError(f"{name} contains duplicate labels")
    return labels


@dataclass(frozen=True, eq=False)
class CascadeModel:
    threats: tuple[str, ...]
    vulnerabilities: tuple[str, ...]
    assets: tuple[str, ...]
    A: np.ndarray
    B: np.ndarray

    def __init__(self, threats, vulnerabilities, assets, A, B):
        t = _labels(threats, "threats")
        v = _labels(vulnerabilities, "vulnerabilities")
        s = _labels(assets, "assets")
        object.__setattr__(self, "threats", t)
        object.__setattr__(self, "vulnerabilities", v)
        object.__setattr__(self, "assets", s)
        object.__setattr__(self, "A", _binary_matrix(A, "A", (len(t), len(v))))
        object.__setattr__(self, "B", _binary_matrix(B, "B", (len(v), len(s))))

    @property
    def l(self) -> int:
        return len(self.threats)

    @property
    def m(self) -> int:
        return len(self.vulnerabilities)

    @property
    def n(self) -> int:
        return len(self.assets)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.l, self.m, self.n

    def threat_index(self, label: str) -> int:
        return _lookup(self.threats, label, "threat")

    def vulnerability_index(self, label: str) -> int:
        return _lookup(self.vulnerabilities, label, "vulnerability")

    def asset_index(self, label: str) -> int:
        return _lookup(self.assets, label, "asset")

    def structural_paths(self) -> list[tuple[int, int, int]]:
        """Triples with A_ij B_jk = 1, independent of any control level."""
        mask = self.A[:, :, None] * self.B[None, :, :]
        return [tuple(int(x) for x in idx) for idx in np.argwhere(mask > 0)]

    def pair_vulnerabilities(self, i: int, k: int) -> list[int]:
        return [j for j in range(self.m) if self.A[i, j] and self.B[j, k]]

    @classmethod
    def from_dict(cls, data: dict) -> "CascadeModel":
        try:
            return cls(data["threats"], data["vulnerabilities"], data["assets"], data["A"], data["B"])
        except KeyError as exc:
            raise ConfigError(f"cascade config missing key {exc.args[0]!r}") from None

    def to_dict(self) -> dict:
        return {
            "threats": list(self.threats),
            "vulnerabilities": list(self.vulnerabilities),
            "assets": list(self.assets),
            "A": self.A.tolist(),
            "B": self.B.tolist(),
        }


def _lookup(labels: tuple[str, ...], label: str, kind: str) -> int:
    try:
        return labels.index(label)
    except ValueError:
        raise ConfigError(f"unknown {kind} label {label!r}") from None


@dataclass(frozen=True, eq=False)
class ControlVector:
    theta: np.ndarray

    def __init__(self, theta):
        arr = np.array(theta, dtype=float).ravel()
        if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ConfigError(f"control factors must lie in [0, 1], got {arr.tolist()}")
        arr.setflags(write=False)
        object.__setattr__(self, "theta", arr)

    def __len__(self) -> int:
        return self.theta.shape[0]

    @classmethod
    def baseline(cls, m: int) -> "ControlVector":
        return cls(np.ones(m))


@dataclass(frozen=True, eq=False)
class DangerTensor:
    D: np.ndarray

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.D.shape


@dataclass(frozen=True, order=True)
class AttackPath:
    threat: int
    vulnerability: int
    asset: int
    scaling: float = field(compare=False)

    def label(self) -> str:
        return f"(T{self.threat + 1}, V{self.vulnerability + 1}, A{self.asset + 1})"


@dataclass(frozen=True, eq=False)
class InvestmentMenu:
    """Binary menu: control j either costs ``costs[j]`` and scales losses by
    ``theta_low[j]``, or costs nothing and leaves the factor at 1."""

    costs: np.ndarray
    theta_low: np.ndarray

    def __init__(self, costs, theta_low):
        c = np.array(costs, dtype=float).ravel()
        t = np.array(theta_low, dtype=float).ravel()
        if c.shape != t.shape:
            raise ConfigError("investment menu costs and factors differ in length")
        if np.any(c < 0.0) or not np.all(np.isfinite(c)):
            raise ConfigError("investment costs must be finite and non-negative")
        if np.any(t <= 0.0) or np.any(t >= 1.0):
            raise ConfigError(f"effective control factors must lie strictly in (0, 1), got {t.tolist()}")
        c.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "costs", c)
        object.__setattr__(self, "theta_low", t)

    def __len__(self) -> int:
        return self.costs.shape[0]

    def with_cost(self, j: int, cost: float) -> "InvestmentMenu":
        c = self.costs.copy()
        c[j] = cost
        return InvestmentMenu(c, self.theta_low)

    def with_theta(self, j: int, theta: float) -> "InvestmentMenu":
        t = self.theta_low.copy()
        t[j] = theta
        return InvestmentMenu(self.costs, t)


def build_tensor(model: CascadeModel, controls: ControlVector | Sequence[float]) -> DangerTensor:
    if not isinstance(controls, ControlVector):
        controls = ControlVector(controls)
    if len(controls) != model.m:
        raise ConfigError(f"control vector has length {len(controls)}, cascade has {model.m} vulnerabilities")
    D = model.A[:, :, None] * model.B[None, :, :] * controls.theta[None, :, None]
    D = D.astype(float)
    D.setflags(write=False)
    return DangerTensor(D)


def viable_paths(tensor: DangerTensor | np.ndarray) -> list[AttackPath]:
    D = tensor.D if isinstance(tensor, DangerTensor) else np.asarray(tensor)
    # argwhere walks in C order, i.e. lexicographic (i, j, k)
    return [AttackPath(int(i), int(j), int(k), float(D[i, j, k])) for i, j, k in np.argwhere(D > 0)]


def apply_investment(menu: InvestmentMenu, decisions: Iterable[int]) -> tuple[ControlVector, np.ndarray]:
    dec = np.array(list(decisions), dtype=int)
    if dec.shape != (len(menu),):
        raise ConfigError(f"expected {len(menu)} investment decisions, got {dec.shape[0]}")
    if np.any((dec != 0) & (dec != 1)):
        raise ConfigError("investment decisions must be 0 or 1")
    invest = dec.astype(bool)
    theta = np.where(invest, menu.theta_low, 1.0)
    M = np.where(invest, menu.costs, 0.0)
    return ControlVector(theta), M


def load_cascade(path: str | Path) -> tuple[CascadeModel, InvestmentMenu | None]:
    """Read a cascade JSON file; the optional ``investment_menu`` block is
    a list of ``{"control", "cost", "theta_effective"}`` entries."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read cascade config {path}: {exc}") from None
    model = CascadeModel.from_dict(data)
    menu = menu_from_entries(model, data["investment_menu"]) if "investment_menu" in data else None
    return model, menu


def menu_from_entries(model: CascadeModel, entries: list[dict]) -> InvestmentMenu:
    costs = np.zeros(model.m)
    thetas = np.full(model.m, np.nan)
    for entry in entries:
        try:
            j = model.vulnerability_index(entry["control"])
            costs[j] = float(entry["cost"])
            thetas[j] = float(entry["theta_effective"])
        except KeyError as exc:
            raise ConfigError(f"investment menu entry missing key {exc.args[0]!r}") from None
    if np.any(np.isnan(thetas)):
        missing = [model.vulnerabilities[j] for j in np.flatnonzero(np.isnan(thetas))]
        raise ConfigError(f"investment menu has no entry for {missing}")
    return InvestmentMenu(costs, thetas)
