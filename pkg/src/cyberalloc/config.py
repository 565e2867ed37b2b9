"""Run configuration and parameter files (JSON).

A run config names the cascade, the loss-model parameters (inline, from a
parameter file, or to be fitted from an incident file), the lattice, the
allocation weights and menus, and optional scenario blocks. A config may
``extend`` another file; its keys replace the parent's and ``null`` removes one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .aggregate import LossModel
from .allocate import AllocationProblem, Scenario, WeightSet
from .cascade import CascadeModel, InvestmentMenu, menu_from_entries
from .dist import DEFAULT_MAX_POINTS, Family, FrequencyModel, SeverityModel, ThreatMixture
from .errors import ConfigError

DEFAULT_STEP = 1e4
DEFAULT_DEDUCTIBLE = 1e5
WEIGHT_FIELDS = ("eta", "eta_j", "alpha", "alpha_ik", "nu", "nu_ik", "omega_I", "omega_I_ik")


def bundled(name: str) -> Path:
    """Path of a dataset shipped with the package."""
    return Path(str(resources.files("cyberalloc") / "data" / name))


def _read_json(path: Path) -> dict:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a JSON object")
    return data


def _resolve(path: Path, seen: tuple = ()) -> dict:
    path = path.resolve()
    if path in seen:
        raise ConfigError(f"circular 'extends' through {path}")
    data = _read_json(path)
    parent = data.pop("extends", None)
    for key in ("incident_file", "parameter_file"):
        if isinstance(data.get(key), str):
            data[key] = str((path.parent / data[key]).resolve())
    if parent is None:
        return data
    merged = _resolve(path.parent / parent, seen + (path,))
    for key, value in data.items():
        if value is None:
            merged.pop(key, None)
        else:
            merged[key] = value
    return merged


# ---------------------------------------------------------------------------
# labels


def _pair_key(model: CascadeModel, label: str) -> tuple[int, int]:
    parts = str(label).split("/")
    if len(parts) != 2:
        raise ConfigError(f"pair label {label!r} must look like 'T1/A1'")
    return model.threat_index(parts[0]), model.asset_index(parts[1])


def _triple_key(model: CascadeModel, label: str) -> tuple[int, int, int]:
    parts = str(label).split("/")
    if len(parts) != 3:
        raise ConfigError(f"path label {label!r} must look like 'T1/V3/A1'")
    return model.threat_index(parts[0]), model.vulnerability_index(parts[1]), model.asset_index(parts[2])


def pair_label(model: CascadeModel, i: int, k: int) -> str:
    return f"{model.threats[i]}/{model.assets[k]}"


def triple_label(model: CascadeModel, i: int, j: int, k: int) -> str:
    return f"{model.threats[i]}/{model.vulnerabilities[j]}/{model.assets[k]}"


# ---------------------------------------------------------------------------
# parameters


def _num(value, what: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a number, got {value!r}") from None


def severity_from_dict(entry: dict, ceiling: float = math.inf) -> SeverityModel:
    try:
        family = Family(entry["family"])
    except KeyError as exc:
        raise ConfigError(f"severity entry missing key {exc.args[0]!r}") from None
    except ValueError:
        raise ConfigError(f"unknown severity family {entry['family']!r}") from None
    if "params" not in entry or "q" not in entry:
        raise ConfigError("severity entry needs 'q' and 'params'")
    upper = entry.get("upper", ceiling)
    upper = math.inf if upper is None else _num(upper, "upper")
    return SeverityModel(_num(entry["q"], "q"), family, tuple(_num(p, "params") for p in entry["params"]), upper)


def severity_to_dict(s: SeverityModel) -> dict:
    return {
        "family": s.family.value,
        "q": s.q,
        "params": list(s.params),
        "upper": None if math.isinf(s.upper) else s.upper,
    }


def frequency_from_dict(entry: dict) -> FrequencyModel:
    family = entry.get("family", "poisson")
    if "mean" not in entry:
        raise ConfigError("frequency entry needs 'mean'")
    mean = _num(entry["mean"], "mean")
    if family == "negative_binomial":
        return FrequencyModel.negative_binomial(_num(entry.get("size"), "size"), mean)
    return FrequencyModel(family, mean)


def frequency_to_dict(f: FrequencyModel) -> dict:
    out = {"family": f.family, "mean": f.mean}
    if f.family == "negative_binomial":
        out["size"] = f.size
    return out


@dataclass
class ModelParameters:
    """Fitted or published loss-model inputs for one cascade."""

    cascade: CascadeModel
    severities: dict
    frequencies: dict
    corporate_frequency: FrequencyModel | None = None
    mixture: ThreatMixture | None = None

    @classmethod
    def from_dict(cls, cascade: CascadeModel, block: dict) -> "ModelParameters":
        ceiling = block.get("loss_ceiling")
        ceiling = math.inf if ceiling is None else _num(ceiling, "loss_ceiling")
        sev = {}
        for entry in block.get("severities", []):
            try:
                key = (
                    cascade.threat_index(entry["threat"]),
                    cascade.vulnerability_index(entry["vulnerability"]),
                    cascade.asset_index(entry["asset"]),
                )
            except KeyError as exc:
                raise ConfigError(f"severity entry missing key {exc.args[0]!r}") from None
            if key in sev:
                raise ConfigError(f"duplicate severity for {triple_label(cascade, *key)}")
            sev[key] = severity_from_dict(entry, ceiling)
        freq = {}
        for entry in block.get("frequencies", []):
            try:
                key = (cascade.threat_index(entry["threat"]), cascade.asset_index(entry["asset"]))
            except KeyError as exc:
                raise ConfigError(f"frequency entry missing key {exc.args[0]!r}") from None
            if key in freq:
                raise ConfigError(f"duplicate frequency for {pair_label(cascade, *key)}")
            freq[key] = frequency_from_dict(entry)
        corp = block.get("corporate_frequency")
        mix = block.get("threat_mixture")
        return cls(
            cascade,
            sev,
            freq,
            None if corp is None else frequency_from_dict(corp),
            None if mix is None else ThreatMixture(mix),
        )

    def to_dict(self) -> dict:
        c = self.cascade
        out: dict[str, Any] = {
            "severities": [
                {"threat": c.threats[i], "vulnerability": c.vulnerabilities[j], "asset": c.assets[k],
                 **severity_to_dict(self.severities[(i, j, k)])}
                for (i, j, k) in sorted(self.severities)
            ],
            "frequencies": [
                {"threat": c.threats[i], "asset": c.assets[k], **frequency_to_dict(self.frequencies[(i, k)])}
                for (i, k) in sorted(self.frequencies)
            ],
        }
        if self.corporate_frequency is not None:
            out["corporate_frequency"] = frequency_to_dict(self.corporate_frequency)
        if self.mixture is not None:
            out["threat_mixture"] = self.mixture.p.tolist()
        return out

    def loss_model(self, step: float = DEFAULT_STEP, max_mass_deficit: float = 1e-9,
                   max_points: int = DEFAULT_MAX_POINTS) -> LossModel:
        return LossModel(self.cascade, self.severities, self.frequencies, self.mixture,
                         self.corporate_frequency, step, max_mass_deficit, max_points)


def write_parameter_file(path: str | Path, cascade_block: dict, params: ModelParameters) -> None:
    doc = {"cascade": cascade_block, "parameters": params.to_dict()}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_parameter_file(path: str | Path) -> tuple[dict, ModelParameters]:
    data = _read_json(Path(path))
    if "cascade" not in data or "parameters" not in data:
        raise ConfigError(f"parameter file {path} needs 'cascade' and 'parameters'")
    cascade = CascadeModel.from_dict(data["cascade"])
    return data["cascade"], ModelParameters.from_dict(cascade, data["parameters"])


# ---------------------------------------------------------------------------
# run config


@dataclass
class RunConfig:
    cascade_block: dict
    cascade: CascadeModel
    menu: InvestmentMenu | None
    parameters: ModelParameters | None = None
    incident_file: Path | None = None
    step: float = DEFAULT_STEP
    max_mass_deficit: float = 1e-9
    max_points: int = DEFAULT_MAX_POINTS
    weights: dict = field(default_factory=dict)
    level: float = 0.9
    budget: float | None = None
    deductible: Any = DEFAULT_DEDUCTIBLE
    scenarios: list[Scenario] = field(default_factory=list)
    sensitivity_budgets: list | None = None
    synthetic: dict = field(default_factory=dict)
    loss_ceiling: Any = "observed"
    seed: int = 0
    name: str = ""
    names: dict = field(default_factory=dict)

    def require_parameters(self) -> ModelParameters:
        if self.parameters is None:
            raise ConfigError("this command needs model parameters; run 'fit' first or give a parameter file")
        return self.parameters

    def require_menu(self) -> InvestmentMenu:
        if self.menu is None:
            raise ConfigError("the cascade has no investment menu")
        return self.menu

    def loss_model(self) -> LossModel:
        return self.require_parameters().loss_model(self.step, self.max_mass_deficit, self.max_points)

    def weight_set(self) -> WeightSet:
        l, m, n = self.cascade.shape
        kwargs = {}
        for key, value in self.weights.items():
            if key == "eta_j" and isinstance(value, dict):
                vec = np.full(m, float(self.weights.get("eta", 1.0)))
                for label, v in value.items():
                    vec[self.cascade.vulnerability_index(label)] = _num(v, key)
                value = vec
            elif key.endswith("_ik") and isinstance(value, dict):
                base = key[:-3]
                mat = np.full((l, n), float(self.weights.get(base, 1.0)))
                for label, v in value.items():
                    mat[_pair_key(self.cascade, label)] = _num(v, key)
                value = mat
            kwargs[key] = value
        return WeightSet.build(l, m, n, level=self.level, **kwargs)

    def deductible_matrix(self) -> np.ndarray:
        return deductible_matrix(self.cascade, self.deductible)

    def problem(self, budget: Any = "config") -> AllocationProblem:
        beta = self.budget if budget == "config" else budget
        return AllocationProblem(self.loss_model(), self.require_menu(), self.weight_set(),
                                 self.deductible_matrix(), beta)

    def scenario(self, name: str) -> Scenario:
        for sc in self.scenarios:
            if sc.name == name:
                return sc
        known = ", ".join(s.name for s in self.scenarios) or "none"
        raise ConfigError(f"unknown scenario {name!r} (known: {known})")

    def label(self, kind: str, index: int) -> str:
        """Short label; the long name where the config provides one."""
        labels = {"threat": self.cascade.threats, "vulnerability": self.cascade.vulnerabilities,
                  "asset": self.cascade.assets}[kind]
        return labels[index]


def deductible_matrix(cascade: CascadeModel, spec: Any) -> np.ndarray:
    """Scalar, l x n matrix, or {"T1/A1": d} mapping; null marks a pair as not insurable."""
    l, n = cascade.l, cascade.n
    if spec is None:
        return np.full((l, n), np.nan)
    if isinstance(spec, dict):
        out = np.full((l, n), DEFAULT_DEDUCTIBLE)
        for label, d in spec.items():
            out[_pair_key(cascade, label)] = np.nan if d is None else _num(d, "deductible")
        return out
    arr = np.array(spec, dtype=object)
    if arr.ndim == 0:
        return np.full((l, n), _num(spec, "deductible"))
    if arr.shape != (l, n):
        raise ConfigError(f"deductible matrix has shape {arr.shape}, expected {(l, n)}")
    return np.array([[np.nan if v is None else _num(v, "deductible") for v in row] for row in arr])


def _scenarios(entries) -> list[Scenario]:
    out = []
    for entry in entries or []:
        if not isinstance(entry, dict) or "name" not in entry:
            raise ConfigError("each scenario needs a 'name'")
        unknown = set(entry) - {"name", "title", "overrides"}
        if unknown:
            raise ConfigError(f"unknown scenario key {sorted(unknown)[0]!r} in scenario {entry['name']!r}")
        out.append(Scenario(str(entry["name"]), dict(entry.get("overrides", {})), str(entry.get("title", ""))))
    names = [s.name for s in out]
    if len(set(names)) != len(names):
        raise ConfigError("scenario names must be unique")
    return out


TOP_KEYS = {"name", "cascade", "parameters", "parameter_file", "incident_file", "lattice", "allocation",
            "scenarios", "sensitivity_budgets", "synthetic", "seed", "loss_ceiling"}


def config_from_dict(data: dict) -> RunConfig:
    unknown = set(data) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config key {sorted(unknown)[0]!r}")
    sources = [k for k in ("parameters", "parameter_file", "incident_file") if data.get(k) is not None]
    if len(sources) != 1:
        raise ConfigError("supply exactly one of 'parameters', 'parameter_file' or 'incident_file'")
    if "parameter_file" in sources:
        cascade_block, params = read_parameter_file(data["parameter_file"])
        if "cascade" in data:
            cascade_block = {**cascade_block, **data["cascade"]}
    else:
        if "cascade" not in data:
            raise ConfigError("config needs a 'cascade' block")
        cascade_block = data["cascade"]
        params = None
    cascade = CascadeModel.from_dict(cascade_block)
    menu = menu_from_entries(cascade, cascade_block["investment_menu"]) if "investment_menu" in cascade_block else None
    if "parameters" in sources:
        params = ModelParameters.from_dict(cascade, data["parameters"])
    elif params is not None:
        params = ModelParameters(cascade, params.severities, params.frequencies, params.corporate_frequency,
                                 params.mixture)

    lattice = dict(data.get("lattice", {}))
    bad = set(lattice) - {"step", "max_mass_deficit", "max_points"}
    if bad:
        raise ConfigError(f"unknown lattice key {sorted(bad)[0]!r}")
    alloc = dict(data.get("allocation", {}))
    bad = set(alloc) - {"weights", "level", "budget", "deductible"}
    if bad:
        raise ConfigError(f"unknown allocation key {sorted(bad)[0]!r}")
    weights = dict(alloc.get("weights", {}))
    bad = set(weights) - set(WEIGHT_FIELDS)
    if bad:
        raise ConfigError(f"unknown weight {sorted(bad)[0]!r}")
    budget = alloc.get("budget")
    step = _num(lattice.get("step", DEFAULT_STEP), "step")
    if not step > 0:
        raise ConfigError("lattice step must be positive")
    sens = data.get("sensitivity_budgets")
    return RunConfig(
        cascade_block=cascade_block,
        cascade=cascade,
        menu=menu,
        parameters=params,
        incident_file=Path(data["incident_file"]) if data.get("incident_file") else None,
        step=step,
        max_mass_deficit=_num(lattice.get("max_mass_deficit", 1e-9), "max_mass_deficit"),
        max_points=int(lattice.get("max_points", DEFAULT_MAX_POINTS)),
        weights=weights,
        level=_num(alloc.get("level", 0.9), "level"),
        budget=None if budget in (None, "unlimited") else _num(budget, "budget"),
        deductible=alloc.get("deductible", DEFAULT_DEDUCTIBLE),
        scenarios=_scenarios(data.get("scenarios")),
        sensitivity_budgets=None if sens is None else [None if b in (None, "unlimited") else _num(b, "budget")
                                                       for b in sens],
        synthetic=dict(data.get("synthetic", {})),
        loss_ceiling=data.get("loss_ceiling", "observed"),
        seed=int(data.get("seed", 0)),
        name=str(data.get("name", "")),
        names=dict(cascade_block.get("names", {})),
    )


def load_config(path: str | Path) -> RunConfig:
    return config_from_dict(_resolve(Path(path)))


def case_study_config() -> RunConfig:
    return load_config(bundled("case_study.json"))
