"""Run configuration: a YAML file with named sections.

Every default is resolved into an *effective* configuration, which is echoed
into the run directory and hashed (together with the dataset bytes) to name
that directory. Loading the echo reproduces the run.

Sections::

    dataset:     path, delimiter, missing, variables [{name, tier, description, unit}]
    epr:         exponents, max_terms, bias, fit_mode, significance_multiplier,
                 max_prune_iterations, exhaustive, exhaustive_cap
    ga:          population_size, generations, crossover_rate, mutation_rate, seed
    workers:     thread count for targets within a stage
    stages:      [{name, targets, inputs, epr?, ga?}]   (per-stage overrides)
    selections:  [{stage, target, model: <1-based int> | knee, rationale}]
    plan:        sources?, passthrough, direct_links, models {target: stage},
                 fixed_models {target: {variables, exponents, coefficients, bias}}
    correlation: variables
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import yaml

from .dataset import Tier, VariableSpec
from .evolution import EprConfig, EvolutionError, GaConfig
from .expression import ExponentMatrix, ExpressionError, FittedModel
from .pipeline import ModelSelection, PipelineError, StageSpec
from .regression import RegressionError

EPR_DEFAULTS = {
    "exponents": [-1.0, -0.5, 0.0, 0.5, 1.0],
    "max_terms": 3,
    "bias": True,
    "fit_mode": "unconstrained",
    "significance_multiplier": 2.0,
    "max_prune_iterations": 10,
    "exhaustive": False,
    "exhaustive_cap": 10**6,
}
GA_DEFAULTS = {
    "population_size": 100,
    "generations": 200,
    "crossover_rate": 0.9,
    "mutation_rate": None,
}
TOP_KEYS = {"dataset", "epr", "ga", "workers", "stages", "selections", "plan", "correlation"}


class ConfigError(ValueError):
    pass


def _check_keys(section: dict, allowed, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a mapping")
    extra = sorted(set(section) - set(allowed))
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {extra}")


def _names(value, where: str) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigError(f"{where} must be a list of variable names")
    return list(value)


def _epr_section(raw: dict, base: dict, where: str) -> dict:
    _check_keys(raw, EPR_DEFAULTS, where)
    out = {**base, **raw}
    exps = out["exponents"]
    if not isinstance(exps, list) or not all(isinstance(e, (int, float)) for e in exps):
        raise ConfigError(f"{where}.exponents must be a list of numbers")
    out["exponents"] = [float(e) for e in exps]
    if 0.0 not in out["exponents"]:
        raise ConfigError(f"{where}.exponents must include 0 (variable exclusion)")
    if not isinstance(out["max_terms"], int) or out["max_terms"] < 1:
        raise ConfigError(f"{where}.max_terms must be an integer >= 1")
    for key in ("bias", "exhaustive"):
        if not isinstance(out[key], bool):
            raise ConfigError(f"{where}.{key} must be true or false")
    out["significance_multiplier"] = float(out["significance_multiplier"])
    return out


def _ga_section(raw: dict, base: dict, where: str, allow_seed: bool) -> dict:
    allowed = set(GA_DEFAULTS) | ({"seed"} if allow_seed else set())
    _check_keys(raw, allowed, where)
    out = {**base, **raw}
    if allow_seed:
        seed = out.get("seed")
        if seed is None:
            raise ConfigError(f"{where}.seed is required (runs are never seeded from the clock)")
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
            raise ConfigError(f"{where}.seed must be a non-negative 64-bit integer")
    for key in ("population_size", "generations"):
        if not isinstance(out[key], int) or isinstance(out[key], bool):
            raise ConfigError(f"{where}.{key} must be an integer")
    return out


def epr_config(section: dict) -> EprConfig:
    kwargs = {k: v for k, v in section.items() if k != "exhaustive"}
    kwargs["exponents"] = tuple(kwargs["exponents"])
    return EprConfig(**kwargs)


def ga_config(section: dict) -> GaConfig:
    return GaConfig(**section)


def _fixed_model(raw: dict, declared: set, where: str) -> FittedModel:
    _check_keys(raw, {"variables", "exponents", "coefficients", "bias"}, where)
    names = _names(raw.get("variables"), f"{where}.variables")
    unknown = sorted(set(names) - declared)
    if unknown:
        raise ConfigError(f"{where}: undeclared variable(s) {unknown}")
    structure = ExponentMatrix(tuple(tuple(r) for r in raw.get("exponents", [])), tuple(names))
    return FittedModel(structure, tuple(raw.get("coefficients", [])), raw.get("bias"))


def fixed_model_to_dict(model: FittedModel) -> dict:
    return {
        "variables": list(model.structure.variable_names),
        "exponents": [list(r) for r in model.structure.exponents],
        "coefficients": list(model.coefficients),
        "bias": model.bias,
    }


@dataclass(frozen=True)
class PlanSection:
    sources: tuple[str, ...]
    passthrough: tuple[str, ...]
    direct_links: tuple[str, ...]
    models: dict            # target -> stage name
    fixed_models: dict      # target -> FittedModel

    @property
    def targets(self) -> tuple[str, ...]:
        return tuple(self.models) + tuple(self.fixed_models)


@dataclass(frozen=True)
class RunConfig:
    effective: dict
    base_dir: Path
    dataset_path: Path
    delimiter: str
    missing: str
    variables: tuple[VariableSpec, ...]
    epr: EprConfig
    ga: GaConfig
    exhaustive: bool
    workers: int
    stages: tuple[StageSpec, ...]
    stage_exhaustive: dict
    selections: tuple[ModelSelection, ...]
    plan: Optional[PlanSection]
    correlation_variables: tuple[str, ...]

    @property
    def seed(self) -> int:
        return self.ga.seed

    def stage(self, name: str) -> StageSpec:
        for stage in self.stages:
            if stage.name == name:
                return stage
        raise ConfigError(f"no stage named {name!r}; declared: {[s.name for s in self.stages]}")

    def selection(self, stage: str, target: str) -> ModelSelection:
        for sel in self.selections:
            if sel.stage == stage and sel.target == target:
                return sel
        return ModelSelection(stage, target, None, "default: knee of the R^2 curve")

    def effective_yaml(self) -> str:
        return yaml.safe_dump(self.effective, sort_keys=False, allow_unicode=True)

    def dataset_bytes(self) -> bytes:
        try:
            return self.dataset_path.read_bytes()
        except OSError as exc:
            raise ConfigError(f"cannot read dataset {self.dataset_path}: {exc.strerror}") from None

    def run_id(self) -> str:
        """``<hash>-seed<seed>``; the hash covers the effective config
        (minus the dataset location) and the dataset bytes."""
        content = copy.deepcopy(self.effective)
        del content["dataset"]["path"]
        h = hashlib.sha256(json.dumps(content, sort_keys=True, ensure_ascii=False).encode())
        h.update(b"\0")
        h.update(self.dataset_bytes())
        return f"{h.hexdigest()[:12]}-seed{self.seed}"


def load_config(path, seed: Optional[int] = None, exhaustive: Optional[bool] = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    return parse_config(raw, path.parent, seed=seed, exhaustive=exhaustive)


def parse_config(raw: Any, base_dir, seed: Optional[int] = None,
                 exhaustive: Optional[bool] = None) -> RunConfig:
    """Validate ``raw`` and resolve defaults; raises :class:`ConfigError`."""
    try:
        return _parse(raw, Path(base_dir), seed, exhaustive)
    except (EvolutionError, ExpressionError, PipelineError, RegressionError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def _parse(raw, base_dir: Path, seed, exhaustive) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping of sections")
    _check_keys(raw, TOP_KEYS, "config")
    raw = copy.deepcopy(raw)
    if "dataset" not in raw:
        raise ConfigError("config has no dataset section")

    ds = raw["dataset"]
    _check_keys(ds, {"path", "delimiter", "missing", "variables"}, "dataset")
    if not isinstance(ds.get("path"), str):
        raise ConfigError("dataset.path is required")
    dataset_path = (base_dir / ds["path"]).resolve()
    variables = []
    for i, v in enumerate(ds.get("variables") or []):
        _check_keys(v, {"name", "tier", "description", "unit"}, f"dataset.variables[{i}]")
        try:
            variables.append(VariableSpec(str(v["name"]), Tier(v.get("tier")),
                                          str(v.get("description", "")), str(v.get("unit", ""))))
        except (KeyError, ValueError):
            raise ConfigError(
                f"dataset.variables[{i}] needs a name and a tier in {[t.value for t in Tier]}"
            ) from None
    if not variables:
        raise ConfigError("dataset.variables must declare at least one variable")
    declared = [v.name for v in variables]
    if len(set(declared)) != len(declared):
        raise ConfigError(f"dataset.variables declares duplicate names {declared}")
    declared_set = set(declared)
    eff_dataset = {
        "path": str(dataset_path),
        "delimiter": ds.get("delimiter", ","),
        "missing": ds.get("missing", ""),
        "variables": [{"name": v.name, "tier": v.tier.value, "description": v.description,
                       "unit": v.unit} for v in variables],
    }

    epr = _epr_section(raw.get("epr") or {}, EPR_DEFAULTS, "epr")
    if exhaustive is not None:
        epr["exhaustive"] = bool(exhaustive)
    ga_raw = dict(raw.get("ga") or {})
    if seed is not None:
        ga_raw["seed"] = seed
    ga = _ga_section(ga_raw, GA_DEFAULTS, "ga", allow_seed=True)
    workers = raw.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers must be a positive integer")

    def check_declared(names, where):
        unknown = sorted(set(names) - declared_set)
        if unknown:
            raise ConfigError(f"{where}: undeclared variable(s) {unknown}")

    stages, eff_stages, stage_exhaustive = [], [], {}
    for i, st in enumerate(raw.get("stages") or []):
        where = f"stages[{i}]"
        _check_keys(st, {"name", "targets", "inputs", "epr", "ga"}, where)
        if not isinstance(st.get("name"), str):
            raise ConfigError(f"{where}.name is required")
        targets = _names(st.get("targets"), f"{where}.targets")
        inputs = _names(st.get("inputs"), f"{where}.inputs")
        check_declared(targets + inputs, where)
        s_epr = _epr_section(st.get("epr") or {}, epr, f"{where}.epr")
        if exhaustive is not None:
            s_epr["exhaustive"] = bool(exhaustive)
        s_ga = _ga_section(st.get("ga") or {}, ga, f"{where}.ga", allow_seed=False)
        stages.append(StageSpec(st["name"], tuple(targets), tuple(inputs),
                                epr_config(s_epr), ga_config(s_ga)))
        stage_exhaustive[st["name"]] = s_epr["exhaustive"]
        eff_stages.append({"name": st["name"], "targets": targets, "inputs": inputs,
                           "epr": s_epr, "ga": {k: v for k, v in s_ga.items() if k != "seed"}})
    names = [s.name for s in stages]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate stage names {names}")
    by_stage = {s.name: s for s in stages}

    selections, eff_selections = [], []
    for i, sel in enumerate(raw.get("selections") or []):
        where = f"selections[{i}]"
        _check_keys(sel, {"stage", "target", "model", "rationale"}, where)
        stage = by_stage.get(sel.get("stage"))
        if stage is None:
            raise ConfigError(f"{where}: unknown stage {sel.get('stage')!r}")
        if sel.get("target") not in stage.targets:
            raise ConfigError(f"{where}: {sel.get('target')!r} is not a target of {stage.name!r}")
        model = sel.get("model", "knee")
        if model != "knee" and (not isinstance(model, int) or isinstance(model, bool) or model < 1):
            raise ConfigError(f"{where}.model must be a 1-based front index or 'knee'")
        rationale = str(sel.get("rationale", ""))
        selections.append(ModelSelection(stage.name, sel["target"],
                                         None if model == "knee" else model, rationale))
        eff_selections.append({"stage": stage.name, "target": sel["target"], "model": model,
                               "rationale": rationale})
    keys = [(s.stage, s.target) for s in selections]
    if len(set(keys)) != len(keys):
        raise ConfigError("a (stage, target) pair is selected more than once")

    plan, eff_plan = None, None
    if raw.get("plan") is not None:
        p = raw["plan"]
        _check_keys(p, {"sources", "passthrough", "direct_links", "models", "fixed_models"}, "plan")
        sources = _names(p["sources"], "plan.sources") if "sources" in p else [
            v.name for v in variables if v.tier is Tier.MICRO
        ]
        passthrough = _names(p.get("passthrough", []), "plan.passthrough")
        direct = _names(p.get("direct_links", []), "plan.direct_links")
        models = p.get("models") or {}
        _check_keys(models, declared_set, "plan.models")
        for target, stage_name in models.items():
            stage = by_stage.get(stage_name)
            if stage is None:
                raise ConfigError(f"plan.models.{target}: unknown stage {stage_name!r}")
            if target not in stage.targets:
                raise ConfigError(f"plan.models.{target}: not a target of stage {stage_name!r}")
        fixed_raw = p.get("fixed_models") or {}
        _check_keys(fixed_raw, declared_set, "plan.fixed_models")
        both = sorted(set(models) & set(fixed_raw))
        if both:
            raise ConfigError(f"plan: {both} have both a stage model and a fixed model")
        fixed = {t: _fixed_model(m, declared_set, f"plan.fixed_models.{t}")
                 for t, m in fixed_raw.items()}
        check_declared(sources + passthrough, "plan")
        plan = PlanSection(tuple(sources), tuple(passthrough), tuple(direct), dict(models), fixed)
        eff_plan = {"sources": sources, "passthrough": passthrough, "direct_links": direct,
                    "models": dict(models),
                    "fixed_models": {t: fixed_model_to_dict(m) for t, m in fixed.items()}}

    corr = raw.get("correlation") or {}
    _check_keys(corr, {"variables"}, "correlation")
    corr_vars = _names(corr["variables"], "correlation.variables") if "variables" in corr else declared
    check_declared(corr_vars, "correlation.variables")

    effective = {
        "dataset": eff_dataset,
        "epr": epr,
        "ga": ga,
        "workers": workers,
        "stages": eff_stages,
        "selections": eff_selections,
        "plan": eff_plan,
        "correlation": {"variables": list(corr_vars)},
    }
    return RunConfig(
        effective=effective,
        base_dir=base_dir,
        dataset_path=dataset_path,
        delimiter=eff_dataset["delimiter"],
        missing=eff_dataset["missing"],
        variables=tuple(variables),
        epr=epr_config(epr),
        ga=ga_config(ga),
        exhaustive=epr["exhaustive"],
        workers=workers,
        stages=tuple(stages),
        stage_exhaustive=stage_exhaustive,
        selections=tuple(selections),
        plan=plan,
        correlation_variables=tuple(corr_vars),
    )
