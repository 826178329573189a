"""Hierarchical modelling across variable tiers.

Stages search for models of some variables from others (e.g. meso from
micro). Chosen models are assembled into a :class:`HierarchyPlan`, a DAG
rooted at measured source variables, which predicts the upper tiers from a
record of lower-tier measurements.
"""
from __future__ import annotations

import graphlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .dataset import Dataset, DatasetError, Tier, complete_cases, listwise_rows, tier_variables
from .evolution import EprConfig, EvolutionError, GaConfig, ParetoFront, evolve, exhaustive_search
from .expression import DomainError, FittedModel, term_value
from .metrics import CorrelationComparison, CorrelationMatrix, compare_correlations, correlation_matrix

log = logging.getLogger(__name__)

# R^2 a model must gain per extra coefficient to be preferred by select_knee.
KNEE_PRICE = 0.1


class PipelineError(ValueError):
    pass


class PlanError(PipelineError):
    pass


@dataclass(frozen=True)
class StageSpec:
    name: str
    targets: tuple[str, ...]
    inputs: tuple[str, ...]
    epr: EprConfig = field(default_factory=EprConfig)
    ga: GaConfig = field(default_factory=GaConfig)

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        overlap = set(self.targets) & set(self.inputs)
        if overlap:
            raise PipelineError(f"stage {self.name!r}: {sorted(overlap)} are both targets and inputs")
        if not self.targets or not self.inputs:
            raise PipelineError(f"stage {self.name!r} needs targets and inputs")


@dataclass
class StageResult:
    stage: StageSpec
    fronts: dict[str, ParetoFront]
    views: dict
    errors: dict[str, str]


def _search_target(dataset, stage: StageSpec, target: str, exhaustive: bool):
    view = complete_cases(dataset, target, stage.inputs)
    if exhaustive:
        return view, exhaustive_search(dataset, view, stage.epr)
    return view, evolve(dataset, view, stage.epr, stage.ga)


def run_stage(dataset: Dataset, stage: StageSpec, exhaustive: bool = False,
              workers: int = 1) -> StageResult:
    """One front per target, each on that target's own complete cases.

    Per-target failures are collected in ``errors``; other targets still run.
    """
    fronts, views, errors = {}, {}, {}

    def run(target):
        try:
            return target, _search_target(dataset, stage, target, exhaustive), None
        except (DatasetError, EvolutionError, DomainError) as exc:
            return target, None, str(exc)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, stage.targets))
    else:
        results = [run(t) for t in stage.targets]
    for target, out, err in results:
        if err is not None:
            log.warning("stage %s, target %s failed: %s", stage.name, target, err)
            errors[target] = err
        else:
            views[target], fronts[target] = out
    return StageResult(stage, fronts, views, errors)


def select_knee(front: ParetoFront, price: float = KNEE_PRICE) -> int:
    """1-based index of the model maximizing ``R^2 - price * (n_coefficients - 1)``.

    Ties go to the earlier (simpler) model.
    """
    if not len(front):
        raise PipelineError("cannot select from an empty front")
    scores = [
        m.model.fit.r_squared - price * (m.objectives.n_coefficients - 1) for m in front
    ]
    return int(np.argmax(scores)) + 1


@dataclass(frozen=True)
class ModelSelection:
    """Choice of one front member; ``model_index`` is 1-based, ``None`` means knee."""

    stage: str
    target: str
    model_index: Optional[int] = None
    rationale: str = ""

    def resolve(self, front: ParetoFront) -> tuple[int, FittedModel]:
        index = select_knee(front) if self.model_index is None else self.model_index
        if not 1 <= index <= len(front):
            raise PipelineError(
                f"selection {self.stage}/{self.target}: model {index} outside front of {len(front)}"
            )
        return index, front[index - 1].model


@dataclass(frozen=True)
class HierarchyPlan:
    """Selected models wired into an acyclic prediction graph.

    ``sources`` are measured base variables (normally the micro tier);
    ``passthrough`` variables are measured upper-tier quantities treated as
    independent inputs; ``direct_links`` names targets whose model must read
    source variables only.
    """

    stage_models: Mapping[str, FittedModel]
    sources: tuple[str, ...]
    passthrough: frozenset = frozenset()
    direct_links: frozenset = frozenset()
    order: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "stage_models", dict(self.stage_models))
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "passthrough", frozenset(self.passthrough))
        object.__setattr__(self, "direct_links", frozenset(self.direct_links))
        targets = set(self.stage_models)
        for name in sorted(targets & (set(self.sources) | self.passthrough)):
            raise PlanError(f"{name!r} is both a modelled target and a measured input")
        for name in sorted(self.direct_links - targets):
            raise PlanError(f"direct link {name!r} has no selected model")
        measured = set(self.sources) | self.passthrough
        graph = {}
        for target, model in self.stage_models.items():
            deps = set(model.used_variables)
            if target in self.direct_links:
                bad = deps - set(self.sources)
                if bad:
                    raise PlanError(f"direct link {target!r} uses non-source inputs {sorted(bad)}")
            unknown = deps - measured - targets
            if unknown:
                raise PlanError(
                    f"model for {target!r} needs {sorted(unknown)}, which are neither measured "
                    f"inputs nor targets with a selected model"
                )
            graph[target] = sorted(deps & targets)
        try:
            order = tuple(graphlib.TopologicalSorter(
                {t: graph[t] for t in sorted(graph)}
            ).static_order())
        except graphlib.CycleError as exc:
            raise PlanError(f"plan has a cycle: {' -> '.join(exc.args[1])}") from None
        object.__setattr__(self, "order", order)

    @classmethod
    def from_tiers(cls, dataset_or_schema, stage_models, passthrough=(), direct_links=(),
                   source_tier=Tier.MICRO) -> "HierarchyPlan":
        return cls(stage_models, tuple(tier_variables(dataset_or_schema, source_tier)),
                   frozenset(passthrough), frozenset(direct_links))

    @property
    def required_inputs(self) -> tuple[str, ...]:
        """Measured variables some model actually reads, sources first."""
        used = set()
        for model in self.stage_models.values():
            used |= set(model.used_variables)
        ordered = list(self.sources) + sorted(self.passthrough)
        return tuple(n for n in ordered if n in used)


def chain_predict(plan: HierarchyPlan, record: Mapping[str, float]) -> dict[str, float]:
    """Evaluate every planned model bottom-up from measured inputs."""
    for name in plan.required_inputs:
        x = record.get(name)
        if x is None or (isinstance(x, float) and math.isnan(x)):
            kind = "passthrough" if name in plan.passthrough else "source"
            raise PipelineError(f"record is missing {kind} variable {name!r}")
    values = {n: float(record[n]) for n in plan.required_inputs}
    predicted = {}
    for target in plan.order:
        model = plan.stage_models[target]
        try:
            y = model.evaluate(values)
        except DomainError as exc:
            raise PipelineError(f"model for {target!r} is not evaluable: {exc}") from None
        values[target] = predicted[target] = y
    return predicted


@dataclass(frozen=True)
class StudyResult:
    comparison: CorrelationComparison
    row_indices: tuple[int, ...]
    theoretical: Dataset


def correlation_study(dataset: Dataset, plan: HierarchyPlan,
                      variables: Sequence[str]) -> StudyResult:
    """Compare measured correlations with those of chain-predicted values.

    Both matrices use the same rows: those where every listed variable and
    every input the plan reads are present. Planned targets are replaced by
    their predictions; all other variables are copied through.
    """
    variables = tuple(variables)
    needed = tuple(dict.fromkeys(variables + plan.required_inputs))
    rows = listwise_rows(dataset, needed)
    if len(rows) < 2:
        raise PipelineError(f"only {len(rows)} rows have all of {list(needed)}")
    experimental = correlation_matrix(dataset, variables, row_indices=rows)
    experimental = CorrelationMatrix(experimental.variable_names, experimental.values,
                                     experimental.n_pairs, "listwise")

    measured = dataset.take(rows)
    predicted_rows = [chain_predict(plan, rec) for rec in measured.rows]
    theo = np.array(measured.values)
    for j, name in enumerate(measured.names):
        if name in plan.stage_models:
            theo[:, j] = [p[name] for p in predicted_rows]
    theoretical_ds = Dataset(measured.variables, theo, "chain_predict")
    theoretical = correlation_matrix(theoretical_ds, variables)
    theoretical = CorrelationMatrix(theoretical.variable_names, theoretical.values,
                                    theoretical.n_pairs, "listwise")
    return StudyResult(compare_correlations(experimental, theoretical), rows, theoretical_ds)


def derivative_sign_checks(target: str, model: FittedModel, dataset: Dataset,
                           matrix: CorrelationMatrix) -> list[str]:
    """Advisory lines comparing d(model)/d(input) at the input medians with
    the sign of the measured correlation."""
    lines = []
    names = model.structure.variable_names
    point = {}
    for name in model.used_variables:
        col = dataset.column(name)
        point[name] = float(np.nanmedian(col))
    for i, name in enumerate(names):
        if name not in point:
            continue
        try:
            grad = sum(
                a * row[i] * term_value(point, row, names) / point[name]
                for a, row in zip(model.coefficients, model.structure.exponents)
                if row[i] != 0.0
            )
            rho = matrix.get(target, name)
        except (DomainError, ValueError, ZeroDivisionError):
            lines.append(f"{target} vs {name}: not checkable")
            continue
        verdict = "agrees" if np.sign(grad) == np.sign(rho) else "DISAGREES"
        lines.append(
            f"{target} vs {name}: slope at median {grad:+.4g}, measured rho {rho:+.3f} -> {verdict}"
        )
    return lines
