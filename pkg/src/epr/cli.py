"""Command-line interface.

Every command reads a run configuration and writes its artifacts under
``<out>/<config-hash>-seed<seed>/``. Failures print one line
``error[<category>]: <detail>`` on stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Optional

from . import io
from .config import ConfigError, RunConfig, load_config
from .dataset import Dataset, DatasetError, complete_cases, load_dataset
from .evolution import EvolutionError, evolve, exhaustive_search
from .expression import ExpressionError, render
from .metrics import MetricError, correlation_matrix, mean_abs_correlation
from .pipeline import (
    HierarchyPlan, PipelineError, PlanError, StageResult, chain_predict, correlation_study,
    derivative_sign_checks, run_stage,
)
from .regression import RegressionError

log = logging.getLogger("epr")

EXIT_CODES = {"usage": 2, "config": 3, "dataset": 4, "search": 5, "plan": 6, "model": 7,
              "rank": 8, "metric": 9, "io": 10, "stage": 11}


class CliError(Exception):
    def __init__(self, category: str, detail: str):
        super().__init__(detail)
        self.category = category


def _category(exc: Exception) -> str:
    for types, name in (
        (ConfigError, "config"), (DatasetError, "dataset"), (PlanError, "plan"),
        (PipelineError, "plan"), (EvolutionError, "search"), (RegressionError, "search"),
        (ExpressionError, "model"), (MetricError, "metric"), (OSError, "io"),
    ):
        if isinstance(exc, types):
            return name
    raise exc


class Run:
    """A configured run bound to its content-addressed output directory."""

    def __init__(self, config: RunConfig, out):
        self.config = config
        self.dir = Path(out) / config.run_id()
        self.dir.mkdir(parents=True, exist_ok=True)
        io.write_text(self.dir / "config.effective.yaml", config.effective_yaml())
        self.dataset: Dataset = load_dataset(
            config.dataset_path, config.variables, config.delimiter, config.missing
        )
        self._stages: dict[str, StageResult] = {}
        self.written: list[Path] = [self.dir / "config.effective.yaml"]

    # -- stages -----------------------------------------------------------
    def _stage_dir(self, name: str) -> Path:
        return self.dir / "stages" / name

    def stage(self, name: str) -> StageResult:
        """Run a stage, or reload it from this run directory's cache."""
        if name in self._stages:
            return self._stages[name]
        spec = self.config.stage(name)
        d = self._stage_dir(name)
        index = d / "stage.json"
        if index.exists():
            meta = json.loads(index.read_text(encoding="utf-8"))
            fronts = {}
            for target in meta["targets"]:
                _, _, front = io.front_from_json((d / target / "front.json").read_text("utf-8"))
                fronts[target] = front
            result = StageResult(spec, fronts, {}, dict(meta["errors"]))
            log.info("stage %s loaded from %s", name, d)
        else:
            result = run_stage(self.dataset, spec, self.config.stage_exhaustive[name],
                               self.config.workers)
            for target, front in result.fronts.items():
                self.written += io.write_front(d / target, front, target, spec.inputs)
            if result.errors:
                self.written.append(io.write_table(
                    d / "errors.csv", ["target", "error"], sorted(result.errors.items())))
            self.written.append(io.write_text(index, json.dumps(
                {"targets": [t for t in spec.targets if t in result.fronts],
                 "errors": sorted(result.errors.items())}, indent=1, ensure_ascii=False)))
        self._stages[name] = result
        return result

    # -- plan -------------------------------------------------------------
    def plan(self):
        """Resolve selections into a :class:`HierarchyPlan`.

        Returns the plan and one record per planned target:
        ``(target, stage or 'fixed', model number or None, model, rationale)``.
        """
        section = self.config.plan
        if section is None:
            raise CliError("config", "the config has no plan section")
        models, chosen = {}, []
        for target, stage_name in section.models.items():
            result = self.stage(stage_name)
            if target not in result.fronts:
                raise PlanError(
                    f"stage {stage_name!r} produced no front for {target!r}: "
                    f"{result.errors.get(target, 'unknown failure')}"
                )
            sel = self.config.selection(stage_name, target)
            index, model = sel.resolve(result.fronts[target])
            rationale = sel.rationale or "default: knee of the R^2 curve"
            models[target] = model
            chosen.append((target, stage_name, index, model, rationale))
        for target, model in section.fixed_models.items():
            models[target] = model
            chosen.append((target, "fixed", None, model, "declared in config"))
        plan = HierarchyPlan(models, section.sources, frozenset(section.passthrough),
                             frozenset(section.direct_links))
        return plan, chosen


# -- commands ----------------------------------------------------------------
def cmd_fit(run: Run, target: str, inputs: list[str]) -> list[Path]:
    view = complete_cases(run.dataset, target, inputs)
    cfg = run.config
    if cfg.exhaustive:
        front = exhaustive_search(run.dataset, view, cfg.epr)
    else:
        front = evolve(run.dataset, view, cfg.epr, cfg.ga)
    bad = [i for i, m in enumerate(front, 1) if m.model.fit.condition_warning]
    if bad:
        raise CliError("rank", f"front models {bad} for {target!r} have rank-deficient designs")
    return io.write_front(run.dir / "fit" / target, front, target, inputs)


def cmd_stage(run: Run, name: str) -> list[Path]:
    result = run.stage(name)
    for target, err in sorted(result.errors.items()):
        print(f"warning[stage]: {name}/{target}: {err}", file=sys.stderr)
    if not result.fronts:
        raise CliError("stage", f"every target of stage {name!r} failed")
    return sorted(p for p in run._stage_dir(name).rglob("*") if p.is_file())


def _read_records(path: Path, missing: str = "") -> tuple[list[str], list[dict]]:
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = list(reader.fieldnames or [])
            records = []
            for lineno, row in enumerate(reader, start=1):
                rec = {}
                for name, cell in row.items():
                    cell = (cell or "").strip()
                    if cell == "" or cell == missing:
                        continue
                    try:
                        rec[name] = float(cell)
                    except ValueError:
                        raise DatasetError(
                            f"{path}: record {lineno}, column {name!r}: cannot parse {cell!r}"
                        ) from None
                records.append(rec)
    except OSError as exc:
        raise CliError("io", f"cannot read records {path}: {exc.strerror}") from None
    return header, records


def cmd_predict(run: Run, records_path: Path) -> list[Path]:
    plan, _ = run.plan()
    _, records = _read_records(records_path, run.config.missing)
    inputs = plan.required_inputs
    rows = []
    for i, rec in enumerate(records, 1):
        try:
            pred = chain_predict(plan, rec)
        except PipelineError as exc:
            raise type(exc)(f"record {i}: {exc}") from None
        rows.append([i] + [float(rec[n]) for n in inputs] + [float(pred[t]) for t in plan.order])
    return [io.write_table(run.dir / "predict" / "predictions.csv",
                           ["record"] + list(inputs) + list(plan.order), rows)]


def _study(run: Run):
    plan, chosen = run.plan()
    study = correlation_study(run.dataset, plan, run.config.correlation_variables)
    return plan, chosen, study


def cmd_correlate(run: Run) -> list[Path]:
    _, _, study = _study(run)
    return _write_study(run, study)


def _write_study(run: Run, study) -> list[Path]:
    d = run.dir / "correlation"
    c = study.comparison
    names = c.experimental.variable_names
    summary = [
        f"rows: {len(study.row_indices)}",
        f"mean_relative_error: {io.num(c.mean_relative_error)}",
    ]
    return [
        io.write_matrix(d / "experimental.csv", names, c.experimental.values),
        io.write_matrix(d / "theoretical.csv", names, c.theoretical.values),
        io.write_matrix(d / "relative_error.csv", names, c.relative_errors),
        io.write_table(d / "rows.csv", ["row"], [[r] for r in study.row_indices]),
        io.write_text(d / "summary.txt", "\n".join(summary)),
    ]


def _mean_abs_rho(dataset: Dataset, target: str, inputs) -> Optional[float]:
    try:
        m = correlation_matrix(dataset, (target,) + tuple(inputs))
        return mean_abs_correlation(m, target, inputs)
    except MetricError:
        return None


def cmd_report(run: Run) -> list[Path]:
    cfg = run.config
    ds = run.dataset
    out = [f"run {run.dir.name}",
           f"dataset {cfg.dataset_path.name}: {ds.n_rows} rows, {len(ds.names)} variables", ""]
    written = []
    for spec in cfg.stages:
        result = run.stage(spec.name)
        out.append(f"== stage {spec.name}: {', '.join(spec.targets)} from {', '.join(spec.inputs)}")
        curves = []
        for target in spec.targets:
            rho = _mean_abs_rho(ds, target, spec.inputs)
            rho_text = "n/a" if rho is None else f"{rho:.2f}"
            if target in result.errors:
                out.append(f"-- {target}: FAILED ({result.errors[target]})")
                continue
            front = result.fronts[target]
            n_rows = front[0].model.fit.n_rows
            out.append(f"-- {target}: {n_rows} rows, mean |rho| with inputs {rho_text}")
            for i, m in enumerate(front, 1):
                out.append(f"   {i:>3}  R2={round(m.model.fit.r_squared, 4) + 0.0:7.4f}  "
                           f"k={m.objectives.n_coefficients}  {render(m.model)}")
                curves.append((target, i, float(m.model.fit.r_squared)))
        written.append(io.write_table(run.dir / "report" / f"r2_curves_{spec.name}.csv",
                                      ["target", "model", "r_squared"], curves))
        out.append("")

    if cfg.plan is not None:
        plan, chosen, study = _study(run)
        out.append("== selected expressions")
        out.append(f"{'target':<8}{'stage':<20}{'model':>6}{'R2(%)':>9}  expression")
        for target, stage, index, model, rationale in chosen:
            r2 = "" if model.fit is None else f"{100 * model.fit.r_squared:.2f}"
            number = "-" if index is None else str(index)
            out.append(f"{target:<8}{stage:<20}{number:>6}{r2:>9}  {target} = {render(model)}")
            out.append(f"{'':<8}rationale: {rationale}")
        out.append("")
        out.append(f"plan order: {' -> '.join(plan.order)}; passthrough "
                   f"{sorted(plan.passthrough)}; direct links {sorted(plan.direct_links)}")
        out.append("")
        c = study.comparison
        names = c.experimental.variable_names
        out.append(f"== correlation study on {len(study.row_indices)} complete rows")
        for title, values in (("experimental", c.experimental.values),
                              ("theoretical", c.theoretical.values),
                              ("relative error", c.relative_errors)):
            out.append(f"-- {title}")
            out.append(io.format_matrix(names, values))
        out.append(f"mean relative error: {c.mean_relative_error:.4f}")
        out.append("")
        out.append("== advisory: slope sign vs measured correlation")
        try:
            full = correlation_matrix(ds, ds.names)
        except MetricError as exc:
            out.append(f"not available: {exc}")
        else:
            for target, _, _, model, _ in chosen:
                out += derivative_sign_checks(target, model, ds, full)
        written += _write_study(run, study)
    written.append(io.write_text(run.dir / "report" / "report.txt", "\n".join(out)))
    return written


def cmd_example(directory: Path) -> list[Path]:
    from .silk import bundled_files

    written = []
    for name, text in bundled_files().items():
        written.append(io.write_text(Path(directory) / name, text))
    return written


# -- entry point ---------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", required=True, type=Path, help="run configuration (YAML)")
    common.add_argument("--out", "-o", type=Path, default=Path("runs"),
                        help="parent of the run directory (default: ./runs)")
    common.add_argument("--seed", type=int, help="override ga.seed")
    common.add_argument("--exhaustive", action="store_true",
                        help="enumerate every structure instead of running the GA")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="epr", description="Evolutionary polynomial regression")
    sub = p.add_subparsers(dest="command", required=True)
    f = sub.add_parser("fit", parents=[common], help="search one target and write its front")
    f.add_argument("--target", required=True)
    f.add_argument("--inputs", required=True, nargs="+")
    s = sub.add_parser("stage", parents=[common], help="run a configured stage")
    s.add_argument("--stage", required=True)
    pr = sub.add_parser("predict", parents=[common], help="chain-predict records from a CSV")
    pr.add_argument("--records", required=True, type=Path)
    sub.add_parser("correlate", parents=[common], help="theoretical vs measured correlations")
    sub.add_parser("report", parents=[common], help="run everything and write report.txt")
    e = sub.add_parser("example", help="write the bundled silk example files")
    e.add_argument("directory", type=Path)
    return p


def _dispatch(args) -> list[Path]:
    if args.command == "example":
        return cmd_example(args.directory)
    config = load_config(args.config, seed=args.seed, exhaustive=True if args.exhaustive else None)
    run = Run(config, args.out)
    log.info("run directory %s", run.dir)
    if args.command == "fit":
        return cmd_fit(run, args.target, args.inputs)
    if args.command == "stage":
        return cmd_stage(run, args.stage)
    if args.command == "predict":
        return cmd_predict(run, args.records)
    if args.command == "correlate":
        return cmd_correlate(run)
    return cmd_report(run)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = {0: logging.WARNING, 1: logging.INFO}.get(getattr(args, "verbose", 0), logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        paths = _dispatch(args)
    except CliError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return EXIT_CODES[exc.category]
    except Exception as exc:  # noqa: BLE001 - mapped to a category or re-raised
        category = _category(exc)
        detail = " ".join(str(exc).split())
        print(f"error[{category}]: {detail}", file=sys.stderr)
        return EXIT_CODES[category]
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
