"""Deterministic artifact files: fronts, curves, matrices, expressions.

Floats are written with ``repr`` (shortest round-trip form) and nothing
time- or host-dependent is recorded, so identical runs give identical bytes.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .evolution import FrontMember, ObjectiveVector, ParetoFront
from .expression import ExponentMatrix, FitDiagnostics, FittedModel, render, render_symbolic


def num(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([num(x) if isinstance(x, (float, np.floating)) else x for x in row])
    return path


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    return path


def model_to_dict(model: FittedModel) -> dict:
    out = {
        "variables": list(model.structure.variable_names),
        "exponents": [list(r) for r in model.structure.exponents],
        "coefficients": list(model.coefficients),
        "bias": model.bias,
    }
    if model.fit is not None:
        f = model.fit
        out["fit"] = {
            "sse": f.sse,
            "r_squared": f.r_squared,
            "n_rows": f.n_rows,
            "standard_errors": list(f.standard_errors),
            "bias_standard_error": f.bias_standard_error,
            "pruned_terms": list(f.pruned_terms),
            "condition_warning": f.condition_warning,
        }
    return out


def model_from_dict(d: dict) -> FittedModel:
    structure = ExponentMatrix(tuple(tuple(r) for r in d["exponents"]), tuple(d["variables"]))
    fit = None
    if "fit" in d:
        f = d["fit"]
        fit = FitDiagnostics(
            sse=f["sse"], r_squared=f["r_squared"], n_rows=f["n_rows"],
            standard_errors=tuple(f["standard_errors"]),
            bias_standard_error=f["bias_standard_error"],
            pruned_terms=tuple(f["pruned_terms"]),
            condition_warning=f["condition_warning"],
        )
    return FittedModel(structure, tuple(d["coefficients"]), d["bias"], fit)


def front_to_json(front: ParetoFront, target: str, inputs: Sequence[str]) -> str:
    payload = {
        "target": target,
        "inputs": list(inputs),
        "models": [
            {"objectives": list(m.objectives), **model_to_dict(m.model)} for m in front
        ],
    }
    return json.dumps(payload, indent=1, ensure_ascii=False)


def front_from_json(text: str) -> tuple[str, list[str], ParetoFront]:
    payload = json.loads(text)
    members = []
    for entry in payload["models"]:
        cost, n_coef, n_in = entry["objectives"]
        members.append(FrontMember(model_from_dict(entry), ObjectiveVector(cost, n_coef, n_in)))
    return payload["target"], payload["inputs"], ParetoFront(tuple(members))


def write_front(directory, front: ParetoFront, target: str, inputs: Sequence[str]) -> list[Path]:
    """front.csv, front.json, expressions.txt and r2_curve.csv for one target."""
    d = Path(directory)
    rows = []
    for i, m in enumerate(front, 1):
        fit = m.model.fit
        rows.append([
            i, m.objectives.n_coefficients, m.objectives.n_inputs, float(fit.sse),
            float(fit.r_squared), int(fit.condition_warning), render(m.model),
            render_symbolic(m.model.structure, m.model.bias is not None),
        ])
    header = ["model", "n_coefficients", "n_inputs", "sse", "r_squared",
              "condition_warning", "expression", "structure"]
    lines = [f"{target} from {', '.join(inputs)}"]
    lines += [f"{i:>3}  R2={round(m.model.fit.r_squared, 4) + 0.0:.4f}  {target} = {render(m.model)}"
              for i, m in enumerate(front, 1)]
    return [
        write_table(d / "front.csv", header, rows),
        write_text(d / "front.json", front_to_json(front, target, inputs)),
        write_text(d / "expressions.txt", "\n".join(lines)),
        write_table(d / "r2_curve.csv", ["model", "r_squared"],
                    [(i, float(r2)) for i, r2 in front.r2_curve()]),
    ]


def write_matrix(path, names: Sequence[str], values: np.ndarray) -> Path:
    rows = [[name] + [float(x) for x in values[i]] for i, name in enumerate(names)]
    return write_table(path, [""] + list(names), rows)


def format_matrix(names: Sequence[str], values: np.ndarray, width: int = 7) -> str:
    head = " " * width + "".join(f"{n:>{width}}" for n in names)
    lines = [head]
    for i, name in enumerate(names):
        lines.append(f"{name:>{width}}" + "".join(f"{x:>{width}.2f}" for x in values[i]))
    return "\n".join(lines)
