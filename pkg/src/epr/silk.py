"""Spider-silk worked example: three-tier schema, reference models, and a
synthetic silk-like data generator.

The reference models are selections made on real silk measurements; the
generator builds data in which they hold exactly (plus optional noise),
so searches and the chained study can be checked end to end.
"""
from __future__ import annotations

from importlib import resources

import numpy as np

from .dataset import Dataset, Tier, VariableSpec
from .expression import ExponentMatrix, FittedModel

MICRO = ("a", "b", "c")
MESO = ("A", "B", "C")
MACRO = ("𝔸", "𝔹", "ℂ", "𝔻")

SCHEMA = (
    VariableSpec("a", Tier.MICRO, "length of the MaSp1 repetitive region", "amino acids"),
    VariableSpec("b", Tier.MICRO, "length of the MaSp2 repetitive region", "amino acids"),
    VariableSpec("c", Tier.MICRO, "length of the MaSp1 polyalanine beta-sheet", "amino acids"),
    VariableSpec("A", Tier.MESO, "crystallinity", "-"),
    VariableSpec("B", Tier.MESO, "birefringence", "-"),
    VariableSpec("C", Tier.MESO, "thermal degradation temperature (1% loss)", "degC"),
    VariableSpec("𝔸", Tier.MACRO, "Young's modulus", "GPa"),
    VariableSpec("𝔹", Tier.MACRO, "tensile strength", "GPa"),
    VariableSpec("ℂ", Tier.MACRO, "diameter", "um"),
    VariableSpec("𝔻", Tier.MACRO, "maximum supercontraction", "-"),
)

# Sampling ranges of the synthetic measured inputs (uniform).
MICRO_RANGES = {"a": (1000.0, 4000.0), "b": (10.0, 100.0), "c": (5.0, 15.0)}
BIREFRINGENCE_RANGE = (20.0, 60.0)


def _model(names, rows, coefficients, bias=None) -> FittedModel:
    return FittedModel(ExponentMatrix(tuple(rows), tuple(names)), tuple(coefficients), bias)


# target -> (stage, 1-based front index of the selection on real data, model)
REFERENCE_MODELS = {
    "A": ("meso_from_micro", 2,
          _model(MICRO, [(0, -1, 0)], [3.5562], 0.10262)),
    "C": ("meso_from_micro", 4,
          _model(MICRO, [(-1, 0, 0), (1, 0, 0.5)], [3186.7046, 0.86787], 45.2672)),
    "𝔸": ("macro_from_meso", 4,
          _model(MESO, [(-1, 0.5, 0), (1, 0, 0)], [0.091301, 29.2668])),
    "𝔹": ("macro_from_meso", 5,
          _model(MESO, [(-1, 0.5, 0), (1, 0, 1)], [0.013837, 0.014276])),
    "ℂ": ("macro_from_meso", 4,
          _model(MESO, [(0.5, -1, 1)], [0.81928])),
    "𝔻": ("macro_from_micro", 3,
          _model(MICRO, [(0, 1, -1)], [0.061926], 0.0047393)),
}

# R^2 (percent) of the reference models on real silk data; report targets only.
REFERENCE_R2_PERCENT = {"A": 11.0, "C": 23.54, "𝔸": 9.01, "𝔹": 12.81, "ℂ": 22.37, "𝔻": 43.35}

PASSTHROUGH = ("B",)
DIRECT_LINKS = ("𝔻",)


def reference_model(target: str) -> FittedModel:
    return REFERENCE_MODELS[target][2]


def reference_plan_models() -> dict[str, FittedModel]:
    return {t: m for t, (_, _, m) in REFERENCE_MODELS.items()}


def make_silk_dataset(n_rows: int, seed: int, noise: float = 0.0,
                      missing_fraction: float = 0.0) -> Dataset:
    """Silk-like table in which the reference models hold.

    Micro inputs and birefringence are drawn uniformly. Each modelled column
    is computed from the *measured* columns below it, then perturbed by
    Gaussian noise with standard deviation ``noise * std(clean column)``, so
    ``noise`` is relative and comparable across variables. With
    ``missing_fraction`` every cell is independently blanked with that
    probability.
    """
    if n_rows < 1:
        raise ValueError("n_rows must be positive")
    if noise < 0 or not 0.0 <= missing_fraction < 1.0:
        raise ValueError("noise must be >= 0 and missing_fraction in [0, 1)")
    rng = np.random.default_rng(seed)
    cols = {name: rng.uniform(lo, hi, n_rows) for name, (lo, hi) in MICRO_RANGES.items()}
    cols["B"] = rng.uniform(*BIREFRINGENCE_RANGE, n_rows)

    def generate(target, inputs):
        X = np.column_stack([cols[n] for n in inputs])
        clean = reference_model(target).predict(X)
        sd = noise * float(np.std(clean))
        return clean + rng.normal(0.0, 1.0, n_rows) * sd if noise else clean

    for target in ("A", "C"):
        cols[target] = generate(target, MICRO)
    for target in ("𝔸", "𝔹", "ℂ"):
        cols[target] = generate(target, MESO)
    cols["𝔻"] = generate("𝔻", MICRO)

    values = np.column_stack([cols[v.name] for v in SCHEMA])
    if missing_fraction:
        values[rng.random(values.shape) < missing_fraction] = np.nan
    return Dataset(SCHEMA, values, f"synthetic silk (n={n_rows}, seed={seed}, noise={noise})")


def write_csv(dataset: Dataset, path, delimiter: str = ",", missing: str = "") -> None:
    """Write ``dataset`` so :func:`~epr.dataset.load_dataset` reads it back exactly."""
    lines = [delimiter.join(dataset.names)]
    for row in dataset.values:
        lines.append(delimiter.join(missing if np.isnan(x) else repr(float(x)) for x in row))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


# Parameters of the bundled example table.
BUNDLED = {"n_rows": 120, "seed": 20230901, "noise": 0.3, "missing_fraction": 0.05}


def bundled_files() -> dict[str, str]:
    """Names and text of the bundled example files."""
    pkg = resources.files("epr") / "data"
    return {
        entry.name: entry.read_text(encoding="utf-8")
        for entry in sorted(pkg.iterdir(), key=lambda e: e.name)
        if entry.name.endswith((".csv", ".yaml"))
    }

