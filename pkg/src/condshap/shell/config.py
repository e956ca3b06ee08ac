"""Flat key-value simulation config files.

Format: one ``key = value`` pair per line, ``#`` comments, UTF-8.  Unknown
keys are errors so that a config always means what it says.

Recognized keys (defaults in parentheses):

    name                experiment label ("")
    dimension           3 or 10 (3)
    features            gaussian | gh | mixture (gaussian)
    rho                 gaussian correlation (0.0)
    kappa               gh skewness ladder (1.0)
    gamma               mixture mode separation (1.0)
    model               linear | piecewise (linear)
    estimators          comma-separated estimator labels (original,gaussian)
    n_train             training rows per batch (2000)
    n_test              test rows per batch (100)
    batches             batch count (10)
    noise_sd            response noise (0.1)
    k                   per-coalition sample budget (1000)
    seed                master seed (0)
    quadrature_points   3-D truth grid per axis (64)
    quadrature_refine   true | false (true)
    n_mc                10-D truth draws per coalition (100000)
    d_star              combined-dispatch threshold (3)
    eta                 empirical weight-mass threshold (0.9)
    k_cap               empirical row cap (5000)
    n_aicc              AICc subsample size (400)
"""

from __future__ import annotations

from pathlib import Path

from ..errors import ConfigError
from ..samplers import SamplerSpec
from ..simlab.experiment import ExperimentConfig, FeatureFamily

_STR_KEYS = {"name", "features", "model", "estimators"}
_INT_KEYS = {
    "dimension",
    "n_train",
    "n_test",
    "batches",
    "k",
    "seed",
    "quadrature_points",
    "n_mc",
    "d_star",
    "k_cap",
    "n_aicc",
}
_FLOAT_KEYS = {"rho", "kappa", "gamma", "noise_sd", "eta"}
_BOOL_KEYS = {"quadrature_refine"}
KNOWN_KEYS = _STR_KEYS | _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS

_DEFAULTS = {
    "name": "",
    "dimension": 3,
    "features": "gaussian",
    "rho": 0.0,
    "kappa": 1.0,
    "gamma": 1.0,
    "model": "linear",
    "estimators": "original,gaussian",
    "n_train": 2000,
    "n_test": 100,
    "batches": 10,
    "noise_sd": 0.1,
    "k": 1000,
    "seed": 0,
    "quadrature_points": 64,
    "quadrature_refine": True,
    "n_mc": 100_000,
    "d_star": 3,
    "eta": 0.9,
    "k_cap": 5000,
    "n_aicc": 400,
}


def _parse_value(key: str, raw: str, path: str, line_no: int):
    raw = raw.strip()
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _BOOL_KEYS:
            if raw.lower() in ("true", "yes", "1"):
                return True
            if raw.lower() in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise ConfigError(
            f"{path}:{line_no}: cannot parse {key} = {raw!r}"
        ) from None


def parse_simulation_config(path: str | Path) -> ExperimentConfig:
    """Parse, validate, and materialize an ExperimentConfig."""
    path = Path(path)
    values = dict(_DEFAULTS)
    unknown: list[str] = []
    seen: set[str] = set()
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{line_no}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in KNOWN_KEYS:
            unknown.append(key)
            continue
        if key in seen:
            raise ConfigError(f"{path}:{line_no}: duplicate key {key!r}")
        seen.add(key)
        values[key] = _parse_value(key, raw, str(path), line_no)
    if unknown:
        raise ConfigError(f"{path}: unknown keys: {', '.join(sorted(unknown))}")

    overrides = {
        "d_star": values["d_star"],
        "eta": values["eta"],
        "k_cap": values["k_cap"],
        "n_aicc": values["n_aicc"],
    }
    try:
        estimators = tuple(
            SamplerSpec.from_label(label, **overrides)
            for label in str(values["estimators"]).split(",")
            if label.strip()
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    family = FeatureFamily(
        kind=str(values["features"]),
        rho=float(values["rho"]),
        kappa=float(values["kappa"]),
        gamma=float(values["gamma"]),
    )
    return ExperimentConfig(
        dimension=int(values["dimension"]),
        features=family,
        sampling_model=str(values["model"]),
        estimators=estimators,
        n_train=int(values["n_train"]),
        n_test_per_batch=int(values["n_test"]),
        batches=int(values["batches"]),
        noise_sd=float(values["noise_sd"]),
        k=int(values["k"]),
        seed=int(values["seed"]),
        quadrature_points=int(values["quadrature_points"]),
        quadrature_refine=bool(values["quadrature_refine"]),
        n_mc=int(values["n_mc"]),
        name=str(values["name"]),
    )
