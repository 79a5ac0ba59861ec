"""INI experiment configs: sectioned key/value files, diffable in provenance.

Unknown sections or keys are rejected by name so a typo never silently
falls back to a default.  CLI flags override file values; both funnel
through :func:`spec_from_config`.
"""

from __future__ import annotations

import configparser

from .experiments import DataSpec, ExperimentSpec
from .generators import GeneratorConfig, GeneratorKind, RotationSchedule

__all__ = ["ConfigError", "generator_config_from", "load_config_file",
           "spec_from_config"]


class ConfigError(ValueError):
    """Bad config file or override: message names the offending key."""


# section -> key -> parser
_PARSERS = {
    "experiment": {
        "name": str,
        "arms": lambda s: tuple(a.strip() for a in s.split(",") if a.strip()),
        "trials": int,
        "seed": int,
    },
    "dataset": {
        "kind": str,
        "data_dir": str,
        "train_size": int,
        "test_size": int,
        "dim": int,
        "classes": int,
        "center_scale": float,
        "noise": float,
        "label_noise": float,
    },
    "model": {
        "hidden": lambda s: tuple(int(v) for v in s.split(",") if v.strip()),
    },
    "train": {
        "epochs": int,
        "batch_size": int,
        "learning_rate": float,
    },
    "dropout": {
        "keep_p": float,
    },
    "schedule": {
        "mode": str,
        "values": lambda s: tuple(int(v) for v in s.split(",") if v.strip()),
    },
    "generator": {
        "kind": str,
        "n": int,
        "p": float,
        "seed": int,
        "lfsr_width": int,
        "lfsr_taps": lambda s: tuple(int(v) for v in s.split(",") if v.strip()),
        "sample_bits": int,
        "predefined": str,
    },
}


def load_config_file(path) -> dict:
    """Parse an INI file into {section: {key: parsed value}}, strictly."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    values: dict = {}
    for section in parser.sections():
        if section not in _PARSERS:
            raise ConfigError(
                f"{path}: unknown section [{section}]; expected one of "
                f"{sorted(_PARSERS)}")
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in _PARSERS[section]:
                raise ConfigError(
                    f"{path}: unknown key {key!r} in section [{section}]; expected one of "
                    f"{sorted(_PARSERS[section])}")
            try:
                values[section][key] = _PARSERS[section][key](raw)
            except ValueError as exc:
                raise ConfigError(
                    f"{path}: bad value for {section}.{key}: {raw!r} ({exc})") from exc
    return values


def spec_from_config(values: dict | None = None, **overrides) -> ExperimentSpec:
    """Build an ExperimentSpec from parsed config values plus flat overrides.

    Override names use the flat spelling of ExperimentSpec fields
    (``trials``, ``epochs``, ``seed``, ...) plus DataSpec fields prefixed
    by nothing (they do not collide).  None overrides are ignored.
    """
    values = values or {}
    data_kwargs = dict(values.get("dataset", {}))
    spec_kwargs = {}
    spec_kwargs.update(values.get("experiment", {}))
    spec_kwargs.update(values.get("model", {}))
    spec_kwargs.update(values.get("train", {}))
    spec_kwargs.update(values.get("dropout", {}))
    if "schedule" in values:
        sched = values["schedule"]
        if "mode" in sched:
            spec_kwargs["schedule_mode"] = sched["mode"]
        if "values" in sched:
            spec_kwargs["schedule_values"] = sched["values"]

    data_fields = set(DataSpec.__dataclass_fields__)
    spec_fields = set(ExperimentSpec.__dataclass_fields__) - {"data"}
    for key, value in overrides.items():
        if value is None:
            continue
        if key in data_fields:
            data_kwargs[key] = value
        elif key in spec_fields:
            spec_kwargs[key] = value
        else:
            raise ConfigError(f"unknown config override {key!r}")
    try:
        return ExperimentSpec(data=DataSpec(**data_kwargs), **spec_kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad experiment config: {exc}") from exc


def _build_schedule(mode: str, values, seed: int) -> RotationSchedule:
    if mode == "constant":
        return RotationSchedule.constant(values[0] if values else 1)
    if mode == "sequence":
        if not values:
            raise ConfigError("sequence schedule needs values")
        return RotationSchedule.sequence(values)
    if mode == "random":
        return RotationSchedule.random(seed)
    raise ConfigError(f"unknown schedule mode {mode!r}")


def generator_config_from(values: dict | None = None, **overrides) -> GeneratorConfig:
    """Build a GeneratorConfig from [generator]/[schedule] sections plus overrides.

    Override names: kind, n, p, seed, lfsr_width, lfsr_taps, sample_bits,
    predefined, schedule_mode, schedule_values.  None overrides are ignored.
    """
    values = values or {}
    merged = dict(kind="general", n=8, p=0.5, seed=0, lfsr_width=8,
                  lfsr_taps=None, sample_bits=None, predefined="exact",
                  schedule_mode="constant", schedule_values=(1,))
    merged.update(values.get("generator", {}))
    sched = values.get("schedule", {})
    if "mode" in sched:
        merged["schedule_mode"] = sched["mode"]
    if "values" in sched:
        merged["schedule_values"] = sched["values"]
    for key, value in overrides.items():
        if key not in merged:
            raise ConfigError(f"unknown generator override {key!r}")
        if value is not None:
            merged[key] = value
    try:
        schedule = _build_schedule(merged["schedule_mode"],
                                   merged["schedule_values"], merged["seed"])
        return GeneratorConfig(
            kind=GeneratorKind.parse(merged["kind"]),
            n=merged["n"],
            p=merged["p"],
            seed=merged["seed"],
            lfsr_width=merged["lfsr_width"],
            lfsr_taps=merged["lfsr_taps"],
            sample_bits=merged["sample_bits"],
            schedule=schedule,
            predefined=merged["predefined"],
        )
    except ValueError as exc:
        raise ConfigError(f"bad generator config: {exc}") from exc
