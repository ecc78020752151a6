"""TOML configuration for measures, simulations and experiments.

Keys::

    kingman = 0.0
    atoms = [[0.5, 1.0]]                       # [x, weight] pairs
    [density]
    family = "power_beta"                      # uniform | custom_table | log_power
    params = {c = 1.0, beta = 0.5}             # custom_table: {file = "f.txt"} or {xs, ys}
    [mu]
    family = "power"                           # log | geometric | finite | composite
    params = {b = 0.2, alpha = 0.5}
    # finite: pmf = [[1, 0.5], [3, 0.1]]; composite: pmf = [...] plus tail = {family, params}
    [sim]
    initial_n = 1000
    horizon = 5.0
    [experiment]
    replicas = 1000
    seed_root = 1
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields

import tomli

from .measures import (CoalescenceMeasure, CompositeSplitting, FiniteSplitting,
                       GeometricSplitting, LogPowerDensity, LogSplitting, ParameterError,
                       PowerDensity, PowerLawSplitting, SplittingMeasure, TableDensity,
                       validate_coalescence, validate_splitting)
from .simulator import SimConfig

__all__ = ["ConfigError", "ModelConfig", "load_config", "parse_config", "coalescence_from",
           "splitting_from", "sim_config_from"]


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    lam: CoalescenceMeasure
    mu: SplittingMeasure | None
    sim: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def _density_from(d: dict, base: str):
    fam = d.get("family")
    p = dict(d.get("params", {}))
    try:
        if fam == "power_beta":
            return PowerDensity(float(p.get("c", 1.0)), float(p["beta"]))
        if fam == "uniform":
            return PowerDensity(float(p.get("c", 1.0)), 0.0)
        if fam == "log_power":
            return LogPowerDensity(float(p.get("c", 1.0)), float(p.get("gamma", 0.0)))
        if fam == "custom_table":
            if "file" in p:
                return TableDensity.from_file(os.path.join(base, p["file"]))
            return TableDensity(tuple(map(float, p["xs"])), tuple(map(float, p["ys"])))
    except KeyError as e:
        raise ConfigError(f"density family {fam!r} is missing parameter {e}") from None
    raise ConfigError(f"unknown density family {fam!r}")


def coalescence_from(raw: dict, base: str = ".") -> CoalescenceMeasure:
    atoms = tuple((float(x), float(w)) for x, w in raw.get("atoms", []))
    dens = _density_from(raw["density"], base) if "density" in raw else None
    return CoalescenceMeasure(kingman=float(raw.get("kingman", 0.0)), atoms=atoms, density=dens,
                              name=str(raw.get("name", "config")))


def splitting_from(d: dict | None) -> SplittingMeasure | None:
    if not d:
        return None
    fam = d.get("family")
    p = dict(d.get("params", {}))
    try:
        if fam == "power":
            return PowerLawSplitting(float(p["b"]), float(p["alpha"]))
        if fam == "log":
            return LogSplitting(float(p["b"]), float(p["alpha"]))
        if fam == "geometric":
            return GeometricSplitting(float(p.get("mass", 1.0)), float(p["q"]))
        if fam == "finite" or (fam is None and "pmf" in d):
            return FiniteSplitting(tuple((int(k), float(w)) for k, w in d["pmf"]))
        if fam == "composite":
            pmf = dict((int(k), float(w)) for k, w in d["pmf"])
            prefix = tuple(pmf.get(k, 0.0) for k in range(1, max(pmf) + 1))
            return CompositeSplitting(prefix, splitting_from(d["tail"]))
    except KeyError as e:
        raise ConfigError(f"mu family {fam!r} is missing {e}") from None
    raise ConfigError(f"unknown mu family {fam!r}")


def sim_config_from(d: dict, **overrides) -> SimConfig:
    names = {f.name for f in fields(SimConfig)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown sim keys: {sorted(unknown)}")
    kw = {**d, **{k: v for k, v in overrides.items() if v is not None}}
    for k in ("initial_n", "n_max", "floor", "max_jumps", "seed"):
        if k in kw:
            kw[k] = int(kw[k])
    return SimConfig(**kw)


def parse_config(text: str, base: str = ".") -> ModelConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as e:
        raise ConfigError(str(e)) from None
    try:
        lam = coalescence_from(raw, base)
        mu = splitting_from(raw.get("mu"))
    except ParameterError as e:
        raise ConfigError(str(e)) from None
    reports = [validate_coalescence(lam)] + ([validate_splitting(mu)] if mu is not None else [])
    failed = [c.name for r in reports for c in r.failed()]
    if failed:
        raise ConfigError(f"measure validation failed: {', '.join(failed)}")
    return ModelConfig(lam, mu, dict(raw.get("sim", {})), dict(raw.get("experiment", {})), raw)


def load_config(path) -> ModelConfig:
    with open(path, "rb") as fh:
        text = fh.read().decode()
    return parse_config(text, os.path.dirname(os.path.abspath(path)))
