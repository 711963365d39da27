"""Experiment configuration: defaults, INI round-trip, flag overrides, hashing.

One flat dataclass holds every knob of the pipeline; the INI file groups
them into sections ([phantom], [noise], [fit], [smoothing], [run],
[verify]). Every key can also be overridden by a same-named command-line
flag. ``config_hash`` digests the canonical JSON form so output files can
state exactly which configuration produced them.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .field import DEFAULT_SPACING
from .validation import DomainError

OUTDIR_ENV = "SPDSMOOTH_OUTDIR"

BANDWIDTH_GRID = (0.005, 0.01, 0.025, 0.035)
ANISO_PAIR_GRID = ((0.005, 0.01), (0.01, 0.01), (0.01, 0.025))


def _parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise DomainError("expected a boolean, got %r" % text)


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.replace(";", ",").split(",") if p.strip())


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.replace(";", ",").split(",") if p.strip())


def _parse_strs(text: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _parse_pairs(text: str) -> tuple[tuple[float, float], ...]:
    pairs = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(":")
        if len(parts) != 2:
            raise DomainError("bandwidth pair must look like h_iso:h_aniso, got %r" % chunk)
        pairs.append((float(parts[0]), float(parts[1])))
    return tuple(pairs)


def _fmt_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ";".join("%r:%r" % pair for pair in value)
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# (section, key) -> parser; order defines the INI layout and the CLI flags.
SCHEMA: dict[tuple[str, str], object] = {
    ("phantom", "dims"): _parse_ints,
    ("phantom", "spacing"): _parse_floats,
    ("phantom", "vertical_bands_x_oriented"): _parse_bool,
    ("noise", "noise_model"): str.strip,
    ("noise", "sigma"): float,
    ("noise", "s0"): float,
    ("noise", "repeats"): int,
    ("noise", "nu"): int,
    ("noise", "eta"): float,
    ("fit", "fit_method"): str.strip,
    ("fit", "project"): _parse_bool,
    ("fit", "failure_limit"): float,
    ("smoothing", "metrics"): _parse_strs,
    ("smoothing", "schemes"): _parse_strs,
    ("smoothing", "bandwidths"): _parse_floats,
    ("smoothing", "aniso_pairs"): _parse_pairs,
    ("smoothing", "truncation"): float,
    ("run", "seeds"): _parse_ints,
    ("run", "outdir"): str.strip,
    ("run", "threads"): int,
    ("run", "chunk_size"): int,
    ("verify", "family_size"): int,
    ("verify", "var_replicates"): int,
    ("verify", "bias_replicates"): int,
    ("verify", "mle_replicates"): int,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Every pipeline knob with its default value."""

    dims: tuple[int, ...] = (128, 128, 4)
    spacing: tuple[float, ...] = DEFAULT_SPACING
    vertical_bands_x_oriented: bool = False
    noise_model: str = "rician"
    sigma: float = 0.1
    s0: float = 10.0
    repeats: int = 2
    nu: int = 50
    eta: float = 0.1
    fit_method: str = "nonlinear"
    project: bool = True
    failure_limit: float = 0.01
    metrics: tuple[str, ...] = ("euclidean", "log_euclidean", "affine")
    schemes: tuple[str, ...] = ("isotropic",)
    bandwidths: tuple[float, ...] = BANDWIDTH_GRID
    aniso_pairs: tuple[tuple[float, float], ...] = ANISO_PAIR_GRID
    truncation: float = 1e-6
    seeds: tuple[int, ...] = (2,)
    outdir: str = field(
        default_factory=lambda: os.environ.get(OUTDIR_ENV, "spdsmooth-out")
    )
    threads: int = 1
    chunk_size: int = 4096
    family_size: int = 64
    var_replicates: int = 100_000
    bias_replicates: int = 1_000_000
    mle_replicates: int = 20_000

    def __post_init__(self):
        if len(self.dims) != 3 or any(d < 1 for d in self.dims):
            raise DomainError("dims must be three positive integers")
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise DomainError("spacing must be three positive reals")
        if self.noise_model not in ("rician", "spectral", "none"):
            raise DomainError("noise_model must be rician, spectral or none")
        if not self.seeds:
            raise DomainError("seeds must be non-empty")
        if not self.bandwidths:
            raise DomainError("bandwidths must be non-empty")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = [list(v) if isinstance(v, tuple) else v for v in value]
            out[f.name] = value
        return out

    def config_hash(self) -> str:
        """Digest of the experiment-defining keys.

        Execution knobs (outdir, threads, chunk_size) are excluded: they
        must not change any output byte, including this hash.
        """
        payload = self.to_dict()
        for key in ("outdir", "threads", "chunk_size"):
            payload.pop(key)
        canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def write_config(path, config: ExperimentConfig) -> None:
    """Write the INI form with all keys spelled out."""
    parser = configparser.ConfigParser()
    for (section, key), _ in SCHEMA.items():
        if section not in parser:
            parser[section] = {}
        parser[section][key] = _fmt_value(getattr(config, key))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        parser.write(fh)


def read_config(path) -> ExperimentConfig:
    """Parse an INI file; unknown sections or keys are an error."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise DomainError("cannot read config file %s" % path)
    known = {(s, k): parse for (s, k), parse in SCHEMA.items()}
    overrides = {}
    for section in parser.sections():
        for key, raw in parser[section].items():
            parse = known.get((section, key))
            if parse is None:
                raise DomainError(
                    "unknown config key [%s] %s in %s" % (section, key, path)
                )
            try:
                overrides[key] = parse(raw)
            except ValueError as exc:
                raise DomainError(
                    "bad value %r for config key %s: %s" % (raw, key, exc)
                ) from exc
    return ExperimentConfig(**overrides)


def apply_overrides(config: ExperimentConfig, values: dict[str, str]) -> ExperimentConfig:
    """Apply raw flag strings on top of a config; unknown keys rejected."""
    parsers = {key: parse for (_, key), parse in SCHEMA.items()}
    parsed = {}
    for key, raw in values.items():
        if raw is None:
            continue
        if key not in parsers:
            raise DomainError("unknown config override %r" % key)
        try:
            parsed[key] = parsers[key](raw)
        except ValueError as exc:
            raise DomainError("bad value %r for %s: %s" % (raw, key, exc)) from exc
    if not parsed:
        return config
    return replace(config, **parsed)
