"""Plain-text config files: INI-style ``key = value`` sections.

Two schemas share one format (see README for the full key list):

* world configs have a single ``[world]`` section mapping to WorldSpec;
* run configs have an optional ``[run]`` section of defaults plus one
  ``[pipeline <name>]`` section per pipeline.

Unknown keys are rejected so typos fail loudly; command-line flags
override config values.
"""

from __future__ import annotations

from configparser import ConfigParser
from pathlib import Path

from .harness import PipelineConfig
from .scoring import CalibrationParams, EnsembleWeights
from .synthgen import WorldSpec


class ConfigError(ValueError):
    pass


def _read(path: str | Path) -> ConfigParser:
    parser = ConfigParser()
    text = Path(path).read_text(encoding="utf-8")
    parser.read_string(text, source=str(path))
    return parser


def _int_list(raw: str) -> list[int]:
    return [int(tok) for tok in raw.replace(",", " ").split()]


_WORLD_KEYS = {
    "catalog_size": int, "user_count": int, "embed_dim": int, "latent_dim": int,
    "zipf_exponent": float, "alignment": float, "gt_per_user": int,
    "gt_popularity_mix": float, "scorer_signal": float, "scorer_item_bias": float,
    "scorer_length_bias": float, "seed": int, "pop_draws_per_item": int,
}


def world_spec_from_config(path: str | Path, seed: int | None = None) -> WorldSpec:
    parser = _read(path)
    if not parser.has_section("world"):
        raise ConfigError(f"{path}: missing [world] section")
    section = parser["world"]
    kwargs = {}
    for key, raw in section.items():
        if key not in _WORLD_KEYS:
            raise ConfigError(f"{path}: unknown world key {key!r}")
        kwargs[key] = _WORLD_KEYS[key](raw)
    if seed is not None:
        kwargs["seed"] = seed
    try:
        return WorldSpec(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


_RUN_INT_KEYS = {"n_users", "pool_size", "k", "workers"}
_RUN_INT_LIST_KEYS = {"seeds", "recall_cutoffs", "pool_sizes"}
_RUN_PATH_KEYS = {"catalog", "users", "embeddings", "queries", "scores", "out"}
_RUN_BOOL_KEYS = {"export_pools", "gt_positions"}
_RUN_KEYS = _RUN_INT_KEYS | _RUN_INT_LIST_KEYS | _RUN_PATH_KEYS | _RUN_BOOL_KEYS
_PIPELINE_KEYS = {"retriever", "reranker", "pool_size", "k", "alpha", "beta", "gamma",
                  "temperature", "platt_a", "platt_b"}


def run_settings_from_config(path: str | Path) -> tuple[dict, list[PipelineConfig]]:
    """Returns ({run defaults}, [pipeline configs]) from a run config file.

    Every run/ablate command-line flag has a key here; flags win on
    conflict.
    """
    parser = _read(path)
    defaults: dict = {}
    if parser.has_section("run"):
        section = parser["run"]
        for key, raw in section.items():
            if key not in _RUN_KEYS:
                raise ConfigError(f"{path}: unknown run key {key!r}")
            if key in _RUN_INT_LIST_KEYS:
                defaults[key] = _int_list(raw)
            elif key in _RUN_PATH_KEYS:
                defaults[key] = raw.strip()
            elif key in _RUN_BOOL_KEYS:
                defaults[key] = section.getboolean(key)
            else:
                defaults[key] = int(raw)
    pipelines: list[PipelineConfig] = []
    for section_name in parser.sections():
        if section_name == "run":
            continue
        if not section_name.startswith("pipeline "):
            if section_name == "world":
                continue
            raise ConfigError(f"{path}: unexpected section [{section_name}]")
        name = section_name[len("pipeline "):].strip()
        section = parser[section_name]
        for key in section:
            if key not in _PIPELINE_KEYS:
                raise ConfigError(f"{path}: unknown pipeline key {key!r} in [{section_name}]")
        if "retriever" not in section:
            raise ConfigError(f"{path}: [{section_name}] needs a retriever")
        weights = None
        if any(k in section for k in ("alpha", "beta", "gamma")):
            base = EnsembleWeights()
            weights = EnsembleWeights(
                alpha=section.getfloat("alpha", base.alpha),
                beta=section.getfloat("beta", base.beta),
                gamma=section.getfloat("gamma", base.gamma),
            )
        calibration = None
        if any(k in section for k in ("temperature", "platt_a", "platt_b")):
            calibration = CalibrationParams(
                temperature=section.getfloat("temperature", 1.0),
                platt_a=section.getfloat("platt_a", 1.0),
                platt_b=section.getfloat("platt_b", 0.0),
            )
        pipelines.append(PipelineConfig(
            name=name,
            retriever=section["retriever"],
            reranker=section.get("reranker", "none"),
            pool_size=section.getint("pool_size", defaults.get("pool_size", 1000)),
            k=section.getint("k", defaults.get("k", 10)),
            calibration=calibration,
            ensemble_weights=weights,
        ))
    return defaults, pipelines
