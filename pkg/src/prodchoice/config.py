"""Pipeline configuration: one declarative JSON file, validated up front.

String values may interpolate environment variables as ``${VAR}``. Any
key can be overridden from the environment with the PRODCHOICE_ prefix:
``PRODCHOICE_MODE`` for the top-level mode and
``PRODCHOICE_<SECTION>__<KEY>`` (double underscore) for nested keys, e.g.
``PRODCHOICE_SCORER__MODEL_ID``. API keys are environment-only
(PRODCHOICE_API_KEY) and never appear in the file.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .gateway import GatewayConfig

__all__ = ["PipelineConfig", "load_config", "DEFAULTS"]

_ENV_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")

_MODES = ("live", "record", "replay")
_CHANCE_LEVELS = ("candidates", "alternatives")
_TIE_POLICIES = ("strict", "mid")

DEFAULTS: dict[str, Any] = {
    "mode": "replay",
    "paths": {},
    "scorer": {
        "endpoint": None,
        "model_id": "gpt2",
        "context_window": 1024,
        "separator": "\n",
    },
    "generator": {
        "endpoint": None,
        "model_id": "gpt-4o",
        "temperature": 1.0,
    },
    "judge": {
        "model_id": "gpt-4o",
        "temperature": 0.0,
    },
    "fixtures": {"path": None},
    "generation": {
        "n_per_condition": 10,
        "n_paraphrases": 10,
        "max_refusal_retries": 2,
    },
    "history": {"token_budget": 1024},
    "seeds": {},
    "analysis": {
        "tie_policy": "strict",
        "chance_level": "candidates",
        "use_stratified": True,
    },
    "concurrency": 4,
}

# workdir-relative artifact names, one per stage output
STAGE_FILES = {
    "items": "items.jsonl",
    "alternatives": "alternatives.jsonl",
    "judged": "judged.jsonl",
    "summaries": "alternative_summaries.csv",
    "scored": "scored.jsonl",
    "costs": "costs.jsonl",
    "costs_csv": "costs.csv",
    "stratification": "stratification.json",
    "analysis_dir": "analysis",
    "report_dir": "report",
    "manifest": "manifest.json",
}


@dataclass
class PipelineConfig:
    mode: str
    raw: dict
    paths: dict[str, Path]
    gateway: GatewayConfig
    n_per_condition: int
    n_paraphrases: int
    token_budget: int
    seeds: dict[str, int]
    tie_policy: str
    chance_level: str
    use_stratified: bool
    source_path: Path | None = None

    def path(self, name: str) -> Path:
        return self.paths[name]


def _interpolate(value: Any) -> Any:
    if isinstance(value, str):
        def sub(m: re.Match) -> str:
            var = m.group(1)
            if var not in os.environ:
                raise ConfigError(f"config references unset env var ${{{var}}}")
            return os.environ[var]
        return _ENV_RE.sub(sub, value)
    if isinstance(value, dict):
        return {k: _interpolate(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_interpolate(v) for v in value]
    return value


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def _coerce(old: Any, raw: str) -> Any:
    if isinstance(old, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(old, int) and not isinstance(old, bool):
        return int(raw)
    if isinstance(old, float):
        return float(raw)
    return raw


def _apply_env_overrides(cfg: dict) -> dict:
    for name, value in os.environ.items():
        if not name.startswith("PRODCHOICE_") or name == "PRODCHOICE_API_KEY":
            continue
        rest = name[len("PRODCHOICE_"):]
        if rest == "MODE":
            cfg["mode"] = value
            continue
        if "__" not in rest:
            continue
        section, key = rest.split("__", 1)
        section = section.lower()
        key = key.lower()
        if section in cfg and isinstance(cfg[section], dict):
            cfg[section][key] = _coerce(cfg[section].get(key), value)
    return cfg


def load_config(path: str | Path | None = None,
                overrides: dict | None = None,
                mode: str | None = None,
                seed_overrides: dict[str, int] | None = None) -> PipelineConfig:
    """Load, interpolate, override and validate a pipeline config."""
    file_cfg: dict = {}
    source = None
    if path is not None:
        source = Path(path)
        if not source.exists():
            raise ConfigError(f"config file not found: {source}")
        try:
            file_cfg = json.loads(source.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}")
    cfg = _deep_merge(DEFAULTS, file_cfg)
    if overrides:
        cfg = _deep_merge(cfg, overrides)
    cfg = _interpolate(cfg)
    cfg = _apply_env_overrides(cfg)
    if mode:
        cfg["mode"] = mode
    if seed_overrides:
        cfg.setdefault("seeds", {}).update(seed_overrides)

    if cfg["mode"] not in _MODES:
        raise ConfigError(f"mode must be one of {_MODES}, got {cfg['mode']!r}")
    analysis = cfg["analysis"]
    if analysis["tie_policy"] not in _TIE_POLICIES:
        raise ConfigError(f"analysis.tie_policy must be one of {_TIE_POLICIES}")
    if analysis["chance_level"] not in _CHANCE_LEVELS:
        raise ConfigError(f"analysis.chance_level must be one of {_CHANCE_LEVELS}")

    base = source.parent if source else Path.cwd()
    paths: dict[str, Path] = {}
    raw_paths = cfg.get("paths", {})
    for key in ("transcripts", "annotations"):
        if key in raw_paths:
            paths[key] = (base / raw_paths[key]).resolve()
    workdir = (base / raw_paths.get("workdir", "work")).resolve()
    paths["workdir"] = workdir
    for key, fname in STAGE_FILES.items():
        paths[key] = (base / raw_paths[key]).resolve() if key in raw_paths \
            else workdir / fname

    fixtures_path = cfg["fixtures"].get("path")
    if cfg["mode"] in ("record", "replay") and not fixtures_path:
        raise ConfigError(f"mode {cfg['mode']!r} requires fixtures.path")
    if fixtures_path:
        fixtures_path = str((base / fixtures_path).resolve())

    gw = GatewayConfig(
        mode=cfg["mode"],
        scorer_endpoint=cfg["scorer"].get("endpoint"),
        scorer_model_id=cfg["scorer"]["model_id"],
        scorer_context_window=int(cfg["scorer"]["context_window"]),
        separator=cfg["scorer"]["separator"],
        generator_endpoint=cfg["generator"].get("endpoint"),
        generator_model_id=cfg["generator"]["model_id"],
        generator_temperature=float(cfg["generator"]["temperature"]),
        judge_model_id=cfg["judge"]["model_id"],
        judge_temperature=float(cfg["judge"]["temperature"]),
        fixtures_path=fixtures_path,
        max_refusal_retries=int(cfg["generation"]["max_refusal_retries"]),
        concurrency=int(cfg.get("concurrency", 4)),
    )

    seeds = {k: int(v) for k, v in cfg.get("seeds", {}).items()}
    return PipelineConfig(
        mode=cfg["mode"],
        raw=cfg,
        paths=paths,
        gateway=gw,
        n_per_condition=int(cfg["generation"]["n_per_condition"]),
        n_paraphrases=int(cfg["generation"]["n_paraphrases"]),
        token_budget=int(cfg["history"]["token_budget"]),
        seeds=seeds,
        tie_policy=analysis["tie_policy"],
        chance_level=analysis["chance_level"],
        use_stratified=bool(analysis["use_stratified"]),
        source_path=source,
    )


def require_seed(config: PipelineConfig, name: str) -> int:
    if name not in config.seeds:
        raise ConfigError(f"seeds.{name} is required for this stage")
    return config.seeds[name]
