"""Run configuration: defaults < config file < command-line flags.

Config files are flat ``key = value`` text, one pair per line, ``#`` starts a
comment.  Values are Python literals (``64``, ``1e-4``, ``(64, 64, 64)``,
``True``); anything that does not parse as a literal is kept as a string.

Keys
    every :class:`~srepnet.model.ModelConfig` field (``latent_dim``,
    ``learning_rate``, ``epochs``, ``image_dims``, ``rings``, ...) plus

    ``n``            number of samples to generate
    ``data_seed``    dataset seed (defaults to ``seed``)
    ``jobs``         worker processes for dataset generation
    ``subset``       fraction of the training partition to use (None = all)
    ``split``        manifest split scored by ``eval``
"""
from __future__ import annotations

import ast
import os
from dataclasses import dataclass, fields

from .model.config import ModelConfig

MODEL_KEYS = tuple(f.name for f in fields(ModelConfig))
RUN_DEFAULTS = {"n": 200, "data_seed": None, "jobs": 1, "subset": None, "split": "test"}


class ConfigError(ValueError):
    pass


def defaults() -> dict:
    model = ModelConfig()
    return {**{k: getattr(model, k) for k in MODEL_KEYS}, **RUN_DEFAULTS}


def parse_value(raw: str):
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw


def parse_config_text(text: str, source: str = "<config>") -> dict:
    known = set(defaults())
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = parse_value(raw.strip())
    return values


def read_config_file(path: str | os.PathLike) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), str(path))


@dataclass(frozen=True)
class RunConfig:
    command: str
    values: dict

    @classmethod
    def resolve(cls, command: str, file_values: dict | None = None, flags: dict | None = None) -> "RunConfig":
        merged = defaults()
        for layer in (file_values or {}, {k: v for k, v in (flags or {}).items() if v is not None}):
            unknown = set(layer) - set(merged)
            if unknown:
                raise ConfigError(f"unknown config keys {sorted(unknown)}")
            merged.update(layer)
        if merged["data_seed"] is None:
            merged["data_seed"] = merged["seed"]
        cfg = cls(command, merged)
        cfg.model_config()  # validates the model fields
        return cfg

    def __getitem__(self, key):
        return self.values[key]

    def model_config(self) -> ModelConfig:
        try:
            return ModelConfig(**{k: self.values[k] for k in MODEL_KEYS})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid model configuration: {exc}") from exc

    def to_text(self) -> str:
        lines = [f"# srepnet {self.command}"]
        lines += [f"{k} = {self.values[k]!r}" for k in sorted(self.values)]
        return "\n".join(lines) + "\n"

    def snapshot(self, directory: str | os.PathLike) -> str:
        """Write ``config_<command>.txt`` into ``directory``; it re-loads as a config file."""
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, f"config_{self.command.replace('-', '_')}.txt")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())
        return path
