"""Layered run configuration: INI file < environment < command-line overrides.

Sections map onto the dataclasses that consume them.  Environment
overrides use ``EEGCODEC__SECTION__KEY=value``; ``EEGCODEC_SEED`` sets the
global seed.  Unknown sections or keys are rejected.
"""

from __future__ import annotations

import ast
import configparser
import dataclasses
import io
import os
from pathlib import Path

from . import __version__
from .codec import CodecConfig
from .errors import ConfigError
from .evaluation.bitrate import BitrateSpec
from .multichannel import McConfig
from .preprocess import PreprocessConfig
from .rvq import RVQConfig
from .training import LossWeights, TrainConfig


@dataclasses.dataclass
class PathsConfig:
    data: str = ""
    out: str = "runs"
    model: str = ""


@dataclasses.dataclass
class RunSection:
    seed: int = 0
    model_kind: str = "sc"  # sc | mc
    mode: str = "sc"
    task: str = "epilepsy"


SECTIONS = {
    "run": RunSection,
    "paths": PathsConfig,
    "prep": PreprocessConfig,
    "codec": CodecConfig,
    "rvq": RVQConfig,
    "mc": McConfig,
    "train": TrainConfig,
    "loss": LossWeights,
    "bitrate": BitrateSpec,
}
ENV_PREFIX = "EEGCODEC__"


def _parse(value: str):
    low = value.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return ast.literal_eval(value.strip())
    except (ValueError, SyntaxError):
        return value.strip()


def _format(value) -> str:
    if isinstance(value, tuple):
        value = list(value)
    return repr(value) if not isinstance(value, str) else value


class RunConfig:
    """Raw string layers plus typed section objects built on demand."""

    def __init__(self, values: dict[str, dict[str, str]] | None = None):
        self.values: dict[str, dict[str, str]] = {s: {} for s in SECTIONS}
        for sec, kv in (values or {}).items():
            for k, v in kv.items():
                self.set(sec, k, v)

    def set(self, section: str, key: str, value: str) -> None:
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        names = {f.name for f in dataclasses.fields(SECTIONS[section])}
        if key not in names:
            raise ConfigError(f"unknown config key {section}.{key}")
        self.values[section][key] = str(value)

    def section(self, name: str):
        cls = SECTIONS[name]
        kwargs = {k: _parse(v) for k, v in self.values[name].items()}
        if name == "paths":
            kwargs = {k: str(v) for k, v in self.values[name].items()}
        if name == "train" and "init_checkpoint" in kwargs:
            kwargs["init_checkpoint"] = self.values[name]["init_checkpoint"]
        if name == "rvq" and "vocab_sizes" in kwargs and "n_books" in kwargs:
            if isinstance(kwargs["vocab_sizes"], int):
                kwargs["vocab_sizes"] = [kwargs["vocab_sizes"]] * kwargs["n_books"]
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"[{name}]: {exc}") from None

    @property
    def seed(self) -> int:
        return self.section("run").seed

    def train_config(self) -> TrainConfig:
        cfg = self.section("train")
        if "seed" not in self.values["train"]:
            cfg.seed = self.seed
        return cfg

    def resolved(self) -> dict[str, dict[str, str]]:
        """Every key of every section, defaults filled in."""
        out = {}
        for name in SECTIONS:
            obj = self.section(name)
            out[name] = {f.name: _format(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        return out

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for name, kv in self.resolved().items():
            cp[name] = kv
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def write_beside(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "resolved_config.ini").write_text(self.to_ini())
        (out / "run_info.txt").write_text(f"seed={self.seed}\nversion={__version__}\n")
        return out / "resolved_config.ini"


def load_run_config(path=None, env: dict[str, str] | None = None, overrides: list[str] | None = None) -> RunConfig:
    cfg = RunConfig()
    if path:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            read = cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not read:
            raise ConfigError(f"config file {path} not found")
        for sec in cp.sections():
            for k, v in cp[sec].items():
                cfg.set(sec, k, v)
    env = os.environ if env is None else env
    if "EEGCODEC_SEED" in env:
        cfg.set("run", "seed", env["EEGCODEC_SEED"])
    for var, v in sorted(env.items()):
        if var.startswith(ENV_PREFIX):
            parts = var[len(ENV_PREFIX):].lower().split("__")
            if len(parts) != 2:
                raise ConfigError(f"malformed override variable {var}")
            cfg.set(parts[0], parts[1], v)
    for item in overrides or []:
        key, sep, v = item.partition("=")
        sec, dot, k = key.partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        cfg.set(sec.strip(), k.strip(), v)
    return cfg
