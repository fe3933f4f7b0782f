"""Benchmark run configuration: JSON schema, defaults, validation, hashing.

Minimal config:

    {"data_dir": "path/to/candles", "models": ["gaussian", "pca:ev90"]}

Full schema (defaults shown):

    {
      "data_dir":        "<required>",
      "out_dir":         null,          // overridable with `ctbench run --out`
      "start":           null,          // ISO instant, clips the loaded range
      "end":             null,
      "window_hours":    12000,         // 500 days of training
      "seed":            0,
      "fees":            [0.0, 0.0003],
      "initial_capital": 10000.0,
      "models":          [...],         // default model list for both tasks
      "tasks": {
        "predictive_utility": {
          "step_hours": 720,            // 30-day test windows
          "models": null,               // null -> top-level models
          "strategies": ["half_ls", "csm", "lotq", "pw"],
          "forecaster": {"algorithm": "gbdt", "trees": 100, "depth": 3,
                          "learning_rate": 0.1, "subsample": 1.0,
                          "min_samples_leaf": 1, "ridge_lambda": 0.0001,
                          "seed": 0}
        },
        "stat_arb": {
          "step_hours": 360,            // 15-day test windows
          "models": null,
          "gamma": 2.0
        }
      }
    }

When "tasks" is present only the listed tasks run. Unknown keys are rejected
at every level. The config hash covers every semantically meaningful field
(everything except out_dir) and is stable across re-serialization.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import InvalidValue, ParseError, UnknownKey
from .forecasting import ForecasterConfig
from .tasks import DEFAULT_GAMMA, PREDICTIVE_UTILITY, STAT_ARB

DEFAULT_WINDOW_HOURS = 12_000
DEFAULT_PREDICTIVE_STEP = 720
DEFAULT_STAT_ARB_STEP = 360
DEFAULT_FEES = (0.0, 0.0003)
DEFAULT_STRATEGIES = ("half_ls", "csm", "lotq", "pw")


@dataclass(frozen=True)
class TaskSettings:
    task: str
    step_hours: int
    models: tuple[str, ...]
    strategies: tuple[str, ...]
    gamma: float
    forecaster: ForecasterConfig


@dataclass(frozen=True)
class BenchConfig:
    data_dir: str
    models: tuple[str, ...]
    out_dir: str | None = None
    start: str | None = None
    end: str | None = None
    window_hours: int = DEFAULT_WINDOW_HOURS
    seed: int = 0
    fees: tuple[float, ...] = DEFAULT_FEES
    initial_capital: float = 10_000.0
    tasks: tuple[TaskSettings, ...] = ()

    def resolved_dict(self) -> dict:
        """Canonical form of every semantically meaningful field."""
        return {
            "data_dir": self.data_dir,
            "start": self.start,
            "end": self.end,
            "window_hours": self.window_hours,
            "seed": self.seed,
            "fees": list(self.fees),
            "initial_capital": self.initial_capital,
            "models": list(self.models),
            "tasks": {
                t.task: {
                    "step_hours": t.step_hours,
                    "models": list(t.models),
                    "strategies": list(t.strategies),
                    "gamma": t.gamma,
                    "forecaster": dataclasses.asdict(t.forecaster),
                }
                for t in self.tasks
            },
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.resolved_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _require_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise UnknownKey(f"{where}: unknown key(s) {sorted(unknown)}")


def _positive_int(value, name: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise InvalidValue(f"{name} must be a positive integer, got {value!r}")
    return value


def _model_list(value, name: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not value or not all(isinstance(m, str) for m in value):
        raise InvalidValue(f"{name} must be a non-empty list of model specs")
    return tuple(value)


def _parse_forecaster(section: dict) -> ForecasterConfig:
    allowed = {f.name for f in dataclasses.fields(ForecasterConfig)}
    _require_keys(section, allowed, "forecaster")
    try:
        return ForecasterConfig(**section)
    except (ValueError, TypeError) as exc:
        raise InvalidValue(f"forecaster: {exc}") from exc


def _parse_task(task: str, section: dict, default_models: tuple[str, ...] | None) -> TaskSettings:
    if task == PREDICTIVE_UTILITY:
        allowed = {"step_hours", "models", "strategies", "forecaster"}
        default_step = DEFAULT_PREDICTIVE_STEP
    elif task == STAT_ARB:
        allowed = {"step_hours", "models", "gamma"}
        default_step = DEFAULT_STAT_ARB_STEP
    else:
        raise UnknownKey(f"tasks: unknown task {task!r}")
    _require_keys(section, allowed, f"tasks.{task}")

    step = _positive_int(section.get("step_hours", default_step), f"tasks.{task}.step_hours")
    if section.get("models") is not None:
        models = _model_list(section["models"], f"tasks.{task}.models")
    elif default_models:
        models = default_models
    else:
        raise InvalidValue(f"tasks.{task}: no models given and no top-level models list")

    strategies = DEFAULT_STRATEGIES
    if task == PREDICTIVE_UTILITY and "strategies" in section:
        raw = section["strategies"]
        if (not isinstance(raw, list) or not raw
                or not all(isinstance(s, str) for s in raw)):
            raise InvalidValue(f"tasks.{task}.strategies must be a non-empty list of names")
        strategies = tuple(raw)

    gamma = DEFAULT_GAMMA
    if task == STAT_ARB and "gamma" in section:
        gamma = section["gamma"]
        if not isinstance(gamma, (int, float)) or isinstance(gamma, bool) or gamma <= 0:
            raise InvalidValue(f"tasks.{task}.gamma must be > 0")
        gamma = float(gamma)

    forecaster = _parse_forecaster(section.get("forecaster", {})) \
        if task == PREDICTIVE_UTILITY else ForecasterConfig()
    return TaskSettings(task, step, models, strategies, gamma, forecaster)


_TOP_KEYS = {
    "data_dir", "out_dir", "start", "end", "window_hours", "seed", "fees",
    "initial_capital", "models", "tasks",
}


def load_config(raw: dict, base_dir: Path | None = None) -> BenchConfig:
    """Validate a parsed config dict; relative paths resolve against base_dir."""
    if not isinstance(raw, dict):
        raise ParseError("config root must be a JSON object")
    _require_keys(raw, _TOP_KEYS, "config")

    if "data_dir" not in raw or not isinstance(raw["data_dir"], str):
        raise InvalidValue("data_dir (string) is required")
    data_dir = raw["data_dir"]
    if base_dir is not None and not Path(data_dir).is_absolute():
        data_dir = str((base_dir / data_dir).resolve())

    out_dir = raw.get("out_dir")
    if out_dir is not None:
        if not isinstance(out_dir, str):
            raise InvalidValue("out_dir must be a string")
        if base_dir is not None and not Path(out_dir).is_absolute():
            out_dir = str((base_dir / out_dir).resolve())

    for key in ("start", "end"):
        if raw.get(key) is not None and not isinstance(raw[key], str):
            raise InvalidValue(f"{key} must be an ISO-8601 string")

    window = _positive_int(raw.get("window_hours", DEFAULT_WINDOW_HOURS), "window_hours")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise InvalidValue(f"seed must be an integer, got {seed!r}")

    fees_raw = raw.get("fees", list(DEFAULT_FEES))
    if not isinstance(fees_raw, list) or not fees_raw:
        raise InvalidValue("fees must be a non-empty list")
    fees = []
    for fee in fees_raw:
        if not isinstance(fee, (int, float)) or isinstance(fee, bool) or fee < 0:
            raise InvalidValue(f"fees must be >= 0, got {fee!r}")
        fees.append(float(fee))

    capital = raw.get("initial_capital", 10_000.0)
    if not isinstance(capital, (int, float)) or isinstance(capital, bool) or capital <= 0:
        raise InvalidValue(f"initial_capital must be > 0, got {capital!r}")

    default_models = None
    if raw.get("models") is not None:
        default_models = _model_list(raw["models"], "models")

    tasks_raw = raw.get("tasks")
    if tasks_raw is None:
        tasks_raw = {PREDICTIVE_UTILITY: {}, STAT_ARB: {}}
    if not isinstance(tasks_raw, dict) or not tasks_raw:
        raise InvalidValue("tasks must be a non-empty object")
    tasks = tuple(
        _parse_task(task, section if isinstance(section, dict) else _bad_section(task, section),
                    default_models)
        for task, section in sorted(tasks_raw.items())
    )

    return BenchConfig(
        data_dir=data_dir,
        models=default_models or tuple(sorted({m for t in tasks for m in t.models})),
        out_dir=out_dir,
        start=raw.get("start"),
        end=raw.get("end"),
        window_hours=window,
        seed=seed,
        fees=tuple(fees),
        initial_capital=float(capital),
        tasks=tasks,
    )


def _bad_section(task: str, section) -> dict:
    raise InvalidValue(f"tasks.{task} must be an object, got {type(section).__name__}")


def parse_config(path: str | Path) -> BenchConfig:
    """Read and validate a JSON config file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    return load_config(raw, base_dir=path.parent)
