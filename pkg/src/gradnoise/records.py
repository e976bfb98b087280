"""Run configuration and result records.

A TrainConfig fully determines a run; a RunResult carries the per-epoch
trajectories plus a config echo so reports can be rebuilt from stored
results alone. Wall-clock time is recorded but excluded from equality,
since it is measurement metadata rather than part of the trajectory.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict, replace

from .optim import ClipConfig, NoiseSchedule, OptimizerState, CLIP_THEN_NOISE


@dataclass
class TrainConfig:
    task: str = "mnist"  # "mnist" | "programmer"
    seed: int = 0

    # deep MLP architecture (mnist task)
    input_dim: int = 784
    hidden_layers: int = 20
    hidden_units: int = 50
    output_classes: int = 10
    init_scheme: str = "simple"
    init_stddev: float = 0.1

    # optimizer and step pipeline
    optimizer: str = "sgd"
    learning_rate: float = 0.1
    epochs: int = 20
    batch_size: int = 100
    clip_threshold: float | None = None
    noise_mode: str = "off"  # "off" | "annealed" | "fixed"
    noise_eta: float = 0.01
    noise_gamma: float = 0.55
    noise_fixed_stddev: float = 0.001
    pipeline_order: str = CLIP_THEN_NOISE
    dropout_rate: float = 0.0
    train_subset: int | None = 10000

    # selector model and table task (programmer task)
    selector_hidden: int = 32
    selector_steps: int = 4
    column_len: int = 10
    train_questions: int = 2000
    test_questions: int = 1000
    program_depth_min: int = 1
    program_depth_max: int = 2

    def noise_schedule(self) -> NoiseSchedule:
        return NoiseSchedule(mode=self.noise_mode, eta=self.noise_eta,
                             gamma=self.noise_gamma,
                             fixed_stddev=self.noise_fixed_stddev)

    def clip_config(self) -> ClipConfig:
        return ClipConfig(threshold=self.clip_threshold)

    def optimizer_state(self) -> OptimizerState:
        return OptimizerState(kind=self.optimizer, learning_rate=self.learning_rate)

    def with_overrides(self, **kwargs) -> "TrainConfig":
        return replace(self, **kwargs)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(**data)

    def to_kv_text(self) -> str:
        """Flat key=value lines, one per field."""
        lines = []
        for key, value in self.to_dict().items():
            lines.append(f"{key}={'' if value is None else value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_kv_text(cls, text: str) -> "TrainConfig":
        defaults = cls()
        values = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if not hasattr(defaults, key):
                raise ValueError(f"unknown config key {key!r}")
            values[key] = _coerce_field(getattr(defaults, key), key, value)
        return replace(defaults, **values)


def _coerce_field(default, key: str, value: str):
    if value == "":
        return None
    if key in ("clip_threshold", "train_subset") and value.lower() in ("none", "null"):
        return None
    if isinstance(default, bool):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int) and not isinstance(default, bool):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if default is None:
        # optional numeric fields
        return float(value) if "." in value or "e" in value.lower() else int(value)
    return value


@dataclass
class RunResult:
    run_id: str
    arm: str
    config: TrainConfig
    train_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    test_acc: list = field(default_factory=list)
    best_test_acc: float = 0.0
    final_test_acc: float = 0.0
    success: bool | None = None
    wall_seconds: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def canonical(self) -> dict:
        """Everything that must reproduce bit-exactly across replays."""
        data = {
            "run_id": self.run_id,
            "arm": self.arm,
            "config": self.config.to_dict(),
            "train_loss": list(self.train_loss),
            "train_acc": list(self.train_acc),
            "test_acc": list(self.test_acc),
            "best_test_acc": self.best_test_acc,
            "final_test_acc": self.final_test_acc,
            "success": self.success,
            "diagnostics": dict(self.diagnostics),
        }
        return data

    def to_dict(self) -> dict:
        data = self.canonical()
        data["wall_seconds"] = self.wall_seconds
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "RunResult":
        data = dict(data)
        data["config"] = TrainConfig.from_dict(data["config"])
        return cls(**data)


@dataclass
class GridReport:
    runs: list = field(default_factory=list)

    def arms(self) -> list:
        seen = []
        for run in self.runs:
            if run.arm not in seen:
                seen.append(run.arm)
        return seen

    def arm_runs(self, arm: str) -> list:
        return [run for run in self.runs if run.arm == arm]

    def summarize(self) -> dict:
        """Per-arm best / mean of best-per-run / success count, recomputed
        from the stored runs every time."""
        summary = {}
        for arm in self.arms():
            runs = self.arm_runs(arm)
            bests = [run.best_test_acc for run in runs]
            successes = sum(1 for run in runs if run.success)
            summary[arm] = {
                "runs": len(runs),
                "best": max(bests),
                "mean": sum(bests) / len(bests),
                "success_count": successes,
            }
        return summary

    def sorted_by_run_id(self) -> "GridReport":
        return GridReport(runs=sorted(self.runs, key=lambda r: r.run_id))

    def to_json(self) -> str:
        return json.dumps({"runs": [run.to_dict() for run in self.runs]}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "GridReport":
        data = json.loads(text)
        return cls(runs=[RunResult.from_dict(r) for r in data["runs"]])
