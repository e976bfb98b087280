"""Experiment runner: single runs, multi-restart grids, and report files.

Each run is fully determined by its TrainConfig: data seeds are module
constants independent of run seeds, so every run in a grid sees identical
data, and replaying a config reproduces its RunResult bit for bit. Grids
execute serially or across worker processes; per-run state (model, optimizer,
Rng) is private, and results are sorted by run_id before aggregation so both
execution modes produce the same GridReport.
"""
from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .init import InitScheme, initialize
from .nn import (MlpModel, accuracy, mlp_backward, mlp_forward,
                 softmax_cross_entropy_batch)
from .optim import NoiseSchedule, apply_step, noise_stddev
from .program_induction import train_programmer
from .records import GridReport, RunResult, TrainConfig
from .tasks import Dataset, generate_table_task, load_mnist, subset, synthetic_digit_dataset
from .tensor_core import Rng

# Data seeds are deliberately disjoint from any plausible run seed so that
# changing a run seed never changes what data the run sees.
TRAIN_DATA_SEED = 74650921
TEST_DATA_SEED = 74650922
SUBSET_SEED = 74650923
PROGRAMMER_TRAIN_SEED = 74650931
PROGRAMMER_TEST_SEED = 74650932

IDX_NAMES = {
    "train_images": ("train-images-idx3-ubyte", "train-images-idx3-ubyte.gz"),
    "train_labels": ("train-labels-idx1-ubyte", "train-labels-idx1-ubyte.gz"),
    "test_images": ("t10k-images-idx3-ubyte", "t10k-images-idx3-ubyte.gz"),
    "test_labels": ("t10k-labels-idx1-ubyte", "t10k-labels-idx1-ubyte.gz"),
}

_MNIST_CACHE: dict = {}
_TABLE_CACHE: dict = {}


def _find_idx_file(directory: Path, names) -> Path | None:
    for name in names:
        candidate = directory / name
        if candidate.is_file():
            return candidate
    return None


def data_directory() -> Path:
    return Path(os.environ.get("GRADNOISE_DATA", "data"))


def resolve_mnist_data(train_subset: int | None = 10000,
                       data_dir=None) -> tuple[Dataset, Dataset]:
    """Return (train, test) digit datasets.

    Prefers real IDX files (optionally gzipped) under `data_dir`, the
    GRADNOISE_DATA directory, or ./data. When absent, falls back to a
    deterministic synthetic digit corpus with the same shapes and value
    conventions, generated from fixed data seeds. The train split is cut
    down to `train_subset` examples with a fixed permutation shared by
    every run.
    """
    key = (train_subset, str(data_dir) if data_dir is not None else None)
    if key in _MNIST_CACHE:
        return _MNIST_CACHE[key]
    directory = Path(data_dir) if data_dir is not None else data_directory()
    paths = {k: _find_idx_file(directory, names) for k, names in IDX_NAMES.items()}
    if all(p is not None for p in paths.values()):
        train = load_mnist(paths["train_images"], paths["train_labels"], split="train")
        test = load_mnist(paths["test_images"], paths["test_labels"], split="test")
        if train_subset is not None and train_subset < len(train):
            train = subset(train, train_subset, Rng(SUBSET_SEED))
    else:
        n_train = train_subset if train_subset is not None else 10000
        train = synthetic_digit_dataset(Rng(TRAIN_DATA_SEED), n_train, split="train")
        test = synthetic_digit_dataset(Rng(TEST_DATA_SEED), 10000, split="test")
    _MNIST_CACHE[key] = (train, test)
    return train, test


def resolve_table_data(config: TrainConfig):
    key = (config.train_questions, config.test_questions, config.column_len,
           config.program_depth_min, config.program_depth_max)
    if key in _TABLE_CACHE:
        return _TABLE_CACHE[key]
    depth_range = (config.program_depth_min, config.program_depth_max)
    train = generate_table_task(Rng(PROGRAMMER_TRAIN_SEED), config.train_questions,
                                column_len=config.column_len, depth_range=depth_range)
    test = generate_table_task(Rng(PROGRAMMER_TEST_SEED), config.test_questions,
                               column_len=config.column_len, depth_range=depth_range)
    _TABLE_CACHE[key] = (train, test)
    return train, test


def build_mnist_model(config: TrainConfig, rng: Rng) -> MlpModel:
    dims = [(config.input_dim, config.hidden_units)]
    dims += [(config.hidden_units, config.hidden_units)] * (config.hidden_layers - 1)
    dims += [(config.hidden_units, config.output_classes)]
    scheme = InitScheme(variant=config.init_scheme, stddev=config.init_stddev)
    return MlpModel(layers=initialize(scheme, dims, rng),
                    dropout_rate=config.dropout_rate)


def train_mnist(config: TrainConfig, train_ds: Dataset | None = None,
                test_ds: Dataset | None = None, run_id: str = "mnist",
                arm: str = "", step_log: list | None = None) -> RunResult:
    """Train a deep MLP classifier through the clip/noise/update pipeline."""
    started = time.time()
    if train_ds is None or test_ds is None:
        train_ds, test_ds = resolve_mnist_data(train_subset=config.train_subset)
    rng = Rng(config.seed)
    model = build_mnist_model(config, rng)
    params = model.parameters()
    state = config.optimizer_state()
    clip = config.clip_config()
    noise = config.noise_schedule()

    result = RunResult(run_id=run_id, arm=arm, config=config)
    n = len(train_ds)
    clipped_steps = 0
    max_pre_norm = 0.0
    for _epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = train_ds.inputs[idx]
            labels = train_ds.labels[idx]
            logits, cache = mlp_forward(model, batch, rng=rng, training=True)
            loss, grad_logits = softmax_cross_entropy_batch(logits, labels)
            grads = mlp_backward(model, cache, grad_logits)
            diag = apply_step(params, grads, state, clip, noise, rng,
                              config.pipeline_order)
            if step_log is not None:
                step_log.append(diag)
            if clip.threshold is not None and diag.pre_clip_norm > clip.threshold:
                clipped_steps += 1
            max_pre_norm = max(max_pre_norm, diag.pre_clip_norm)
            epoch_loss += loss * len(idx)

        result.train_loss.append(epoch_loss / n)
        result.train_acc.append(accuracy(model, train_ds.inputs, train_ds.labels))
        result.test_acc.append(accuracy(model, test_ds.inputs, test_ds.labels))

    result.best_test_acc = max(result.test_acc)
    result.final_test_acc = result.test_acc[-1]
    result.success = False
    result.wall_seconds = time.time() - started
    result.diagnostics = {
        "steps": state.t,
        "sigma_first": noise_stddev(noise, 0),
        "sigma_last": noise_stddev(noise, max(state.t - 1, 0)),
        "max_pre_clip_norm": max_pre_norm,
        "clipped_steps": clipped_steps,
    }
    return result


# Experiment presets from the six-way init/clipping comparison:
# (init scheme, clip threshold). Experiment 1 additionally carries a
# dropout arm; all noise arms use the annealed schedule with eta 0.01.
MNIST_EXPERIMENTS = {
    1: ("simple", None),
    2: ("simple", 100.0),
    3: ("simple", 10.0),
    4: ("sussillo", 10.0),
    5: ("he", 10.0),
    6: ("zero", 10.0),
}
MNIST_LEARNING_RATES = (0.1, 0.01)
MNIST_NOISE_ETA = 0.01
DROPOUT_RATE = 0.5


def _run_dispatch(payload):
    kind, run_id, arm, config_dict = payload
    config = TrainConfig.from_dict(config_dict)
    if kind == "mnist":
        result = train_mnist(config, run_id=run_id, arm=arm)
    else:
        train_qs, test_qs = resolve_table_data(config)
        result = train_programmer(config, train_qs, test_qs, run_id=run_id, arm=arm)
    return result.to_dict()


def _execute_grid(payloads, parallel: bool, max_workers: int | None) -> GridReport:
    if parallel:
        workers = max_workers or min(os.cpu_count() or 1, 8)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            dicts = list(pool.map(_run_dispatch, payloads))
    else:
        dicts = [_run_dispatch(p) for p in payloads]
    report = GridReport(runs=[RunResult.from_dict(d) for d in dicts])
    return report.sorted_by_run_id()


def mnist_experiment_config(experiment_id: int, arm: str, learning_rate: float,
                            seed: int, subset_size: int = 10000, epochs: int = 20,
                            batch_size: int = 100) -> TrainConfig:
    if experiment_id not in MNIST_EXPERIMENTS:
        raise ValueError(f"unknown experiment id {experiment_id!r}; expected 1..6")
    init_scheme, clip = MNIST_EXPERIMENTS[experiment_id]
    return TrainConfig(
        task="mnist", seed=seed, init_scheme=init_scheme, optimizer="sgd",
        learning_rate=learning_rate, epochs=epochs, batch_size=batch_size,
        clip_threshold=clip, train_subset=subset_size,
        noise_mode="annealed" if arm == "noise" else "off",
        noise_eta=MNIST_NOISE_ETA,
        dropout_rate=DROPOUT_RATE if arm == "dropout" else 0.0,
    )


def run_mnist_experiment(experiment_id: int, noise: str = "both",
                         seeds=(1, 2, 3, 4, 5), subset_size: int = 10000,
                         epochs: int = 20, batch_size: int = 100,
                         parallel: bool = False,
                         max_workers: int | None = None) -> GridReport:
    """Run one init/clipping experiment over its arms, seeds, and both
    learning rates; seeds are paired across arms to reduce variance."""
    if noise not in ("on", "off", "both"):
        raise ValueError(f"noise must be on|off|both, got {noise!r}")
    arms = []
    if noise in ("off", "both"):
        arms.append("none")
        if experiment_id == 1:
            arms.append("dropout")
    if noise in ("on", "both"):
        arms.append("noise")
    payloads = []
    for arm in arms:
        for lr in MNIST_LEARNING_RATES:
            for seed in seeds:
                config = mnist_experiment_config(
                    experiment_id, arm, lr, seed, subset_size=subset_size,
                    epochs=epochs, batch_size=batch_size)
                run_id = f"exp{experiment_id}-{arm}-lr{lr:g}-seed{seed}"
                payloads.append(("mnist", run_id, arm, config.to_dict()))
    return _execute_grid(payloads, parallel, max_workers)


# Default restart grid for the program-induction task: learning rate x
# hidden size x clip threshold, 36 configurations, all starting the
# selector from zero parameters.
PROGRAMMER_LEARNING_RATES = (0.01, 0.02, 0.035, 0.05)
PROGRAMMER_HIDDEN_SIZES = (8, 16, 32)
PROGRAMMER_CLIP_THRESHOLDS = (1.0, 5.0, 10.0)
PROGRAMMER_NOISE_ETA = 1.0
PROGRAMMER_EPOCHS = 150
PROGRAMMER_BATCH_SIZE = 25


def default_programmer_grid() -> list:
    """Cartesian restart grid over learning rate, hidden size, and clip
    threshold, with the selector initialized at exactly zero.

    From a zero start the encoder and head weights receive exactly zero
    gradient (the hidden state is zero, so nothing upstream of the head
    biases carries signal); a noise-free run can only learn a constant op
    mixture and plateaus near 0.25 accuracy. Injected gradient noise wakes
    the frozen weights, so success counts across the grid isolate how often
    noise rescues an otherwise untrainable start."""
    grid = []
    for lr in PROGRAMMER_LEARNING_RATES:
        for hidden in PROGRAMMER_HIDDEN_SIZES:
            for clip in PROGRAMMER_CLIP_THRESHOLDS:
                grid.append({"learning_rate": lr, "selector_hidden": hidden,
                             "clip_threshold": clip, "init_stddev": 0.0})
    return grid


def load_grid_file(path) -> list:
    """Read a grid file: one JSON object per line, keys overriding config
    fields (blank lines and # comments ignored)."""
    grid = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            grid.append(json.loads(line))
    return grid


def programmer_config(overrides: dict, arm: str, seed: int,
                      epochs: int = PROGRAMMER_EPOCHS,
                      batch_size: int = PROGRAMMER_BATCH_SIZE) -> TrainConfig:
    base = TrainConfig(
        task="programmer", seed=seed, optimizer="adam", epochs=epochs,
        batch_size=batch_size,
        noise_mode="annealed" if arm == "noise" else "off",
        noise_eta=PROGRAMMER_NOISE_ETA,
        dropout_rate=DROPOUT_RATE if arm == "dropout" else 0.0,
    )
    return base.with_overrides(**overrides)


def run_programmer_grid(grid: list | None = None, seeds=(1, 2, 3),
                        arms=("none", "noise"), epochs: int = PROGRAMMER_EPOCHS,
                        batch_size: int = PROGRAMMER_BATCH_SIZE,
                        parallel: bool = False,
                        max_workers: int | None = None) -> GridReport:
    """Multi-restart comparison over the grid x seeds x arms product;
    success is counted per arm by GridReport.summarize()."""
    if grid is None:
        grid = default_programmer_grid()
    payloads = []
    for arm in arms:
        for gi, overrides in enumerate(grid):
            for seed in seeds:
                config = programmer_config(overrides, arm, seed, epochs=epochs,
                                           batch_size=batch_size)
                run_id = (f"g{gi:02d}-{arm}-lr{config.learning_rate:g}"
                          f"-h{config.selector_hidden}-c{config.clip_threshold:g}"
                          f"-seed{seed}")
                payloads.append(("programmer", run_id, arm, config.to_dict()))
    return _execute_grid(payloads, parallel, max_workers)


ARM_COLORS = {"none": "#d62728", "noise": "#1f77b4", "dropout": "#7f7f7f"}


def _svg_learning_curves(report: GridReport, width=640, height=400) -> str:
    """Hand-rolled SVG: one polyline of test accuracy vs epoch per run."""
    margin = 50
    plot_w = width - 2 * margin
    plot_h = height - 2 * margin
    max_epochs = max(len(r.test_acc) for r in report.runs)

    def x_of(epoch):
        if max_epochs <= 1:
            return margin + plot_w / 2
        return margin + plot_w * epoch / (max_epochs - 1)

    def y_of(acc):
        return margin + plot_h * (1.0 - acc)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        "<desc>test accuracy vs epoch; one polyline per run, colored by arm: "
        + ", ".join(f"{a}={ARM_COLORS.get(a, '#000000')}" for a in report.arms())
        + "</desc>",
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{margin}" y="{margin - 10}" font-size="12">test accuracy</text>',
        f'<text x="{width - margin - 40}" y="{height - margin + 30}" font-size="12">epoch</text>',
    ]
    for run in report.runs:
        color = ARM_COLORS.get(run.arm, "#000000")
        points = " ".join(f"{x_of(e):.2f},{y_of(a):.2f}"
                          for e, a in enumerate(run.test_acc))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-opacity="0.6" '
                     f'points="{points}"><title>{run.run_id}</title></polyline>')
    parts.append("</svg>")
    return "\n".join(parts)


def summary_text(report: GridReport) -> str:
    """Per-arm Best / Average / successes table plus the configs behind it."""
    summary = report.summarize()
    lines = ["arm        runs  best     average  successes",
             "---------  ----  -------  -------  ---------"]
    for arm in report.arms():
        s = summary[arm]
        lines.append(f"{arm:<9}  {s['runs']:>4}  {s['best']:.5f}  "
                     f"{s['mean']:.5f}  {s['success_count']:>9}")
    lines.append("")
    lines.append("average = mean over runs of each run's best test accuracy")
    lines.append("")
    lines.append("config (first run; per-run configs in report.json):")
    for line in report.runs[0].config.to_kv_text().splitlines():
        lines.append("  " + line)
    return "\n".join(lines) + "\n"


def emit_report(report: GridReport, out_dir) -> dict:
    """Write runs.csv, summary.txt, curves.svg, and report.json under out_dir."""
    if not report.runs:
        raise ValueError("cannot emit a report with no runs")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in
             ("runs.csv", "summary.txt", "curves.svg", "report.json")}

    with open(paths["runs.csv"], "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["run_id", "arm", "epoch", "train_loss", "train_acc",
                         "test_acc"])
        for run in report.runs:
            for epoch in range(len(run.test_acc)):
                writer.writerow([run.run_id, run.arm, epoch,
                                 f"{run.train_loss[epoch]:.12g}",
                                 f"{run.train_acc[epoch]:.12g}",
                                 f"{run.test_acc[epoch]:.12g}"])

    paths["summary.txt"].write_text(summary_text(report), encoding="utf-8")
    paths["curves.svg"].write_text(_svg_learning_curves(report), encoding="utf-8")
    paths["report.json"].write_text(report.to_json(), encoding="utf-8")
    return paths


def schedule_rows(eta: float, gamma: float, t_max: int) -> list:
    """Tabulate (t, sigma_t) for the annealed schedule, t = 0 .. t_max - 1."""
    if t_max < 1:
        raise ValueError(f"t_max must be >= 1, got {t_max}")
    schedule = NoiseSchedule(mode="annealed", eta=eta, gamma=gamma)
    return [(t, noise_stddev(schedule, t)) for t in range(t_max)]


def schedule_dump(eta: float, gamma: float, t_max: int, path=None) -> list:
    rows = schedule_rows(eta, gamma, t_max)
    if path is not None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["t", "sigma"])
            for t, sigma in rows:
                writer.writerow([t, f"{sigma:.12g}"])
    return rows


def write_step_log(step_log, path) -> None:
    """StepDiagnostics rows as CSV: step, pre_norm, post_norm, sigma."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("step,pre_norm,post_norm,sigma\n")
        for diag in step_log:
            f.write(diag.csv_row() + "\n")
