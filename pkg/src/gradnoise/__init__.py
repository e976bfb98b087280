"""Annealed gradient-noise training toolkit.

Dense float64 tensors and a deterministic RNG (tensor_core), a from-scratch
deep MLP with backprop (nn, init), a training-step pipeline of gradient
clipping, scheduled Gaussian noise injection, and SGD/Adam updates (optim),
digit-classification and table-question tasks (tasks), a soft-selection
program-induction model (program_induction), and a multi-restart experiment
harness with CSV/SVG reporting (harness, cli).
"""

from .tensor_core import (DimensionError, Rng, as_tensor, elementwise,
                          gaussian_tensor, global_norm, matmul)
from .nn import (AffineLayer, ForwardCache, MlpModel, accuracy, dropout_forward,
                 gradient_check, mlp_backward, mlp_forward, mlp_loss, relu,
                 relu_backward, softmax_cross_entropy,
                 softmax_cross_entropy_batch)
from .init import SCHEME_NAMES, InitScheme, initialize, sussillo_gain
from .optim import (CLIP_THEN_NOISE, NOISE_THEN_CLIP, ClipConfig, NoiseSchedule,
                    OptimizerState, StepDiagnostics, adam_step, apply_step,
                    clip_global_norm, inject_noise, noise_stddev, sgd_step)
from .tasks import (Dataset, IdxFormatError, MalformedProgramError,
                    TableQuestion, encode_program, execute_program,
                    generate_table_task, load_idx_images, load_idx_labels,
                    load_mnist, load_table_dataset, save_table_dataset, subset,
                    synthetic_digit_dataset, write_idx_images, write_idx_labels)
from .program_induction import (OPS, SelectorModel, SoftExecState, format_program,
                                hard_accuracy, hard_forward, hard_predict_batch,
                                new_selector_model, soft_backward, soft_forward,
                                soft_forward_batch, soft_step, train_programmer)
from .records import GridReport, RunResult, TrainConfig
from .harness import (emit_report, resolve_mnist_data, run_mnist_experiment,
                      run_programmer_grid, schedule_dump, schedule_rows,
                      train_mnist, write_step_log)

__version__ = "0.1.0"

__all__ = [
    "DimensionError", "Rng", "as_tensor", "elementwise", "gaussian_tensor",
    "global_norm", "matmul",
    "AffineLayer", "ForwardCache", "MlpModel", "accuracy", "dropout_forward",
    "gradient_check", "mlp_backward", "mlp_forward", "mlp_loss", "relu",
    "relu_backward", "softmax_cross_entropy", "softmax_cross_entropy_batch",
    "SCHEME_NAMES", "InitScheme", "initialize", "sussillo_gain",
    "CLIP_THEN_NOISE", "NOISE_THEN_CLIP", "ClipConfig", "NoiseSchedule",
    "OptimizerState", "StepDiagnostics", "adam_step", "apply_step",
    "clip_global_norm", "inject_noise", "noise_stddev", "sgd_step",
    "Dataset", "IdxFormatError", "MalformedProgramError", "TableQuestion",
    "encode_program", "execute_program", "generate_table_task",
    "load_idx_images", "load_idx_labels", "load_mnist", "load_table_dataset",
    "save_table_dataset", "subset", "synthetic_digit_dataset",
    "write_idx_images", "write_idx_labels",
    "OPS", "SelectorModel", "SoftExecState", "format_program", "hard_accuracy",
    "hard_forward", "hard_predict_batch", "new_selector_model", "soft_backward",
    "soft_forward", "soft_forward_batch", "soft_step", "train_programmer",
    "GridReport", "RunResult", "TrainConfig",
    "emit_report", "resolve_mnist_data", "run_mnist_experiment",
    "run_programmer_grid", "schedule_dump", "schedule_rows", "train_mnist",
    "write_step_log",
    "__version__",
]
