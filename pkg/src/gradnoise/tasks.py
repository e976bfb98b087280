"""Data ingestion and generation.

Covers three sources: MNIST-format IDX files read from disk, a deterministic
synthetic handwritten-digit-style dataset in the same shape (used when no
IDX files are available), and the single-column table question task for the
program-induction experiments.
"""
from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass

import numpy as np

from .tensor_core import Rng

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

COMPARATORS = ("greater", "lesser")
AGGREGATORS = ("count", "sum")
# [has_greater, has_lesser, is_count, is_sum, pivot_greater, pivot_lesser]
ENCODING_WIDTH = 6


class IdxFormatError(ValueError):
    """Raised for malformed IDX files: bad magic, truncation, mismatched counts."""


class MalformedProgramError(ValueError):
    """Raised when a table program is not comparators followed by one aggregator."""


@dataclass
class Dataset:
    inputs: np.ndarray  # N x D float64
    labels: np.ndarray  # N int64 class indices
    split: str = "train"

    def __post_init__(self):
        if len(self.inputs) != len(self.labels):
            raise IdxFormatError(
                f"inputs ({len(self.inputs)}) and labels ({len(self.labels)}) disagree"
            )

    def __len__(self) -> int:
        return len(self.labels)


def _open_maybe_gzip(path):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise IdxFormatError(f"truncated file: expected {n} bytes for {what}, got {len(data)}")
    return data


def load_idx_images(path) -> np.ndarray:
    """Read a big-endian IDX image file into a uint8 array of N x rows x cols."""
    with _open_maybe_gzip(path) as f:
        magic, = struct.unpack(">i", _read_exact(f, 4, "magic"))
        if magic != IMAGE_MAGIC:
            raise IdxFormatError(
                f"bad image magic: expected {IMAGE_MAGIC:#010x}, got {magic:#010x}"
            )
        n, rows, cols = struct.unpack(">iii", _read_exact(f, 12, "header dims"))
        raw = _read_exact(f, n * rows * cols, "pixel data")
        return np.frombuffer(raw, dtype=np.uint8).reshape(n, rows, cols)


def load_idx_labels(path) -> np.ndarray:
    """Read a big-endian IDX label file into a uint8 array of length N."""
    with _open_maybe_gzip(path) as f:
        magic, = struct.unpack(">i", _read_exact(f, 4, "magic"))
        if magic != LABEL_MAGIC:
            raise IdxFormatError(
                f"bad label magic: expected {LABEL_MAGIC:#010x}, got {magic:#010x}"
            )
        n, = struct.unpack(">i", _read_exact(f, 4, "count"))
        raw = _read_exact(f, n, "label data")
        return np.frombuffer(raw, dtype=np.uint8)


def load_mnist(images_path, labels_path, split: str = "train") -> Dataset:
    """Load an IDX image/label pair; pixels are flattened and scaled to [0, 1]."""
    images = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if len(images) != len(labels):
        raise IdxFormatError(
            f"image count {len(images)} does not match label count {len(labels)}"
        )
    inputs = images.reshape(len(images), -1).astype(np.float64) / 255.0
    return Dataset(inputs=inputs, labels=labels.astype(np.int64), split=split)


def write_idx_images(path, images: np.ndarray) -> None:
    images = np.ascontiguousarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", IMAGE_MAGIC, n, rows, cols))
        f.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">ii", LABEL_MAGIC, len(labels)))
        f.write(labels.tobytes())


def subset(dataset: Dataset, n: int, rng: Rng) -> Dataset:
    """n examples sampled without replacement."""
    if n <= 0:
        raise ValueError("subset size must be positive")
    if n > len(dataset):
        raise ValueError(f"subset size {n} exceeds dataset size {len(dataset)}")
    idx = rng.permutation(len(dataset))[:n]
    return Dataset(inputs=dataset.inputs[idx], labels=dataset.labels[idx],
                   split=dataset.split)


# 7x5 digit glyphs for the synthetic fallback dataset.
_GLYPH_ROWS = {
    0: ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    1: ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    2: ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    3: ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    4: ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    5: ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    6: ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    7: ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    8: ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    9: ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}
_GLYPHS = {
    d: np.array([[int(c) for c in row] for row in rows], dtype=np.float64)
    for d, rows in _GLYPH_ROWS.items()
}


def synthetic_digit_images(rng: Rng, n: int, image_size: int = 28):
    """Render n jittered digit glyphs as uint8 images plus labels.

    Each image places a randomly scaled, shifted, intensity-varied glyph on a
    noisy background. Serves as a stand-in with MNIST's exact shape and value
    conventions when the real IDX files are not on disk.
    """
    if n <= 0:
        raise ValueError("need n > 0 images")
    labels = rng.integers(10, n)
    images = np.zeros((n, image_size, image_size), dtype=np.uint8)
    for i in range(n):
        digit = int(labels[i])
        glyph = _GLYPHS[digit]
        u = rng.uniform(8)
        out_rows = 14 + int(u[0] * 7)  # 14..20
        out_cols = 10 + int(u[1] * 5)  # 10..14
        row_idx = np.minimum((np.arange(out_rows) * 7) // out_rows, 6)
        col_idx = np.minimum((np.arange(out_cols) * 5) // out_cols, 4)
        big = glyph[np.ix_(row_idx, col_idx)]
        stroke = rng.uniform(big.shape) * 0.5 + 0.75
        big = np.clip(big * stroke * (0.55 + 0.45 * u[2]), 0.0, 1.0)
        r0 = int(u[3] * (image_size - out_rows + 1))
        c0 = int(u[4] * (image_size - out_cols + 1))
        canvas = rng.uniform((image_size, image_size)) * 0.08
        canvas[r0:r0 + out_rows, c0:c0 + out_cols] = np.maximum(
            canvas[r0:r0 + out_rows, c0:c0 + out_cols], big
        )
        images[i] = (canvas * 255.0).astype(np.uint8)
    return images, labels.astype(np.int64)


def synthetic_digit_dataset(rng: Rng, n: int, split: str = "train") -> Dataset:
    images, labels = synthetic_digit_images(rng, n)
    inputs = images.reshape(n, -1).astype(np.float64) / 255.0
    return Dataset(inputs=inputs, labels=labels, split=split)


@dataclass
class TableQuestion:
    column: np.ndarray  # N numeric values
    program: list  # [(op, pivot-or-None), ...], aggregator last
    answer: float
    encoding: np.ndarray  # fixed-width numeric question vector

    def pivots(self):
        """(greater_pivot, lesser_pivot); 0.0 when the comparator is absent."""
        return float(self.encoding[4]), float(self.encoding[5])


def execute_program(column: np.ndarray, program) -> float:
    """Run a hard-selection program: intersect comparisons, then aggregate."""
    program = list(program)
    if not program:
        raise MalformedProgramError("empty program")
    *body, (last_op, _last_arg) = program
    if last_op not in AGGREGATORS:
        raise MalformedProgramError(f"program must end with an aggregator, got {last_op!r}")
    column = np.asarray(column, dtype=np.float64)
    selected = np.ones(len(column), dtype=bool)
    for op, arg in body:
        if op == "greater":
            selected &= column > arg
        elif op == "lesser":
            selected &= column < arg
        elif op in AGGREGATORS:
            raise MalformedProgramError(f"aggregator {op!r} must be the last operation")
        else:
            raise MalformedProgramError(f"unknown operation {op!r}")
    if last_op == "count":
        return float(selected.sum())
    return float(column[selected].sum())


def encode_program(program) -> np.ndarray:
    """Fixed-width question vector: op-token indicators plus raw pivots."""
    enc = np.zeros(ENCODING_WIDTH)
    for op, arg in program:
        if op == "greater":
            enc[0] = 1.0
            enc[4] = arg
        elif op == "lesser":
            enc[1] = 1.0
            enc[5] = arg
        elif op == "count":
            enc[2] = 1.0
        elif op == "sum":
            enc[3] = 1.0
        else:
            raise MalformedProgramError(f"unknown operation {op!r}")
    return enc


def _quantized_pivot(rng: Rng, lo: float, hi: float) -> float:
    pivot = round(lo + (hi - lo) * float(rng.uniform(1)[0]), 2)
    return float(min(max(pivot, lo), hi))


def generate_table_task(rng: Rng, n_examples: int, column_len: int = 10,
                        depth_range=(1, 3)) -> list:
    """Random single-column questions with exactly executable ground truth.

    Programs come from the grammar [Agg], [Cmp(a), Agg], [Greater(a),
    Lesser(b), Agg] with Cmp in {greater, lesser} and Agg in {count, sum}.
    Depth-3 programs use both comparators since the pivot binding is
    positional: greater always reads the first pivot, lesser the second.
    Pivots are quantized to 2 decimals and stay inside the column's range.
    """
    lo_depth, hi_depth = depth_range
    if not (1 <= lo_depth <= hi_depth <= 3):
        raise ValueError(f"depth range must sit within [1, 3], got {depth_range}")
    if column_len < 2:
        raise ValueError("column_len must be >= 2")

    questions = []
    for _ in range(n_examples):
        column = rng.uniform(column_len) * 20.0 - 10.0
        cmin, cmax = float(column.min()), float(column.max())
        depth = lo_depth + int(rng.integers(hi_depth - lo_depth + 1, 1)[0])
        agg = AGGREGATORS[int(rng.integers(2, 1)[0])]
        if depth == 1:
            program = [(agg, None)]
        elif depth == 2:
            cmp_op = COMPARATORS[int(rng.integers(2, 1)[0])]
            program = [(cmp_op, _quantized_pivot(rng, cmin, cmax)), (agg, None)]
        else:
            a = _quantized_pivot(rng, cmin, cmax)
            b = _quantized_pivot(rng, cmin, cmax)
            pair = [("greater", a), ("lesser", b)]
            if int(rng.integers(2, 1)[0]):
                pair.reverse()
            program = pair + [(agg, None)]
        answer = execute_program(column, program)
        questions.append(TableQuestion(column=column, program=program,
                                       answer=answer, encoding=encode_program(program)))
    return questions


def save_table_dataset(questions, path) -> None:
    """One JSON record per line: column values, program tokens, answer."""
    with open(path, "w", encoding="utf-8") as f:
        for q in questions:
            record = {
                "column": [float(v) for v in q.column],
                "program": [[op, arg] for op, arg in q.program],
                "answer": q.answer,
            }
            f.write(json.dumps(record) + "\n")


def load_table_dataset(path) -> list:
    questions = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            program = [(op, arg) for op, arg in record["program"]]
            column = np.array(record["column"], dtype=np.float64)
            questions.append(TableQuestion(
                column=column, program=program, answer=float(record["answer"]),
                encoding=encode_program(program),
            ))
    return questions
