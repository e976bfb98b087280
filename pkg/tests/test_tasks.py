import gzip
import struct

import numpy as np
import pytest

from gradnoise.tasks import (Dataset, IdxFormatError, MalformedProgramError,
                             encode_program, execute_program,
                             generate_table_task, load_idx_images,
                             load_idx_labels, load_mnist, load_table_dataset,
                             save_table_dataset, subset,
                             synthetic_digit_dataset, synthetic_digit_images,
                             write_idx_images, write_idx_labels)
from gradnoise.tensor_core import Rng


def brute_force_execute(column, program):
    """Independent reference: explicit row-index bookkeeping, no numpy masks."""
    rows = list(range(len(column)))
    for op, arg in program[:-1]:
        if op == "greater":
            rows = [i for i in rows if column[i] > arg]
        elif op == "lesser":
            rows = [i for i in rows if column[i] < arg]
        else:
            raise AssertionError(f"unexpected body op {op}")
    agg, _ = program[-1]
    if agg == "count":
        return float(len(rows))
    if agg == "sum":
        return float(sum(float(column[i]) for i in rows))
    raise AssertionError(f"unexpected aggregator {agg}")


def assert_same_answer(program, got, oracle):
    # counts are integers and must match exactly; sums may differ by summation
    # order roundoff (pairwise vs sequential), so allow a few ULPs
    if program[-1][0] == "count":
        assert got == oracle
    else:
        assert abs(got - oracle) <= 1e-9 * max(1.0, abs(oracle))


class TestIdxFiles:
    def test_images_round_trip(self, tmp_path):
        images = Rng(1).integers(256, size=5 * 28 * 28).reshape(5, 28, 28).astype(np.uint8)
        path = tmp_path / "imgs"
        write_idx_images(path, images)
        loaded = load_idx_images(path)
        assert np.array_equal(loaded, images)

    def test_labels_round_trip(self, tmp_path):
        labels = np.array([3, 1, 4, 1, 5], dtype=np.uint8)
        path = tmp_path / "labels"
        write_idx_labels(path, labels)
        assert np.array_equal(load_idx_labels(path), labels)

    def test_gzip_transparent(self, tmp_path):
        images = np.zeros((2, 28, 28), dtype=np.uint8)
        plain = tmp_path / "imgs"
        write_idx_images(plain, images)
        gz = tmp_path / "imgs.gz"
        gz.write_bytes(gzip.compress(plain.read_bytes()))
        assert np.array_equal(load_idx_images(gz), images)

    def test_wrong_magic_names_both_values(self, tmp_path):
        path = tmp_path / "bad"
        path.write_bytes(struct.pack(">iiii", 0x00000801, 1, 28, 28) + b"\0" * 784)
        with pytest.raises(IdxFormatError) as exc:
            load_idx_images(path)
        assert "0x803" in str(exc.value).lower() or "803" in str(exc.value)
        assert "801" in str(exc.value)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "short"
        path.write_bytes(struct.pack(">iiii", 0x00000803, 2, 28, 28) + b"\0" * 100)
        with pytest.raises(IdxFormatError):
            load_idx_images(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "stub"
        path.write_bytes(b"\x00\x00")
        with pytest.raises(IdxFormatError):
            load_idx_labels(path)

    def test_load_mnist_normalizes(self, tmp_path):
        images = np.full((3, 28, 28), 255, dtype=np.uint8)
        labels = np.array([0, 1, 2], dtype=np.uint8)
        write_idx_images(tmp_path / "i", images)
        write_idx_labels(tmp_path / "l", labels)
        ds = load_mnist(tmp_path / "i", tmp_path / "l", split="train")
        assert ds.inputs.shape == (3, 784)
        assert np.all(ds.inputs == 1.0)
        assert ds.split == "train"

    def test_load_mnist_count_mismatch(self, tmp_path):
        write_idx_images(tmp_path / "i", np.zeros((3, 28, 28), dtype=np.uint8))
        write_idx_labels(tmp_path / "l", np.zeros(4, dtype=np.uint8))
        with pytest.raises(IdxFormatError):
            load_mnist(tmp_path / "i", tmp_path / "l")


class TestDataset:
    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Dataset(inputs=np.zeros((3, 4)), labels=np.zeros(2, dtype=np.int64),
                    split="train")

    def test_subset_draws_without_replacement(self):
        ds = Dataset(inputs=np.arange(100, dtype=np.float64).reshape(100, 1),
                     labels=np.arange(100, dtype=np.int64), split="train")
        sub = subset(ds, 10, Rng(3))
        assert len(sub) == 10
        assert len(set(sub.labels.tolist())) == 10
        assert np.array_equal(sub.inputs[:, 0].astype(np.int64), sub.labels)

    def test_subset_size_validation(self):
        ds = Dataset(inputs=np.zeros((5, 1)), labels=np.zeros(5, dtype=np.int64),
                     split="train")
        with pytest.raises(ValueError):
            subset(ds, 0, Rng(1))
        with pytest.raises(ValueError):
            subset(ds, 6, Rng(1))


class TestSyntheticDigits:
    def test_shapes_and_value_conventions(self):
        images, labels = synthetic_digit_images(Rng(1), 20)
        assert images.shape == (20, 28, 28)
        assert images.dtype == np.uint8
        assert labels.shape == (20,)
        assert labels.min() >= 0 and labels.max() <= 9

    def test_deterministic(self):
        a, la = synthetic_digit_images(Rng(5), 10)
        b, lb = synthetic_digit_images(Rng(5), 10)
        assert np.array_equal(a, b)
        assert np.array_equal(la, lb)

    def test_dataset_flattens_and_scales(self):
        ds = synthetic_digit_dataset(Rng(2), 15, split="test")
        assert ds.inputs.shape == (15, 784)
        assert float(ds.inputs.min()) >= 0.0
        assert float(ds.inputs.max()) <= 1.0
        assert ds.split == "test"

    def test_all_ten_digits_appear(self):
        _, labels = synthetic_digit_images(Rng(3), 500)
        assert set(np.unique(labels)) == set(range(10))

    def test_images_nontrivial(self):
        # glyphs must actually produce bright strokes over a dim background
        images, _ = synthetic_digit_images(Rng(4), 10)
        assert (images > 100).sum() > 10 * 20


class TestExecuteProgram:
    def test_count_all(self):
        assert execute_program(np.array([1.0, 5.0, 9.0]), [("count", None)]) == 3.0

    def test_chained_filters_then_count(self):
        column = np.array([1.0, 5.0, 9.0])
        program = [("greater", 4.0), ("lesser", 8.0), ("count", None)]
        assert execute_program(column, program) == 1.0

    def test_sum_with_filter(self):
        column = np.array([2.0, -3.0, 7.0, 4.0])
        assert execute_program(column, [("greater", 0.0), ("sum", None)]) == 13.0

    def test_empty_selection_sums_to_zero(self):
        column = np.array([1.0, 2.0])
        assert execute_program(column, [("greater", 99.0), ("sum", None)]) == 0.0
        assert execute_program(column, [("greater", 99.0), ("count", None)]) == 0.0

    def test_malformed_programs(self):
        column = np.array([1.0, 2.0])
        with pytest.raises(MalformedProgramError):
            execute_program(column, [])
        with pytest.raises(MalformedProgramError):
            execute_program(column, [("greater", 1.0)])
        with pytest.raises(MalformedProgramError):
            execute_program(column, [("count", None), ("greater", 1.0), ("count", None)])
        with pytest.raises(MalformedProgramError):
            execute_program(column, [("between", 1.0), ("count", None)])

    def test_matches_brute_force_on_random_programs(self):
        rng = Rng(77)
        questions = generate_table_task(rng, 300, column_len=10, depth_range=(1, 3))
        for q in questions:
            assert_same_answer(q.program, execute_program(q.column, q.program),
                               brute_force_execute(q.column, q.program))


class TestEncoding:
    def test_flags_and_pivots(self):
        enc = encode_program([("greater", 2.5), ("lesser", -1.25), ("sum", None)])
        assert enc.tolist() == [1.0, 1.0, 0.0, 1.0, 2.5, -1.25]

    def test_depth_one(self):
        assert encode_program([("count", None)]).tolist() == [0, 0, 1, 0, 0, 0]

    def test_unknown_op(self):
        with pytest.raises(MalformedProgramError):
            encode_program([("between", 1.0), ("count", None)])


class TestGenerateTableTask:
    def test_answers_match_independent_oracle(self):
        questions = generate_table_task(Rng(9), 200, column_len=8, depth_range=(1, 3))
        for q in questions:
            assert_same_answer(q.program, q.answer,
                               brute_force_execute(q.column, q.program))

    def test_depth_range_honored(self):
        questions = generate_table_task(Rng(10), 300, depth_range=(2, 2))
        assert all(len(q.program) == 2 for q in questions)

    def test_depth_three_uses_both_comparators(self):
        questions = generate_table_task(Rng(11), 300, depth_range=(3, 3))
        for q in questions:
            body_ops = {op for op, _ in q.program[:-1]}
            assert body_ops == {"greater", "lesser"}

    def test_pivots_quantized_and_in_range(self):
        questions = generate_table_task(Rng(12), 200, depth_range=(2, 3))
        for q in questions:
            for op, arg in q.program[:-1]:
                assert arg == round(arg, 2)
                assert float(q.column.min()) <= arg <= float(q.column.max())

    def test_encoding_consistent_with_program(self):
        questions = generate_table_task(Rng(13), 100, depth_range=(1, 3))
        for q in questions:
            assert np.array_equal(q.encoding, encode_program(q.program))

    def test_columns_within_declared_range(self):
        questions = generate_table_task(Rng(14), 50)
        for q in questions:
            assert float(q.column.min()) >= -10.0
            assert float(q.column.max()) <= 10.0

    def test_deterministic(self):
        a = generate_table_task(Rng(15), 20)
        b = generate_table_task(Rng(15), 20)
        for qa, qb in zip(a, b):
            assert np.array_equal(qa.column, qb.column)
            assert qa.program == qb.program

    def test_bad_depth_range(self):
        with pytest.raises(ValueError):
            generate_table_task(Rng(1), 5, depth_range=(0, 2))
        with pytest.raises(ValueError):
            generate_table_task(Rng(1), 5, depth_range=(2, 4))


class TestTableSerialization:
    def test_round_trip_exact(self, tmp_path):
        questions = generate_table_task(Rng(21), 50, depth_range=(1, 3))
        path = tmp_path / "questions.jsonl"
        save_table_dataset(questions, path)
        loaded = load_table_dataset(path)
        assert len(loaded) == len(questions)
        for q, l in zip(questions, loaded):
            assert np.array_equal(q.column, l.column)
            assert q.program == l.program
            assert q.answer == l.answer
            assert np.array_equal(q.encoding, l.encoding)

    def test_line_delimited_json(self, tmp_path):
        questions = generate_table_task(Rng(22), 3)
        path = tmp_path / "q.jsonl"
        save_table_dataset(questions, path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 3
        import json
        record = json.loads(lines[0])
        assert set(record) == {"column", "program", "answer"}
