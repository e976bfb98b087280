"""Latent program induction over a single numeric column.

A small controller reads an encoded question and, for a fixed number of
steps, emits a softmax distribution over built-in operations on the column:
greater, lesser, count, sum, noop. At train time every operation's result is
mixed under that distribution (soft selection), which keeps the whole model
differentiable; at test time the argmax operation runs with hard semantics,
yielding a discrete, inspectable program. Supervision touches only the final
scalar answer, never the program.

Greater reads the question's first pivot and lesser the second; comparison
indicators are therefore constants with respect to the parameters, and all
gradient flows through the operation probabilities.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .nn import AffineLayer, GradientSet, dropout_forward
from .optim import apply_step, noise_stddev
from .records import RunResult, TrainConfig
from .tasks import TableQuestion, execute_program
from .tensor_core import Rng, gaussian_tensor

OPS = ("greater", "lesser", "count", "sum", "noop")
OP_GREATER, OP_LESSER, OP_COUNT, OP_SUM, OP_NOOP = range(5)


@dataclass
class SelectorModel:
    encoder: AffineLayer  # question encoding -> hidden, tanh
    heads: list  # one affine head per step, hidden -> len(OPS) logits
    dropout_rate: float = 0.0

    @property
    def steps(self) -> int:
        return len(self.heads)

    @property
    def hidden_dim(self) -> int:
        return self.encoder.weights.shape[1]

    def parameters(self) -> dict:
        params = {"enc_w": self.encoder.weights, "enc_b": self.encoder.bias}
        for t, head in enumerate(self.heads):
            params[f"head{t}_w"] = head.weights
            params[f"head{t}_b"] = head.bias
        return params


def new_selector_model(rng: Rng, encoding_dim: int = 6, hidden: int = 32,
                       steps: int = 4, init_stddev: float = 0.1,
                       dropout_rate: float = 0.0) -> SelectorModel:
    encoder = AffineLayer(
        weights=gaussian_tensor(rng, (encoding_dim, hidden), 0.0, init_stddev),
        bias=np.zeros(hidden),
    )
    heads = [
        AffineLayer(
            weights=gaussian_tensor(rng, (hidden, len(OPS)), 0.0, init_stddev),
            bias=np.zeros(len(OPS)),
        )
        for _ in range(steps)
    ]
    return SelectorModel(encoder=encoder, heads=heads, dropout_rate=dropout_rate)


@dataclass
class SoftExecState:
    selection: np.ndarray  # values in [0, 1], one per column row
    accumulator: float = 0.0


def soft_step(state: SoftExecState, op_probs: np.ndarray, column: np.ndarray,
              pivots) -> SoftExecState:
    """One soft-selection step: mix all op results under op_probs.

    Count and sum leave the selection untouched and contribute their
    aggregate (weighted by their probability) to the accumulator.
    """
    op_probs = np.asarray(op_probs, dtype=np.float64)
    if abs(float(op_probs.sum()) - 1.0) > 1e-9:
        raise ValueError(f"op_probs must sum to 1, got {op_probs.sum()!r}")
    pivot_greater, pivot_lesser = pivots
    s = state.selection
    greater_sel = s * (column > pivot_greater)
    lesser_sel = s * (column < pivot_lesser)
    stay = op_probs[OP_COUNT] + op_probs[OP_SUM] + op_probs[OP_NOOP]
    new_selection = (op_probs[OP_GREATER] * greater_sel
                     + op_probs[OP_LESSER] * lesser_sel
                     + stay * s)
    new_acc = (state.accumulator
               + op_probs[OP_COUNT] * float(s.sum())
               + op_probs[OP_SUM] * float((s * column).sum()))
    return SoftExecState(selection=new_selection, accumulator=new_acc)


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class SoftForwardCache:
    encodings: np.ndarray
    columns: np.ndarray
    greater_ind: np.ndarray
    lesser_ind: np.ndarray
    hidden: np.ndarray  # post-tanh
    hidden_used: np.ndarray  # after dropout, what the heads saw
    dropout_mask: np.ndarray | None
    step_probs: list = field(default_factory=list)
    step_selections: list = field(default_factory=list)  # selection before each step


def stack_questions(questions):
    """Pack a list of TableQuestions into batch arrays."""
    enc = np.stack([q.encoding for q in questions])
    columns = np.stack([q.column for q in questions])
    pivot_g = enc[:, 4]
    pivot_l = enc[:, 5]
    answers = np.array([q.answer for q in questions])
    return enc, columns, pivot_g, pivot_l, answers


def soft_forward_batch(model: SelectorModel, encodings: np.ndarray,
                       columns: np.ndarray, pivot_greater: np.ndarray,
                       pivot_lesser: np.ndarray, rng: Rng | None = None,
                       training: bool = False):
    """Soft execution over a batch of questions; returns predictions and cache."""
    hidden = np.tanh(encodings @ model.encoder.weights + model.encoder.bias)
    if training and model.dropout_rate > 0.0:
        if rng is None:
            raise ValueError("dropout at train time needs an Rng")
        hidden_used, mask = dropout_forward(hidden, model.dropout_rate, rng, training=True)
    else:
        hidden_used, mask = hidden, None

    greater_ind = (columns > pivot_greater[:, None]).astype(np.float64)
    lesser_ind = (columns < pivot_lesser[:, None]).astype(np.float64)
    cache = SoftForwardCache(encodings=encodings, columns=columns,
                             greater_ind=greater_ind, lesser_ind=lesser_ind,
                             hidden=hidden, hidden_used=hidden_used,
                             dropout_mask=mask)

    n = len(encodings)
    selection = np.ones_like(columns)
    acc = np.zeros(n)
    for head in model.heads:
        probs = _softmax_rows(hidden_used @ head.weights + head.bias)
        cache.step_probs.append(probs)
        cache.step_selections.append(selection)
        acc = (acc + probs[:, OP_COUNT] * selection.sum(axis=1)
               + probs[:, OP_SUM] * (selection * columns).sum(axis=1))
        stay = probs[:, OP_COUNT] + probs[:, OP_SUM] + probs[:, OP_NOOP]
        selection = (probs[:, OP_GREATER, None] * (selection * greater_ind)
                     + probs[:, OP_LESSER, None] * (selection * lesser_ind)
                     + stay[:, None] * selection)
    return acc, cache


def soft_forward(model: SelectorModel, question: TableQuestion):
    """Single-question soft execution; prediction is the final accumulator."""
    enc, columns, pg, pl, _ = stack_questions([question])
    preds, cache = soft_forward_batch(model, enc, columns, pg, pl)
    return float(preds[0]), cache


def soft_backward(model: SelectorModel, cache: SoftForwardCache,
                  dpred: np.ndarray) -> GradientSet:
    """Gradients of a scalar loss given dLoss/dPrediction per question."""
    columns = cache.columns
    grads: GradientSet = {}
    dacc = dpred
    dsel = np.zeros_like(columns)
    dhidden = np.zeros_like(cache.hidden_used)
    for t in range(len(model.heads) - 1, -1, -1):
        probs = cache.step_probs[t]
        sel = cache.step_selections[t]
        sum_sel = sel.sum(axis=1)
        sum_selx = (sel * columns).sum(axis=1)

        dprobs = np.zeros_like(probs)
        dprobs[:, OP_GREATER] = (dsel * sel * cache.greater_ind).sum(axis=1)
        dprobs[:, OP_LESSER] = (dsel * sel * cache.lesser_ind).sum(axis=1)
        keep = (dsel * sel).sum(axis=1)
        dprobs[:, OP_NOOP] = keep
        dprobs[:, OP_COUNT] = keep + dacc * sum_sel
        dprobs[:, OP_SUM] = keep + dacc * sum_selx

        # softmax backward
        inner = (dprobs * probs).sum(axis=1, keepdims=True)
        dlogits = probs * (dprobs - inner)
        grads[f"head{t}_w"] = cache.hidden_used.T @ dlogits
        grads[f"head{t}_b"] = dlogits.sum(axis=0)
        dhidden += dlogits @ model.heads[t].weights.T

        mix = (probs[:, OP_GREATER, None] * cache.greater_ind
               + probs[:, OP_LESSER, None] * cache.lesser_ind
               + (probs[:, OP_COUNT] + probs[:, OP_SUM] + probs[:, OP_NOOP])[:, None])
        dsel = dsel * mix + dacc[:, None] * (probs[:, OP_COUNT, None]
                                             + probs[:, OP_SUM, None] * columns)

    if cache.dropout_mask is not None:
        dhidden = dhidden * cache.dropout_mask
    dz = dhidden * (1.0 - cache.hidden ** 2)
    grads["enc_w"] = cache.encodings.T @ dz
    grads["enc_b"] = dz.sum(axis=0)
    return grads


def squared_loss_and_grads(model: SelectorModel, encodings, columns, pivot_g,
                           pivot_l, answers, rng: Rng | None = None,
                           training: bool = False):
    """Mean squared error on soft predictions plus parameter gradients."""
    preds, cache = soft_forward_batch(model, encodings, columns, pivot_g,
                                      pivot_l, rng=rng, training=training)
    diff = preds - answers
    loss = float((diff ** 2).mean())
    dpred = 2.0 * diff / len(answers)
    return loss, soft_backward(model, cache, dpred), preds


def selector_gradient_check(model: SelectorModel, questions, h: float = 1e-5) -> float:
    """Max over parameter tensors of ||analytic - central difference|| /
    max of the two norms, for the squared loss on `questions`. The soft
    path is smooth in the parameters (tanh, softmax, fixed comparison
    indicators), so no kink guard is needed.
    """
    enc, cols, pg, pl, ans = stack_questions(questions)
    _, grads, _ = squared_loss_and_grads(model, enc, cols, pg, pl, ans)
    worst = 0.0
    for name, param in model.parameters().items():
        flat = param.ravel()
        numeric = np.empty_like(flat)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up, _, _ = squared_loss_and_grads(model, enc, cols, pg, pl, ans)
            flat[j] = orig - h
            down, _, _ = squared_loss_and_grads(model, enc, cols, pg, pl, ans)
            flat[j] = orig
            numeric[j] = (up - down) / (2.0 * h)
        a_flat = grads[name].ravel()
        denom = max(np.linalg.norm(a_flat), np.linalg.norm(numeric), 1e-12)
        worst = max(worst, float(np.linalg.norm(a_flat - numeric)) / denom)
    return worst


def hard_forward(model: SelectorModel, question: TableQuestion):
    """Argmax-selection execution; returns the prediction and the op names.

    Ties in the op logits break toward the earlier entry of OPS. Aggregators
    add to the accumulator and leave the selection unchanged, so the induced
    program with noops stripped matches execute_program whenever it is well
    formed (a single trailing aggregator).
    """
    hidden = np.tanh(question.encoding @ model.encoder.weights + model.encoder.bias)
    pivot_greater, pivot_lesser = question.pivots()
    column = question.column
    selected = np.ones(len(column), dtype=bool)
    acc = 0.0
    program = []
    for head in model.heads:
        logits = hidden @ head.weights + head.bias
        op = int(np.argmax(logits))
        program.append(OPS[op])
        if op == OP_GREATER:
            selected = selected & (column > pivot_greater)
        elif op == OP_LESSER:
            selected = selected & (column < pivot_lesser)
        elif op == OP_COUNT:
            acc += float(selected.sum())
        elif op == OP_SUM:
            acc += float(column[selected].sum())
    return acc, program


def hard_predict_batch(model: SelectorModel, encodings, columns, pivot_g,
                       pivot_l) -> np.ndarray:
    """Vectorized hard-selection predictions for a batch of questions."""
    hidden = np.tanh(encodings @ model.encoder.weights + model.encoder.bias)
    greater_ind = columns > pivot_g[:, None]
    lesser_ind = columns < pivot_l[:, None]
    selected = np.ones(columns.shape, dtype=bool)
    acc = np.zeros(len(encodings))
    for head in model.heads:
        ops = np.argmax(hidden @ head.weights + head.bias, axis=1)
        is_g = ops == OP_GREATER
        is_l = ops == OP_LESSER
        selected = np.where(is_g[:, None], selected & greater_ind, selected)
        selected = np.where(is_l[:, None], selected & lesser_ind, selected)
        acc += np.where(ops == OP_COUNT, selected.sum(axis=1), 0.0)
        acc += np.where(ops == OP_SUM, (columns * selected).sum(axis=1), 0.0)
    return acc


def format_program(program) -> str:
    """One line per step in induced-program style: step index and op name."""
    lines = [f"step {t + 1}: {op}" for t, op in enumerate(program)]
    return "\n".join(lines)


def _answers_correct(preds: np.ndarray, questions) -> np.ndarray:
    ok = np.zeros(len(questions), dtype=bool)
    for i, q in enumerate(questions):
        agg = q.program[-1][0]
        if agg == "count":
            ok[i] = abs(preds[i] - q.answer) < 1e-6
        else:
            ok[i] = abs(preds[i] - q.answer) <= 1e-4 * max(abs(q.answer), 1.0)
    return ok


def hard_accuracy(model: SelectorModel, questions) -> float:
    """Fraction of questions answered exactly under hard selection."""
    enc, columns, pg, pl, _ = stack_questions(questions)
    preds = hard_predict_batch(model, enc, columns, pg, pl)
    return float(_answers_correct(preds, questions).mean())


def train_programmer(config: TrainConfig, train_questions, test_questions,
                     run_id: str = "programmer", arm: str = "",
                     step_log: list | None = None,
                     model_sink: list | None = None) -> RunResult:
    """Train a selector model through the clip/noise/update pipeline.

    Loss is squared error on the soft prediction; evaluation uses hard
    selection. The run is flagged successful when every held-out question is
    answered exactly at some evaluation point.
    """
    started = time.time()
    rng = Rng(config.seed)
    model = new_selector_model(rng, encoding_dim=train_questions[0].encoding.shape[0],
                               hidden=config.selector_hidden,
                               steps=config.selector_steps,
                               init_stddev=config.init_stddev,
                               dropout_rate=config.dropout_rate)
    params = model.parameters()
    state = config.optimizer_state()
    clip = config.clip_config()
    noise = config.noise_schedule()

    enc, columns, pg, pl, answers = stack_questions(train_questions)
    test_enc, test_cols, test_pg, test_pl, _ = stack_questions(test_questions)

    result = RunResult(run_id=run_id, arm=arm, config=config)
    n = len(train_questions)
    clipped_steps = 0
    max_pre_norm = 0.0
    for _epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads, _ = squared_loss_and_grads(
                model, enc[idx], columns[idx], pg[idx], pl[idx], answers[idx],
                rng=rng, training=True,
            )
            diag = apply_step(params, grads, state, clip, noise, rng,
                              config.pipeline_order)
            if step_log is not None:
                step_log.append(diag)
            if clip.threshold is not None and diag.pre_clip_norm > clip.threshold:
                clipped_steps += 1
            max_pre_norm = max(max_pre_norm, diag.pre_clip_norm)
            epoch_loss += loss * len(idx)

        train_hard = hard_accuracy(model, train_questions)
        test_preds = hard_predict_batch(model, test_enc, test_cols, test_pg, test_pl)
        test_hard = float(_answers_correct(test_preds, test_questions).mean())
        result.train_loss.append(epoch_loss / n)
        result.train_acc.append(train_hard)
        result.test_acc.append(test_hard)

    result.best_test_acc = max(result.test_acc)
    result.final_test_acc = result.test_acc[-1]
    result.success = result.best_test_acc >= 1.0
    result.wall_seconds = time.time() - started
    result.diagnostics = {
        "steps": state.t,
        "sigma_first": noise_stddev(noise, 0),
        "sigma_last": noise_stddev(noise, max(state.t - 1, 0)),
        "max_pre_clip_norm": max_pre_norm,
        "clipped_steps": clipped_steps,
    }
    if model_sink is not None:
        model_sink.append(model)
    return result
