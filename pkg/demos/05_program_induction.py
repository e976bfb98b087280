"""Induce discrete programs from answers alone, then read them out.

The model never sees a program during training, only (question, answer)
pairs; questions ask for counts or sums over a numeric column, optionally
filtered by greater/lesser comparisons. Training runs fully soft
(probability-weighted mixtures of all ops), evaluation runs hard (argmax
op per step). After training we print the induced program for a few test
questions next to the ground truth.
"""
from gradnoise import Rng, TrainConfig, generate_table_task
from gradnoise.program_induction import (format_program, hard_forward,
                                         train_programmer)


def describe(program) -> str:
    parts = []
    for op, arg in program:
        parts.append(f"{op}({arg:g})" if arg is not None else op)
    return " . ".join(parts)


def main():
    train_qs = generate_table_task(Rng(300), 2000, column_len=10, depth_range=(1, 2))
    test_qs = generate_table_task(Rng(301), 1000, column_len=10, depth_range=(1, 2))

    config = TrainConfig(task="programmer", seed=3, optimizer="adam",
                         learning_rate=0.03, epochs=30, batch_size=50,
                         clip_threshold=5.0, noise_mode="annealed", noise_eta=1.0,
                         selector_hidden=32, selector_steps=4)
    print("training (soft selection, squared loss on the answer)...")
    sink = []
    result = train_programmer(config, train_qs, test_qs, model_sink=sink)
    model = sink[0]
    print("hard-selection test accuracy by epoch: "
          + " ".join(f"{a:.3f}" for a in result.test_acc))
    print(f"best {result.best_test_acc:.3f}; "
          f"{'every' if result.success else 'not every'} held-out question solved\n")

    print("induced programs for the first five test questions:")
    for q in test_qs[:5]:
        pred, program = hard_forward(model, q)
        ok = "ok " if abs(pred - q.answer) < 1e-6 else "off"
        print(f"  question: {describe(q.program)}  (answer {q.answer:g})")
        print(f"  induced [{ok}] prediction {pred:g}:")
        for line in format_program(program).splitlines():
            print(f"    {line}")
        print()


if __name__ == "__main__":
    main()
