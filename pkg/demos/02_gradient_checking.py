"""Check every hand-written backward pass against finite differences.

Both models here are differentiated by hand: the deep ReLU classifier and
the soft-selection program inducer. Before trusting any training curve, we
compare analytic gradients to central differences on small random
instances. Agreement is norm-based per parameter tensor; see the
gradient_check docstring for why per-element ratios are too brittle.
"""
from gradnoise import Rng, generate_table_task, gradient_check
from gradnoise.nn import random_check_model
from gradnoise.program_induction import new_selector_model, selector_gradient_check


def main():
    rng = Rng(42)

    print("deep ReLU classifier, 10 random small models:")
    worst = 0.0
    for k in range(10):
        model, batch, labels = random_check_model(rng)
        err = gradient_check(model, batch, labels)
        dims = " -> ".join(str(l.weights.shape[0]) for l in model.layers)
        dims += f" -> {model.layers[-1].weights.shape[1]}"
        print(f"  model {k} ({dims}): {err:.2e}")
        worst = max(worst, err)

    print()
    print("soft-selection program inducer, 10 random tiny models:")
    for k in range(10):
        questions = generate_table_task(Rng(900 + k), 4, column_len=3,
                                        depth_range=(1, 2))
        model = new_selector_model(rng, hidden=4, steps=2)
        err = selector_gradient_check(model, questions)
        print(f"  model {k}: {err:.2e}")
        worst = max(worst, err)

    print()
    verdict = "agree" if worst < 1e-6 else "DISAGREE"
    print(f"worst relative error {worst:.2e}: analytic and numeric gradients {verdict}.")


if __name__ == "__main__":
    main()
