"""Rescue a pathologically initialized deep network with gradient noise.

A 20-layer ReLU net with every parameter at zero cannot learn: all hidden
activations are zero, only the output bias receives gradient, and accuracy
sits at chance forever. Adding Gaussian noise to the clipped gradients
random-walks the weights away from zero; once their scale is large enough
for signal to traverse the stack, ordinary SGD takes over and accuracy
climbs well above chance with the same data, architecture, and learning
rate.

The walk grows like lr * sigma_t per step, so the variance scale eta has
to match the step budget. At the library default eta=0.01 the weights
would need ~10^5 steps to reach the trainable scale; this demo runs a
short 25-epoch budget, so it raises eta to 0.1. Expect about a minute.
"""
from gradnoise import GridReport, emit_report
from gradnoise.harness import (mnist_experiment_config, resolve_mnist_data,
                               summary_text, train_mnist)


def main():
    train_ds, test_ds = resolve_mnist_data(train_subset=10000)
    runs = []
    for arm in ("none", "noise"):
        config = mnist_experiment_config(6, arm, 0.1, seed=1, epochs=25)
        if arm == "noise":
            config = config.with_overrides(noise_eta=0.1)
        run_id = f"zero-init-{arm}"
        print(f"training {run_id} (20 layers, all weights zero) ...")
        runs.append(train_mnist(config, train_ds, test_ds, run_id=run_id, arm=arm))
    report = GridReport(runs=runs)

    print()
    print(summary_text(report))
    for run in report.runs:
        trace = " ".join(f"{a:.2f}" for a in run.test_acc)
        print(f"{run.run_id:18s} {trace}")
    print()
    none_best = max(r.best_test_acc for r in report.arm_runs("none"))
    noise_best = max(r.best_test_acc for r in report.arm_runs("noise"))
    print(f"best without noise: {none_best:.3f} (chance is 0.1)")
    print(f"best with noise:    {noise_best:.3f} (still climbing at cutoff)")
    paths = emit_report(report, "demo_out/zero_init_rescue")
    print(f"full report under {paths['runs.csv'].parent}")


if __name__ == "__main__":
    main()
