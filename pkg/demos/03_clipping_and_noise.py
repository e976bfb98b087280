"""Inspect the training-step pipeline: clip first, then inject noise.

A gradient whose global norm exceeds the threshold is rescaled onto the
threshold sphere without changing direction; the noise injected afterwards
follows the annealed schedule, so early steps are strongly perturbed and
late steps barely at all. The per-step diagnostics written here (pre/post
clip norms and the applied sigma) are the same records the harness logs
during real runs.
"""
import pathlib

import numpy as np

from gradnoise import (ClipConfig, NoiseSchedule, OptimizerState, Rng,
                       apply_step, clip_global_norm, global_norm, inject_noise,
                       noise_stddev, write_step_log)

OUT = pathlib.Path("demo_out")


def main():
    OUT.mkdir(exist_ok=True)
    rng = Rng(7)

    grads = {"w": rng.gaussian((40, 25), stddev=2.0), "b": rng.gaussian((25,), stddev=2.0)}
    clip = ClipConfig(threshold=10.0)
    clipped, pre = clip_global_norm(grads, clip)
    post = global_norm(list(clipped.values()))
    cos = sum(float((g * c).sum()) for g, c in zip(grads.values(), clipped.values()))
    cos /= pre * post
    print(f"clipping: norm {pre:.3f} -> {post:.3f} (threshold 10), "
          f"direction cosine {cos:.12f}")
    again, _ = clip_global_norm(clipped, clip)
    print(f"clipping twice changes nothing: "
          f"{all(np.array_equal(again[k], clipped[k]) for k in grads)}")

    schedule = NoiseSchedule(mode="annealed", eta=0.3, gamma=0.55)
    zeros = {"w": np.zeros(200_000)}
    for t in (0, 10, 1000):
        sigma = noise_stddev(schedule, t)
        noisy = inject_noise(zeros, sigma, rng)
        print(f"t={t:5d}: sigma={sigma:.5f}, measured stddev of injected noise "
              f"{float(noisy['w'].std()):.5f}")

    print()
    print("ten pipeline steps on a toy quadratic, logged like a real run:")
    params = {"x": np.array([5.0, -3.0])}
    state = OptimizerState(kind="sgd", learning_rate=0.1)
    log = []
    for _ in range(10):
        grads = {"x": 2.0 * params["x"]}
        log.append(apply_step(params, grads, state, ClipConfig(threshold=5.0),
                              schedule, rng))
    path = OUT / "step_log.csv"
    write_step_log(log, path)
    for line in open(path).read().splitlines()[:4]:
        print(" ", line)
    print(f"  ... full log in {path}")


if __name__ == "__main__":
    main()
