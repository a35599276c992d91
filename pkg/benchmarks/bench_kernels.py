"""Compare the compiled Gibbs kernel with the pure-Python fallback.

Both backends run the same robot on the same frames and must produce the same
assignments; the script reports per-frame wall time for each.

    python3 benchmarks/bench_kernels.py --frames 100
"""
import argparse
import time

import numpy as np

from topicfuse.rost import TopicModel, TopicModelConfig
from topicfuse.rost._backend import KERNELS
from topicfuse.world import observe, plan_coverage_trajectories, preset_environment


def run(backend, truth, emission, cells, words, seed):
    model = TopicModel(TopicModelConfig(seed=seed), truth.grid, 0, backend=backend)
    t0 = time.perf_counter()
    for t, c in enumerate(cells):
        model.ingest(observe(truth, emission, int(c), words, seed, 0, t))
    return time.perf_counter() - t0, model


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--env", default="ENV2")
    ap.add_argument("--frames", type=int, default=100)
    ap.add_argument("--words", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    truth, emission = preset_environment(args.env, args.seed)
    cells = plan_coverage_trajectories(truth, 12, args.frames).cells[0]
    if "cython" not in KERNELS:
        print("compiled kernel not built; only the fallback is available")
    results = {}
    for name in sorted(KERNELS):
        secs, model = run(name, truth, emission, cells, args.words, args.seed)
        results[name] = (secs, model)
        print(f"{name:8s} {secs:8.3f} s total  {1e3 * secs / args.frames:8.2f} ms/frame  K={model.n_used}")
    if len(results) == 2:
        (s_c, m_c), (s_p, m_p) = results["cython"], results["python"]
        same = np.array_equal(m_c.assignments, m_p.assignments)
        print(f"speedup {s_p / s_c:.1f}x, identical assignments: {same}")


if __name__ == "__main__":
    main()
