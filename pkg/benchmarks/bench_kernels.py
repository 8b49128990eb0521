"""Benchmark the compiled kernel backend against the pure-Python fallback.

Runs each hot kernel on both backends with identical inputs, checks the
outputs are bit-identical, and reports wall time plus speedup. Finishes with
a small end-to-end training run per backend (spawned in a subprocess so the
backend choice, which happens at import, can differ).

Usage: python3 benchmarks/bench_kernels.py [--size N] [--repeats R]
"""

import argparse
import os
import subprocess
import sys
import time
from array import array
from random import Random

from memescan.kernels import _core, pure  # type: ignore[attr-defined]


def _rand_buf(n, rng):
    return array("d", [rng.uniform(-1.0, 1.0) for _ in range(n)])


def bench(label, fn_pure, fn_fast, repeats):
    # warm-up + bit-identical check
    out_pure = fn_pure()
    out_fast = fn_fast()
    identical = list(out_pure) == list(out_fast)

    t0 = time.perf_counter()
    for _ in range(repeats):
        fn_pure()
    t_pure = time.perf_counter() - t0

    t0 = time.perf_counter()
    for _ in range(repeats):
        fn_fast()
    t_fast = time.perf_counter() - t0

    speedup = t_pure / t_fast if t_fast > 0 else float("inf")
    flag = "bit-identical" if identical else "MISMATCH"
    print(f"{label:<28} pure {t_pure * 1e3 / repeats:8.3f} ms   "
          f"compiled {t_fast * 1e3 / repeats:8.3f} ms   "
          f"x{speedup:6.1f}   [{flag}]")
    return identical


def run_kernel_benches(size, repeats):
    rng = Random(0)
    n, m, k = size, size, size
    a = _rand_buf(n * m, rng)
    b = _rand_buf(m * k, rng)
    ok = True

    ok &= bench("matmul",
                lambda: pure.matmul(a, n, m, b, m, k),
                lambda: _core.matmul(a, n, m, b, m, k), repeats)
    ok &= bench("matmul_tn",
                lambda: pure.matmul_tn(a, n, m, b, n, k),
                lambda: _core.matmul_tn(a, n, m, b, n, k), repeats)
    ok &= bench("softmax_rows",
                lambda: pure.softmax_rows(a, n, m),
                lambda: _core.softmax_rows(a, n, m), repeats)

    width, d_in, d_out = 3, 16, 16
    seq = _rand_buf(size * d_in, rng)
    kern = _rand_buf(width * d_in * d_out, rng)
    ok &= bench("conv1d_fwd",
                lambda: pure.conv1d_fwd(seq, size, d_in, kern, width,
                                        d_out, 1),
                lambda: _core.conv1d_fwd(seq, size, d_in, kern, width,
                                         d_out, 1), repeats)
    ok &= bench("tanh_fwd",
                lambda: pure.tanh_fwd(a, n * m),
                lambda: _core.tanh_fwd(a, n * m), repeats)
    return ok


_TRAIN_SNIPPET = """
import time, tempfile
from memescan.dataset import load_manifest
from memescan.kernels import BACKEND_NAME
from memescan.model import ModelConfig
from memescan.synth import generate_planted
from memescan.training import TrainConfig, train

with tempfile.TemporaryDirectory() as tmp:
    records = generate_planted(tmp, 20, seed=0)
    dataset = [(r, r.misogyny_label, r.category) for r in records]
    cfg = TrainConfig(seed=7, epochs=10, lr=1.0, model=ModelConfig(
        d_h=16, vocab_size=64, max_len=32, raw_dim=8, max_patches=4))
    t0 = time.perf_counter()
    _, history = train(dataset, cfg, base_dir=tmp)
    dt = time.perf_counter() - t0
print(f"{BACKEND_NAME}: 10 epochs x 20 memes in {dt:.2f}s, "
      f"final loss {history[-1]:.6f}")
"""


def run_training_benches():
    print("\nend-to-end training (10 epochs, 20 memes):")
    outputs = []
    for pure_flag in ("0", "1"):
        env = dict(os.environ, MEMESCAN_PURE=pure_flag)
        res = subprocess.run([sys.executable, "-c", _TRAIN_SNIPPET],
                             env=env, capture_output=True, text=True,
                             check=True)
        line = res.stdout.strip()
        print("  " + line)
        outputs.append(line.split("final loss")[-1])
    if outputs[0] == outputs[1]:
        print("  final losses agree across backends")
    else:
        print("  WARNING: final losses differ across backends")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=64,
                    help="square matrix dimension (default 64)")
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()

    print(f"kernel benchmarks (size={args.size}, repeats={args.repeats}):")
    ok = run_kernel_benches(args.size, args.repeats)
    run_training_benches()
    if not ok:
        print("\nFAIL: backend outputs differ", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
