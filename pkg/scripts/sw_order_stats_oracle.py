"""One-off oracle: Shapiro-Wilk W for n=20 from Monte-Carlo order statistics.

Estimates the expected standard-normal order statistics for n=20 from 1e7
simulated sorted samples, normalizes them into correlation weights, and
evaluates the resulting W on a fixed uniform test sample. The printed values
are pinned into tests/test_stats.py; rerun this script only to regenerate
them.
"""
import random

import numpy as np

N = 20
DRAWS = 10_000_000
CHUNK = 100_000
MC_SEED = 977_131
SAMPLE_SEED = 2024


def main() -> None:
    rng = np.random.default_rng(MC_SEED)
    acc = np.zeros(N)
    done = 0
    while done < DRAWS:
        k = min(CHUNK, DRAWS - done)
        block = rng.standard_normal((k, N))
        block.sort(axis=1)
        acc += block.sum(axis=0)
        done += k
    m = acc / DRAWS

    r = random.Random(SAMPLE_SEED)
    sample = np.sort([r.random() for _ in range(N)])

    c = m / np.sqrt(m @ m)
    ss = float(((sample - sample.mean()) ** 2).sum())
    w_oracle = float((c @ sample) ** 2 / ss)

    print("sample =", [round(v, 12) for v in sample.tolist()])
    print("m_hat =", [round(v, 9) for v in m.tolist()])
    print("W_oracle =", round(w_oracle, 9))


if __name__ == "__main__":
    main()
