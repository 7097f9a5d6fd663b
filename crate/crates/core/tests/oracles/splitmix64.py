"""Reference SplitMix64 stream and uniform color draws, written independently
of the Rust implementation. Emits tests/golden/splitmix64.json."""
import json
import sys

MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15


def splitmix64(seed):
    state = seed & MASK
    while True:
        state = (state + GAMMA) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        yield z ^ (z >> 31)


def sample_matrix(seed, n, c):
    gen = splitmix64(seed)
    flat = [((next(gen) >> 11) * c) >> 53 for _ in range(n * n)]
    return [flat[r * n:(r + 1) * n] for r in range(n)]


def main(out):
    raw = {str(s): [str(v) for v, _ in zip(splitmix64(s), range(6))] for s in (0, 1, 7, 2**64 - 1)}
    cases = []
    for seed, n, c in [(0, 2, 3), (0, 3, 10), (42, 4, 5), (2**63 + 11, 3, 3), (123456789, 5, 7)]:
        cases.append({"seed": str(seed), "n": n, "c": c, "matrix": sample_matrix(seed, n, c)})
    with open(out, "w") as f:
        json.dump({"raw": raw, "matrices": cases}, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "../golden/splitmix64.json")
