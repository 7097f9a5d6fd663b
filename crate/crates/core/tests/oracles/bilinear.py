"""Reference bilinear resize (half-pixel centers, edge clamp), written from
the sampling definition rather than the Rust code. Cross-checked against
torch.nn.functional.interpolate(mode="bilinear", align_corners=False) when
torch is importable. Emits tests/golden/bilinear.json."""
import json
import math
import sys


def resize(src, n):
    h = len(src)
    w = len(src[0])

    def coord(i, size):
        s = (i + 0.5) * size / n - 0.5
        s = min(max(s, 0.0), size - 1)
        i0 = int(math.floor(s))
        i1 = min(i0 + 1, size - 1)
        return i0, i1, s - i0

    out = []
    for i in range(n):
        y0, y1, fy = coord(i, h)
        row = []
        for j in range(n):
            x0, x1, fx = coord(j, w)
            top = src[y0][x0] * (1 - fx) + src[y0][x1] * fx
            bot = src[y1][x0] * (1 - fx) + src[y1][x1] * fx
            row.append(top * (1 - fy) + bot * fy)
        out.append(row)
    return out


def main(out):
    cases = []
    for src, n in [([[0.0, 1.0], [2.0, 3.0]], 4), ([[0.0, 1.0], [2.0, 3.0]], 3),
                   ([[1.0, -2.0, 0.5], [4.0, 0.0, 2.0], [-1.0, 3.0, 1.5]], 5),
                   ([[0.0, 1.0, 2.0, 3.0]] * 4, 2)]:
        res = resize(src, n)
        try:
            import torch
            t = torch.nn.functional.interpolate(torch.tensor(src, dtype=torch.float64)[None, None],
                                                size=(n, n), mode="bilinear", align_corners=False)
            ref = t[0, 0].tolist()
            assert all(abs(a - b) < 1e-12 for ra, rb in zip(res, ref) for a, b in zip(ra, rb)), (res, ref)
        except ImportError:
            pass
        cases.append({"input": src, "n": n, "output": res})
    with open(out, "w") as f:
        json.dump(cases, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "../golden/bilinear.json")
