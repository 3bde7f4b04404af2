"""Writes the synthetic VLDG fixtures and their reference gap values.

Run from this directory: python3 make_fixtures.py
Uses only the standard library so the files do not depend on the Rust writer.
"""

import json
import math
import os
import struct

STYLES = ["real", "cartoon", "pencil", "oil"]
COUNT, DIM = 20, 8


class Lcg:
    def __init__(self, seed):
        self.state = seed

    def uniform(self):
        self.state = (6364136223846793005 * self.state + 1442695040888963407) % (1 << 64)
        return (self.state >> 11) / float(1 << 53) * 2.0 - 1.0


def f32(x):
    return struct.unpack("<f", struct.pack("<f", x))[0]


def write(path, rows, ids, domain, modality):
    dim = len(rows[0]) if rows else 0
    with open(path, "wb") as f:
        f.write(b"VLDG")
        f.write(struct.pack("<HII", 1, len(rows), dim))
        for row in rows:
            f.write(struct.pack("<%df" % dim, *row))
        meta = {"ids": ids, "domain": domain, "modality": modality}
        f.write(json.dumps(meta, separators=(",", ":")).encode())


def mmd2_linear_biased(x, y):
    def mean_dot(a, b):
        s = 0.0
        for u in a:
            for v in b:
                s += sum(p * q for p, q in zip(u, v))
        return s / (len(a) * len(b))

    return mean_dot(x, x) + mean_dot(y, y) - 2.0 * mean_dot(x, y)


def main():
    for d in ["visual", "linguistic", "extractor"]:
        os.makedirs(d, exist_ok=True)
    rng = Lcg(2024)
    data = {}
    for modality in ["visual", "linguistic"]:
        for s, style in enumerate(STYLES):
            shift = 0.25 * s if modality == "visual" else 0.1 * s
            rows = [[f32(rng.uniform() + shift) for _ in range(DIM)] for _ in range(COUNT)]
            ids = ["%s-%02d" % (style, i) for i in range(COUNT)]
            write("%s/%s.vldg" % (modality, style), rows, ids, style, modality)
            data[(modality, style)] = rows

    cells = [[None] * 4 for _ in STYLES]
    for i in range(4):
        for j in range(4):
            if i != j:
                modality = "visual" if i > j else "linguistic"
                cells[i][j] = mmd2_linear_biased(data[(modality, STYLES[i])], data[(modality, STYLES[j])])
    vis = [cells[i][j] for i in range(4) for j in range(4) if i > j]
    lin = [cells[i][j] for i in range(4) for j in range(4) if i < j]
    expected = {
        "kernel": "linear",
        "estimator": "biased",
        "cells": cells,
        "visual_avg": sum(vis) / len(vis),
        "linguistic_avg": sum(lin) / len(lin),
    }
    with open("expected_linear.json", "w") as f:
        json.dump(expected, f, indent=2)
        f.write("\n")

    # Shaped like the extractor's output for three images and a 768-d encoder.
    rows = [[f32(math.sin(0.01 * (r + 1) * (c + 1))) for c in range(768)] for r in range(3)]
    write("extractor/real_visual_768.vldg", rows, ["a", "b", "c"], "real", "visual")


if __name__ == "__main__":
    main()
