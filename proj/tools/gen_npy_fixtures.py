#!/usr/bin/env python3
# Copyright (c) 2026 htmoe contributors
# SPDX-License-Identifier: Apache-2.0
"""Writes the committed .npy fixtures used by the ingest tests.

NumPy acts as the independent writer: the same seeded matrix is stored in
C order (f8), Fortran order (f8) and C order (f4), alongside a JSON dump of
the exact values, so the reader can be checked element-exactly against a
serialization it did not produce. Run once; outputs are committed.
"""

import json
import pathlib

import numpy as np

OUT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "npy"
SEED = 20260815
ROWS, COLS = 64, 32


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)
    m = rng.standard_normal((ROWS, COLS))

    np.save(OUT / "randn_c.npy", np.ascontiguousarray(m))
    np.save(OUT / "randn_f.npy", np.asfortranarray(m))
    np.save(OUT / "randn_f32.npy", np.ascontiguousarray(m.astype(np.float32)))

    with open(OUT / "values.json", "w") as fh:
        json.dump(
            {
                "seed": SEED,
                "shape": [ROWS, COLS],
                "values": m.flatten().tolist(),
                "values_f32": m.astype(np.float32).astype(np.float64).flatten().tolist(),
            },
            fh,
        )
    print(f"wrote fixtures to {OUT}")


if __name__ == "__main__":
    main()
