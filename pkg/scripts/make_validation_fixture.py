"""Regenerate the synthetic validation fixture.

Only summary statistics exist for the Fabric testbed measurement
(mean 1334 ms, sd 194 ms, 20 tx/s).  This script draws 100
normal samples with a fixed seed and rescales them so that the sample mean
and standard deviation match those figures exactly (before rounding to
0.1 ms).  The output is synthetic and labelled as such.

    python scripts/make_validation_fixture.py [output.csv]
"""

import sys
from pathlib import Path

import numpy as np

MEAN_MS = 1334.0
SD_MS = 194.0
N = 100
SEED = 1334194
RATE = 20.0

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "hlfspn" / "data" / "validation_rt.csv"


def main(out: Path = DEFAULT_OUT) -> None:
    z = np.random.default_rng(SEED).standard_normal(N)
    z = (z - z.mean()) / z.std(ddof=1)
    samples = np.round(MEAN_MS + SD_MS * z, 1)
    lines = [
        "# label: fabric-testbed-synthetic",
        "# source: synthetic; normal draws rescaled to mean 1334 ms and sd 194 ms"
        f" (seed {SEED}, n {N}); generated by scripts/make_validation_fixture.py",
        f"# arrival_rate: {RATE:g}",
        "rt_ms",
        *(f"{v:.1f}" for v in samples),
    ]
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote {out}: mean {samples.mean():.2f} sd {samples.std(ddof=1):.2f}")


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else DEFAULT_OUT)
