"""Regenerate the RGB lookup tables shipped in balicodec/data.

The renderer loads these frozen 256-entry tables instead of depending on a
plotting library at runtime, which keeps golden images portable.  Run from
the repository root:

    python scripts/make_colormaps.py
"""

from pathlib import Path

import matplotlib
import numpy as np

DATA_DIR = Path(__file__).resolve().parents[1] / "src" / "balicodec" / "data"


def dump(name: str, cmap_name: str) -> None:
    cmap = matplotlib.colormaps[cmap_name].resampled(256)
    rows = (np.asarray(cmap(np.arange(256)))[:, :3] * 255).round().astype(int)
    path = DATA_DIR / f"colormap_{name}.txt"
    with open(path, "w") as f:
        f.write(f"# 256 x 'R G B' rows, source colormap: {cmap_name}\n")
        for r, g, b in rows:
            f.write(f"{r} {g} {b}\n")
    print(f"wrote {path}")


if __name__ == "__main__":
    dump("sequential", "viridis")
    dump("diverging", "coolwarm")
