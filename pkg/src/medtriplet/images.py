"""Image ingestion: ASCII portable graymaps and raw float grids.

``.pgm`` files must be plain (P2) graymaps; intensities are divided by
the declared maxval so pixels land in [0, 1]. ``.npy`` files hold the
row-major float grid directly and are clipped to [0, 1] on load.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .encoder import ImageSample


def read_pgm(path: str | Path) -> ImageSample:
    path = Path(path)
    tokens: list[str] = []
    for line in path.read_text(encoding="ascii").splitlines():
        body = line.split("#", 1)[0]
        tokens.extend(body.split())
    if not tokens or tokens[0] != "P2":
        raise ValueError(f"{path}: not a plain (P2) graymap")
    if len(tokens) < 4:
        raise ValueError(f"{path}: truncated graymap header")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval <= 0:
        raise ValueError(f"{path}: maxval must be positive")
    values = tokens[4:]
    if len(values) != width * height:
        raise ValueError(f"{path}: expected {width * height} pixels, found {len(values)}")
    grid = np.array([int(v) for v in values], dtype=np.float64).reshape(height, width)
    return ImageSample(grid / maxval)


def write_pgm(path: str | Path, pixels: np.ndarray, maxval: int = 255) -> None:
    """Quantize a [0, 1] grid to integers and write a plain graymap."""
    grid = np.clip(np.rint(np.asarray(pixels, dtype=np.float64) * maxval), 0, maxval).astype(int)
    height, width = grid.shape
    lines = ["P2", f"{width} {height}", str(maxval)]
    lines.extend(" ".join(str(v) for v in row) for row in grid)
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_image(path: str | Path) -> ImageSample:
    path = Path(path)
    if path.suffix == ".pgm":
        return read_pgm(path)
    if path.suffix == ".npy":
        grid = np.load(path, allow_pickle=False)
        if grid.ndim != 2:
            raise ValueError(f"{path}: expected a 2-D grid, got shape {grid.shape}")
        return ImageSample(np.clip(grid.astype(np.float64), 0.0, 1.0))
    raise ValueError(f"{path}: unsupported image format {path.suffix!r} (want .pgm or .npy)")
