"""CSV serialization of sampled grid fields.

Format: a header naming the axes, resolution and bounds, then the samples
in row-major order with one line per trailing-axis row::

    axes,x1,x2
    resolution,17,17
    bounds,0.0,1.0,0.0,1.0
    data
    0.0,0.0625,...
"""

from __future__ import annotations

from pathlib import Path as FsPath

import numpy as np

from .fields import Patch, ScalarField

__all__ = ["write_field_csv", "read_field_csv"]


def write_field_csv(field: ScalarField, path) -> None:
    patch = field.patch
    d = patch.dim
    lines = [
        "axes," + ",".join(f"x{k}" for k in range(1, d + 1)),
        "resolution," + ",".join(str(r) for r in patch.resolution),
        "bounds," + ",".join(f"{b!r}" for pair in patch.bounds for b in pair),
        "data",
    ]
    flat = field.samples.reshape(-1, patch.resolution[-1])
    for row in flat:
        lines.append(",".join(repr(float(v)) for v in row))
    FsPath(path).write_text("\n".join(lines) + "\n")


def read_field_csv(path) -> ScalarField:
    text = FsPath(path).read_text().strip().splitlines()
    if len(text) < 4 or not text[0].startswith("axes,"):
        raise ValueError(f"{path} is not a grid dump")
    axes = text[0].split(",")[1:]
    resolution = tuple(int(v) for v in text[1].split(",")[1:])
    bvals = [float(v) for v in text[2].split(",")[1:]]
    bounds = tuple((bvals[2 * k], bvals[2 * k + 1]) for k in range(len(axes)))
    if text[3] != "data":
        raise ValueError(f"{path}: missing data section")
    values = [float(v) for line in text[4:] for v in line.split(",") if v]
    patch = Patch(len(axes) // 2, bounds, resolution)
    samples = np.asarray(values).reshape(resolution)
    return ScalarField.from_samples(patch, samples)
