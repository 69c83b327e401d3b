"""Binary field dumps and PGM previews.

Dump layout (little-endian):

    offset  size  content
    0       4     magic b"VPF1"
    4       4     nx (uint32)
    8       4     ny (uint32)
    12      8     h (float64)
    20      12    zero padding
    32      8·nx·ny  values (float64), row-major, row iy ↔ y, outside cells 0

Previews are 8-bit binary PGM (P5), linearly rescaled to [0, 255], with the
first image row at the top of the domain.
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from vortex_patches.domain import FloatArray, Grid, ScalarField
from vortex_patches.errors import GridMismatch

logger = logging.getLogger(__name__)

MAGIC = b"VPF1"
HEADER = struct.Struct("<4sIId12x")
_DTYPE = np.dtype("<f8")


@dataclass(frozen=True)
class FieldDump:
    """Raw content of a dump file."""

    nx: int
    ny: int
    h: float
    values: FloatArray

    def to_field(self, grid: Grid) -> ScalarField:
        """Attach the values to ``grid`` (which must have the same shape and spacing)."""
        if (self.ny, self.nx) != grid.shape or not np.isclose(self.h, grid.h, rtol=1e-12):
            raise GridMismatch(
                f"dump is {self.nx}x{self.ny} with h={self.h}, grid is "
                f"{grid.nx}x{grid.ny} with h={grid.h}"
            )
        return ScalarField(grid, self.values)


def write_field_dump(path: Path, f: ScalarField) -> None:
    grid = f.grid
    with open(path, "wb") as out:
        out.write(HEADER.pack(MAGIC, grid.nx, grid.ny, grid.h))
        out.write(np.ascontiguousarray(f.values, dtype=_DTYPE).tobytes())
    logger.debug("wrote %s", path)


def read_field_dump(path: Path) -> FieldDump:
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, nx, ny, h = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    expected = HEADER.size + nx * ny * _DTYPE.itemsize
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    values = np.frombuffer(data, dtype=_DTYPE, offset=HEADER.size).reshape(ny, nx)
    return FieldDump(nx, ny, h, values.astype(np.float64))


def to_gray(values: FloatArray) -> np.ndarray:
    """Rescale to 8-bit gray; constant arrays map to mid-gray."""
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi == lo:
        return np.full(values.shape, 128, dtype=np.uint8)
    scaled = np.rint((values - lo) * (255.0 / (hi - lo)))
    return scaled.astype(np.uint8)


def write_pgm(path: Path, f: ScalarField) -> None:
    image = to_gray(f.values)[::-1]
    ny, nx = image.shape
    with open(path, "wb") as out:
        out.write(f"P5\n{nx} {ny}\n255\n".encode("ascii"))
        out.write(np.ascontiguousarray(image).tobytes())
