"""Experiment dataset file: JSON header plus raw float64 little-endian fields.

Layout: magic line, an 8-byte little-endian header length, the JSON header
(grid dims, ranges, field names, every physical constant used to generate the
data), then the x grid, the t grid, and each field as a row-major (nt, nx)
float64 array.  Writing and re-reading is bit-identical.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ConfigError

__all__ = ["ExperimentDataset", "write_dataset", "read_dataset"]

_MAGIC = b"#shockfit-experiment-v1\n"


@dataclass
class ExperimentDataset:
    """Fields on an (x, t) product grid, with generation metadata."""

    x: np.ndarray
    t: np.ndarray
    fields: dict[str, np.ndarray]
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.t = np.asarray(self.t, dtype=np.float64)
        for name, arr in self.fields.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != (len(self.t), len(self.x)):
                raise ConfigError(f"field {name!r} must have shape (nt, nx)")
            self.fields[name] = arr

    @property
    def grid_shape(self) -> tuple[int, int]:
        return (len(self.t), len(self.x))

    def supervision_arrays(self):
        """Support points (N, 2) in (x, t) and (rho, rho*u, E) targets."""
        for needed in ("rho", "u", "E"):
            if needed not in self.fields:
                raise ConfigError(f"dataset lacks field {needed!r} for supervision")
        xg, tg = np.meshgrid(self.x, self.t)
        points = np.stack([xg.ravel(), tg.ravel()], axis=1)
        rho = self.fields["rho"].ravel()
        mom = rho * self.fields["u"].ravel()
        e = self.fields["E"].ravel()
        return points, np.stack([rho, mom, e], axis=1)


def write_dataset(path, ds: ExperimentDataset):
    header = {
        "nx": len(ds.x),
        "nt": len(ds.t),
        "x_range": [float(ds.x[0]), float(ds.x[-1])],
        "t_range": [float(ds.t[0]), float(ds.t[-1])],
        "fields": list(ds.fields.keys()),
        "constants": ds.constants,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(ds.x.astype("<f8").tobytes())
        fh.write(ds.t.astype("<f8").tobytes())
        for name in header["fields"]:
            fh.write(np.ascontiguousarray(ds.fields[name]).astype("<f8").tobytes())


def read_dataset(path) -> ExperimentDataset:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ConfigError(f"{path} is not an experiment dataset")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode())
        nx, nt = header["nx"], header["nt"]
        x = np.frombuffer(fh.read(8 * nx), dtype="<f8").astype(np.float64)
        t = np.frombuffer(fh.read(8 * nt), dtype="<f8").astype(np.float64)
        fields = {}
        for name in header["fields"]:
            raw = fh.read(8 * nx * nt)
            fields[name] = np.frombuffer(raw, dtype="<f8").astype(
                np.float64).reshape(nt, nx)
    return ExperimentDataset(x=x, t=t, fields=fields,
                             constants=header["constants"])
