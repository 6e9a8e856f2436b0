"""Tabulate the radial rate profiles of the built-in increment laws."""
import numpy as np

from geowalk import MeasureFamily, RadialSpec
from geowalk.ldp import legendre_transform

families = [("two-point-1d", 1), ("uniform-sphere-shell", 2), ("uniform-ball", 2), ("uniform-ball", 3)]
grid = np.linspace(0.0, 1.0, 11)
print("v/r   " + "  ".join(f"{k}:{d}".rjust(22) for k, d in families))
for frac in grid:
    row = []
    for kind, dim in families:
        fam = MeasureFamily(RadialSpec(kind, 1.0, dim))
        row.append(f"{legendre_transform(fam.profile, frac).value:22.6f}")
    print(f"{frac:4.1f}  " + "  ".join(row))
