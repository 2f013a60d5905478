"""
Hazard fields and vulnerability curves
======================================

Draw a correlated pair of wind and precipitation fields on a small grid,
normalize them, and look at how the logistic multi-hazard curve and the
Emanuel wind curve turn intensities into damage fractions.
"""

import numpy as np

from mhbhm import (
    CrossMaternParams,
    EmanuelParams,
    LogisticVulnParams,
    MaternParams,
    SpatialGrid,
    VulnerabilityModel,
    emanuel_fraction,
    normalize_hazards,
    sample_multihazard_fields,
    vulnerability_surface,
)

grid = SpatialGrid(12, 12)

# two hazards with a common range of 3 cells and a cross-correlation of 0.6
params = CrossMaternParams(
    (MaternParams(25.0, 3.0, 1.5), MaternParams(900.0, 3.0, 1.5)),
    ((1.0, 0.6), (0.6, 1.0)),
)
means = np.vstack([np.full(grid.n_cells, 40.0), np.full(grid.n_cells, 150.0)])
raw = sample_multihazard_fields(grid, means, params, rng_seed=1, names=("wind", "precip"))

# the cross-correlation shows up across repeated draws at a fixed cell
draws = np.array([sample_multihazard_fields(grid, means, params, rng_seed=(1, i)).values[:, 0] for i in range(2000)])
print(f"wind/precip correlation at one cell over 2000 draws: {np.corrcoef(draws.T)[0, 1]:.2f}")

fields = normalize_hazards(raw)
print("normalization (offset, scale):", fields.normalization)

# damage fractions under the logistic curve used for the synthetic truth
model = VulnerabilityModel(LogisticVulnParams(6.0, (7.0, 6.0)), ("wind", "precip"))
surface = vulnerability_surface(model, fields).reshape(grid.n_rows, grid.n_cols)
print("logistic damage fraction, first three rows:")
print(np.round(surface[:3], 3))

# the Emanuel curve acts on physical wind speeds
speeds = np.array([20.0, 40.0, 60.0, 80.0, 120.0])
print("Emanuel fractions at", speeds, "->", np.round(emanuel_fraction(speeds, EmanuelParams(25.0, 80.0)), 3))
