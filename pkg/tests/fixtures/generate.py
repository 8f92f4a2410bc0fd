"""Regenerate the fixture files in this directory.

Run from anywhere: ``python3 tests/fixtures/generate.py``.
"""

import json
from pathlib import Path

import numpy as np

from idfunc.calibration import Scenario
from idfunc.catalog import identification_function

HERE = Path(__file__).resolve().parent

SERIES_SEED = 12345


def misspecified_series():
    # mean forecasts biased upward by half a conditional standard deviation
    V = identification_function("mean")
    rng = np.random.default_rng(np.random.SeedSequence(SERIES_SEED))
    series = Scenario(bias=0.5).simulate(V, 200, rng)
    lines = ["x1,y1"]
    for x, y in zip(series.forecasts[:, 0], series.realisations):
        lines.append(f"{float(x)!r},{float(y)!r}")
    (HERE / "misspecified_series.csv").write_text("\n".join(lines) + "\n")


def configs():
    normal = lambda m, v: {"family": "normal", "params": [m, v]}
    files = {
        "inconsistent_pair_recover.json": {
            "functional": "mean-var",
            "prime": "mean-var-modified",
            "grid": [[0.5, 2.0], [0.5, -1.0]],
            "battery": [normal(0.0, 1.0), normal(1.0, 1.0), normal(0.0, 4.0)],
        },
        "atoms_quantile.json": {
            "functional": "quantile:0.25",
            "family": [
                {"family": "discrete-atoms", "atoms": [[-1.0, 0.5], [1.0, 0.5]]},
                {"family": "discrete-atoms", "atoms": [[0.0, 0.25], [1.0, 0.75]]},
                {"family": "discrete-atoms", "atoms": [[-2.0, 0.1], [0.0, 0.3], [3.0, 0.6]]},
            ],
        },
        "power_study.json": {
            "functional": "quantile-es:0.1",
            "transforms": ["identity", "quantile-es:0.1"],
            "scenario": {"bias": 0.3, "bias_coords": [1]},
            "n": 500,
            "replications": 200,
            "level": 0.05,
            "seed": 7,
        },
    }
    for name, cfg in files.items():
        (HERE / name).write_text(json.dumps(cfg, indent=2) + "\n")


if __name__ == "__main__":
    misspecified_series()
    configs()
