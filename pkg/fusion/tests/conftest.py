"""Build the training dataset through the producer toolkit's CLI.

The fusion package consumes bundle directories and emits prediction
rasters; everything it needs from the point-cloud side is created here by
invoking ``bevgrid`` as a subprocess, exactly as a user would.
"""

import json
import subprocess
import sys

import pytest

SCENE = {
    "extent": [25.6, 12.8],
    "density": 80.0,
    "rng_seed": 424,
    "objects": [
        {
            "type": "ground",
            "class_id": 0,
            "patches": [
                [[1.0, 1.0, 9.0, 11.0], 7],
                [[10.0, 6.5, 19.0, 12.0], 5],
                [[17.0, 0.5, 25.0, 5.5], 10],
            ],
        },
        {"type": "box", "footprint": [3.0, 3.0, 7.5, 9.0], "roof_z": 6.0, "class_id": 2},
        {
            "type": "box",
            "footprint": [13.0, 1.0, 18.5, 5.0],
            "roof_z": 4.5,
            "class_id": 2,
            "walls": ["xmin", "ymax"],
        },
        {"type": "box", "footprint": [20.5, 7.0, 24.5, 11.5], "roof_z": 5.0, "class_id": 2},
        {"type": "column", "x": 10.5, "y": 3.0, "radius": 1.2, "height": 4.0, "class_id": 1},
        {"type": "column", "x": 22.0, "y": 2.5, "radius": 1.0, "height": 3.5, "class_id": 1},
        {"type": "box", "footprint": [8.2, 10.2, 10.0, 12.4], "roof_z": 1.5, "class_id": 9},
    ],
}

PROJECTION_FLAGS = ["--scale", "0.05", "--size", "6.4", "--step", "6.4", "--cell-side", "12.8"]


def bevgrid(*args) -> None:
    result = subprocess.run(
        [sys.executable, "-m", "bevgrid.cli", *args], capture_output=True, text=True
    )
    assert result.returncode == 0, f"bevgrid {args[0]} failed:\n{result.stderr}"


@pytest.fixture(scope="session")
def dataset(tmp_path_factory):
    """Scene cloud plus raw/completed 128x128 bundles and reference stats."""
    root = tmp_path_factory.mktemp("dataset")
    scene = root / "scene.json"
    scene.write_text(json.dumps(SCENE))
    cloud = root / "scene.bev"
    bevgrid("synth", "--spec", str(scene), "--out", str(cloud))

    bundles = root / "bundles"
    bevgrid("project", "--input", str(cloud), "--out", str(bundles), *PROJECTION_FLAGS)
    completed = root / "completed"
    bevgrid("complete", "--bundles", str(bundles), "--out", str(completed), "--iterations", "3")

    analysis = root / "analysis"
    bevgrid("analyze", "--input", str(cloud), "--out", str(analysis), *PROJECTION_FLAGS)
    weights = root / "weights.json"
    bevgrid("weights", "--input", str(cloud), "--out", str(weights))

    manifest = json.loads((bundles / "manifest.json").read_text())
    assert len(manifest["windows"]) == 8, "dataset must be the 8-window training set"
    assert manifest["windows"][0]["width_px"] == 128
    return {
        "root": root,
        "cloud": cloud,
        "bundles": bundles,
        "completed": completed,
        "oracle": json.loads((analysis / "oracle.json").read_text()),
        "weights": weights,
    }
