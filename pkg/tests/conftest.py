import copy
import json
from pathlib import Path

import numpy as np
import pytest

from tacsim.geometry import TetMesh
from tacsim.geometry.meshing import box_tet_mesh
from tacsim.scene import build_scene, run

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def ten_vertex_mesh():
    """Unit cube (six tets) with a pyramid cap on the top and bottom faces."""
    cube = box_tet_mesh(cells=(1, 1, 1))
    v = np.vstack([cube.vertices, [[0.5, 0.5, 1.5], [0.5, 0.5, -0.5]]])
    top = [[1, 3, 7, 8], [1, 7, 5, 8]]
    bottom = [[0, 2, 6, 9], [0, 6, 4, 9]]
    return TetMesh.from_arrays(v, np.vstack([cube.tets, top, bottom]))


def small_press_config() -> dict:
    """A reduced sphere press: 384 tets, 3 steps, 0.3 mm deep."""
    c = json.loads((CONFIGS / "press.json").read_text())
    c["name"] = "small press"
    c["gel"]["mesh"] = {"cylinder": {"radius": 0.004, "thickness": 0.002, "n_rings": 4, "n_layers": 2,
                                     "radial_grading": 1.0}}
    c["indenter"]["mesh"] = {"sphere_cap": {"radius": 0.003, "cap_height": 0.001, "n_rings": 5, "n_azimuth": 16}}
    c["script"]["phases"] = [{"kind": "press", "duration": 0.03, "depth": 0.0003}]
    c["steps"] = 3
    c["output"] = {"heightmap": {"resolution": 33, "extent": 0.006},
                   "markers": {"rows": 3, "cols": 3, "spacing": 0.0005}, "image": {}}
    return c


@pytest.fixture
def small_config():
    return copy.deepcopy(small_press_config())


@pytest.fixture(scope="session")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("small_press")
    scene = build_scene(small_press_config())
    return scene, run(scene, out_dir=out), out


ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
