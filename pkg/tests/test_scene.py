import json

import numpy as np
import pytest

from conftest import CONFIGS
from tacsim.energy import GEL
from tacsim.scene import (
    ConfigError, MotionScript, Phase, apply_overrides, build_scene, load_scene, load_state, run, save_state,
    script_pose,
)
from tacsim.solver import SimState

SCENARIOS = ["press", "shear", "rotate", "deep_press", "coin", "hold"]


def gel_only_config(size=(0.01, 0.01, 0.002)):
    return {
        "schema_version": 1,
        "gel": {"mesh": {"box": {"size": list(size), "cells": [1, 1, 1]}},
                "glued": {"normal": [0, 0, 1], "offset": 1e-9}},
        "script": {"phases": [{"kind": "hold", "duration": 0.01}]},
        "output": {"heightmap": None},
    }


class TestBuild:
    @pytest.mark.parametrize("name", SCENARIOS)
    def test_shipped_configs_load(self, name):
        scene = load_scene(CONFIGS / f"{name}.json")
        assert scene.model.n_gel > 0
        assert len(scene.model.glued) > 0

    def test_default_material_is_reference_gel(self, small_config):
        del small_config["gel"]["material"]
        mat = build_scene(small_config).model.material
        assert (mat.youngs_modulus, mat.poisson_ratio, mat.density) == (GEL.youngs_modulus, GEL.poisson_ratio,
                                                                        GEL.density)
        assert (mat.youngs_modulus, mat.poisson_ratio, mat.density) == (1.23e5, 0.43, 1.01e3)

    def test_dhat_from_bounding_box_diagonal(self):
        size = (0.05 * 3 / 13, 0.05 * 4 / 13, 0.05 * 12 / 13)
        scene = build_scene(gel_only_config(size))
        assert scene.model.contact.dhat == pytest.approx(5e-5, rel=1e-12)

    def test_explicit_dhat_wins(self, small_config):
        small_config["contact"]["dhat"] = 2e-5
        assert build_scene(small_config).model.contact.dhat == 2e-5

    def test_initial_gap(self, small_config):
        scene = build_scene(small_config)
        s = scene.initial_state()
        m = scene.model
        gap = s.x[m.n_gel:, 2].min() - m.gel.vertices[:, 2].max()
        assert gap == pytest.approx(2 * m.contact.dhat, rel=1e-9)


class TestConfigErrors:
    def test_missing_mesh_file_names_path(self, tmp_path):
        cfg = gel_only_config()
        cfg["gel"]["mesh"] = {"path": "missing.vtk"}
        with pytest.raises(ConfigError) as err:
            build_scene(cfg, tmp_path)
        assert err.value.path == "gel.mesh.path"
        assert "missing.vtk" in str(err.value)

    def test_schema_violation_names_key(self, small_config):
        small_config["solver"]["h"] = -1
        with pytest.raises(ConfigError) as err:
            build_scene(small_config)
        assert err.value.path == "solver.h"

    def test_unknown_key(self, small_config):
        small_config["contact"]["kapa"] = 1.0
        with pytest.raises(ConfigError) as err:
            build_scene(small_config)
        assert err.value.path == "contact"

    def test_bad_phase_kind(self, small_config):
        small_config["script"]["phases"][0]["kind"] = "twist"
        with pytest.raises(ConfigError) as err:
            build_scene(small_config)
        assert err.value.path == "script.phases.0.kind"

    def test_press_deeper_than_thickness(self, small_config):
        small_config["script"]["phases"][0]["depth"] = 0.002
        with pytest.raises(ConfigError, match="thickness"):
            build_scene(small_config)

    def test_empty_glued_set_with_contact(self, small_config):
        small_config["gel"]["glued"]["offset"] = -1.0
        with pytest.raises(ConfigError) as err:
            build_scene(small_config)
        assert err.value.path == "gel.glued"

    def test_step_displacement_bound(self, small_config):
        small_config["script"]["max_step_displacement"] = 5e-5
        with pytest.raises(ConfigError) as err:
            build_scene(small_config)
        assert err.value.path == "script.max_step_displacement"

    def test_unreadable_and_invalid_json(self, tmp_path):
        with pytest.raises(ConfigError):
            load_scene(tmp_path / "nope.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError, match="JSON"):
            load_scene(bad)


class TestOverrides:
    def test_nested_and_list(self, small_config):
        cfg = apply_overrides(small_config, ["contact.mu=0", "script.phases.0.duration=0.06", "name=x y"])
        assert cfg["contact"]["mu"] == 0
        assert cfg["script"]["phases"][0]["duration"] == 0.06
        assert cfg["name"] == "x y"
        assert small_config["contact"]["mu"] == 0.5

    def test_bad_override(self, small_config):
        with pytest.raises(ConfigError):
            apply_overrides(small_config, ["contact.mu"])
        with pytest.raises(ConfigError) as err:
            apply_overrides(small_config, ["script.phases.7.duration=1"])
        assert err.value.path == "script.phases.7"

    def test_load_scene_applies(self):
        scene = load_scene(CONFIGS / "press.json", ["contact.mu=0.0", "steps=2"])
        assert scene.model.contact.mu == 0.0
        assert scene.steps == 2


class TestScript:
    def test_press_examples(self):
        script = MotionScript((Phase("press", 0.05, 5e-4),))
        base = np.eye(4)
        np.testing.assert_array_equal(script_pose(script, base, 0.0), base)
        assert script_pose(script, base, 0.025)[2, 3] == pytest.approx(-2.5e-4, abs=1e-18)
        assert script_pose(script, base, 1.0)[2, 3] == pytest.approx(-5e-4, abs=1e-18)

    def test_shear_velocity(self):
        script = MotionScript((Phase("shear", 0.1, 0.01, (1.0, 0.0, 0.0)),))
        assert script_pose(script, np.eye(4), 0.05)[0, 3] == pytest.approx(5e-4, abs=1e-18)

    def test_rotation_keeps_centre(self):
        base = np.eye(4)
        base[:3, 3] = [0.001, -0.002, 0.003]
        omega = 2.0
        script = MotionScript((Phase("rotate", 0.5, omega, (0.0, 0.0, 1.0)),))
        pose = script_pose(script, base, 0.3)
        np.testing.assert_array_equal(pose[:3, 3], base[:3, 3])
        angle = np.arctan2(pose[1, 0], pose[0, 0])
        assert angle == pytest.approx(omega * 0.3, abs=1e-14)
        np.testing.assert_allclose(pose[:3, :3] @ pose[:3, :3].T, np.eye(3), atol=1e-15)

    def test_continuous_at_boundaries(self):
        script = MotionScript((Phase("press", 0.02, 3e-4), Phase("hold", 0.01),
                               Phase("shear", 0.02, 0.01, (0.0, 1.0, 0.0)),
                               Phase("rotate", 0.03, 1.0, (0.0, 0.0, 1.0))))
        t = 0.0
        for ph in script.phases[:-1]:
            t += ph.duration
            a = script_pose(script, np.eye(4), t - 1e-9)
            b = script_pose(script, np.eye(4), t + 1e-9)
            assert np.abs(a - b).max() < 1e-7

    def test_clamps_past_end(self):
        script = MotionScript((Phase("press", 0.02, 3e-4), Phase("shear", 0.02, 0.01, (1.0, 0.0, 0.0))))
        np.testing.assert_array_equal(script_pose(script, np.eye(4), 0.04), script_pose(script, np.eye(4), 5.0))

    def test_negative_time(self):
        with pytest.raises(ValueError):
            script_pose(MotionScript(()), np.eye(4), -1.0)

    def test_phase_validation(self):
        with pytest.raises(ValueError):
            Phase("press", 0.0)
        with pytest.raises(ValueError):
            Phase("press", 1.0, 0.0, (1.0, 1.0, 0.0))


class TestStateFiles:
    def test_bit_exact_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        s = SimState(x=rng.normal(size=(7, 3)), v=rng.normal(size=(7, 3)), indenter_pose=rng.normal(size=(4, 4)),
                     time=0.123456789, step=42)
        save_state(tmp_path / "s.bin", s, 5)
        back, n_gel = load_state(tmp_path / "s.bin")
        assert n_gel == 5
        assert back.x.tobytes() == s.x.tobytes() and back.v.tobytes() == s.v.tobytes()
        assert back.indenter_pose.tobytes() == s.indenter_pose.tobytes()
        assert (back.time, back.step) == (s.time, s.step)

    def test_truncated_rejected(self, tmp_path):
        s = SimState(x=np.zeros((2, 3)), v=np.zeros((2, 3)), indenter_pose=np.eye(4), time=0.0, step=0)
        save_state(tmp_path / "s.bin", s, 2)
        data = (tmp_path / "s.bin").read_bytes()
        (tmp_path / "t.bin").write_bytes(data[:-8])
        with pytest.raises(ValueError):
            load_state(tmp_path / "t.bin")
        (tmp_path / "m.bin").write_bytes(b"X" + data[1:])
        with pytest.raises(ValueError):
            load_state(tmp_path / "m.bin")


class TestRun:
    def test_zero_steps_gives_initial_frame(self, small_config, tmp_path):
        scene = build_scene(small_config)
        res = run(scene, n_steps=0, out_dir=tmp_path)
        assert len(res.states) == 1 and len(res.frames) == 1
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert len(manifest["frames"]) == 1
        assert manifest["summary"]["steps"] == 0

    def test_hold_is_fixed_point(self, small_config):
        small_config["script"]["phases"] = [{"kind": "hold", "duration": 0.03}]
        scene = build_scene(small_config)
        res = run(scene)
        assert len(res.states) == 4
        for s in res.states[1:]:
            np.testing.assert_array_equal(s.x, res.states[0].x)
            np.testing.assert_array_equal(res.frames[-1].heightmap.values, res.frames[0].heightmap.values)

    def test_manifest_lists_existing_files(self, small_run):
        scene, result, out = small_run
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["frames"]) == len(result.states) == scene.steps + 1
        for entry in manifest["frames"]:
            for name in entry.values():
                assert (out / name).exists()
        assert (out / manifest["gel_mesh"]).exists()
        assert (out / "markers.csv").exists()
        assert not manifest["summary"]["failed"]

    def test_saved_frames_match_states(self, small_run):
        _, result, out = small_run
        for k, s in enumerate(result.states):
            back, _ = load_state(out / f"state_{k:05d}.bin")
            np.testing.assert_array_equal(back.x, s.x)

    def test_negative_steps(self, small_config):
        with pytest.raises(ValueError):
            run(build_scene(small_config), n_steps=-1)


@pytest.mark.slow
def test_coin_relief_visible():
    scene = load_scene(CONFIGS / "coin.json")
    res = run(scene)
    assert res.error is None
    hm = res.frames[-1].heightmap
    cu, cv = hm.plane.pixel_centers()
    # a flat punch would leave its footprint nearly level; the rings must show through
    inside = (np.abs(cu) < 0.0025) & (np.abs(cv) < 0.0025) & hm.mask
    relief = hm.values[inside]
    assert relief.max() - relief.min() > 1e-4
