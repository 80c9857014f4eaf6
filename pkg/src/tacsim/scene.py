"""Scenario assembly, motion scripts, the time-step loop and state files."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .energy import ContactParams, MaterialParams
from .geometry import TetMesh, TriMesh, load_tet_mesh, load_tri_mesh, write_vtk
from .geometry.meshing import box_tet_mesh, cylinder_tet_mesh, heightfield_stamp_mesh, sphere_cap_mesh
from .solver import Model, SimState, SolverConfig, SolverError, step
from .tactile import (
    MarkerSet, SensorPlane, TactileFrame, embed_markers, front_triangles, marker_positions,
    rasterize_heightmap, ring_lights, shade_pseudo_image, write_heightmap_png, write_marker_csv,
    write_rgb_png,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
PHASE_KINDS = ("press", "hold", "shear", "rotate")


class ConfigError(ValueError):
    """Invalid scene configuration; ``path`` names the offending key."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


# ---------------------------------------------------------------- scripts

@dataclass(frozen=True)
class Phase:
    """One scripted indenter motion.

    ``magnitude`` is the travel distance (m) for press, the velocity (m/s)
    for shear and the angular velocity (rad/s) for rotate. ``direction`` is
    the motion direction for press and shear and the spin axis for rotate.
    """

    kind: str
    duration: float
    magnitude: float = 0.0
    direction: tuple = (0.0, 0.0, -1.0)

    def __post_init__(self):
        if self.kind not in PHASE_KINDS:
            raise ValueError(f"unknown phase kind {self.kind!r}")
        if not self.duration > 0:
            raise ValueError("phase duration must be positive")
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (3,) or abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("phase direction must be a unit 3-vector")
        object.__setattr__(self, "direction", tuple(float(c) for c in d))


@dataclass(frozen=True)
class MotionScript:
    phases: tuple = ()

    @property
    def duration(self) -> float:
        return float(sum(p.duration for p in self.phases))

    def press_travel(self) -> float:
        return float(sum(p.magnitude for p in self.phases if p.kind == "press"))


def _rotation(axis, angle):
    a = np.asarray(axis, dtype=float)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def script_pose(script: MotionScript, base_pose, t: float) -> np.ndarray:
    """Indenter pose at time ``t``; times past the end clamp to the final pose.

    Rotations spin about the phase axis through the indenter's local origin.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    pose = np.array(base_pose, dtype=float)
    start = 0.0
    for ph in script.phases:
        tau = min(max(t - start, 0.0), ph.duration)
        start += ph.duration
        if tau <= 0.0:
            break
        d = np.asarray(ph.direction)
        if ph.kind == "press":
            pose[:3, 3] += d * ph.magnitude * tau / ph.duration
        elif ph.kind == "shear":
            pose[:3, 3] += d * ph.magnitude * tau
        elif ph.kind == "rotate":
            pose[:3, :3] = _rotation(d, ph.magnitude * tau) @ pose[:3, :3]
    return pose


# ---------------------------------------------------------------- config

_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_POS = {"type": "number", "exclusiveMinimum": 0}
_MESH = {
    "type": "object",
    "properties": {
        "path": {"type": "string"},
        "format": {"enum": ["tetgen", "vtk", "obj"]},
        "cylinder": {"type": "object"},
        "box": {"type": "object"},
        "sphere_cap": {"type": "object"},
        "stamp": {"type": "object"},
    },
    "minProperties": 1,
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "required": ["schema_version", "gel", "script"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "steps": {"type": "integer", "minimum": 0},
        "gel": {
            "type": "object",
            "required": ["mesh"],
            "additionalProperties": False,
            "properties": {
                "mesh": _MESH,
                "material": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"youngs_modulus": _POS, "poisson_ratio": {"type": "number"},
                                   "density": _POS},
                },
                "glued": {
                    "type": "object",
                    "required": ["normal", "offset"],
                    "additionalProperties": False,
                    "properties": {"normal": _VEC3, "offset": {"type": "number"}},
                },
            },
        },
        "indenter": {
            "type": ["object", "null"],
            "required": ["mesh"],
            "additionalProperties": False,
            "properties": {
                "mesh": _MESH,
                "position": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "gap": {"type": ["number", "null"], "minimum": 0},
                "density": _POS,
            },
        },
        "contact": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dhat_fraction": _POS, "dhat": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "kappa": _POS, "mu": {"type": "number", "minimum": 0}, "epsv": _POS,
                "self_contact": {"type": "boolean"},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "h": _POS, "newton_tol": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "max_newton_iters": {"type": "integer", "minimum": 1},
                "line_search_shrink": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "al_penalty_init": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "al_penalty_growth": {"type": "number", "minimum": 1},
                "al_tol": _POS, "al_max_iters": {"type": "integer", "minimum": 0},
                "friction_lag_max_iters": {"type": "integer", "minimum": 1},
                "friction_lag_tol": _POS,
                "ccd_slack": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "gravity": _VEC3,
                "direct_max_dofs": {"type": "integer", "minimum": 1},
            },
        },
        "script": {
            "type": "object",
            "required": ["phases"],
            "additionalProperties": False,
            "properties": {
                "phases": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["kind", "duration"],
                        "additionalProperties": False,
                        "properties": {
                            "kind": {"enum": list(PHASE_KINDS)},
                            "duration": _POS,
                            "magnitude": {"type": "number"},
                            "depth": {"type": "number", "minimum": 0},
                            "direction": _VEC3,
                            "axis": _VEC3,
                        },
                    },
                },
                "max_step_displacement": {"type": ["number", "null"], "exclusiveMinimum": 0},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "heightmap": {
                    "type": ["object", "null"],
                    "additionalProperties": False,
                    "properties": {"resolution": {"type": "integer", "minimum": 1}, "extent": _POS},
                },
                "markers": {
                    "type": ["object", "null"],
                    "additionalProperties": False,
                    "properties": {"rows": {"type": "integer", "minimum": 1},
                                   "cols": {"type": "integer", "minimum": 1},
                                   "spacing": _POS,
                                   "center": {"type": "array", "items": {"type": "number"},
                                              "minItems": 2, "maxItems": 2}},
                },
                "image": {
                    "type": ["object", "null"],
                    "additionalProperties": False,
                    "properties": {"elevation_deg": {"type": "number"}, "intensity": _POS,
                                   "azimuths_deg": {"type": "array", "items": {"type": "number"}}},
                },
            },
        },
    },
}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: dict, overrides) -> dict:
    """Return a copy of ``config`` with ``key.sub=value`` overrides applied.

    Values are parsed as JSON when possible; integer path parts index lists.
    """
    cfg = copy.deepcopy(config)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node = cfg
        for i, part in enumerate(parts):
            last = i == len(parts) - 1
            if isinstance(node, list):
                try:
                    idx = int(part)
                    node[idx]
                except (ValueError, IndexError):
                    raise ConfigError(f"no list element {part!r}", ".".join(parts[:i + 1])) from None
                if last:
                    node[idx] = _parse_value(value)
                else:
                    node = node[idx]
            elif isinstance(node, dict):
                if last:
                    node[part] = _parse_value(value)
                else:
                    node = node.setdefault(part, {})
            else:
                raise ConfigError("cannot descend into a scalar", ".".join(parts[:i + 1]))
    return cfg


def validate_config(config: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(config), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        e = errors[0]
        raise ConfigError(e.message, ".".join(str(p) for p in e.absolute_path) or "<root>")


def _mesh_spec(spec: dict, base_dir: Path, kind: str, path_key: str):
    procedural = [k for k in ("cylinder", "box", "sphere_cap", "stamp") if k in spec]
    if ("path" in spec) + len(procedural) != 1:
        raise ConfigError("give exactly one of path or a procedural mesh", path_key)
    if "path" in spec:
        p = Path(spec["path"])
        p = p if p.is_absolute() else base_dir / p
        if not p.exists() and not (p.with_suffix(".node").exists() and spec.get("format") == "tetgen"):
            raise ConfigError(f"mesh file not found: {p}", path_key + ".path")
        return ("file", p, spec.get("format"))
    name = procedural[0]
    allowed = {"tet": ("cylinder", "box"), "tri": ("sphere_cap", "stamp")}[kind]
    if name not in allowed:
        raise ConfigError(f"{name} is not a valid {kind} mesh generator", path_key)
    return (name, spec[name], None)


def _stamp_relief(params: dict):
    amp = float(params.pop("relief_amplitude", 0.0))
    period = float(params.pop("relief_period", 1e-3))
    pattern = params.pop("relief_pattern", "rings")
    if amp == 0.0:
        return None
    if pattern == "rings":
        return lambda x, y: 0.5 * amp * (1.0 - np.cos(2 * np.pi * np.hypot(x, y) / period))
    if pattern == "grid":
        return lambda x, y: 0.25 * amp * (2.0 - np.cos(2 * np.pi * x / period) - np.cos(2 * np.pi * y / period))
    raise ConfigError(f"unknown relief pattern {pattern!r}", "indenter.mesh.stamp.relief_pattern")


def _build_tet(spec, density, key) -> TetMesh:
    kind, arg, fmt = spec
    try:
        if kind == "file":
            return load_tet_mesh(arg, fmt, density=density)
        if kind == "cylinder":
            return cylinder_tet_mesh(density=density, **arg)
        return box_tet_mesh(density=density, **{k: tuple(v) if isinstance(v, list) else v for k, v in arg.items()})
    except TypeError as exc:
        raise ConfigError(str(exc), key) from exc


def _build_tri(spec, key) -> TriMesh:
    kind, arg, fmt = spec
    try:
        if kind == "file":
            return load_tri_mesh(arg, fmt or "obj")
        if kind == "sphere_cap":
            return sphere_cap_mesh(**arg)
        params = dict(arg)
        relief = _stamp_relief(params)
        return heightfield_stamp_mesh(relief=relief, **params)
    except TypeError as exc:
        raise ConfigError(str(exc), key) from exc


@dataclass
class OutputOptions:
    resolution: int | None = 128
    extent: float | None = None
    markers: dict | None = None
    image: dict | None = None


@dataclass
class Scene:
    model: Model
    script: MotionScript
    base_pose: np.ndarray
    solver: SolverConfig
    steps: int
    thickness: float
    plane: SensorPlane | None
    front_tris: np.ndarray
    output: OutputOptions
    config: dict = field(default_factory=dict)
    markers: MarkerSet | None = None

    def initial_state(self) -> SimState:
        return self.model.initial_state(self.base_pose)

    def pose_at(self, t: float) -> np.ndarray:
        return script_pose(self.script, self.base_pose, t)


def _center_indenter(mesh: TriMesh) -> TriMesh:
    """Move the local origin to the bottom centre of the bounding box."""
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    shift = np.array([(lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2, lo[2]])
    return TriMesh(mesh.vertices - shift, mesh.triangles)


def build_scene(config: dict, base_dir=".") -> Scene:
    """Validate a configuration dictionary and assemble the scene."""
    validate_config(config)
    base_dir = Path(base_dir)
    gel_cfg = config["gel"]
    mat_cfg = {"youngs_modulus": 1.23e5, "poisson_ratio": 0.43, "density": 1.01e3, **gel_cfg.get("material", {})}
    try:
        material = MaterialParams(**mat_cfg)
    except ValueError as exc:
        raise ConfigError(str(exc), "gel.material") from exc
    gel = _build_tet(_mesh_spec(gel_cfg["mesh"], base_dir, "tet", "gel.mesh"), material.density, "gel.mesh")
    top = float(gel.vertices[:, 2].max())
    thickness = top - float(gel.vertices[:, 2].min())

    phases_cfg = config["script"]["phases"]
    ind_cfg = config.get("indenter")
    indenter = None
    if ind_cfg:
        indenter = _center_indenter(_build_tri(_mesh_spec(ind_cfg["mesh"], base_dir, "tri", "indenter.mesh"),
                                               "indenter.mesh"))
        if not indenter.is_watertight():
            raise ConfigError("indenter mesh must be watertight", "indenter.mesh")

    xy = ind_cfg.get("position", [0.0, 0.0]) if ind_cfg else [0.0, 0.0]
    pts = gel.vertices
    if indenter is not None:
        pts = np.concatenate([pts, indenter.vertices + [xy[0], xy[1], top]])
    diagonal = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    c_cfg = config.get("contact", {})
    dhat = c_cfg.get("dhat") or c_cfg.get("dhat_fraction", 1e-3) * diagonal
    try:
        contact = ContactParams(dhat=dhat, kappa=c_cfg.get("kappa", 1e6), mu=c_cfg.get("mu", 0.5),
                                epsv=c_cfg.get("epsv", 1e-3), self_contact=c_cfg.get("self_contact", True))
    except ValueError as exc:
        raise ConfigError(str(exc), "contact") from exc

    gap = 0.0
    if ind_cfg:
        gap = ind_cfg.get("gap")
        gap = 2.0 * contact.dhat if gap is None else float(gap)
        if gap <= 0:
            raise ConfigError("indenter must start separated from the gel", "indenter.gap")
    base_pose = np.eye(4)
    base_pose[:3, 3] = [xy[0], xy[1], top + gap]

    phases = []
    first_press = True
    for i, p in enumerate(phases_cfg):
        kind = p["kind"]
        d = p.get("axis" if kind == "rotate" else "direction", [0.0, 0.0, 1.0] if kind == "rotate" else
                  [0.0, 0.0, -1.0] if kind == "press" else [1.0, 0.0, 0.0])
        d = np.asarray(d, dtype=float)
        if not np.linalg.norm(d) > 0:
            raise ConfigError("direction must be non-zero", f"script.phases.{i}")
        d = d / np.linalg.norm(d)
        mag = p.get("magnitude", 0.0)
        if "depth" in p:
            if kind != "press":
                raise ConfigError("depth only applies to press phases", f"script.phases.{i}.depth")
            mag = p["depth"] + (gap if first_press else 0.0)
        if kind == "press":
            first_press = False
        try:
            phases.append(Phase(kind, p["duration"], float(mag), tuple(d)))
        except ValueError as exc:
            raise ConfigError(str(exc), f"script.phases.{i}") from exc
    script = MotionScript(tuple(phases))
    if script.press_travel() - gap >= thickness:
        raise ConfigError("press depth must be less than the elastomer thickness", "script.phases")

    glued = np.zeros(0, dtype=np.int64)
    if "glued" in gel_cfg:
        n = np.asarray(gel_cfg["glued"]["normal"], dtype=float)
        glued = np.flatnonzero(gel.vertices @ n <= gel_cfg["glued"]["offset"])
    if indenter is not None and len(phases) and not len(glued):
        raise ConfigError("glued vertex set is empty but the script drives contact", "gel.glued")
    logger.info("glued %d gel vertices", len(glued))

    s_cfg = dict(config.get("solver", {}))
    if "gravity" in s_cfg:
        s_cfg["gravity"] = tuple(s_cfg["gravity"])
    try:
        solver = SolverConfig(**s_cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "solver") from exc

    bound = config["script"].get("max_step_displacement") or thickness
    if indenter is not None:
        prev = script_pose(script, base_pose, 0.0)
        t = 0.0
        while t < script.duration:
            t = t + solver.h
            cur = script_pose(script, base_pose, t)
            moved = np.abs(indenter.vertices @ (cur[:3, :3] - prev[:3, :3]).T + cur[:3, 3] - prev[:3, 3])
            if np.linalg.norm(moved, axis=1).max() >= bound:
                raise ConfigError(f"indenter moves more than {bound:g} m in one step near t={t:g} s",
                                  "script.max_step_displacement")
            prev = cur

    model = Model(gel, material, contact, indenter=indenter,
                  indenter_density=ind_cfg.get("density", 1e3) if ind_cfg else 1e3, glued=glued)

    o_cfg = config.get("output", {})
    hm = o_cfg.get("heightmap", {})
    out = OutputOptions(
        resolution=None if hm is None else hm.get("resolution", 128),
        extent=None if hm is None else hm.get("extent"),
        markers=o_cfg.get("markers"),
        image=o_cfg.get("image"),
    )
    front = front_triangles(gel.vertices, gel.surface_tris)
    lo, hi = gel.vertices.min(axis=0), gel.vertices.max(axis=0)
    plane = None
    if out.resolution:
        extent = out.extent or float(max(hi[0] - lo[0], hi[1] - lo[1]))
        plane = SensorPlane.centered(((lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2), extent, out.resolution, lo[2])
    markers = None
    if out.markers:
        mplane = plane or SensorPlane.centered(((lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2), 1.0, 1, lo[2])
        mc = out.markers
        center = mc.get("center", [xy[0] - mplane.origin[0], xy[1] - mplane.origin[1]])
        try:
            markers = embed_markers(gel.vertices, front, mplane, mc.get("rows", 5), mc.get("cols", 4),
                                    mc.get("spacing", 4e-4), center=center)
        except ValueError as exc:
            raise ConfigError(str(exc), "output.markers") from exc

    return Scene(model=model, script=script, base_pose=base_pose, solver=solver,
                 steps=int(config.get("steps", round(script.duration / solver.h))),
                 thickness=thickness, plane=plane, front_tris=front, output=out, config=config,
                 markers=markers)


def load_scene(path, overrides=()) -> Scene:
    """Read a JSON scene file; relative paths resolve against its directory."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return build_scene(apply_overrides(config, overrides), path.parent)


# ---------------------------------------------------------------- frames

FRAME_MAGIC = b"TACSIMFR"
FRAME_VERSION = 1
_HEADER = struct.Struct("<8sIIIIdQ")


def save_state(path, state: SimState, n_gel: int) -> None:
    """Binary frame: header, then little-endian float64 x, v and the 4x4 pose."""
    n = len(state.x)
    header = _HEADER.pack(FRAME_MAGIC, FRAME_VERSION, n_gel, n - n_gel, 0, float(state.time), int(state.step))
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes()
                    for a in (state.x, state.v, state.indenter_pose))
    Path(path).write_bytes(header + body)


def load_state(path) -> tuple[SimState, int]:
    """Inverse of :func:`save_state`; returns the state and the gel vertex count."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated state frame")
    magic, version, n_gel, n_ind, _, t, stp = _HEADER.unpack_from(data)
    if magic != FRAME_MAGIC or version != FRAME_VERSION:
        raise ValueError(f"{path}: not a state frame (version {version})")
    n = n_gel + n_ind
    expected = _HEADER.size + 8 * (6 * n + 16)
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    arr = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    x = arr[:3 * n].reshape(n, 3)
    v = arr[3 * n:6 * n].reshape(n, 3)
    pose = arr[6 * n:].reshape(4, 4)
    return SimState(x=x, v=v, indenter_pose=pose, time=t, step=stp), n_gel


# ---------------------------------------------------------------- running

@dataclass
class RunResult:
    states: list
    frames: list
    summary: dict
    error: str | None = None


def tactile_frame(scene: Scene, state: SimState) -> TactileFrame | None:
    if scene.plane is None:
        return None
    n = scene.model.n_gel
    hm = rasterize_heightmap(state.x[:n], scene.front_tris, scene.plane)
    markers = None if scene.markers is None else marker_positions(scene.markers, state.x[:n])
    image = None
    if scene.output.image is not None:
        ic = scene.output.image
        lights = ring_lights(ic.get("elevation_deg", 30.0), tuple(ic.get("azimuths_deg", (0.0, 120.0, 240.0))),
                             ic.get("intensity", 1.0))
        image = shade_pseudo_image(hm, lights)
    return TactileFrame(hm, markers, image)


def config_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_outputs(out_dir: Path, k: int, scene: Scene, state: SimState, frame: TactileFrame | None) -> dict:
    paths = {}
    p = out_dir / f"state_{k:05d}.bin"
    save_state(p, state, scene.model.n_gel)
    paths["state"] = p.name
    if frame is not None:
        p = out_dir / f"height_{k:05d}.png"
        write_heightmap_png(p, frame.heightmap, max_height=2.0 * scene.thickness)
        paths["heightmap"] = p.name
        if frame.image is not None:
            p = out_dir / f"image_{k:05d}.png"
            write_rgb_png(p, frame.image)
            paths["image"] = p.name
    return paths


def run(scene: Scene, n_steps: int | None = None, out_dir=None, manifest_extra: dict | None = None) -> RunResult:
    """Advance the scene ``n_steps`` steps, optionally writing every frame.

    A solver failure stops the run; the states computed so far are kept and
    the error is recorded in the summary (and manifest).
    """
    n_steps = scene.steps if n_steps is None else int(n_steps)
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_vtk(out / "gel.vtk", scene.model.gel.vertices, scene.model.gel.tets)
    state = scene.initial_state()
    states, frames, files = [state], [tactile_frame(scene, state)], []
    if out is not None:
        files.append(_write_outputs(out, 0, scene, state, frames[0]))
    t0 = time.perf_counter()
    error = None
    newton = 0
    min_d = scene.model.min_distance(state.x)
    for k in range(1, n_steps + 1):
        target = scene.pose_at(k * scene.solver.h)
        try:
            state = step(scene.model, state, target, scene.solver)
        except SolverError as exc:
            error = str(exc)
            logger.error("%s", exc)
            if out is not None:
                (out / "failure.json").write_text(json.dumps(exc.dump, indent=1) + "\n")
            break
        newton += state.diagnostics["newton_iters"]
        min_d = min(min_d, state.diagnostics["min_distance"])
        states.append(state)
        frames.append(tactile_frame(scene, state))
        if out is not None:
            files.append(_write_outputs(out, k, scene, state, frames[-1]))
    summary = {
        "steps": len(states) - 1,
        "newton_iters": newton,
        "wall_time": time.perf_counter() - t0,
        "min_distance": min_d,
        "min_volume": min(scene.model.min_volume(s.x) for s in states),
        "failed": error is not None,
    }
    if error:
        summary["error"] = error
    if out is not None:
        if scene.markers is not None:
            write_marker_csv(out / "markers.csv", scene.markers, [s.x[:scene.model.n_gel] for s in states],
                             scene.plane)
        manifest = {
            "tool": "tacsim",
            "version": __version__,
            "n_gel": scene.model.n_gel,
            "h": scene.solver.h,
            "plane": None if scene.plane is None else scene.plane.to_dict(),
            "frames": files,
            "gel_mesh": "gel.vtk",
            "summary": summary,
            **(manifest_extra or {}),
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return RunResult(states, frames, summary, error)
