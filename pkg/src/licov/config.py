"""Run configuration: INI-style sections validated against a schema.

Unknown sections or keys are rejected. `--set section.key=value`
overrides file values. The fully resolved configuration is echoed into
every artifact a command writes.
"""
from __future__ import annotations

import configparser

from .cloud import MapWindow
from .errors import ConfigError
from .fusion import FusionSetup
from .icp import IcpConfig
from .mcgen import PerturbationSpec
from .model import TrainConfig
from .scenes import make_synthetic_scene
from .sequences import KittiSequence

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _parse_bool(text):
    t = str(text).strip().lower()
    if t in _BOOL_TRUE:
        return True
    if t in _BOOL_FALSE:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt(kind):
    def parse(text):
        t = str(text).strip()
        return None if t in ("", "none") else kind(t)

    return parse


# section -> key -> (parser, default)
SCHEMA = {
    "sequence": {
        "kind": (str, "synthetic"),
        "scene": (str, "corridor"),
        "density": (_opt(float), None),
        "n_frames": (_opt(int), None),
        "noise_sigma": (float, 0.01),
        "max_range": (_opt(float), None),
        "seed": (int, 0),
        "scan_dir": (str, ""),
        "pose_file": (str, ""),
    },
    "map": {
        "window_before": (int, 20),
        "window_after": (int, 10),
        "map_voxel": (float, 1.0),
        "scan_voxel": (float, 0.1),
        "normal_k": (int, 10),
    },
    "perturbation": {
        "sigma_x": (float, 1.0),
        "sigma_y": (float, 1.0),
        "sigma_z": (float, 1.0),
        "sigma_phi": (float, 5.0),
        "sigma_theta": (float, 5.0),
        "sigma_psi": (float, 5.0),
    },
    "icp": {
        "max_iterations": (int, 30),
        "translation_eps": (float, 1e-4),
        "rotation_eps": (float, 1e-4),
        "max_correspondence_distance": (float, 2.0),
    },
    "montecarlo": {
        "n": (int, 200),
        "seed": (int, 0),
        "frames": (str, "all"),
    },
    "train": {
        "alpha": (float, 0.1),
        "beta": (float, 0.9),
        "huber_delta": (float, 1e-3),
        "learning_rate": (float, 0.03),
        "steps": (int, 500),
        "batch_size": (int, 8),
        "seed": (int, 0),
        "augment": (_parse_bool, True),
        "augment_xy": (float, 2.0),
        "augment_yaw_deg": (float, 180.0),
        "init_sigma": (float, 0.1),
        "label_floor": (float, 0.0),
    },
    "fusion": {
        "frames": (str, "all"),
        "seed": (int, 0),
        "motion_sigma_xyz": (float, 0.05),
        "motion_sigma_rot_deg": (float, 0.2),
        "init_cov": (float, 1e-6),
        "modes": (str, "icp_only fixed_cov predicted_cov"),
    },
    "paths": {
        "dataset": (str, "dataset.csv"),
        "model": (str, "model.txt"),
        "report": (str, "report.txt"),
        "out_dir": (str, "."),
    },
}


class RunConfig:
    """Schema-validated configuration resolved from defaults, an optional
    INI file, and key=value overrides."""

    def __init__(self, values):
        self._values = values

    def __getitem__(self, section):
        return self._values[section]

    def get(self, section, key):
        return self._values[section][key]

    @staticmethod
    def load(path=None, overrides=()):
        values = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
        if path is not None:
            parser = configparser.ConfigParser(interpolation=None)
            try:
                with open(path, "r") as f:
                    parser.read_file(f)
            except OSError:
                raise
            except configparser.Error as e:
                raise ConfigError(f"{path}: {e}")
            for section in parser.sections():
                if section not in SCHEMA:
                    raise ConfigError(f"{path}: unknown section [{section}]")
                for key, raw in parser.items(section):
                    values[section][key] = _parse_value(section, key, raw)
        for item in overrides:
            key, _, raw = item.partition("=")
            if not _:
                raise ConfigError(f"--set needs key=value, got {item!r}")
            section, _, name = key.partition(".")
            if not name:
                raise ConfigError(f"--set key must be section.key, got {key!r}")
            values.setdefault(section, {})
            if section not in SCHEMA:
                raise ConfigError(f"unknown section {section!r} in --set")
            values[section][name] = _parse_value(section, name, raw)
        return RunConfig(values)

    def echo(self) -> dict:
        """Flat, sorted section.key -> string view of the resolved config.
        Values are sanitized for embedding in one-line sidecars."""
        flat = {}
        for section in sorted(self._values):
            for key in sorted(self._values[section]):
                v = self._values[section][key]
                text = "" if v is None else str(v)
                flat[f"{section}.{key}"] = text.replace(",", ";").replace("=", ":")
        return flat

    # typed views -----------------------------------------------------

    def perturbation_spec(self) -> PerturbationSpec:
        p = self._values["perturbation"]
        return PerturbationSpec(**p)

    def icp_config(self) -> IcpConfig:
        return IcpConfig(**self._values["icp"])

    def map_window(self) -> MapWindow:
        m = self._values["map"]
        return MapWindow(m["window_before"], m["window_after"])

    def train_config(self) -> TrainConfig:
        return TrainConfig(**self._values["train"])

    def fusion_setup(self) -> FusionSetup:
        m = self._values["map"]
        f = self._values["fusion"]
        return FusionSetup(
            window=self.map_window(),
            map_voxel=m["map_voxel"],
            scan_voxel=m["scan_voxel"],
            normal_k=m["normal_k"],
            icp=self.icp_config(),
            motion_sigma_xyz=f["motion_sigma_xyz"],
            motion_sigma_rot_deg=f["motion_sigma_rot_deg"],
            init_cov=f["init_cov"],
        )

    def fusion_modes(self) -> list:
        text = self._values["fusion"]["modes"].replace(",", " ")
        modes = [m for m in text.split() if m]
        if not modes:
            raise ConfigError("fusion.modes is empty")
        return modes

    def sequence(self):
        s = self._values["sequence"]
        if s["kind"] == "synthetic":
            return make_synthetic_scene(
                s["scene"],
                density=s["density"],
                seed=s["seed"],
                n_frames=s["n_frames"],
                noise_sigma=s["noise_sigma"],
                max_range=s["max_range"],
            )
        if s["kind"] == "kitti":
            if not s["scan_dir"] or not s["pose_file"]:
                raise ConfigError("kitti sequence needs sequence.scan_dir and sequence.pose_file")
            return KittiSequence(s["scan_dir"], s["pose_file"])
        raise ConfigError(f"unknown sequence.kind {s['kind']!r}")


def _parse_value(section, key, raw):
    if section not in SCHEMA:
        raise ConfigError(f"unknown section [{section}]")
    if key not in SCHEMA[section]:
        raise ConfigError(f"unknown key {key!r} in section [{section}]")
    parse, _ = SCHEMA[section][key]
    try:
        return parse(str(raw).strip())
    except (ValueError, TypeError) as e:
        raise ConfigError(f"bad value for {section}.{key}: {e}")
