"""Python access to the grid-cave imitation learning core."""

import json as _json
import os as _os

from ._core import (
    FEATURE_SIZE,
    MAX_TICKS,
    NUM_ACTIONS,
    Action,
    Env,
    ImitateError,
    Policy,
    World,
    episode_metrics,
    generate_map,
    load_map,
    load_map_file,
    plan_path,
    resolve_map,
)
from . import _core


def default_manifest():
    return _json.loads(_core.default_manifest())


def manifest_digest(manifest):
    return _core.manifest_digest(_json.dumps(manifest))


def run_pipeline(manifest, base_dir, root):
    """Runs the full pipeline under root and returns the parsed report.json."""
    _core.run_pipeline(_json.dumps(manifest), str(base_dir), str(root))
    with open(_os.path.join(str(root), "report.json")) as f:
        return _json.load(f)


__all__ = [
    "Action", "Env", "FEATURE_SIZE", "ImitateError", "MAX_TICKS", "NUM_ACTIONS", "Policy", "World",
    "default_manifest", "episode_metrics", "generate_map", "load_map", "load_map_file",
    "manifest_digest", "plan_path", "resolve_map", "run_pipeline",
]
