"""Python access to the costar workcell runtime.

Plans and reports cross the boundary as JSON; this wrapper decodes them.
"""

import json

from . import _costar
from ._costar import CostarError, PlanSyntaxError

__all__ = [
    "CostarError",
    "PlanSyntaxError",
    "parse_plan",
    "serialize_plan",
    "plan_id",
    "validate_plan",
    "run_batch",
    "set_canonical_orientation",
    "solve_hand_eye",
]


def parse_plan(text):
    return json.loads(_costar.parse_plan(text))


def serialize_plan(plan):
    return _costar.serialize_plan(json.dumps(plan))


def plan_id(text):
    return _costar.plan_id(text)


def validate_plan(text, scene_path):
    return json.loads(_costar.validate_plan(text, str(scene_path)))


def run_batch(text, scene_path, trials=1, seed_base=0, noise_pos=None, noise_rot=None, tick_budget=10000):
    report = _costar.run_batch(text, str(scene_path), trials, seed_base, noise_pos, noise_rot, tick_budget)
    return json.loads(report)


def set_canonical_orientation(pose, group="cube"):
    return list(_costar.set_canonical_orientation(list(pose), group))


def solve_hand_eye(motions):
    x, residual = _costar.solve_hand_eye([(list(a), list(b)) for a, b in motions])
    return list(x), residual
