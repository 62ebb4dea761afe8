"""Movement pointers: for each frame, the successor frame under each action.

Translation pointers (forward/backward/left/right) connect a frame to the
neighbor whose displacement falls inside a cone around the action's axis
and whose distance is closest to the target step. Rotation pointers
connect co-located frames one rotation step apart. Left and right are
strafing translations, not turns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import ScenePose


class Action(IntEnum):
    FORWARD = 0
    BACKWARD = 1
    LEFT = 2
    RIGHT = 3
    ROTATE_CW = 4
    ROTATE_CCW = 5


TRANSLATIONS = (Action.FORWARD, Action.BACKWARD, Action.LEFT, Action.RIGHT)
ROTATIONS = (Action.ROTATE_CW, Action.ROTATE_CCW)

# Unit axis of each translation in camera coordinates (x right, y down, z forward).
_TRANSLATION_AXES = {
    Action.FORWARD: np.array([0.0, 0.0, 1.0]),
    Action.BACKWARD: np.array([0.0, 0.0, -1.0]),
    Action.LEFT: np.array([-1.0, 0.0, 0.0]),
    Action.RIGHT: np.array([1.0, 0.0, 0.0]),
}


class DuplicatePoseError(ValueError):
    """Two frames share position and yaw within tolerances."""


class MoveGraphError(ValueError):
    """Structurally invalid movement graph."""


@dataclass(frozen=True)
class MoveGraphParams:
    target_step: float = 0.30
    rotation_step_deg: float = 30.0
    cone_half_angle_deg: float = 45.0
    cluster_radius: float = 0.05
    yaw_tolerance_deg: float = 5.0


class MoveGraph:
    """Map from (frame_id, action) to the successor frame_id."""

    def __init__(self, edges: Optional[Dict[Tuple[str, Action], str]] = None):
        self._edges: Dict[Tuple[str, Action], str] = {}
        if edges:
            for (frame_id, action), target in edges.items():
                self.add(frame_id, action, target)

    def add(self, frame_id: str, action: Action, target: str) -> None:
        if target == frame_id:
            raise MoveGraphError(f"self-pointer at ({frame_id}, {Action(action).name})")
        self._edges[(frame_id, Action(action))] = target

    def successor(self, frame_id: str, action: Action) -> Optional[str]:
        return self._edges.get((frame_id, Action(action)))

    def items(self) -> Iterable[Tuple[Tuple[str, Action], str]]:
        return self._edges.items()

    def __len__(self) -> int:
        return len(self._edges)

    def __eq__(self, other) -> bool:
        return isinstance(other, MoveGraph) and self._edges == other._edges


def _pose_arrays(poses: Sequence[ScenePose]):
    positions = np.stack([p.position for p in poses])
    yaws = np.array([p.yaw_deg for p in poses])
    return positions, yaws

def _check_duplicates(poses: Sequence[ScenePose], params: MoveGraphParams) -> Optional[str]:
    positions, yaws = _pose_arrays(poses)
    n = len(poses)
    dists = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=2)
    yaw_diff = np.abs(((yaws[None, :] - yaws[:, None]) + 180.0) % 360.0 - 180.0)
    dup = (dists <= params.cluster_radius) & (yaw_diff <= params.yaw_tolerance_deg)
    dup[np.arange(n), np.arange(n)] = False
    pairs = np.argwhere(dup)
    if len(pairs) == 0:
        return None
    i, j = pairs[0]
    return f"{poses[i].frame_id} and {poses[j].frame_id}"


def build_move_graph(poses: Sequence[ScenePose], params: MoveGraphParams = MoveGraphParams()) -> MoveGraph:
    """Derive movement pointers from camera poses.

    Raises DuplicatePoseError when two poses coincide in position and yaw
    within the params tolerances, since pointers would be ambiguous.
    """
    if len(poses) == 0:
        raise MoveGraphError("need at least one pose")
    poses = sorted(poses, key=lambda p: p.frame_id)
    dup = _check_duplicates(poses, params)
    if dup is not None:
        raise DuplicatePoseError(f"duplicate poses: {dup}")

    graph = MoveGraph()
    if len(poses) == 1:
        return graph

    positions, yaws = _pose_arrays(poses)
    frame_ids = [p.frame_id for p in poses]
    cos_cone = math.cos(math.radians(params.cone_half_angle_deg))
    n = len(poses)

    for i in range(n):
        disp_world = positions - positions[i]
        disp_cam = disp_world @ poses[i].rotation
        dist = np.linalg.norm(disp_world, axis=1)
        yaw_delta = ((yaws - yaws[i]) + 180.0) % 360.0 - 180.0
        not_self = np.arange(n) != i

        translatable = not_self & (dist > params.cluster_radius) & (
            np.abs(yaw_delta) <= params.yaw_tolerance_deg
        )
        for action in TRANSLATIONS:
            axis = _TRANSLATION_AXES[action]
            with np.errstate(invalid="ignore", divide="ignore"):
                cos_angle = (disp_cam @ axis) / dist
            cand = translatable & (cos_angle >= cos_cone)
            idx = np.nonzero(cand)[0]
            if len(idx) == 0:
                continue
            best = min(
                idx,
                key=lambda j: (abs(dist[j] - params.target_step), -cos_angle[j], frame_ids[j]),
            )
            graph.add(frame_ids[i], action, frame_ids[best])

        colocated = not_self & (dist <= params.cluster_radius)
        for action, signed_step in (
            (Action.ROTATE_CCW, params.rotation_step_deg),
            (Action.ROTATE_CW, -params.rotation_step_deg),
        ):
            dev = np.abs(yaw_delta - signed_step)
            cand = colocated & (dev <= params.yaw_tolerance_deg)
            idx = np.nonzero(cand)[0]
            if len(idx) == 0:
                continue
            best = min(idx, key=lambda j: (dev[j], frame_ids[j]))
            graph.add(frame_ids[i], action, frame_ids[best])

    return graph


def _oracle_move_graph(poses: Sequence[ScenePose], params: MoveGraphParams) -> MoveGraph:
    """Brute-force reconstruction used by verify_move_graph.

    Deliberately computed along a different path than build_move_graph:
    scipy rotations, per-pair angles through acos, and explicit sorting.
    """
    from scipy.spatial.transform import Rotation

    poses = sorted(poses, key=lambda p: p.frame_id)
    frame_ids = [p.frame_id for p in poses]
    n = len(poses)
    # scipy wants xyzw order
    rots = [Rotation.from_quat(np.roll(p.orientation, -1)) for p in poses]
    mats = np.stack([r.as_matrix() for r in rots])
    forwards = mats[:, :, 2]
    rights = mats[:, :, 0]
    yaws = np.degrees(np.arctan2(forwards[:, 1], forwards[:, 0]))
    positions = np.stack([p.position for p in poses])

    axes_2d = {
        Action.FORWARD: (1.0, 0.0),
        Action.BACKWARD: (-1.0, 0.0),
        Action.LEFT: (0.0, -1.0),
        Action.RIGHT: (0.0, 1.0),
    }

    graph = MoveGraph()
    idx_all = np.arange(n)
    for i in range(n):
        d = positions - positions[i]
        dist = np.sqrt(np.einsum("nj,nj->n", d, d))
        delta_rad = np.radians(yaws - yaws[i])
        yaw_delta = np.degrees(np.arctan2(np.sin(delta_rad), np.cos(delta_rad)))
        others = idx_all != i

        near = others & (dist <= params.cluster_radius)
        for action, step in (
            (Action.ROTATE_CCW, params.rotation_step_deg),
            (Action.ROTATE_CW, -params.rotation_step_deg),
        ):
            devs = np.abs(yaw_delta - step)
            cands = sorted(
                (float(devs[j]), frame_ids[j])
                for j in np.nonzero(near & (devs <= params.yaw_tolerance_deg))[0]
            )
            if cands:
                graph.add(frame_ids[i], action, cands[0][1])

        movable = others & (dist > params.cluster_radius) & (
            np.abs(yaw_delta) <= params.yaw_tolerance_deg
        )
        if not movable.any():
            continue
        fwd = d @ forwards[i]
        rgt = d @ rights[i]
        for action, (af, ar) in axes_2d.items():
            with np.errstate(invalid="ignore", divide="ignore"):
                ratio = np.clip((fwd * af + rgt * ar) / dist, -1.0, 1.0)
            angle = np.degrees(np.arccos(ratio))
            cands = sorted(
                (abs(float(dist[j]) - params.target_step), float(angle[j]), frame_ids[j])
                for j in np.nonzero(movable & (angle <= params.cone_half_angle_deg))[0]
            )
            if cands:
                graph.add(frame_ids[i], action, cands[0][2])
    return graph


def verify_move_graph(
    graph: MoveGraph, poses: Sequence[ScenePose], params: MoveGraphParams = MoveGraphParams()
) -> List[str]:
    """Check a graph against structural invariants and the brute-force oracle.

    Returns a list of violation descriptions; empty means the graph is
    exactly the oracle reconstruction and structurally sound.
    """
    violations: List[str] = []
    known = {p.frame_id for p in poses}
    inverse_of = {Action.ROTATE_CW: Action.ROTATE_CCW, Action.ROTATE_CCW: Action.ROTATE_CW}

    for (frame_id, action), target in graph.items():
        if frame_id not in known:
            violations.append(f"unknown source frame {frame_id} at ({frame_id}, {action.name})")
        if target not in known:
            violations.append(f"dangling pointer ({frame_id}, {action.name}) -> {target}")
        if target == frame_id:
            violations.append(f"self-pointer at ({frame_id}, {action.name})")
        if action in inverse_of:
            back = graph.successor(target, inverse_of[action])
            if back is not None and back != frame_id:
                violations.append(
                    f"rotation not inverted: ({frame_id}, {action.name}) -> {target}, "
                    f"but ({target}, {inverse_of[action].name}) -> {back}"
                )

    dup = _check_duplicates(sorted(poses, key=lambda p: p.frame_id), params)
    if dup is not None:
        violations.append(f"duplicate poses: {dup}")
        return violations

    oracle = _oracle_move_graph(poses, params)
    oracle_edges = dict(oracle.items())
    graph_edges = dict(graph.items())
    for key in sorted(set(oracle_edges) | set(graph_edges), key=lambda k: (k[0], int(k[1]))):
        frame_id, action = key
        got = graph_edges.get(key)
        want = oracle_edges.get(key)
        if got != want:
            violations.append(
                f"({frame_id}, {action.name}): graph has {got}, oracle reconstruction has {want}"
            )
    return violations
