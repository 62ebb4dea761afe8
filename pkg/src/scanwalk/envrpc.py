"""Machine interface to the episodic environment for out-of-process bindings.

`serve` speaks newline-delimited JSON over stdin/stdout:

    {"op": "meta"}                                  -> scene metadata
    {"op": "reset", "instance_id": ..., "start_frame"?: ..., "seed"?: ...}
    {"op": "step", "action": 0..5}
    {"op": "close"}

Step replies carry {observation, reward, done, info}; observations hold
the frame id, the target box (or null), and optionally the RGB image as
base64 row-major bytes. Failures reply {"ok": false, "kind", "error"}
with the native error text and leave the session usable.

`replay` runs recorded action sequences through the same native session
in one process and prints every trace, which is what the bindings' parity
tests compare against.
"""

from __future__ import annotations

import argparse
import base64
import json
import sys
from pathlib import Path

from .environment import EpisodeConfig, EpisodeSession
from .movegraph import Action
from .recognition import load_classifier
from .sceneio import load_scene

ACTION_NAMES = [a.name.lower() for a in Action]


def _check_action(value) -> Action:
    if not isinstance(value, int) or not (0 <= value <= 5):
        raise ValueError(f"action must be an integer in [0, 5], got {value!r}")
    return Action(value)


def _encode_observation(obs, include_rgb: bool) -> dict:
    record = {
        "frame_id": obs.frame_id,
        "box": None if obs.box is None else [obs.box.xmin, obs.box.ymin, obs.box.xmax, obs.box.ymax],
    }
    if include_rgb:
        rgb = obs.rgb
        record["rgb"] = {
            "shape": list(rgb.shape),
            "dtype": "uint8",
            "b64": base64.b64encode(rgb.tobytes()).decode("ascii"),
        }
    return record


def _session_from_args(args) -> EpisodeSession:
    scene = load_scene(Path(args.scene))
    classifier = load_classifier(Path(args.classifier)) if args.classifier else None
    config = EpisodeConfig(
        max_steps=args.T, confidence_threshold=args.conf, blocked_action=args.blocked
    )
    return EpisodeSession(scene, config, classifier=classifier)


def serve(args) -> int:
    session = _session_from_args(args)
    include_rgb = not args.no_rgb
    out = sys.stdout
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            op = request.get("op")
            if op == "close":
                out.write(json.dumps({"ok": True}) + "\n")
                out.flush()
                return 0
            if op == "meta":
                scene = session.scene
                reply = {
                    "ok": True,
                    "instances": sorted(scene.instances),
                    "frames": scene.frame_ids(),
                    "actions": ACTION_NAMES,
                    "annotated_starts": {
                        iid: scene.frames_with_instance(iid) for iid in sorted(scene.instances)
                    },
                }
            elif op == "reset":
                obs, info = session.reset(
                    request["instance_id"],
                    start_frame=request.get("start_frame"),
                    seed=request.get("seed"),
                )
                reply = {
                    "ok": True,
                    "observation": _encode_observation(obs, include_rgb),
                    "info": info,
                }
            elif op == "step":
                action = _check_action(request.get("action"))
                obs, reward, done, info = session.step(action)
                reply = {
                    "ok": True,
                    "observation": _encode_observation(obs, include_rgb),
                    "reward": reward,
                    "done": done,
                    "info": info,
                }
            else:
                raise ValueError(f"unknown op {op!r}")
        except Exception as exc:
            reply = {"ok": False, "kind": type(exc).__name__, "error": str(exc)}
        out.write(json.dumps(reply) + "\n")
        out.flush()
    return 0


def replay(args) -> int:
    session = _session_from_args(args)
    episodes = json.loads(Path(args.episodes).read_text())["episodes"]
    traces = []
    for episode in episodes:
        obs, info = session.reset(
            episode["instance_id"],
            start_frame=episode.get("start_frame"),
            seed=episode.get("seed"),
        )
        trace = {
            "frames": [obs.frame_id],
            "actions": [],
            "rewards": [],
            "dones": [],
            "reset_done": info["done"],
            "reset_reward": info["reward"],
        }
        done = info["done"]
        for action in episode["actions"]:
            if done:
                break
            obs, reward, done, _step_info = session.step(_check_action(action))
            trace["frames"].append(obs.frame_id)
            trace["actions"].append(action)
            trace["rewards"].append(reward)
            trace["dones"].append(done)
        traces.append(trace)
    json.dump({"traces": traces}, sys.stdout)
    sys.stdout.write("\n")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="python -m scanwalk.envrpc", description=__doc__)
    sub = parser.add_subparsers(dest="mode", required=True)
    for name, fn in (("serve", serve), ("replay", replay)):
        p = sub.add_parser(name)
        p.add_argument("--scene", required=True)
        p.add_argument("--classifier", default=None)
        p.add_argument("--T", type=int, default=5)
        p.add_argument("--conf", type=float, default=0.9)
        p.add_argument("--blocked", choices=("stay", "terminate"), default="stay")
        if name == "serve":
            p.add_argument("--no-rgb", action="store_true", help="omit pixel data from observations")
        else:
            p.add_argument("--episodes", required=True, help="JSON file of episodes to replay")
        p.set_defaults(func=fn)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
