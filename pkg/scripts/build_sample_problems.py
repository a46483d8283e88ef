"""Regenerate src/stackrecon/data/sample_problems.json.

Poses are built analytically from the default block size (0.10 x 0.05 x 0.05 m).
"""
import math
from pathlib import Path

from stackrecon.geometry import Pose, quat_from_axis_angle
from stackrecon.problem_io import dumps_problem_set
from stackrecon.scene import TABLE, BlockSpec, Problem, TableLayout, config_from_world

SPOTS = (-0.15, 0.0, 0.15)
LAYOUT = TableLayout(SPOTS, (-0.35, -0.2), (0.35, 0.2))
BLOCKS = (BlockSpec("b1", color="red"), BlockSpec("b2", color="yellow"), BlockSpec("b3", color="blue"))
H, W = 0.10, 0.05
LYING = quat_from_axis_angle((0, 1, 0), math.pi / 2)   # height axis along +x


def upright(x, z0=0.0):
    return Pose.make((x, 0.0, z0 + H / 2))


def lying(x, z0=0.0):
    return Pose.make((x, 0.0, z0 + W / 2), LYING)


def config(world, parents=None):
    return config_from_world(BLOCKS, world, parents)


def leaning_on_edge(edge_x, edge_z, alpha):
    """Block tilted by ``alpha`` (top towards +x) whose right face rests on the
    horizontal edge (edge_x, edge_z) and whose lower right edge is on the table."""
    foot = edge_x - edge_z * math.tan(alpha)
    ax = (math.sin(alpha), math.cos(alpha))            # local height axis
    left = (-math.cos(alpha), math.sin(alpha))         # local -width axis
    cx = foot + ax[0] * H / 2 + left[0] * W / 2
    cz = ax[1] * H / 2 + left[1] * W / 2
    return Pose.make((cx, 0.0, cz), quat_from_axis_angle((0, 1, 0), alpha))


def problems():
    s1, s2, s3 = SPOTS
    out = []
    flat = {"b1": upright(s1), "b2": upright(s2), "b3": upright(s3)}

    # 1: move a single block onto another
    out.append((flat, {"b1": upright(s2, H), "b2": upright(s2), "b3": upright(s3)}, {"b1": "b2"}))
    # 2: identity
    two = {"b1": upright(s1), "b2": upright(s1, H), "b3": upright(s3)}
    out.append((two, two, {"b2": "b1"}))
    # 3: reverse a tower onto another spot; every block moves
    tower = {"b1": upright(s1), "b2": upright(s1, H), "b3": upright(s1, 2 * H)}
    rev = {"b3": upright(s3), "b2": upright(s3, H), "b1": upright(s3, 2 * H)}
    out.append((tower, rev, {"b2": "b1", "b3": "b2"}, {"b2": "b3", "b1": "b2"}))
    # 4: swap a two-block stack in place; one hand needs a temporary placement
    out.append(({"b1": upright(s2, H), "b2": upright(s2), "b3": upright(s3)},
                {"b2": upright(s2, H), "b1": upright(s2), "b3": upright(s3)}, {"b1": "b2"}, {"b2": "b1"}))
    # 5: b1 leans on a lying b2; moving b2 first drops b1
    lean = {"b2": lying(s2), "b1": leaning_on_edge(s2 - H / 2, W, math.radians(35)), "b3": upright(s3)}
    out.append((lean, {"b1": upright(s1), "b3": upright(s3), "b2": upright(s3, H)}, None, {"b2": "b3"}))
    # 6: counterweighted cantilever: b3 lies across b2 with its centre of mass
    # 15 mm beyond b2's edge; b1 on b3's far end holds it down
    cx = s2 + W / 2 + 0.015
    rx = cx - H / 2 - 0.02 + W / 2
    cant = {"b2": upright(s2), "b3": lying(cx, H), "b1": upright(rx, H + W)}
    out.append((cant, {"b3": upright(s1), "b2": upright(s2), "b1": upright(s3)}, {"b3": "b2", "b1": "b3"}))
    # 7: lay one lying block on another
    out.append(({"b1": lying(s2), "b2": upright(s1), "b3": upright(s3)},
                {"b1": lying(s2), "b2": lying(s2, W), "b3": upright(s3)}, None, {"b2": "b1"}))
    # 8: gather two stacks into one tower on the middle spot
    out.append(({"b1": upright(s1), "b2": upright(s3), "b3": upright(s3, H)},
                {"b3": upright(s2), "b1": upright(s2, H), "b2": upright(s2, 2 * H)},
                {"b3": "b2"}, {"b1": "b3", "b2": "b1"}))
    # 9: exchange the top of a stack with a block standing on a spot
    out.append(({"b1": upright(s1), "b2": upright(s1, H), "b3": upright(s3)},
                {"b1": upright(s1), "b3": upright(s1, H), "b2": upright(s3)}, {"b2": "b1"}, {"b3": "b1"}))
    # 10: stand two blocks side by side on a lying base
    base = {"b1": upright(s1), "b2": lying(s2), "b3": upright(s3)}
    out.append((base, {"b2": lying(s2), "b1": upright(s2 - W / 2, W), "b3": upright(s2 + W / 2, W)},
                None, {"b1": "b2", "b3": "b2"}))
    result = []
    for k, spec in enumerate(out, start=1):
        init, tgt = spec[0], spec[1]
        p_init = spec[2] if len(spec) > 2 else None
        p_tgt = spec[3] if len(spec) > 3 else p_init
        result.append(Problem(k, config(init, p_init), config(tgt, p_tgt), LAYOUT))
    return result


def main():
    probs = problems()
    for p in probs:
        p.initial.validate()
        p.target.validate()
    path = Path(__file__).resolve().parents[1] / "src" / "stackrecon" / "data" / "sample_problems.json"
    path.write_text(dumps_problem_set(probs))
    print(f"wrote {len(probs)} problems to {path}")


if __name__ == "__main__":
    main()
