"""Problem-set files: JSON with ``layout``, ``blocks`` and ``problems``.

Poses are parent-relative; ``parent`` is ``table`` or another block id.
Canonical output keeps the documented field order and rounds every number to
nine significant digits, so load -> dump -> load -> dump is byte-stable.
"""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

from .geometry import Pose
from .scene import (TABLE, BlockSpec, ContactTolerances, FrameTree, Problem, SceneError,
                    StackConfiguration, TableLayout)


class ProblemFileError(ValueError):
    pass


def _num(x: float) -> float:
    v = float(f"{float(x):.9g}")
    return 0.0 if v == 0 else v


def _vec(values, n, where):
    if not isinstance(values, (list, tuple)) or len(values) != n:
        raise ProblemFileError(f"{where}: expected {n} numbers")
    try:
        return tuple(float(v) for v in values)
    except (TypeError, ValueError):
        raise ProblemFileError(f"{where}: expected {n} numbers") from None


def _config(entries, blocks: Sequence[BlockSpec], where: str) -> StackConfiguration:
    if not isinstance(entries, list):
        raise ProblemFileError(f"{where}: expected a list of block placements")
    ids = {b.id for b in blocks}
    items = []
    for k, e in enumerate(entries):
        w = f"{where}[{k}]"
        try:
            block, parent = e["block"], e.get("parent", TABLE)
        except (TypeError, KeyError):
            raise ProblemFileError(f"{w}: missing 'block'") from None
        if block not in ids:
            raise ProblemFileError(f"{w}: unknown block {block!r}")
        if parent != TABLE and parent not in ids:
            raise ProblemFileError(f"{w}: unknown parent {parent!r}")
        pos = _vec(e.get("position"), 3, f"{w}.position")
        quat = _vec(e.get("orientation", [1, 0, 0, 0]), 4, f"{w}.orientation")
        try:
            pose = Pose.make(pos, quat)
        except ValueError as err:
            raise ProblemFileError(f"{w}.orientation: {err}") from None
        items.append((block, parent, pose))
    placed = [i[0] for i in items]
    if sorted(placed) != sorted(ids):
        raise ProblemFileError(f"{where}: every block must be placed exactly once")
    try:
        tree = FrameTree.build(items)
    except SceneError as err:
        raise ProblemFileError(f"{where}: {err}") from None
    return StackConfiguration(tuple(blocks), tree)


def parse_problem_set(doc: Dict[str, Any], tolerances: ContactTolerances = ContactTolerances()) -> List[Problem]:
    try:
        lay = doc["layout"]
        layout = TableLayout(
            spots=_vec(lay["spots"], 3, "layout.spots"),
            boundary_min=_vec(lay["boundary"]["min"], 2, "layout.boundary.min"),
            boundary_max=_vec(lay["boundary"]["max"], 2, "layout.boundary.max"),
        )
    except (KeyError, TypeError):
        raise ProblemFileError("layout: missing spots or boundary") from None
    except SceneError as err:
        raise ProblemFileError(f"layout: {err}") from None

    blocks = []
    for k, b in enumerate(doc.get("blocks") or []):
        try:
            blocks.append(BlockSpec(
                id=str(b["id"]),
                dims=_vec(b.get("dims", [0.10, 0.05, 0.05]), 3, f"blocks[{k}].dims"),
                mass=float(b.get("mass", 0.05)),
                color=str(b.get("color", "")),
            ))
        except (KeyError, TypeError):
            raise ProblemFileError(f"blocks[{k}]: missing id") from None
        except SceneError as err:
            raise ProblemFileError(f"blocks[{k}]: {err}") from None
    if not blocks:
        raise ProblemFileError("blocks: at least one block required")
    if len({b.id for b in blocks}) != len(blocks):
        raise ProblemFileError("blocks: duplicate block ids")

    problems = []
    seen = set()
    for k, p in enumerate(doc.get("problems") or []):
        try:
            pid = int(p["id"])
        except (KeyError, TypeError, ValueError):
            raise ProblemFileError(f"problems[{k}]: missing integer id") from None
        if pid in seen:
            raise ProblemFileError(f"problem {pid}: duplicate id")
        seen.add(pid)
        cfgs = {}
        for fld in ("initial", "target"):
            if fld not in p:
                raise ProblemFileError(f"problem {pid}: missing {fld}")
            cfg = _config(p[fld], blocks, f"problem {pid}: {fld}")
            try:
                cfg.validate(tolerances)
            except SceneError as err:
                raise ProblemFileError(f"problem {pid}: {fld}: {err}") from None
            for b in cfg.block_ids:
                x, y, _ = cfg.pose(b).position
                if not (layout.boundary_min[0] <= x <= layout.boundary_max[0]
                        and layout.boundary_min[1] <= y <= layout.boundary_max[1]):
                    raise ProblemFileError(f"problem {pid}: {fld}: block {b} outside the table boundary")
            cfgs[fld] = cfg
        problems.append(Problem(pid, cfgs["initial"], cfgs["target"], layout, tolerances))
    return problems


def load_problem_set(path: Union[str, Path], tolerances: ContactTolerances = ContactTolerances()) -> List[Problem]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"problem file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ProblemFileError(f"{path}: not valid JSON ({err})") from None
    return parse_problem_set(doc, tolerances)


def _placements(cfg: StackConfiguration) -> List[Dict[str, Any]]:
    out = []
    for node, parent, pose in cfg.tree.entries:
        if node not in cfg.block_ids:
            continue
        out.append({
            "block": node,
            "parent": parent,
            "position": [_num(v) for v in pose.position],
            "orientation": [_num(v) for v in pose.orientation],
        })
    return out


def problem_set_document(problems: Sequence[Problem]) -> Dict[str, Any]:
    if not problems:
        raise ValueError("no problems to serialize")
    layout = problems[0].layout
    blocks = problems[0].initial.blocks
    return {
        "layout": {
            "spots": [_num(x) for x in layout.spots],
            "boundary": {"min": [_num(v) for v in layout.boundary_min],
                         "max": [_num(v) for v in layout.boundary_max]},
        },
        "blocks": [{"id": b.id, "color": b.color, "dims": [_num(d) for d in b.dims], "mass": _num(b.mass)}
                   for b in blocks],
        "problems": [{"id": p.id, "initial": _placements(p.initial), "target": _placements(p.target)}
                     for p in problems],
    }


def dumps_problem_set(problems: Sequence[Problem]) -> str:
    return json.dumps(problem_set_document(problems), indent=2) + "\n"


def bundled_problem_path() -> Path:
    return Path(str(resources.files("stackrecon") / "data" / "sample_problems.json"))


def load_bundled() -> List[Problem]:
    return load_problem_set(bundled_problem_path())
