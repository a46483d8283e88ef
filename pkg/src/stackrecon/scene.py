"""Blocks, table, frame tree and support-graph derivation.

Coordinate convention: z up, table surface at z = 0, table spots lie on the
x axis, y is depth.  A positive rotation about the vertical axis turns +x
into +y, so a child offset (0.05, 0, 0) under a parent yawed by +90 degrees
ends up 0.05 m along world +y.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .geometry import Pose, box_corners, box_overlap_volume, vertical_extent

TABLE = "table"
HANDS = ("handL", "handR")

DEFAULT_DIMS = (0.10, 0.05, 0.05)
DEFAULT_MASS = 0.05


class SceneError(ValueError):
    """A configuration or problem violates a scene invariant."""


@dataclass(frozen=True)
class BlockSpec:
    id: str
    dims: Tuple[float, float, float] = DEFAULT_DIMS  # height, width, depth
    mass: float = DEFAULT_MASS
    color: str = ""

    def __post_init__(self):
        if len(self.dims) != 3 or min(self.dims) <= 0:
            raise SceneError(f"block {self.id}: dims must be three positive extents")
        if self.mass <= 0:
            raise SceneError(f"block {self.id}: mass must be positive")

    @property
    def half_extents(self) -> np.ndarray:
        """Half sizes along the block's local (x, y, z) = (width, depth, height)."""
        h, w, d = self.dims
        return np.array([w / 2, d / 2, h / 2])


@dataclass(frozen=True)
class TableLayout:
    spots: Tuple[float, float, float]
    boundary_min: Tuple[float, float]
    boundary_max: Tuple[float, float]

    def __post_init__(self):
        if len(set(self.spots)) != len(self.spots):
            raise SceneError("layout spots must be distinct")
        for x in self.spots:
            if not (self.boundary_min[0] <= x <= self.boundary_max[0]):
                raise SceneError(f"spot x={x} outside the table boundary")
        if not (self.boundary_min[1] <= 0.0 <= self.boundary_max[1]):
            raise SceneError("spot line y=0 outside the table boundary")

    def spot_position(self, index: int) -> Tuple[float, float]:
        return (self.spots[index], 0.0)


@dataclass(frozen=True)
class FrameTree:
    """Parent-relative poses; the table is the single fixed root."""

    entries: Tuple[Tuple[str, str, Pose], ...]  # (node, parent, relative pose)

    def __post_init__(self):
        nodes = [n for n, _, _ in self.entries]
        if len(set(nodes)) != len(nodes):
            raise SceneError("duplicate node in frame tree")
        if TABLE in nodes:
            raise SceneError("the table is the implicit root")
        object.__setattr__(self, "_lookup", {n: (p, pose) for n, p, pose in self.entries})
        known = set(nodes) | {TABLE}
        for node, parent, _ in self.entries:
            if parent not in known:
                raise SceneError(f"node {node}: unknown parent {parent}")
        for node in nodes:
            seen = set()
            cur = node
            while cur != TABLE:
                if cur in seen:
                    raise SceneError(f"cycle in frame tree through {node}")
                seen.add(cur)
                cur = self.parent(cur)

    @classmethod
    def build(cls, items: Iterable[Tuple[str, str, Pose]]) -> "FrameTree":
        return cls(tuple(sorted(items, key=lambda e: e[0])))

    @property
    def _index(self) -> Dict[str, Tuple[str, Pose]]:
        return self._lookup  # type: ignore[attr-defined]

    @property
    def nodes(self) -> List[str]:
        return [TABLE] + [n for n, _, _ in self.entries]

    def parent(self, node: str) -> str:
        try:
            return self._index[node][0]
        except KeyError:
            raise KeyError(f"unknown node {node!r}") from None

    def relative(self, node: str) -> Pose:
        try:
            return self._index[node][1]
        except KeyError:
            raise KeyError(f"unknown node {node!r}") from None

    def chain(self, node: str) -> List[str]:
        """Ancestors of ``node`` from its parent up to the table."""
        out = []
        cur = node
        while cur != TABLE:
            cur = self.parent(cur)
            out.append(cur)
        return out

    def with_entry(self, node: str, parent: str, pose: Pose) -> "FrameTree":
        items = [e for e in self.entries if e[0] != node]
        items.append((node, parent, pose))
        return FrameTree.build(items)

    def reparent(self, node: str, new_parent: str) -> "FrameTree":
        """Move ``node`` under ``new_parent`` keeping its world pose."""
        world = world_pose(self, node)
        parent_world = world_pose(self, new_parent)
        return self.with_entry(node, new_parent, world.relative_to(parent_world))


def world_pose(tree: FrameTree, node: str) -> Pose:
    if node == TABLE:
        return Pose()
    rel = tree.relative(node)
    return world_pose(tree, tree.parent(node)).compose(rel)


@dataclass(frozen=True)
class ContactTolerances:
    gap: float = 0.002
    min_area: float = 1e-5
    grid: int = 160


@dataclass(frozen=True)
class SupportGraph:
    edges: FrozenSet[Tuple[str, str]]
    # (block, supporter) -> (patch area m^2, mean contact height m)
    contacts: Tuple[Tuple[Tuple[str, str], Tuple[float, float]], ...] = ()

    def supporters(self, block: str) -> List[str]:
        return sorted(s for b, s in self.edges if b == block)

    def primary(self, block: str, com_height: Optional[float] = None) -> Optional[str]:
        """Supporter whose contact lies below the centre of mass; ties -> larger patch."""
        cands = self.supporters(block)
        if not cands:
            return None
        info = dict(self.contacts)

        def key(s):
            area, height = info.get((block, s), (0.0, 0.0))
            below = com_height is None or height < com_height
            return (not below, -area, s)

        return min(cands, key=key)


@dataclass(frozen=True)
class StackConfiguration:
    blocks: Tuple[BlockSpec, ...]
    tree: FrameTree

    def block(self, block_id: str) -> BlockSpec:
        for b in self.blocks:
            if b.id == block_id:
                return b
        raise KeyError(f"unknown block {block_id!r}")

    @property
    def block_ids(self) -> List[str]:
        return [b.id for b in self.blocks]

    def pose(self, block_id: str) -> Pose:
        return world_pose(self.tree, block_id)

    def is_held(self, block_id: str) -> bool:
        return any(a in HANDS for a in self.tree.chain(block_id))

    def grounded_ids(self) -> List[str]:
        return [b for b in self.block_ids if not self.is_held(b)]

    def corners(self, block_id: str) -> np.ndarray:
        return box_corners(self.pose(block_id), self.block(block_id).half_extents)

    def validate(self, tol: ContactTolerances = ContactTolerances()) -> SupportGraph:
        ids = self.block_ids
        if len(set(ids)) != len(ids):
            raise SceneError("duplicate block ids")
        for b in ids:
            if b not in self.tree.nodes:
                raise SceneError(f"block {b} missing from frame tree")
        ground = self.grounded_ids()
        for b in ground:
            if self.corners(b)[:, 2].min() < -1e-6:
                raise SceneError(f"block {b} lies below the table surface")
        for i, a in enumerate(ground):
            for b in ground[i + 1:]:
                vol = box_overlap_volume(self.pose(a), self.block(a).half_extents,
                                         self.pose(b), self.block(b).half_extents)
                if vol > 1e-9:
                    raise SceneError(f"blocks {a} and {b} interpenetrate ({vol:.3g} m^3)")
        graph = derive_support_graph(self, tol)
        _check_graph(graph, ground)
        return graph


def _check_graph(graph: SupportGraph, blocks: Sequence[str]) -> None:
    reached = {TABLE}
    changed = True
    while changed:
        changed = False
        for b in blocks:
            if b not in reached and any(s in reached for s in graph.supporters(b)):
                reached.add(b)
                changed = True
    floating = [b for b in blocks if b not in reached]
    if floating:
        raise SceneError(f"block {floating[0]} is not supported (floating)")
    state: Dict[str, int] = {}

    def visit(n):
        if state.get(n) == 1:
            raise SceneError(f"support cycle through {n}")
        if state.get(n) == 2 or n == TABLE:
            return
        state[n] = 1
        for s in graph.supporters(n):
            visit(s)
        state[n] = 2

    for b in blocks:
        visit(b)


def _contact(config: StackConfiguration, block: str, supporter: str, tol: ContactTolerances):
    spec = config.block(block)
    pose = config.pose(block)
    corners = box_corners(pose, spec.half_extents)
    lo_xy = corners[:, :2].min(axis=0)
    hi_xy = corners[:, :2].max(axis=0)
    n = tol.grid
    xs = lo_xy[0] + (np.arange(n) + 0.5) * (hi_xy[0] - lo_xy[0]) / n
    ys = lo_xy[1] + (np.arange(n) + 0.5) * (hi_xy[1] - lo_xy[1]) / n
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    xy = np.c_[gx.ravel(), gy.ravel()]
    cell = (hi_xy[0] - lo_xy[0]) * (hi_xy[1] - lo_xy[1]) / (n * n)
    low_a, _ = vertical_extent(pose, spec.half_extents, xy)
    if supporter == TABLE:
        top_s = np.zeros(len(xy))
    else:
        sspec = config.block(supporter)
        _, top_s = vertical_extent(config.pose(supporter), sspec.half_extents, xy)
    gap = low_a - top_s
    with np.errstate(invalid="ignore"):
        patch = np.abs(gap) <= tol.gap
    area = float(patch.sum() * cell)
    if area < tol.min_area:
        return None
    height = float(np.mean(top_s[patch]))
    return area, height


def derive_support_graph(config: StackConfiguration,
                         tol: ContactTolerances = ContactTolerances()) -> SupportGraph:
    """Support edges between grounded blocks; held blocks are ignored."""
    ground = config.grounded_ids()
    edges = set()
    contacts = {}
    for b in ground:
        for s in [TABLE] + [o for o in ground if o != b]:
            c = _contact(config, b, s, tol)
            if c is not None:
                edges.add((b, s))
                contacts[(b, s)] = c
    return SupportGraph(frozenset(edges), tuple(sorted(contacts.items())))


def primary_supports(config: StackConfiguration, graph: Optional[SupportGraph] = None,
                     tol: ContactTolerances = ContactTolerances()) -> Dict[str, Optional[str]]:
    graph = graph if graph is not None else derive_support_graph(config, tol)
    return {b: graph.primary(b, config.pose(b).position[2]) for b in config.grounded_ids()}


@dataclass(frozen=True)
class Problem:
    id: int
    initial: StackConfiguration
    target: StackConfiguration
    layout: TableLayout
    tolerances: ContactTolerances = field(default=ContactTolerances(), compare=False)

    def __post_init__(self):
        if sorted(self.initial.blocks, key=lambda b: b.id) != sorted(self.target.blocks, key=lambda b: b.id):
            raise SceneError(f"problem {self.id}: initial and target use different blocks")

    @property
    def block_ids(self) -> List[str]:
        return self.initial.block_ids


def config_from_world(blocks: Sequence[BlockSpec], world: Mapping[str, Pose],
                      parents: Optional[Mapping[str, str]] = None) -> StackConfiguration:
    """Build a configuration from world poses, optionally with explicit parents."""
    parents = dict(parents or {})
    tree = FrameTree.build([(b.id, TABLE, world[b.id]) for b in blocks])
    # reparent outermost-first so parents' world poses are already final
    for node, parent in parents.items():
        if parent != TABLE:
            tree = tree.reparent(node, parent)
    return StackConfiguration(tuple(blocks), tree)
