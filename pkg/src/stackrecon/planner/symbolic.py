"""Symbolic world: Grasp / Place / Fix moves over support relations.

A state records, per block, where it is (``("on", support)`` or
``("in", actuator)``) and whether it has been fixed.  Rotations are not
represented here; the geometric layer resolves concrete poses.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Mapping, Optional, Tuple

from ..geometry import quat_angle
from ..scene import HANDS, TABLE, Problem, primary_supports

GRASP, PLACE, FIX = "Grasp", "Place", "Fix"
KINDS = (GRASP, PLACE, FIX)

# pose match used when deciding that a block already sits at its target
PREFIX_POS_TOL = 0.005
PREFIX_ANG_TOL = 0.035


class IllegalMove(ValueError):
    pass


@dataclass(frozen=True)
class Move:
    kind: str
    object: str
    support: Optional[str]
    actuator: str
    timestamp: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown move kind {self.kind!r}")
        if self.actuator not in HANDS:
            raise ValueError(f"unknown actuator {self.actuator!r}")
        if self.kind == GRASP and self.support is not None:
            raise ValueError("Grasp takes no support")
        if self.kind != GRASP and self.support is None:
            raise ValueError(f"{self.kind} needs a support")
        if self.object == self.support:
            raise ValueError("a block cannot support itself")

    @property
    def key(self) -> Tuple[str, str, str, str]:
        return (self.kind, self.object, self.support or "", self.actuator)

    def untimed(self) -> "Move":
        return Move(self.kind, self.object, self.support, self.actuator)

    def __str__(self):
        args = [self.object] + ([self.support] if self.support else []) + [self.actuator]
        s = f"{self.kind}({', '.join(args)})"
        return f"{s}@{self.timestamp}" if self.timestamp else s


@dataclass(frozen=True)
class SymbolicState:
    location: Tuple[Tuple[str, Tuple[str, str]], ...]   # sorted (block, (kind, where))
    fixed: FrozenSet[str] = frozenset()

    @classmethod
    def make(cls, location: Mapping[str, Tuple[str, str]], fixed=()) -> "SymbolicState":
        state = cls(tuple(sorted(location.items())), frozenset(fixed))
        state.check()
        return state

    @property
    def where(self) -> Dict[str, Tuple[str, str]]:
        return dict(self.location)

    @property
    def blocks(self) -> List[str]:
        return [b for b, _ in self.location]

    def holder(self, actuator: str) -> Optional[str]:
        for b, (k, w) in self.location:
            if k == "in" and w == actuator:
                return b
        return None

    def in_hand(self, block: str) -> Optional[str]:
        k, w = self.where[block]
        return w if k == "in" else None

    def support_of(self, block: str) -> Optional[str]:
        k, w = self.where[block]
        return w if k == "on" else None

    def children(self, support: str) -> List[str]:
        return sorted(b for b, (k, w) in self.location if k == "on" and w == support)

    def above(self, block: str) -> List[str]:
        """Blocks resting directly or transitively on ``block``."""
        out, todo = [], [block]
        while todo:
            for c in self.children(todo.pop()):
                out.append(c)
                todo.append(c)
        return sorted(out)

    def carrier(self, block: str) -> Optional[str]:
        """Actuator holding ``block`` or one of the blocks beneath it."""
        cur = block
        seen = set()
        while cur not in seen:
            seen.add(cur)
            k, w = self.where[cur]
            if k == "in":
                return w
            if w == TABLE:
                return None
            cur = w
        return None

    def is_carried(self, block: str) -> bool:
        return self.in_hand(block) is None and self.carrier(block) is not None

    def check(self) -> None:
        held = [w for _, (k, w) in self.location if k == "in"]
        if len(held) != len(set(held)):
            raise ValueError("an actuator holds more than one block")
        for b in self.fixed:
            if self.in_hand(b) is not None:
                raise ValueError(f"fixed block {b} is in a hand")

    def __str__(self):
        parts = []
        for b, (k, w) in self.location:
            parts.append(f"{b}:{k}({w}){'*' if b in self.fixed else ''}")
        return " ".join(parts)


@dataclass(frozen=True)
class Domain:
    """Problem-derived facts the transition rules consult."""

    blocks: Tuple[str, ...]
    target_support: Tuple[Tuple[str, str], ...]     # block -> primary supporter in the target
    initial: SymbolicState

    @property
    def target(self) -> Dict[str, str]:
        return dict(self.target_support)

    def capacity(self, support: str) -> int:
        if support == TABLE:
            return 10 ** 6
        return max(1, sum(1 for _, s in self.target_support if s == support))

    def is_goal(self, state: SymbolicState) -> bool:
        return len(state.fixed) == len(self.blocks)


def _pose_matches(a, b) -> bool:
    d = sum((x - y) ** 2 for x, y in zip(a.position, b.position)) ** 0.5
    return d <= PREFIX_POS_TOL and quat_angle(a.orientation, b.orientation) <= PREFIX_ANG_TOL


def domain_from_problem(problem: Problem) -> Domain:
    init_sup = primary_supports(problem.initial, tol=problem.tolerances)
    tgt_sup = primary_supports(problem.target, tol=problem.tolerances)
    blocks = tuple(sorted(problem.block_ids))
    fixed = set()
    changed = True
    while changed:
        changed = False
        for b in blocks:
            if b in fixed:
                continue
            s = tgt_sup[b]
            if init_sup[b] != s or not (s == TABLE or s in fixed):
                continue
            if _pose_matches(problem.initial.pose(b), problem.target.pose(b)):
                fixed.add(b)
                changed = True
    loc = {b: ("on", init_sup[b]) for b in blocks}
    return Domain(blocks, tuple(sorted(tgt_sup.items())), SymbolicState.make(loc, fixed))


def _supports_fixed(state: SymbolicState, block: str) -> bool:
    return any(c in state.fixed for c in state.above(block))


def _can_receive(state: SymbolicState, domain: Domain, obj: str, support: str) -> bool:
    if support == TABLE:
        return True
    if support == obj or state.in_hand(support) is not None or state.is_carried(support):
        return False
    others = [c for c in state.children(support) if c != obj]
    return len(others) < domain.capacity(support)


def _can_fix(state: SymbolicState, domain: Domain, obj: str, support: str) -> bool:
    if domain.target[obj] != support:
        return False
    return support == TABLE or support in state.fixed


def legal_moves(state: SymbolicState, domain: Domain, mode: str = "universal") -> List[Move]:
    if mode not in ("efficient", "universal"):
        raise ValueError(f"unknown mode {mode!r}")
    moves: List[Move] = []
    supports = [TABLE] + list(domain.blocks)
    for act in HANDS:
        held = state.holder(act)
        if held is None:
            for b in domain.blocks:
                if (b in state.fixed or state.in_hand(b) is not None or state.is_carried(b)
                        or _supports_fixed(state, b)):
                    continue
                moves.append(Move(GRASP, b, None, act))
            continue
        fixes = [Move(FIX, held, s, act) for s in supports
                 if _can_receive(state, domain, held, s) and _can_fix(state, domain, held, s)]
        moves.extend(fixes)
        if mode == "efficient" and fixes:
            continue
        for s in supports:
            if _can_receive(state, domain, held, s):
                moves.append(Move(PLACE, held, s, act))
    return moves


def is_legal(state: SymbolicState, domain: Domain, move: Move) -> bool:
    return move.untimed() in legal_moves(state, domain, "universal")


def apply_move(state: SymbolicState, domain: Domain, move: Move) -> SymbolicState:
    if not is_legal(state, domain, move):
        raise IllegalMove(f"{move} is not legal in state {state}")
    loc = state.where
    fixed = set(state.fixed)
    if move.kind == GRASP:
        loc[move.object] = ("in", move.actuator)
    else:
        loc[move.object] = ("on", move.support)
        if move.kind == FIX:
            fixed.add(move.object)
    return SymbolicState.make(loc, fixed)


def lower_bound(state: SymbolicState, domain: Domain) -> int:
    """Admissible estimate of moves still needed: a Fix per unfixed block plus
    a Grasp for each one not already in a hand."""
    n = 0
    for b in domain.blocks:
        if b in state.fixed:
            continue
        n += 1 if state.in_hand(b) is not None else 2
    return n


def carrying(state: SymbolicState, move: Move) -> List[str]:
    """Blocks riding on the actuated block when the move happens."""
    return state.above(move.object)
