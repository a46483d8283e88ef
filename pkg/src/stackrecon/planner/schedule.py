"""Greedy timestamp assignment and plan records."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from ..scene import HANDS, TABLE
from .symbolic import GRASP, Move

ONE_HAND, TWO_HAND = "oneHand", "twoHand"


@dataclass(frozen=True)
class SymbolicPlan:
    moves: Tuple[Move, ...]
    # per move: number of other blocks riding on the actuated block
    carried: Tuple[int, ...] = ()

    @property
    def s(self) -> int:
        return max((m.timestamp for m in self.moves), default=0)

    @property
    def handedness(self) -> str:
        return ONE_HAND if len({m.actuator for m in self.moves}) <= 1 else TWO_HAND

    @property
    def key(self) -> Tuple[Tuple[str, str, str, str], ...]:
        return canonical_form(self)

    def at(self, t: int) -> List[Move]:
        return [m for m in self.moves if m.timestamp == t]

    def __str__(self):
        return " ".join(str(m) for m in self.moves) or "<empty>"


def canonical_form(plan) -> Tuple[Tuple[str, str, str, str], ...]:
    moves = plan.moves if hasattr(plan, "moves") else plan
    return tuple(m.key for m in moves)


def assign_timestamps(moves: Sequence[Move], initial_support: Optional[Mapping[str, str]] = None,
                      carried: Sequence[int] = (),
                      riders: Optional[Sequence[Sequence[str]]] = None) -> SymbolicPlan:
    """Earliest-start schedule in sequence order.

    A move waits for earlier moves on the same actuator and for earlier moves
    it depends on.  Dependencies are tracked through involved blocks: the
    object, its support when that is a block, for a Grasp the block it is
    lifted from, and any blocks riding on the object (``riders``, per move).
    ``initial_support`` supplies where each block starts.  When ``riders``
    is given, ``carried`` defaults to the rider counts.
    """
    if riders is not None and not carried:
        carried = [len(r) for r in riders]
    support = dict(initial_support or {})
    last_act: Dict[str, int] = {a: 0 for a in HANDS}
    last_block: Dict[str, int] = {}
    held: Dict[str, str] = {}
    out = []
    for i, m in enumerate(moves):
        involved = {m.object}
        if riders is not None:
            involved.update(riders[i])
        if m.kind == GRASP:
            if held.get(m.actuator) is not None:
                raise ValueError(f"{m}: actuator already holds {held[m.actuator]}")
            if m.object in held.values():
                raise ValueError(f"{m}: block already in a hand")
            prev = support.get(m.object)
            if prev not in (None, TABLE):
                involved.add(prev)
            held[m.actuator] = m.object
        else:
            if held.get(m.actuator) != m.object:
                raise ValueError(f"{m}: block is not in that actuator")
            if m.support != TABLE:
                involved.add(m.support)
            held[m.actuator] = None
            support[m.object] = m.support
        t = max([last_act[m.actuator]] + [last_block.get(b, 0) for b in involved]) + 1
        last_act[m.actuator] = t
        for b in involved:
            last_block[b] = max(last_block.get(b, 0), t)
        out.append(Move(m.kind, m.object, m.support, m.actuator, t))
    return SymbolicPlan(tuple(out), tuple(carried) if carried else tuple(0 for _ in out))
