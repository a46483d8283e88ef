"""Plan enumeration: exhaustive iterative deepening or UCT tree search."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from ..scene import HANDS
from .schedule import ONE_HAND, TWO_HAND, SymbolicPlan, assign_timestamps
from .symbolic import (Domain, Move, SymbolicState, apply_move, carrying, domain_from_problem,
                       legal_moves, lower_bound)

MAX_LENGTH = 12
HAND_SETTINGS = ("one", "two", "both")


@dataclass
class SearchResult:
    plans: List[SymbolicPlan]
    depth: int = 0
    expanded: int = 0
    diagnostic: str = ""


def _moves_for(state: SymbolicState, domain: Domain, mode: str, actuators: Sequence[str]) -> List[Move]:
    return [m for m in legal_moves(state, domain, mode) if m.actuator in actuators]


def min_length(domain: Domain, mode: str = "universal", actuators: Sequence[str] = HANDS,
               cap: int = MAX_LENGTH) -> Optional[int]:
    """Breadth-first distance from the initial state to any goal state."""
    start = domain.initial
    if domain.is_goal(start):
        return 0
    seen = {start}
    frontier = deque([(start, 0)])
    while frontier:
        state, d = frontier.popleft()
        if d >= cap:
            continue
        for m in _moves_for(state, domain, mode, actuators):
            nxt = apply_move(state, domain, m)
            if domain.is_goal(nxt):
                return d + 1
            if nxt not in seen:
                seen.add(nxt)
                frontier.append((nxt, d + 1))
    return None


def _initial_support(domain: Domain) -> Dict[str, str]:
    return {b: sup for b, (k, sup) in domain.initial.location if k == "on"}


def _build_plan(domain: Domain, moves: Sequence[Move],
                riders: Optional[Sequence[Tuple[str, ...]]] = None) -> SymbolicPlan:
    if riders is None:
        state = domain.initial
        riders = []
        for m in moves:
            riders.append(tuple(carrying(state, m)))
            state = apply_move(state, domain, m)
    return assign_timestamps(moves, _initial_support(domain), riders=riders)


class _Graph:
    """Memoised successor lists and goal/bound values of the symbolic states."""

    def __init__(self, domain: Domain, mode: str, actuators: Sequence[str]):
        self.domain, self.mode, self.actuators = domain, mode, actuators
        self.succ: Dict[SymbolicState, List[Tuple[Move, SymbolicState, Tuple[str, ...]]]] = {}
        self.info: Dict[SymbolicState, Tuple[bool, int]] = {}

    def successors(self, state):
        out = self.succ.get(state)
        if out is None:
            out = [(m, apply_move(state, self.domain, m), tuple(carrying(state, m)))
                   for m in _moves_for(state, self.domain, self.mode, self.actuators)]
            self.succ[state] = out
        return out

    def goal_and_bound(self, state):
        out = self.info.get(state)
        if out is None:
            out = (self.domain.is_goal(state), lower_bound(state, self.domain))
            self.info[state] = out
        return out


def _dfs(graph: _Graph, limit: int, counter: List[int], exact: bool = False):
    """Goal-reaching sequences of length <= limit (== limit when ``exact``)
    that never revisit a state, with the blocks riding on each moved block."""
    path: List[Move] = []
    carried: List[Tuple[str, ...]] = []
    on_path: Set[SymbolicState] = {graph.domain.initial}
    found = []

    def rec(state, depth):
        counter[0] += 1
        goal, bound = graph.goal_and_bound(state)
        if goal:
            if not exact or depth == limit:
                found.append((tuple(path), tuple(carried)))
            return
        if depth + bound > limit:
            return
        for m, nxt, c in graph.successors(state):
            if nxt in on_path:
                continue
            on_path.add(nxt)
            path.append(m)
            carried.append(c)
            rec(nxt, depth + 1)
            path.pop()
            carried.pop()
            on_path.discard(nxt)

    rec(graph.domain.initial, 0)
    return found


def _keep(plan: SymbolicPlan, hands: str) -> bool:
    if hands == "one":
        return plan.handedness == ONE_HAND
    if hands == "two":
        return plan.handedness == TWO_HAND
    return True


def sort_plans(plans: Iterable[SymbolicPlan]) -> List[SymbolicPlan]:
    return sorted(plans, key=lambda p: (p.s, p.key))


def _exhaustive(domain: Domain, mode: str, hands: str, cap: int) -> SearchResult:
    groups = [[a] for a in HANDS] if hands == "one" else [list(HANDS)]
    start = [min_length(domain, mode, g, cap) for g in groups]
    start = [d for d in start if d is not None]
    if not start:
        return SearchResult([], 0, 0, "goal unreachable within the length cap")
    limit = min(start)
    counter = [0]
    plans: Dict[tuple, SymbolicPlan] = {}
    graphs = [_Graph(domain, mode, g) for g in groups]
    depth = limit
    first = True
    while True:
        before = len(plans)
        for graph in graphs:
            # goal sequences all have even length, so shorter ones were
            # collected by earlier passes
            for seq, carried in _dfs(graph, limit, counter, exact=not first):
                plan = _build_plan(domain, seq, carried)
                if _keep(plan, hands):
                    plans.setdefault(plan.key, plan)
        depth = limit
        first = False
        if (len(plans) == before and plans) or limit + 2 > cap:
            break
        limit += 2
    diag = "" if plans else f"no {hands}-hand solutions up to length {depth}"
    return SearchResult(sort_plans(plans.values()), depth, counter[0], diag)


@dataclass
class _Node:
    state: SymbolicState
    moves: List[Tuple[Move, SymbolicState]] = field(default_factory=list)
    children: Dict[int, "_Node"] = field(default_factory=dict)
    visits: int = 0
    value: float = 0.0


def _mcts(domain: Domain, mode: str, hands: str, cap: int, budget: int, seed: int,
          exploration: float = math.sqrt(2.0)) -> SearchResult:
    """UCT over move sequences; a rollout earns reward 1 when it reaches a goal
    that has not been seen before.  Rollouts pick uniformly among legal moves
    that do not revisit a state on the current path."""
    rng = np.random.default_rng(seed)
    acts = list(HANDS)
    root = _Node(domain.initial)
    plans: Dict[tuple, SymbolicPlan] = {}

    def expand(node):
        if not node.moves:
            node.moves = [(m, apply_move(node.state, domain, m))
                          for m in _moves_for(node.state, domain, mode, acts)]

    for _ in range(budget):
        node, path, seq = root, [root], []
        visited = {root.state}
        # selection / expansion
        while len(seq) < cap and not domain.is_goal(node.state):
            expand(node)
            options = [i for i, (_, s) in enumerate(node.moves) if s not in visited]
            if not options:
                break
            fresh = [i for i in options if i not in node.children]
            if fresh:
                i = int(fresh[rng.integers(len(fresh))])
                m, s = node.moves[i]
                node.children[i] = _Node(s)
                node = node.children[i]
                path.append(node)
                seq.append(m)
                visited.add(s)
                break
            logn = math.log(max(node.visits, 1))
            i = max(options, key=lambda j: node.children[j].value / max(node.children[j].visits, 1)
                    + exploration * math.sqrt(logn / max(node.children[j].visits, 1)))
            m, s = node.moves[i]
            node = node.children[i]
            path.append(node)
            seq.append(m)
            visited.add(s)
        # rollout
        state = node.state
        while len(seq) < cap and not domain.is_goal(state):
            options = [(m, s) for m in _moves_for(state, domain, mode, acts)
                       for s in [apply_move(state, domain, m)] if s not in visited]
            if not options:
                break
            m, state = options[int(rng.integers(len(options)))]
            seq.append(m)
            visited.add(state)
        reward = 0.0
        if domain.is_goal(state):
            plan = _build_plan(domain, seq)
            if _keep(plan, hands) and plan.key not in plans:
                plans[plan.key] = plan
                reward = 1.0
        for n in path:
            n.visits += 1
            n.value += reward
    diag = "" if plans else f"no solutions found within {budget} iterations"
    return SearchResult(sort_plans(plans.values()), cap, budget, diag)


def enumerate_plans(problem_or_domain, mode: str = "efficient", hands: str = "both",
                    search: str = "exhaustive", budget: int = 20000, cap: int = MAX_LENGTH,
                    seed: int = 0) -> SearchResult:
    if mode not in ("efficient", "universal"):
        raise ValueError(f"unknown mode {mode!r}")
    if hands not in HAND_SETTINGS:
        raise ValueError(f"unknown hands setting {hands!r}")
    if budget <= 0:
        raise ValueError("budget must be positive")
    domain = (problem_or_domain if isinstance(problem_or_domain, Domain)
              else domain_from_problem(problem_or_domain))
    if domain.is_goal(domain.initial):
        empty = SymbolicPlan(())
        keep = [empty] if hands in ("one", "both") else []
        return SearchResult(keep, 0, 0, "" if keep else "identity problem has no two-hand plan")
    if search == "exhaustive":
        return _exhaustive(domain, mode, hands, cap)
    if search == "mcts":
        return _mcts(domain, mode, hands, cap, budget, seed)
    raise ValueError(f"unknown search {search!r}")


def plan_record(plan: SymbolicPlan) -> Dict[str, object]:
    return {
        "moves": [[m.kind, m.object, m.support, m.actuator, m.timestamp] for m in plan.moves],
        "carried": list(plan.carried),
        "handedness": plan.handedness,
        "s": plan.s,
    }
