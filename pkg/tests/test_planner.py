import numpy as np
import pytest

from stackrecon.planner import (FIX, GRASP, PLACE, ONE_HAND, TWO_HAND, Domain, IllegalMove, Move, SymbolicState,
                                apply_move, assign_timestamps, canonical_form, domain_from_problem,
                                enumerate_plans, legal_moves)
from stackrecon.planner.search import min_length
from stackrecon.problem_io import load_bundled
from stackrecon.scene import TABLE

BLOCKS = ("b1", "b2", "b3")


def _domain(target, loc, fixed=()):
    state = SymbolicState.make(loc, fixed)
    return Domain(tuple(sorted(target)), tuple(sorted(target.items())), state), state


def _on(**where):
    return {b: ("on", s) for b, s in where.items()}


@pytest.fixture(scope="module")
def problems():
    return load_bundled()


# legal moves --------------------------------------------------------------

def test_no_moves_when_everything_is_fixed():
    d, s = _domain({b: TABLE for b in BLOCKS}, _on(b1=TABLE, b2=TABLE, b3=TABLE), BLOCKS)
    assert legal_moves(s, d, "universal") == []


def test_grasps_for_each_unfixed_block_and_hand():
    d, s = _domain({"b1": TABLE, "b2": "b1", "b3": TABLE}, _on(b1=TABLE, b2=TABLE, b3=TABLE), ["b1"])
    moves = legal_moves(s, d, "universal")
    assert sorted(m.key for m in moves) == sorted(
        (GRASP, b, "", a) for b in ("b2", "b3") for a in ("handL", "handR"))


def test_efficient_mode_skips_place_when_fix_is_available():
    loc = _on(b1=TABLE, b3=TABLE)
    loc["b2"] = ("in", "handR")
    d, s = _domain({"b1": TABLE, "b2": "b1", "b3": TABLE}, loc, ["b1", "b3"])
    eff = {m.key for m in legal_moves(s, d, "efficient") if m.actuator == "handR"}
    assert (FIX, "b2", "b1", "handR") in eff
    assert (PLACE, "b2", TABLE, "handR") not in eff
    uni = {m.key for m in legal_moves(s, d, "universal")}
    assert (PLACE, "b2", TABLE, "handR") in uni


def test_grasp_puts_block_in_hand():
    d, s = _domain({b: TABLE for b in BLOCKS}, _on(b1=TABLE, b2=TABLE, b3=TABLE))
    nxt = apply_move(s, d, Move(GRASP, "b1", None, "handR"))
    assert nxt.in_hand("b1") == "handR"
    assert nxt.holder("handR") == "b1"


def test_fix_places_and_freezes_block():
    loc = _on(b1=TABLE, b3=TABLE)
    loc["b2"] = ("in", "handL")
    d, s = _domain({"b1": TABLE, "b2": "b1", "b3": TABLE}, loc, ["b1"])
    nxt = apply_move(s, d, Move(FIX, "b2", "b1", "handL"))
    assert nxt.support_of("b2") == "b1" and "b2" in nxt.fixed
    assert nxt.holder("handL") is None


def test_grasping_a_fixed_block_is_illegal():
    d, s = _domain({b: TABLE for b in BLOCKS}, _on(b1=TABLE, b2=TABLE, b3=TABLE), ["b1"])
    with pytest.raises(IllegalMove):
        apply_move(s, d, Move(GRASP, "b1", None, "handL"))


def test_block_under_a_fixed_block_cannot_be_grasped():
    d, s = _domain({"b1": TABLE, "b2": "b1", "b3": TABLE}, _on(b1=TABLE, b2="b1", b3=TABLE), ["b2"])
    assert all(m.object != "b1" for m in legal_moves(s, d))


def test_move_validation():
    with pytest.raises(ValueError):
        Move(GRASP, "b1", TABLE, "handL")
    with pytest.raises(ValueError):
        Move(PLACE, "b1", None, "handL")
    with pytest.raises(ValueError):
        Move(FIX, "b1", "b1", "handL")
    with pytest.raises(ValueError):
        Move(GRASP, "b1", None, "foot")


# timestamps ---------------------------------------------------------------

def test_one_hand_plan_is_fully_sequential():
    moves = [Move(GRASP, "b1", None, "handR"), Move(FIX, "b1", TABLE, "handR"),
             Move(GRASP, "b2", None, "handR"), Move(FIX, "b2", "b1", "handR")]
    plan = assign_timestamps(moves, {"b1": TABLE, "b2": TABLE})
    assert [m.timestamp for m in plan.moves] == [1, 2, 3, 4]
    assert plan.s == 4 and plan.handedness == ONE_HAND


def test_independent_two_hand_moves_run_concurrently():
    moves = [Move(GRASP, "b1", None, "handR"), Move(GRASP, "b2", None, "handL"),
             Move(FIX, "b1", TABLE, "handR"), Move(FIX, "b2", TABLE, "handL")]
    plan = assign_timestamps(moves, {"b1": TABLE, "b2": TABLE})
    assert [m.timestamp for m in plan.moves] == [1, 1, 2, 2]
    assert plan.s == 2 and plan.handedness == TWO_HAND


def test_fix_onto_a_block_waits_for_its_placement():
    moves = [Move(GRASP, "b1", None, "handR"), Move(GRASP, "b2", None, "handL"),
             Move(FIX, "b1", TABLE, "handR"), Move(FIX, "b2", "b1", "handL")]
    plan = assign_timestamps(moves, {"b1": TABLE, "b2": TABLE})
    assert [m.timestamp for m in plan.moves] == [1, 1, 2, 3]
    assert plan.s == 3


def test_grasp_off_a_support_waits_for_moves_on_that_support():
    moves = [Move(GRASP, "b1", None, "handR"), Move(GRASP, "b2", None, "handL"),
             Move(FIX, "b1", TABLE, "handR"), Move(FIX, "b2", "b1", "handL"),
             Move(GRASP, "b3", None, "handR"), Move(FIX, "b3", TABLE, "handR")]
    plan = assign_timestamps(moves, {"b1": TABLE, "b2": TABLE, "b3": "b1"})
    # b3 starts on b1, so lifting it waits for the Fix onto b1 at t = 3
    assert [m.timestamp for m in plan.moves] == [1, 1, 2, 3, 4, 5]


def test_schedule_rejects_inconsistent_sequences():
    with pytest.raises(ValueError):
        assign_timestamps([Move(FIX, "b1", TABLE, "handR")])
    with pytest.raises(ValueError):
        assign_timestamps([Move(GRASP, "b1", None, "handR"), Move(GRASP, "b2", None, "handR")])


def test_canonical_form_ignores_timestamps_but_not_actuators():
    a = [Move(GRASP, "b1", None, "handR", 1), Move(FIX, "b1", TABLE, "handR", 2)]
    b = [Move(GRASP, "b1", None, "handR", 3), Move(FIX, "b1", TABLE, "handR", 7)]
    mirrored = [Move(GRASP, "b1", None, "handL", 1), Move(FIX, "b1", TABLE, "handL", 2)]
    assert canonical_form(a) == canonical_form(b)
    assert canonical_form(a) != canonical_form(mirrored)


# search -------------------------------------------------------------------

def test_identity_problem_has_one_empty_one_hand_plan(problems):
    res = enumerate_plans(problems[1], "efficient")
    assert len(res.plans) == 1
    assert res.plans[0].moves == () and res.plans[0].s == 0 and res.plans[0].handedness == ONE_HAND


def _replay_reaches_goal(domain, plan):
    state = domain.initial
    for m in plan.moves:
        state = apply_move(state, domain, m)
    return domain.is_goal(state) and all(state.support_of(b) == s for b, s in domain.target.items())


@pytest.mark.parametrize("pid", [1, 3, 4, 7, 9])
def test_plans_are_sound_and_well_formed(problems, pid):
    p = problems[pid - 1]
    domain = domain_from_problem(p)
    res = enumerate_plans(p, "efficient")
    assert res.plans
    for plan in res.plans:
        assert _replay_reaches_goal(domain, plan)
        assert plan.s <= len(plan.moves)
        if plan.handedness == ONE_HAND:
            assert plan.s == len(plan.moves)
        fixed_at = {m.object: m.timestamp for m in plan.moves if m.kind == FIX}
        assert all(m.timestamp <= fixed_at[m.object] for m in plan.moves)
    keys = [p.key for p in res.plans]
    assert len(keys) == len(set(keys))
    assert [(q.s, q.key) for q in res.plans] == sorted((q.s, q.key) for q in res.plans)


def test_timestamp_order_replay_is_legal(problems):
    # moves sharing a timestamp are independent, so any order within a step replays
    for p in problems:
        domain = domain_from_problem(p)
        for plan in enumerate_plans(p, "efficient").plans:
            state = domain.initial
            for m in sorted(plan.moves, key=lambda m: m.timestamp):
                state = apply_move(state, domain, m)
            assert domain.is_goal(state)


def test_hands_filter(problems):
    p = problems[3]
    both = {q.key for q in enumerate_plans(p, "efficient", "both").plans}
    one = enumerate_plans(p, "efficient", "one").plans
    two = enumerate_plans(p, "efficient", "two").plans
    assert all(q.handedness == ONE_HAND for q in one)
    assert all(q.handedness == TWO_HAND for q in two)
    assert {q.key for q in one} | {q.key for q in two} <= both
    # the in-place swap needs a temporary placement when only one hand is used
    assert any(m.kind == PLACE for q in one for m in q.moves)


def test_length_cap_is_monotone(problems):
    p = problems[3]
    prev = set()
    for cap in range(4, 11):
        cur = {q.key for q in enumerate_plans(p, "universal", cap=cap).plans}
        assert prev <= cur
        prev = cur


def test_unreachable_within_cap_reports_diagnostic(problems):
    res = enumerate_plans(problems[2], "efficient", cap=2)
    assert res.plans == [] and res.diagnostic


def test_mcts_finds_a_subset_of_exhaustive(problems):
    p = problems[0]
    exact = {q.key for q in enumerate_plans(p, "universal").plans}
    found = {q.key for q in enumerate_plans(p, "universal", search="mcts", budget=3000, seed=1).plans}
    assert found and found <= exact


def test_mcts_is_seed_deterministic(problems):
    a = enumerate_plans(problems[0], "universal", search="mcts", budget=500, seed=4).plans
    b = enumerate_plans(problems[0], "universal", search="mcts", budget=500, seed=4).plans
    assert [q.key for q in a] == [q.key for q in b]


def test_min_length_counts_moves(problems):
    assert min_length(domain_from_problem(problems[0])) == 2
    assert min_length(domain_from_problem(problems[1])) == 0


def test_enumerate_rejects_bad_arguments(problems):
    with pytest.raises(ValueError):
        enumerate_plans(problems[0], "lazy")
    with pytest.raises(ValueError):
        enumerate_plans(problems[0], hands="three")
    with pytest.raises(ValueError):
        enumerate_plans(problems[0], search="astar")


def _random_sequence(rng, domain, one_hand):
    state = domain.initial
    hand = "handL" if rng.integers(2) else "handR"
    moves = []
    for _ in range(int(rng.integers(2, 13))):
        options = [m for m in legal_moves(state, domain) if not one_hand or m.actuator == hand]
        if not options:
            break
        m = options[int(rng.integers(len(options)))]
        moves.append(m)
        state = apply_move(state, domain, m)
    return moves


def test_random_sequences_schedule_within_bounds(problems):
    rng = np.random.default_rng(5)
    for k in range(50):
        domain = domain_from_problem(problems[[0, 2, 3, 7, 8][k % 5]])
        moves = _random_sequence(rng, domain, one_hand=k % 2 == 0)
        init = {b: s for b, (_, s) in domain.initial.location}
        plan = assign_timestamps(moves, init)
        assert plan.s <= len(moves)
        if plan.handedness == ONE_HAND:
            assert plan.s == len(moves)
