from __future__ import annotations

import random

import pytest

from oracle import (
    sim_apply,
    sim_ground_all,
    sim_reachable_by_depth,
    sim_shortest_plan,
    sim_static_filter,
)
from planforge.pddl import (
    GroundingError,
    PreconditionError,
    apply_action,
    apply_effects,
    goal_satisfied,
    ground_action_for,
    ground_actions,
    iter_applicable_candidates,
    parse_domain,
    parse_problem,
    static_predicates,
)

# Micro fixture: 3 links, 4 angles, 2 grippers.
# grasp/release take 2 gripper params: 2^2 = 4 each.
# rotate-cw/rotate-ccw take (?l ?m - link) plus 4 angle params:
# 3^2 * 4^4 = 2304 each.  4 + 4 + 2304 + 2304 = 4616.
MICRO_GROUND_COUNT = 4616

# Static pruning on the micro init keeps grasp/release pairs with distinct
# grippers (2 each) and rotations whose adjacency and next-cw atoms hold:
# (l, m) in {(link2, link3), (link3, link2)}, 4 choices of ?from (next-cw is
# a cycle), 4 of ?mfrom: 2 * 4 * 4 = 32 per rotation schema.
# 2 + 2 + 32 + 32 = 68.
MICRO_CANDIDATE_COUNT = 68


def test_ground_actions_count_and_order(artic3, micro):
    ground = ground_actions(artic3, micro)
    assert len(ground) == MICRO_GROUND_COUNT
    expected = sim_ground_all(artic3, micro)
    assert [g.signature for g in ground] == [
        "(" + " ".join((a.name,) + a.args) + ")" for a in expected
    ]
    # deterministic: schema order, then lexicographic argument tuples
    assert ground[0].signature == "(grasp gripper1 gripper1)"
    rotations = [g for g in ground if g.name == "rotate-cw"]
    args = [g.args for g in rotations]
    assert args == sorted(args)


def test_candidate_stream_is_ordered_subset(artic3, micro):
    ground = ground_actions(artic3, micro)
    candidates = list(iter_applicable_candidates(artic3, micro))
    assert len(candidates) == MICRO_CANDIDATE_COUNT
    sigs = [g.signature for g in ground]
    positions = [sigs.index(c.signature) for c in candidates]
    assert positions == sorted(positions)
    expected = sim_static_filter(artic3, micro, sim_ground_all(artic3, micro))
    assert [c.signature for c in candidates] == [
        "(" + " ".join((a.name,) + a.args) + ")" for a in expected
    ]


def test_static_predicates(artic3):
    assert static_predicates(artic3) == frozenset(
        {"adjacent", "downstream", "is-rotatable", "next-cw"}
    )


def test_apply_matches_simulation_on_random_walks(artic3, micro):
    candidates = list(iter_applicable_candidates(artic3, micro))
    by_sig = {c.signature: c for c in candidates}
    rng = random.Random("walks")
    for _ in range(200):
        state = micro.init
        for _ in range(6):
            sig = rng.choice(sorted(by_sig))
            action = by_sig[sig]
            expected = sim_apply(state, action)
            if expected is None:
                with pytest.raises(PreconditionError):
                    apply_action(state, action)
            else:
                state = apply_action(state, action)
                assert state == expected


def test_transition_map_matches_simulation(artic3, micro):
    layers, transitions = sim_reachable_by_depth(artic3, micro, 2)
    candidates = list(iter_applicable_candidates(artic3, micro))
    for state in layers[0] | layers[1]:
        for action in candidates:
            key = (state, (action.name,) + action.args)
            expected = transitions.get(key)
            if expected is None:
                assert sim_apply(state, action) is None
            else:
                assert apply_action(state, action) == expected


CASCADE = """
(define (domain cascade)
  (:requirements :strips :conditional-effects)
  (:predicates (p) (q) (r) (s))
  (:action fire
    :parameters ()
    :precondition (p)
    :effect (and (not (p))
                 (when (p) (and (r)))
                 (when (q) (and (p)))
                 (when (r) (and (s))))))
"""


def cascade_setup(init_atoms):
    dom = parse_domain(CASCADE)
    atoms = " ".join(f"({a})" for a in init_atoms)
    prob = parse_problem(
        f"(define (problem c) (:domain cascade) (:objects) (:init {atoms}) (:goal (and (s))))",
        dom,
    )
    (action,) = ground_actions(dom, prob)
    return dom, prob, action


def test_branch_conditions_read_the_pre_state():
    # (p) is deleted unconditionally, yet the branch guarded on (p) fires
    # because conditions are evaluated before any effect lands.
    _, prob, action = cascade_setup(["p"])
    after = apply_action(prob.init, action)
    assert after == frozenset({("r",)})


def test_deletes_collected_before_adds_across_branches():
    # one branch deletes (p), another adds it back: add wins
    _, prob, action = cascade_setup(["p", "q"])
    after = apply_action(prob.init, action)
    assert after == frozenset({("p",), ("q",), ("r",)})
    assert after == sim_apply(prob.init, action)


def test_effects_do_not_chain_within_one_step():
    # (r) is added this step, but the branch guarded on (r) saw the pre-state
    _, prob, action = cascade_setup(["p"])
    after = apply_action(prob.init, action)
    assert ("s",) not in after
    assert after == sim_apply(prob.init, action)


def test_apply_effects_skips_the_precondition_gate():
    _, prob, action = cascade_setup(["q"])
    with pytest.raises(PreconditionError):
        apply_action(prob.init, action)
    assert apply_effects(prob.init, action) == frozenset({("p",), ("q",)})


def test_precondition_error_reports_first_failed_literal(artic3, micro):
    release = ground_action_for(artic3, micro, "release", ("gripper1", "gripper2"))
    with pytest.raises(PreconditionError) as err:
        apply_action(micro.init, release)
    assert err.value.literal == release.precondition[0]
    assert err.value.literal.atom == ("grasping", "gripper1")
    assert "(grasping gripper1)" in str(err.value)


def test_ground_action_for_failure_kinds(artic3, micro):
    with pytest.raises(GroundingError) as err:
        ground_action_for(artic3, micro, "teleport", ("link1",))
    assert err.value.kind == "unknown_action"
    with pytest.raises(GroundingError) as err:
        ground_action_for(artic3, micro, "grasp", ("gripper1",))
    assert err.value.kind == "bad_arity"
    with pytest.raises(GroundingError) as err:
        ground_action_for(artic3, micro, "grasp", ("gripper1", "link1"))
    assert err.value.kind == "type_error"
    with pytest.raises(GroundingError) as err:
        ground_action_for(artic3, micro, "grasp", ("gripper1", "ghost"))
    assert err.value.kind == "type_error"


def test_goal_satisfied_handles_negative_goals(artic3, micro):
    assert not goal_satisfied(micro.init, micro.goal)
    plan = sim_shortest_plan(artic3, micro)
    state = micro.init
    for step in plan:
        state = apply_action(state, ground_action_for(artic3, micro, step[0], step[1:]))
    assert goal_satisfied(state, micro.goal)


def test_downstream_drag_propagates_only_downstream(artic3, micro):
    ground = {g.signature: g for g in iter_applicable_candidates(artic3, micro)}
    grasped = apply_action(micro.init, ground["(grasp gripper1 gripper2)"])

    # rotating link2 drags link3 (downstream of link2)
    mid = apply_action(grasped, ground["(rotate-cw link2 link3 a0 a90 a90 a180)"])
    assert ("current-angle", "link2", "a90") in mid
    assert ("current-angle", "link3", "a180") in mid

    # rotating link3 leaves link2 alone
    tip = apply_action(mid, ground["(rotate-cw link3 link2 a180 a270 a90 a180)"])
    assert ("current-angle", "link3", "a270") in tip
    assert ("current-angle", "link2", "a90") in tip
