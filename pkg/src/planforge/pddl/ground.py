"""Grounding and exact state-transition semantics.

``apply_action`` implements the two ordering rules everything downstream
relies on: conditional-effect conditions are evaluated against the state the
action is applied to (never against intermediate results), and all deletes
accumulated across firing branches are applied before any adds.
"""

from __future__ import annotations

import itertools
from collections.abc import Iterator

from planforge.pddl.model import (
    EQ,
    Domain,
    GroundAction,
    Literal,
    Problem,
    State,
    ground_schema,
    substitute,
)
from planforge.pddl.writer import render_literal


class GroundingError(ValueError):
    """A plan step that cannot be grounded against the domain and problem."""

    def __init__(self, kind: str, message: str):
        self.kind = kind
        super().__init__(message)


class PreconditionError(ValueError):
    def __init__(self, action: GroundAction, literal: Literal):
        self.action = action
        self.literal = literal
        super().__init__(
            f"precondition of {action.signature} fails on {render_literal(literal)}"
        )


def holds(state: State, literal: Literal) -> bool:
    if literal.atom[0] == EQ:
        return (literal.atom[1] == literal.atom[2]) == literal.positive
    return (literal.atom in state) == literal.positive


def first_failure(state: State, condition: tuple[Literal, ...]) -> Literal | None:
    for literal in condition:
        if not holds(state, literal):
            return literal
    return None


def goal_satisfied(state: State, goal: tuple[Literal, ...]) -> bool:
    return first_failure(state, goal) is None


def apply_effects(state: State, action: GroundAction) -> State:
    """Apply effects without checking the precondition (callers that already
    tested applicability use this directly)."""
    adds = set()
    deletes = set()
    for branch in action.effects:
        # Branch conditions see the pre-state only.
        if first_failure(state, branch.condition) is None:
            deletes.update(branch.deletes)
            adds.update(branch.adds)
    return frozenset((state - deletes) | adds)


def apply_action(state: State, action: GroundAction) -> State:
    failed = first_failure(state, action.precondition)
    if failed is not None:
        raise PreconditionError(action, failed)
    return apply_effects(state, action)


def ground_actions(domain: Domain, problem: Problem) -> list[GroundAction]:
    """Every type-consistent instantiation, schema order then lexicographic
    argument order.  No reachability or static filtering is applied."""
    out: list[GroundAction] = []
    for action in domain.actions:
        pools = [problem.objects_of_type(domain, p.type) for p in action.params]
        for args in itertools.product(*pools):
            out.append(ground_schema(action, args))
    return out


def ground_action_for(
    domain: Domain, problem: Problem, name: str, args: tuple[str, ...]
) -> GroundAction:
    """Ground one plan step, classifying failures for the validator."""
    action = domain.action(name)
    if action is None:
        raise GroundingError("unknown_action", f"unknown action '{name}'")
    if len(args) != action.arity:
        raise GroundingError(
            "bad_arity",
            f"action '{name}' expects {action.arity} argument(s), got {len(args)}",
        )
    object_type = dict(problem.objects)
    for arg, param in zip(args, action.params):
        if arg not in object_type:
            raise GroundingError("type_error", f"unknown object '{arg}'")
        if not domain.is_subtype(object_type[arg], param.type):
            raise GroundingError(
                "type_error",
                f"object '{arg}' has type '{object_type[arg]}', but parameter "
                f"'{param.name}' of '{name}' requires '{param.type}'",
            )
    return ground_schema(action, args)


def static_predicates(domain: Domain) -> frozenset[str]:
    """Predicates no action effect can change."""
    touched = set()
    for action in domain.actions:
        for branch in action.effects:
            for atom in branch.adds + branch.deletes:
                touched.add(atom[0])
    return frozenset(p.name for p in domain.predicates) - frozenset(touched)


def iter_applicable_candidates(domain: Domain, problem: Problem) -> Iterator[GroundAction]:
    """Ground actions in ``ground_actions`` order, skipping instantiations
    whose static precondition atoms are false in the initial state.  Statics
    never change, so skipped instantiations are inapplicable in every
    reachable state and the relative order of applicable actions is kept.
    """
    statics = static_predicates(domain)
    init = problem.init
    for action in domain.actions:
        pools = [problem.objects_of_type(domain, p.type) for p in action.params]
        index_of = {p.name: i for i, p in enumerate(action.params)}
        # buckets[k] holds static literals fully bound once k params are bound
        buckets: list[list[Literal]] = [[] for _ in range(action.arity + 1)]
        for literal in action.precondition:
            if literal.atom[0] != EQ and literal.atom[0] not in statics:
                continue
            depth = max(
                (index_of[t] + 1 for t in literal.atom[1:] if t in index_of),
                default=0,
            )
            buckets[depth].append(literal)

        def walk(depth: int, binding: dict[str, str]) -> Iterator[GroundAction]:
            for literal in buckets[depth]:
                ground = Literal(substitute(literal.atom, binding), literal.positive)
                if not holds(init, ground):
                    return
            if depth == action.arity:
                args = tuple(binding[p.name] for p in action.params)
                yield ground_schema(action, args)
                return
            param = action.params[depth]
            for obj in pools[depth]:
                binding[param.name] = obj
                yield from walk(depth + 1, binding)
                del binding[param.name]

        yield from walk(0, {})
