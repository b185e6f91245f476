"""Plan replay and the brute-force decomposition oracle.

Nothing here touches the indexed state, the unifier or the planner: states
are plain frozensets of atoms and variables are enumerated over the full
cartesian product of objects.  It is intentionally slow.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

from .errors import OracleOverflow


def _is_var(t):
    return t.startswith("?")


def _ground(atom, binding):
    return (atom[0],) + tuple(binding.get(t, t) for t in atom[1:])


def _holds(atom, state):
    if atom[0] == "=":
        return atom[1] == atom[2]
    return atom in state


def _show(atom):
    return "(" + " ".join(atom) + ")"


@dataclass(frozen=True)
class Violation:
    step: int
    action: tuple
    literal: tuple | None
    reason: str

    def __str__(self):
        where = f"step {self.step}: {_show(self.action)}" if self.action else f"step {self.step}"
        lit = f" {_show(self.literal)}" if self.literal else ""
        return f"{where}: {self.reason}{lit}"


@dataclass
class ValidationReport:
    ok: bool
    violation: Violation | None
    final_state: frozenset

    def __bool__(self):
        return self.ok

    def text(self) -> str:
        return "ok" if self.ok else f"violation {self.violation}"


def _as_tuples(plan):
    if hasattr(plan, "as_tuples"):
        return list(plan.as_tuples())
    out = []
    for a in plan:
        if isinstance(a, str):
            a = tuple(a.strip().strip("()").split())
        out.append(tuple(a))
    return out


def validate(plan, instance, renamed=None) -> ValidationReport:
    """Replay ``plan`` from the initial state of ``instance`` and check the goal.

    ``renamed`` maps specialized predicate names back to the originals so that
    reports read in terms of the untransformed domain.
    """
    renamed = dict(renamed or {})

    def back(atom):
        return (renamed.get(atom[0], atom[0]),) + tuple(atom[1:])

    state = frozenset(tuple(a) for a in instance.initial)
    actions = _as_tuples(plan)
    for step, action in enumerate(actions):
        op = instance.operators.get(action[0])
        if op is None:
            return ValidationReport(False, Violation(step, action, None, "unknown action"), state)
        if len(op.parameters) != len(action) - 1:
            return ValidationReport(False, Violation(step, action, None, "wrong number of arguments"), state)
        binding = {}
        for p, v in zip(op.parameters, action[1:]):
            if _is_var(p):
                if binding.setdefault(p, v) != v:
                    return ValidationReport(False, Violation(step, action, None, "inconsistent arguments"), state)
            elif p != v:
                return ValidationReport(False, Violation(step, action, None, "argument differs from constant"), state)
        for lit in op.pre_pos:
            g = _ground(lit, binding)
            if not _holds(g, state):
                return ValidationReport(False, Violation(step, action, back(g), "unsatisfied"), state)
        for lit in op.pre_neg:
            g = _ground(lit, binding)
            if _holds(g, state):
                return ValidationReport(False, Violation(step, action, back(g), "must be false"), state)
        delete = {_ground(a, binding) for a in op.eff_neg}
        add = {_ground(a, binding) for a in op.eff_pos}
        state = (state - delete) | add
    end = len(actions)
    for lit in instance.goal_pos:
        if not _holds(tuple(lit), state):
            return ValidationReport(False, Violation(end, (), back(tuple(lit)), "goal not reached"), state)
    for lit in instance.goal_neg:
        if _holds(tuple(lit), state):
            return ValidationReport(False, Violation(end, (), back(tuple(lit)), "goal must be false"), state)
    return ValidationReport(True, None, state)


class _Oracle:
    def __init__(self, instance, depth_bound, node_cap):
        self.inst = instance
        self.bound = depth_bound
        self.cap = node_cap
        self.nodes = 0
        self.objects = list(instance.objects)
        self.methods = {}
        for m in instance.methods:
            self.methods.setdefault(m.task_name, []).append(m)

    def _bindings(self, head_params, terms, variables, pos, neg, state):
        binding = {}
        for p, t in zip(head_params, terms):
            if _is_var(p):
                if binding.setdefault(p, t) != t:
                    return
            elif p != t:
                return
        unbound = [v for v in variables if v not in binding]
        for combo in itertools.product(self.objects, repeat=len(unbound)):
            b = dict(binding)
            b.update(zip(unbound, combo))
            if all(_holds(_ground(a, b), state) for a in pos) and not any(
                _holds(_ground(a, b), state) for a in neg
            ):
                yield b

    def solve(self, state, tasks, depth):
        self.nodes += 1
        if self.nodes > self.cap:
            raise OracleOverflow(f"oracle exceeded {self.cap} nodes")
        if not tasks:
            if all(_holds(tuple(a), state) for a in self.inst.goal_pos) and not any(
                _holds(tuple(a), state) for a in self.inst.goal_neg
            ):
                yield ()
            return
        if depth >= self.bound:
            return
        task, rest = tasks[0], tasks[1:]
        op = self.inst.operators.get(task[0])
        if op is not None:
            params = [p for p in op.parameters if _is_var(p)]
            for b in self._bindings(op.parameters, task[1:], params, op.pre_pos, op.pre_neg, state):
                nxt = (state - {_ground(a, b) for a in op.eff_neg}) | {_ground(a, b) for a in op.eff_pos}
                step = ((op.name,) + tuple(b.get(p, p) for p in op.parameters),) if op.visible else ()
                for tail in self.solve(nxt, rest, depth + (1 if op.visible else 0)):
                    yield step + tail
            return
        for m in self.methods.get(task[0], ()):
            if len(m.parameters) != len(task) - 1:
                continue
            variables = []
            for atom in itertools.chain(m.pre_pos, m.pre_neg, m.subtasks):
                for t in atom[1:]:
                    if _is_var(t) and t not in variables:
                        variables.append(t)
            for b in self._bindings(m.parameters, task[1:], variables, m.pre_pos, m.pre_neg, state):
                subs = tuple(_ground(t, b) for t in m.subtasks)
                yield from self.solve(state, subs + rest, depth + 1)


def oracle_enumerate(instance, depth_bound: int, node_cap: int = 2_000_000) -> frozenset:
    """Every primitive plan reachable by a depth-bounded total-order decomposition.

    Depth counts decomposition calls the same way the planner does: visible
    actions and method expansions add one, invisible actions add none.
    """
    oracle = _Oracle(instance, depth_bound, node_cap)
    state = frozenset(tuple(a) for a in instance.initial)
    tasks = tuple(tuple(t) for t in instance.top_tasks)
    return frozenset(oracle.solve(state, tasks, 0))
