"""Total-order forward decomposition with a stack limit.

The recursion of the textbook procedure is unrolled onto an explicit stack
of child iterators, so ``stack_limit`` is exact and the host stack never
grows with plan depth.  A search node is ``(state, tasks, depth, plan)``
where ``tasks`` and ``plan`` are cons lists ``(head, tail)`` shared between
siblings.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from .ir import (
    CompiledInstance,
    PlanningInstance,
    apply,
    bind_head,
    build_indexes,
    format_atom,
    substitute,
)

PLAN = "plan"
FAILURE = "failure"
BUDGET = "budget-exhausted"

DEFAULT_STACK_LIMIT = 4096


@dataclass
class SearchConfig:
    stack_limit: int = DEFAULT_STACK_LIMIT
    expansion_budget: int | None = None
    time_budget: float | None = None

    def __post_init__(self):
        if self.stack_limit < 1:
            raise ValueError("stack_limit must be at least 1")


@dataclass
class SearchStats:
    expansions: int = 0
    backtracks: int = 0
    max_depth: int = 0
    cache_hits: int = 0
    cache_stores: int = 0
    invisible_actions: int = 0
    elapsed: float = 0.0

    def lines(self) -> list[str]:
        return [
            f"expansions={self.expansions}",
            f"backtracks={self.backtracks}",
            f"max_depth={self.max_depth}",
            f"cache_hits={self.cache_hits}",
            f"cache_stores={self.cache_stores}",
            f"invisible_actions={self.invisible_actions}",
            f"elapsed={self.elapsed:.6f}",
        ]


@dataclass(frozen=True)
class Action:
    name: str
    args: tuple
    cost: float = 1.0
    visible: bool = True

    def __str__(self):
        return format_atom((self.name,) + self.args)


@dataclass
class Plan:
    actions: list = field(default_factory=list)

    @property
    def cost(self) -> float:
        return sum(a.cost for a in self.actions)

    def __len__(self):
        return len(self.actions)

    def as_tuples(self) -> tuple:
        return tuple((a.name,) + a.args for a in self.actions)

    def text(self) -> str:
        lines = [f";; plan length {len(self.actions)} cost {self.cost:g}"]
        lines += [str(a) for a in self.actions]
        return "\n".join(lines) + "\n"


@dataclass
class PlanResult:
    outcome: str
    plan: Plan | None
    stats: SearchStats

    @property
    def solved(self) -> bool:
        return self.outcome == PLAN


class CycleCache:
    """Failed knot decompositions of one run.

    Keys combine the knot owner, the ground marker terms and the signature
    of the branch that inserted the marker; markers without terms also key
    on the fluent store (visited markers excluded).  Python's hashed set
    gives the digest-then-confirm lookup.
    """

    def __init__(self):
        self.failed: set = set()
        self.hits = 0
        self.stores = 0

    def key(self, owner, terms, origin, state):
        digest = None
        if not terms:
            digest = frozenset(
                (name, rows) for name, rows in state.fluents.items() if not name.startswith("visited_")
            )
        return (owner, terms, origin, digest)

    def clear(self):
        self.failed.clear()
        self.hits = self.stores = 0


class _BudgetExhausted(Exception):
    pass


class Planner:
    def __init__(self, compiled: CompiledInstance, config: SearchConfig | None = None):
        self.ci = compiled
        self.config = config or SearchConfig()
        self.cache = CycleCache()
        self.stats = SearchStats()

    def _children(self, state, tasks, depth, plan):
        (task, origin), rest = tasks
        name = task[0]
        cop = self.ci.operators.get(name)
        if cop is not None:
            op = cop.operator
            binding = bind_head(op.parameters, task[1:])
            if binding is None:
                return
            if cop.fully_bound:
                if cop.ground_applicable(binding, state):
                    args = tuple(task[1:])
                    key = None
                    if op.cycle_kind == "visit":
                        key = self.cache.key(op.name[len("visit_"):], args, origin, state)
                        if key in self.cache.failed:
                            self.cache.hits += 1
                            return
                    action = Action(op.name, args, op.cost, op.visible)
                    new_state = cop.ground_apply(binding, state)
                    yield new_state, rest, depth + (1 if op.visible else 0), (action, plan), key
                return
            for b in cop.pre.bindings(binding, state, op.parameters):
                args = tuple(b.get(p, p) for p in op.parameters)
                key = None
                if op.cycle_kind == "visit":
                    key = self.cache.key(op.name[len("visit_"):], args, origin, state)
                    if key in self.cache.failed:
                        self.cache.hits += 1
                        continue
                new_state = apply(
                    [substitute(a, b) for a in op.eff_pos], [substitute(a, b) for a in op.eff_neg], state
                )
                action = Action(op.name, args, op.cost, op.visible)
                yield new_state, rest, depth + (1 if op.visible else 0), (action, plan), key
            return
        for cm in self.ci.methods.get(name, ()):
            m = cm.method
            head = bind_head(m.parameters, task[1:])
            if head is None:
                continue
            for b in cm.pre.bindings(head, state, cm.variables):
                subs = [substitute(t, b) for t in m.subtasks]
                signature = None
                if any(self._is_visit(t[0]) for t in subs):
                    signature = (m.task_name, m.label, tuple(sorted(b.items())))
                new_tasks = rest
                for t in reversed(subs):
                    new_tasks = ((t, signature if self._is_visit(t[0]) else None), new_tasks)
                yield state, new_tasks, depth + 1, plan, None

    def _is_visit(self, name):
        cop = self.ci.operators.get(name)
        return cop is not None and cop.operator.cycle_kind == "visit"

    def _check_budget(self, started):
        cfg = self.config
        if cfg.expansion_budget is not None and self.stats.expansions >= cfg.expansion_budget:
            raise _BudgetExhausted
        if cfg.time_budget is not None and self.stats.expansions % 256 == 0:
            if time.perf_counter() - started > cfg.time_budget:
                raise _BudgetExhausted

    def run(self) -> PlanResult:
        self.cache.clear()
        self.stats = SearchStats()
        started = time.perf_counter()
        try:
            outcome, plan_cons = self._search(started)
        except _BudgetExhausted:
            outcome, plan_cons = BUDGET, None
        self.stats.elapsed = time.perf_counter() - started
        self.stats.cache_hits = self.cache.hits
        self.stats.cache_stores = self.cache.stores
        if outcome != PLAN:
            return PlanResult(outcome, None, self.stats)
        actions = []
        while plan_cons is not None:
            actions.append(plan_cons[0])
            plan_cons = plan_cons[1]
        actions.reverse()
        self.stats.invisible_actions = sum(1 for a in actions if not a.visible)
        return PlanResult(PLAN, Plan([a for a in actions if a.visible]), self.stats)

    def _search(self, started):
        if self.ci.instance.unsolvable:
            return FAILURE, None
        tasks = None
        for t in reversed(self.ci.top_tasks):
            tasks = ((t, None), tasks)
        if tasks is None:
            return PLAN, None
        limit = self.config.stack_limit
        stats = self.stats
        self._check_budget(started)
        stats.expansions += 1
        # frame: [children iterator, visit cache key, cut by stack limit]
        stack = [[self._children(self.ci.initial, tasks, 0, None), None, False]]
        while stack:
            frame = stack[-1]
            child = next(frame[0], None)
            if child is None:
                stack.pop()
                stats.backtracks += 1
                if frame[1] is not None and not frame[2]:
                    self.cache.failed.add(frame[1])
                    self.cache.stores += 1
                if frame[2] and stack:
                    stack[-1][2] = True
                continue
            state, rest, depth, plan, key = child
            if rest is None:
                return PLAN, plan
            if depth >= limit:
                frame[2] = True
                continue
            self._check_budget(started)
            stats.expansions += 1
            if depth > stats.max_depth:
                stats.max_depth = depth
            stack.append([self._children(state, rest, depth, plan), key, False])
        return FAILURE, None


def plan(compiled: CompiledInstance | PlanningInstance, config: SearchConfig | None = None) -> PlanResult:
    if isinstance(compiled, PlanningInstance):
        if compiled.unsolvable:
            # a pass proved it; the pruned instance may no longer compile
            return PlanResult(FAILURE, None, SearchStats())
        compiled = build_indexes(compiled)
    return Planner(compiled, config).run()


def run_with_budgets(instance, config: SearchConfig | None = None) -> PlanResult:
    """Compile if needed and search under the configured budgets; stats are always filled."""
    started = time.perf_counter()
    result = plan(instance, config)
    result.stats.elapsed = time.perf_counter() - started
    return result
