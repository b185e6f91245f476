"""Intermediate representation shared by every stage.

Predicates, facts and tasks are plain tuples ``(name, term, ...)``.  A term is
a lowercase string; variables keep their leading ``?``.  Literal sets are
lists (ordered, duplicate free) because declaration order drives the
deterministic search order.
"""
from __future__ import annotations

import copy
import itertools
import logging
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from .errors import InvariantViolation, ValidationError

log = logging.getLogger(__name__)

EQUALITY = "="
GOAL_OPERATOR = "goal!"
CYCLE_KINDS = ("none", "visit", "unvisit", "mark", "unmark")
RESERVED_PREFIXES = ("visit_", "unvisit_", "mark_", "unmark_", "visited_")


def is_var(term: str) -> bool:
    return term.startswith("?")


def is_ground(atom) -> bool:
    return not any(is_var(t) for t in atom[1:])


def atom_vars(atom) -> list[str]:
    return [t for t in atom[1:] if is_var(t)]


def substitute(atom, binding: Mapping[str, str]):
    return (atom[0],) + tuple(binding.get(t, t) for t in atom[1:])


def format_atom(atom) -> str:
    return "(" + " ".join(atom) + ")"


def dedupe(items: Iterable) -> list:
    return list(dict.fromkeys(items))


@dataclass
class Operator:
    name: str
    parameters: tuple = ()
    pre_pos: list = field(default_factory=list)
    pre_neg: list = field(default_factory=list)
    eff_pos: list = field(default_factory=list)
    eff_neg: list = field(default_factory=list)
    cost: float = 1.0
    visible: bool = True
    cycle_kind: str = "none"

    def literals(self):
        return itertools.chain(self.pre_pos, self.pre_neg, self.eff_pos, self.eff_neg)


@dataclass
class Method:
    """One decomposition branch.

    ``parameters`` is the head of the decomposed task, positionally matched
    against the task terms; it may hold objects once Pullup substitutes
    single-valued variables.
    """

    task_name: str
    label: str
    parameters: tuple = ()
    free_variables: tuple = ()
    pre_pos: list = field(default_factory=list)
    pre_neg: list = field(default_factory=list)
    subtasks: list = field(default_factory=list)

    def variables(self) -> list[str]:
        return dedupe([p for p in self.parameters if is_var(p)] + list(self.free_variables))

    def refresh_free_variables(self) -> None:
        """Recompute free variables in first-appearance order (unused ones dropped)."""
        head = set(self.parameters)
        seen = []
        for atom in itertools.chain(self.pre_pos, self.pre_neg, self.subtasks):
            for t in atom_vars(atom):
                if t not in head and t not in seen:
                    seen.append(t)
        self.free_variables = tuple(seen)


@dataclass
class PlanningInstance:
    domain_name: str = "domain"
    problem_name: str = "problem"
    types: dict = field(default_factory=dict)  # type -> parent (None at the root)
    objects: list = field(default_factory=list)
    predicates: dict = field(default_factory=dict)  # name -> arity
    rigid: set = field(default_factory=set)
    operators: dict = field(default_factory=dict)
    methods: list = field(default_factory=list)
    tasks: dict = field(default_factory=dict)  # compound task name -> arity
    initial: list = field(default_factory=list)
    goal_pos: list = field(default_factory=list)
    goal_neg: list = field(default_factory=list)
    top_tasks: list = field(default_factory=list)
    renamed: dict = field(default_factory=dict)  # specialized predicate -> original
    unsolvable: bool = False

    def copy(self) -> "PlanningInstance":
        return copy.deepcopy(self)

    def methods_for(self, name: str) -> list[Method]:
        return [m for m in self.methods if m.task_name == name]

    def is_primitive(self, name: str) -> bool:
        return name in self.operators

    def compound_names(self) -> list[str]:
        names = list(self.tasks)
        names += [m.task_name for m in self.methods]
        for atom in itertools.chain(self.top_tasks, *(m.subtasks for m in self.methods)):
            if atom[0] not in self.operators:
                names.append(atom[0])
        return dedupe(names)

    def fluent_names(self) -> set[str]:
        return {a[0] for op in self.operators.values() for a in itertools.chain(op.eff_pos, op.eff_neg)}


# ---------------------------------------------------------------- rigidity


def _occurrences(instance: PlanningInstance):
    for op in instance.operators.values():
        for atom in op.literals():
            yield atom, f"operator {op.name}"
    for m in instance.methods:
        for atom in itertools.chain(m.pre_pos, m.pre_neg):
            yield atom, f"method {m.label}"
    for atom in itertools.chain(instance.initial, instance.goal_pos, instance.goal_neg):
        yield atom, "problem"


def classify_rigidity(instance: PlanningInstance) -> dict[str, str]:
    """Mark each predicate fluent (appears in some effect) or rigid; checks arities."""
    for atom, where in _occurrences(instance):
        name, arity = atom[0], len(atom) - 1
        if name == EQUALITY:
            if arity != 2:
                raise ValidationError(f"equality takes 2 terms, got {arity} in {where}")
            continue
        known = instance.predicates.setdefault(name, arity)
        if known != arity:
            raise ValidationError(
                f"predicate {name!r} used with arity {arity} in {where}, declared with {known}"
            )
    fluent = instance.fluent_names()
    instance.rigid = {name for name in instance.predicates if name not in fluent}
    return {name: ("rigid" if name in instance.rigid else "fluent") for name in instance.predicates}


# ---------------------------------------------------------------- states


class World:
    """Static data of one planning run: object order and rigid constant tables."""

    __slots__ = ("objects", "rank", "rigid_names", "rigid", "_sorted", "_index")

    def __init__(self, objects: Iterable[str], rigid_names: Iterable[str], rigid_facts: Iterable):
        self.objects = tuple(dedupe(objects))
        self.rank = {o: i for i, o in enumerate(self.objects)}
        self.rigid_names = frozenset(rigid_names)
        tables: dict[str, set] = {name: set() for name in self.rigid_names}
        for atom in rigid_facts:
            tables.setdefault(atom[0], set()).add(tuple(atom[1:]))
        self.rigid = {name: frozenset(rows) for name, rows in tables.items()}
        self._sorted = {name: self.sort_rows(rows) for name, rows in self.rigid.items()}
        self._index: dict = {}

    def sort_rows(self, rows) -> tuple:
        big = len(self.rank)
        return tuple(sorted(rows, key=lambda row: tuple((self.rank.get(o, big), o) for o in row)))

    def rows(self, name: str) -> tuple:
        return self._sorted.get(name, ())

    def index(self, name: str, pos: int, value: str) -> tuple:
        table = self._index.get((name, pos))
        if table is None:
            table = self._index[(name, pos)] = _build_index(self.rows(name), pos)
        return table.get(value, ())


def _build_index(rows, pos) -> dict:
    table: dict = {}
    for row in rows:
        if pos < len(row):
            table.setdefault(row[pos], []).append(row)
    return {k: tuple(v) for k, v in table.items()}


class State:
    """Immutable world state: fluent store plus a shared reference to the rigid tables."""

    __slots__ = ("world", "fluents", "_sorted", "_index", "_key")

    def __init__(self, world: World, fluents: Mapping[str, frozenset]):
        self.world = world
        self.fluents = {k: v for k, v in fluents.items() if v}
        self._sorted: dict = {}
        self._index: dict = {}
        self._key = None

    @classmethod
    def from_atoms(cls, atoms: Iterable, rigid_names: Iterable[str] = (), objects: Iterable[str] = ()):
        atoms = list(atoms)
        rigid_names = set(rigid_names)
        rigid = [a for a in atoms if a[0] in rigid_names]
        world = World(list(objects) + [t for a in atoms for t in a[1:]], rigid_names, rigid)
        fluents: dict[str, set] = {}
        for a in atoms:
            if a[0] not in rigid_names:
                fluents.setdefault(a[0], set()).add(tuple(a[1:]))
        return cls(world, {k: frozenset(v) for k, v in fluents.items()})

    def holds(self, atom) -> bool:
        name = atom[0]
        if name == EQUALITY:
            return atom[1] == atom[2]
        if name in self.world.rigid_names:
            return tuple(atom[1:]) in self.world.rigid.get(name, ())
        return tuple(atom[1:]) in self.fluents.get(name, ())

    def holds_row(self, name: str, row: tuple) -> bool:
        if name == EQUALITY:
            return row[0] == row[1]
        if name in self.world.rigid_names:
            return row in self.world.rigid.get(name, ())
        return row in self.fluents.get(name, ())

    def edit(self, deletes, adds) -> "State":
        """New state with (name, row) deletions applied before additions."""
        touched: dict[str, set] = {}
        rigid = self.world.rigid_names
        for name, row in itertools.chain(deletes, adds):
            if name not in touched:
                if name in rigid:
                    raise ValidationError(f"rigid predicate {name!r} in an effect")
                touched[name] = set(self.fluents.get(name, ()))
        if not touched:
            return self
        for name, row in deletes:
            touched[name].discard(row)
        for name, row in adds:
            touched[name].add(row)
        fluents = dict(self.fluents)
        fluents.update((k, frozenset(v)) for k, v in touched.items())
        return State(self.world, fluents)

    def index(self, name: str, pos: int, value: str) -> tuple:
        """Rows of ``name`` whose term at ``pos`` is ``value``, in object order."""
        if name in self.world.rigid_names:
            return self.world.index(name, pos, value)
        table = self._index.get((name, pos))
        if table is None:
            table = self._index[(name, pos)] = _build_index(self.rows(name), pos)
        return table.get(value, ())

    def rows(self, name: str) -> tuple:
        if name in self.world.rigid_names:
            return self.world.rows(name)
        rows = self._sorted.get(name)
        if rows is None:
            rows = self._sorted[name] = self.world.sort_rows(self.fluents.get(name, ()))
        return rows

    def fluent_atoms(self) -> frozenset:
        return frozenset((name,) + row for name, rows in self.fluents.items() for row in rows)

    def atoms(self) -> frozenset:
        rigid = ((name,) + row for name, rows in self.world.rigid.items() for row in rows)
        return self.fluent_atoms() | frozenset(rigid)

    def key(self) -> frozenset:
        if self._key is None:
            self._key = frozenset((k, v) for k, v in self.fluents.items())
        return self._key

    def __eq__(self, other):
        return isinstance(other, State) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return "State(" + " ".join(sorted(format_atom(a) for a in self.fluent_atoms())) + ")"


def _check_ground(atoms) -> None:
    for a in atoms:
        if not is_ground(a):
            raise InvariantViolation(f"lifted literal {format_atom(a)} in a ground-only check")


def applicable(pre_pos, pre_neg, state) -> bool:
    """pre_pos is contained in the state and pre_neg is disjoint from it."""
    _check_ground(pre_pos)
    _check_ground(pre_neg)
    if isinstance(state, State):
        holds = state.holds
    else:

        def holds(atom):
            return atom[1] == atom[2] if atom[0] == EQUALITY else tuple(atom) in state

    return all(holds(a) for a in pre_pos) and not any(holds(a) for a in pre_neg)


def apply(eff_pos, eff_neg, state):
    """Return ``(state - eff_neg) | eff_pos`` without touching ``state``."""
    _check_ground(eff_pos)
    _check_ground(eff_neg)
    if not isinstance(state, State):
        return (frozenset(state) - {tuple(a) for a in eff_neg}) | {tuple(a) for a in eff_pos}
    touched: dict[str, set] = {}
    for a in itertools.chain(eff_neg, eff_pos):
        if a[0] in state.world.rigid_names:
            raise ValidationError(f"rigid predicate {a[0]!r} in an effect")
        if a[0] not in touched:
            touched[a[0]] = set(state.fluents.get(a[0], ()))
    for a in eff_neg:
        touched[a[0]].discard(tuple(a[1:]))
    for a in eff_pos:
        touched[a[0]].add(tuple(a[1:]))
    if not touched:
        return state
    fluents = dict(state.fluents)
    fluents.update((k, frozenset(v)) for k, v in touched.items())
    return State(state.world, fluents)


# ---------------------------------------------------------------- unification


def _pattern(lit) -> tuple:
    """Precompiled literal: (name, args, variable flags)."""
    args = tuple(lit[1:])
    return (lit[0], args, tuple(a[:1] == "?" for a in args))


def _checks_pass(checks, binding, state) -> bool:
    for name, args, flags in checks:
        if not state.holds_row(name, tuple([binding[a] if f else a for a, f in zip(args, flags)])):
            return False
    return True


def _join(steps, i, binding, state) -> Iterator[dict]:
    """Enumerate step ``i`` of a join plan; each step is (pattern, checks that follow)."""
    if i == len(steps):
        yield binding
        return
    (name, args, flags), checks = steps[i]
    values = [binding.get(a) if f else a for a, f in zip(args, flags)]
    pos = next((k for k, v in enumerate(values) if v is not None), None)
    rows = state.rows(name) if pos is None else state.index(name, pos, values[pos])
    width = len(args)
    last = i + 1 == len(steps)
    for row in rows:
        if len(row) != width:
            continue
        new = dict(binding)
        for k in range(width):
            v = values[k]
            if v is None:
                seen = new.get(args[k])
                if seen is None:
                    new[args[k]] = row[k]
                elif seen != row[k]:
                    break
            elif v != row[k]:
                break
        else:
            if checks and not _checks_pass(checks, new, state):
                continue
            if last:
                yield new
            else:
                yield from _join(steps, i + 1, new, state)


def _resolve_equalities(eqs, binding):
    """Bind through equalities with one bound side; None on contradiction."""
    binding = dict(binding)
    changed = True
    while changed:
        changed = False
        for _, a, b in eqs:
            va = binding.get(a, a) if is_var(a) else a
            vb = binding.get(b, b) if is_var(b) else b
            if is_var(va) and not is_var(vb):
                binding[a] = vb
                changed = True
            elif is_var(vb) and not is_var(va):
                binding[b] = va
                changed = True
            elif not is_var(va) and va != vb:
                return None
    return binding


@dataclass(frozen=True)
class Precondition:
    """Precondition split into rigid, fluent, equality and negative parts."""

    rigid: tuple = ()
    fluent: tuple = ()
    eqs: tuple = ()
    neg: tuple = ()

    @classmethod
    def split(cls, pos, neg, rigid_names) -> "Precondition":
        pos = [tuple(a) for a in pos]
        return cls(
            rigid=tuple(a for a in pos if a[0] != EQUALITY and a[0] in rigid_names),
            fluent=tuple(a for a in pos if a[0] != EQUALITY and a[0] not in rigid_names),
            eqs=tuple(a for a in pos if a[0] == EQUALITY),
            neg=tuple(tuple(a) for a in neg),
        )

    def __post_init__(self):
        object.__setattr__(self, "_plans", {})
        object.__setattr__(self, "_neg", tuple(_pattern(a) for a in self.neg if a[0] != EQUALITY))
        object.__setattr__(self, "_neg_eq", tuple(a for a in self.neg if a[0] == EQUALITY))

    def join_order(self, bound) -> tuple:
        """Greedy literal order for a given set of already bound variables.

        Fully bound literals become membership checks and go first, then
        literals with a bound position (an index lookup), then the rest;
        rigid literals win ties, then the written order.
        """
        key = frozenset(bound)
        plan = self._plans.get(key)
        if plan is not None:
            return plan
        bound = set(key)
        remaining = [(i, a, i >= len(self.rigid)) for i, a in enumerate(self.rigid + self.fluent)]
        initial: list = []
        steps: list = []
        while remaining:
            def score(item):
                i, a, fluent = item
                free_vars = {t for t in a[1:] if is_var(t) and t not in bound}
                anchored = any(not is_var(t) or t in bound for t in a[1:])
                return (bool(free_vars), not anchored, fluent, len(free_vars), i)

            best = min(remaining, key=score)
            remaining.remove(best)
            lit = best[1]
            if all(not is_var(t) or t in bound for t in lit[1:]):
                (steps[-1][1] if steps else initial).append(_pattern(lit))
            else:
                steps.append((_pattern(lit), []))
                bound.update(t for t in lit[1:] if is_var(t))
        plan = self._plans[key] = (tuple(initial), tuple((p, tuple(c)) for p, c in steps))
        return plan

    def bindings(self, binding: Mapping[str, str], state: State, free=()) -> Iterator[dict]:
        initial, steps = self.join_order(binding.keys())
        if initial and not _checks_pass(initial, binding, state):
            return
        for b in _join(steps, 0, dict(binding), state):
            if self.eqs:
                b = _resolve_equalities(self.eqs, b)
                if b is None:
                    continue
            unbound = [v for v in free if v not in b]
            if unbound:
                choices = itertools.product(state.world.objects, repeat=len(unbound))
                candidates = ({**b, **dict(zip(unbound, combo))} for combo in choices)
            else:
                candidates = (b,)
            for full in candidates:
                if self.eqs and _resolve_equalities(self.eqs, full) is None:
                    continue
                if self._negatives_fail(full, state):
                    yield full

    def _negatives_fail(self, binding, state) -> bool:
        """True when no negative literal holds (negatives are checked last)."""
        for name, args, flags in self._neg:
            row = tuple(binding.get(a, a) if f else a for a, f in zip(args, flags))
            if any(t[:1] == "?" for t in row):
                raise ValidationError(f"unbound variable in negative literal {format_atom((name,) + args)}")
            if state.holds_row(name, row):
                return False
        for lit in self._neg_eq:
            if binding.get(lit[1], lit[1]) == binding.get(lit[2], lit[2]):
                return False
        return True


def unify(pre_pos, pre_neg, binding, state: State, free=()) -> Iterator[dict]:
    """Stream every completion of ``binding`` under which the precondition holds.

    Candidates come from the predicate tables (rigid literals first, then
    fluent ones); variables listed in ``free`` that no positive literal binds
    are enumerated over all objects in declaration order.
    """
    pre = Precondition.split(pre_pos, pre_neg, state.world.rigid_names)
    yield from pre.bindings(binding, state, free)


# ---------------------------------------------------------------- goal compilation


def compile_goal(instance: PlanningInstance) -> PlanningInstance:
    """Fold a non-empty goal into an invisible zero-cost operator appended to the task list."""
    if not instance.goal_pos and not instance.goal_neg:
        return instance
    for atom in itertools.chain(instance.goal_pos, instance.goal_neg):
        if atom[0] != EQUALITY and atom[0] not in instance.predicates:
            raise ValidationError(f"goal mentions unknown predicate {atom[0]!r}")
    if GOAL_OPERATOR in instance.operators:
        return instance
    out = instance.copy()
    out.operators[GOAL_OPERATOR] = Operator(
        GOAL_OPERATOR,
        pre_pos=[tuple(a) for a in instance.goal_pos],
        pre_neg=[tuple(a) for a in instance.goal_neg],
        cost=0.0,
        visible=False,
    )
    out.top_tasks = list(out.top_tasks) + [(GOAL_OPERATOR,)]
    return out


# ---------------------------------------------------------------- compilation


@dataclass(frozen=True)
class CompiledOperator:
    """Operator with precompiled literal patterns.

    Operator parameters are always bound by the task terms, so the
    precondition reduces to membership checks and the effects to row edits.
    """

    operator: Operator
    pre: Precondition

    def __post_init__(self):
        op = self.operator
        object.__setattr__(self, "checks_pos", tuple(_pattern(a) for a in op.pre_pos))
        object.__setattr__(self, "checks_neg", tuple(_pattern(a) for a in op.pre_neg))
        object.__setattr__(self, "adds", tuple(_pattern(a) for a in op.eff_pos))
        object.__setattr__(self, "dels", tuple(_pattern(a) for a in op.eff_neg))
        params = set(op.parameters)
        object.__setattr__(
            self, "fully_bound", all(t in params for a in op.literals() for t in a[1:] if is_var(t))
        )

    def ground_applicable(self, binding, state) -> bool:
        for name, args, flags in self.checks_pos:
            if not state.holds_row(name, tuple([binding[a] if f else a for a, f in zip(args, flags)])):
                return False
        for name, args, flags in self.checks_neg:
            if state.holds_row(name, tuple([binding[a] if f else a for a, f in zip(args, flags)])):
                return False
        return True

    def ground_apply(self, binding, state):
        return state.edit(
            [(n, tuple([binding[a] if f else a for a, f in zip(args, flags)])) for n, args, flags in self.dels],
            [(n, tuple([binding[a] if f else a for a, f in zip(args, flags)])) for n, args, flags in self.adds],
        )


@dataclass(frozen=True)
class CompiledMethod:
    method: Method
    pre: Precondition
    variables: tuple


@dataclass(frozen=True)
class CompiledInstance:
    instance: PlanningInstance
    world: World
    initial: State
    operators: Mapping[str, CompiledOperator]
    methods: Mapping[str, tuple]
    top_tasks: tuple

    def is_primitive(self, name: str) -> bool:
        return name in self.operators


def _check_element_vars(atoms, allowed, where):
    for atom in atoms:
        for v in atom_vars(atom):
            if v not in allowed:
                raise ValidationError(f"variable {v} in {where} is not a parameter")


def validate_structure(instance: PlanningInstance) -> None:
    """Arity and name-resolution checks performed before search."""
    names = set(instance.operators) & set(instance.compound_names())
    if names:
        raise ValidationError(f"names used both as operator and compound task: {sorted(names)}")
    arity = {name: len(op.parameters) for name, op in instance.operators.items()}
    for m in instance.methods:
        known = instance.tasks.get(m.task_name, len(m.parameters))
        if known != len(m.parameters):
            raise ValidationError(
                f"method {m.label} head has {len(m.parameters)} terms, task {m.task_name} takes {known}"
            )
        arity.setdefault(m.task_name, known)
    arity.update((k, v) for k, v in instance.tasks.items() if k not in arity)
    for m in instance.methods:
        allowed = set(m.variables())
        _check_element_vars(itertools.chain(m.pre_pos, m.pre_neg, m.subtasks), allowed, f"method {m.label}")
    for op in instance.operators.values():
        _check_element_vars(op.literals(), set(op.parameters), f"operator {op.name}")
    sites = [(t, "top-level tasks") for t in instance.top_tasks]
    sites += [(t, f"method {m.label}") for m in instance.methods for t in m.subtasks]
    for task, where in sites:
        if task[0] not in arity:
            raise ValidationError(f"unknown task {task[0]!r} in {where}")
        if arity[task[0]] != len(task) - 1:
            raise ValidationError(
                f"task {task[0]} called with {len(task) - 1} terms in {where}, expects {arity[task[0]]}"
            )
    for name in instance.compound_names():
        if not instance.methods_for(name):
            warnings.warn(f"compound task {name!r} has no methods", stacklevel=2)


def build_indexes(instance: PlanningInstance) -> CompiledInstance:
    """Split rigid facts into constant tables and pre-partition every precondition."""
    classify_rigidity(instance)
    validate_structure(instance)
    rigid = instance.rigid
    world = World(instance.objects, rigid, [a for a in instance.initial if a[0] in rigid])
    fluents: dict[str, set] = {}
    for a in instance.initial:
        if a[0] not in rigid:
            fluents.setdefault(a[0], set()).add(tuple(a[1:]))
    initial = State(world, {k: frozenset(v) for k, v in fluents.items()})
    operators = {
        name: CompiledOperator(op, Precondition.split(op.pre_pos, op.pre_neg, rigid))
        for name, op in instance.operators.items()
    }
    grouped: dict[str, list] = {}
    for m in instance.methods:
        grouped.setdefault(m.task_name, []).append(
            CompiledMethod(m, Precondition.split(m.pre_pos, m.pre_neg, rigid), tuple(m.variables()))
        )
    return CompiledInstance(
        instance=instance,
        world=world,
        initial=initial,
        operators=operators,
        methods={k: tuple(v) for k, v in grouped.items()},
        top_tasks=tuple(tuple(t) for t in instance.top_tasks),
    )


def bind_head(parameters, terms):
    """Positional match of a method head (or operator signature) against ground task terms."""
    binding: dict[str, str] = {}
    for p, t in zip(parameters, terms):
        if is_var(p):
            if binding.setdefault(p, t) != t:
                return None
        elif p != t:
            return None
    return binding


def decomposition(task, methods) -> list:
    """Methods whose task name matches, in declaration order, with the head bound.

    ``methods`` is any iterable of Method; heads that cannot match the
    (ground) task terms are skipped.
    """
    out = []
    for m in methods:
        if m.task_name != task[0]:
            continue
        if len(m.parameters) != len(task) - 1:
            raise ValidationError(f"method {m.label} head arity differs from {format_atom(task)}")
        binding = bind_head(m.parameters, task[1:])
        if binding is not None:
            out.append((m, binding))
    return out
