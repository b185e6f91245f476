"""Move preconditions up the hierarchy and drop branches that can never apply.

The pass runs in three steps.  First, loose branches are removed: rigid
preconditions are checked against the initial state, variables with a
single possible value are replaced by that object, and whatever can no
longer be reached from the top-level tasks is dropped.  Second, a fixpoint
hoists preconditions into parent branches, guarded by effect marks so that
a literal is never hoisted past a subtask that could change it.  Third, the
removal step runs again on the strengthened branches.
"""
from __future__ import annotations

import itertools
from collections import Counter

from ..ir import (
    EQUALITY,
    GOAL_OPERATOR,
    RESERVED_PREFIXES,
    classify_rigidity,
    dedupe,
    is_var,
    substitute,
)
from . import PassReport

JOIN_CAP = 100_000


class ReachCounter(Counter):
    """Number of sites (top-level tasks plus subtasks of live branches) naming each task."""

    @classmethod
    def of(cls, instance):
        counter = cls()
        for t in instance.top_tasks:
            counter[t[0]] += 1
        for m in instance.methods:
            for t in m.subtasks:
                counter[t[0]] += 1
        return counter


def _rigid_tables(instance):
    tables: dict[str, set] = {name: set() for name in instance.rigid}
    for atom in instance.initial:
        if atom[0] in instance.rigid:
            tables[atom[0]].add(tuple(atom[1:]))
    return tables


def _rigid_bindings(pos, neg, tables, cap=JOIN_CAP):
    """All bindings of the rigid literals against the initial state.

    Returns a list of dicts, or None when the join grows past ``cap`` (the
    caller then treats the element as unanalysed).
    """
    rigid_pos = [l for l in pos if l[0] in tables]
    eqs = [l for l in pos if l[0] == EQUALITY]
    rigid_neg = [l for l in neg if l[0] in tables]
    eq_neg = [l for l in neg if l[0] == EQUALITY]
    partial = [{}]
    for lit in rigid_pos:
        nxt = []
        for b in partial:
            for row in tables[lit[0]]:
                ext = dict(b)
                if all(
                    (ext.setdefault(t, v) == v) if is_var(t) else (t == v)
                    for t, v in zip(lit[1:], row)
                ):
                    nxt.append(ext)
            if len(nxt) > cap:
                return None
        partial = nxt
        if not partial:
            return []

    def ok(b):
        for lit in eqs:
            x, y = (b.get(t, t) for t in lit[1:])
            if not is_var(x) and not is_var(y) and x != y:
                return False
        for lit in eq_neg:
            x, y = (b.get(t, t) for t in lit[1:])
            if x == y:
                return False
        for lit in rigid_neg:
            g = substitute(lit, b)
            if all(not is_var(t) for t in g[1:]) and tuple(g[1:]) in tables[lit[0]]:
                return False
        return True

    return [b for b in partial if ok(b)]


def _ground_true(lit, tables) -> bool | None:
    """Truth of a ground rigid literal in the initial state; None if not applicable."""
    if any(is_var(t) for t in lit[1:]):
        return None
    if lit[0] == EQUALITY:
        return lit[1] == lit[2]
    if lit[0] in tables:
        return tuple(lit[1:]) in tables[lit[0]]
    return None


def _simplify_method(m, tables, report) -> bool:
    """Substitute single-valued variables and drop settled rigid literals.  False if impossible."""
    bindings = _rigid_bindings(m.pre_pos, m.pre_neg, tables)
    if bindings is None:
        return True
    if not bindings:
        return False
    bound = dedupe(v for lit in m.pre_pos if lit[0] in tables for v in lit[1:] if is_var(v))
    subst = {}
    for v in bound:
        values = {b[v] for b in bindings}
        if len(values) == 1:
            subst[v] = values.pop()
    if subst:
        report.bump("variables_substituted", len(subst))
        m.parameters = tuple(subst.get(p, p) for p in m.parameters)
        m.pre_pos = [substitute(l, subst) for l in m.pre_pos]
        m.pre_neg = [substitute(l, subst) for l in m.pre_neg]
        m.subtasks = [substitute(t, subst) for t in m.subtasks]
    keep_pos, keep_neg = [], []
    for lit in m.pre_pos:
        truth = _ground_true(lit, tables)
        if truth is False:
            return False
        if truth is None:
            keep_pos.append(lit)
        else:
            report.bump("literals_deleted")
    for lit in m.pre_neg:
        truth = _ground_true(lit, tables)
        if truth is True:
            return False
        if truth is None:
            keep_neg.append(lit)
        else:
            report.bump("literals_deleted")
    m.pre_pos, m.pre_neg = keep_pos, keep_neg
    m.refresh_free_variables()
    return True


def _prune(inst, report) -> None:
    """Cascade impossibility and drop everything unreachable from the top-level tasks."""
    while True:
        alive = set(inst.operators) | {m.task_name for m in inst.methods}
        before = len(inst.methods)
        inst.methods = [m for m in inst.methods if all(t[0] in alive for t in m.subtasks)]
        removed = before - len(inst.methods)
        if not removed:
            break
        report.bump("methods_removed", removed)
    alive = set(inst.operators) | {m.task_name for m in inst.methods}
    if any(t[0] not in alive for t in inst.top_tasks):
        inst.unsolvable = True
        report.notes.append("a top-level task can never be decomposed")
    reach, frontier = set(), [t[0] for t in inst.top_tasks]
    while frontier:
        name = frontier.pop()
        if name in reach:
            continue
        reach.add(name)
        for m in inst.methods:
            if m.task_name == name:
                frontier += [t[0] for t in m.subtasks]
    before = len(inst.methods)
    inst.methods = [m for m in inst.methods if m.task_name in reach]
    report.bump("methods_removed", before - len(inst.methods))
    for name in [n for n in inst.operators if n not in reach]:
        del inst.operators[name]
        report.bump("operators_removed")
    inst.tasks = {n: a for n, a in inst.tasks.items() if n in reach}


def remove_loose_branches(instance, report=None):
    """Returns (instance, ReachCounter); the input is not modified."""
    inst = instance.copy()
    classify_rigidity(inst)
    report = report or PassReport("pullup")
    tables = _rigid_tables(inst)
    live = []
    for m in inst.methods:
        if _simplify_method(m, tables, report):
            live.append(m)
        else:
            report.bump("methods_removed")
    inst.methods = live
    for name, op in list(inst.operators.items()):
        if _rigid_bindings(op.pre_pos, op.pre_neg, tables) == []:
            del inst.operators[name]
            report.bump("operators_removed")
    _prune(inst, report)
    return inst, ReachCounter.of(inst)


def _equality_closure(lits, eqs):
    """Add copies of ``lits`` with terms swapped along the given equalities."""
    out = list(lits)
    for eq in eqs:
        a, b = eq[1], eq[2]
        for lit in list(out):
            for x, y in ((a, b), (b, a)):
                if x in lit[1:]:
                    dup = (lit[0],) + tuple(y if t == x else t for t in lit[1:])
                    if dup not in out:
                        out.append(dup)
    return out


def _hoistable(lit) -> bool:
    return lit[0] != EQUALITY and not lit[0].startswith(RESERVED_PREFIXES)


def _rename(lit, mapping):
    """Map a child literal into the parent's terms; None if a term has no image."""
    terms = []
    for t in lit[1:]:
        if is_var(t):
            if t not in mapping:
                return None
            terms.append(mapping[t])
        else:
            terms.append(t)
    return (lit[0],) + tuple(terms)


def _head_mapping(params, args):
    mapping = {}
    for p, a in zip(params, args):
        if is_var(p) and p not in mapping:
            mapping[p] = a
    return mapping


class _Effects:
    """Effect predicate names reachable from a task through any decomposition."""

    def __init__(self, inst):
        self.inst = inst
        self.memo = {}

    def of(self, name):
        if name in self.memo:
            return self.memo[name]
        self.memo[name] = set()
        op = self.inst.operators.get(name)
        if op is not None:
            result = {a[0] for a in itertools.chain(op.eff_pos, op.eff_neg)}
        else:
            result = set()
            for m in self.inst.methods_for(name):
                for t in m.subtasks:
                    result |= self.of(t[0])
        self.memo[name] = result
        return result


def _compatible(child, sub) -> bool:
    """False when a constant in the child's head differs from a constant argument of the site."""
    return all(is_var(p) or is_var(a) or p == a for p, a in zip(child.parameters, sub[1:]))


def _shared(children, sub, sign):
    """Literals (renamed into the parent) implied by every child branch of ``sub``."""
    sets = []
    for child in children:
        mapping = _head_mapping(child.parameters, sub[1:])
        own = child.pre_pos if sign else child.pre_neg
        eqs = [l for l in child.pre_pos if l[0] == EQUALITY]
        renamed = []
        for lit in _equality_closure(own, eqs):
            if not _hoistable(lit):
                continue
            if any(is_var(t) and t not in child.parameters for t in lit[1:]):
                continue
            r = _rename(lit, mapping)
            if r is not None:
                renamed.append((r, lit))
        sets.append(renamed)
    if not sets:
        return []
    common = [r for r, _ in sets[0] if all(any(r == x for x, _ in s) for s in sets[1:])]
    return dedupe(common)


def pullup_fixpoint(instance, counter, report=None):
    """Hoist preconditions until nothing changes.  Returns (instance, report)."""
    inst = instance.copy()
    report = report or PassReport("pullup")
    iterations = 0
    tables = _rigid_tables(inst)

    def settled(lit, sign):
        # ground rigid literal already decided by I: nothing to hoist
        return _ground_true(lit, tables) is sign

    changed = True
    while changed:
        changed = False
        iterations += 1
        effects = _Effects(inst)
        doomed = []
        for m in inst.methods:
            marked: set = set()
            for sub in m.subtasks:
                name = sub[0]
                op = inst.operators.get(name)
                if op is not None:
                    mapping = _head_mapping(op.parameters, sub[1:])
                    eqs = [l for l in op.pre_pos if l[0] == EQUALITY]
                    for sign in (True, False):
                        source = op.pre_pos if sign else op.pre_neg
                        closure = _equality_closure(source, eqs) if sign else source
                        target = m.pre_pos if sign else m.pre_neg
                        copied = []
                        for lit in closure:
                            if not _hoistable(lit) or lit[0] in marked:
                                continue
                            r = _rename(lit, mapping)
                            if r is None:
                                continue
                            copied.append(lit)
                            if r not in target and not settled(r, sign):
                                target.append(r)
                                report.bump("literals_hoisted")
                                if not sign:
                                    report.bump("negatives_hoisted")
                                changed = True
                        if counter[name] == 1 and op.name != GOAL_OPERATOR:
                            kept = [l for l in source if l not in copied]
                            if len(kept) != len(source):
                                report.bump("literals_deleted", len(source) - len(kept))
                                if sign:
                                    op.pre_pos = kept
                                else:
                                    op.pre_neg = kept
                    marked |= {a[0] for a in itertools.chain(op.eff_pos, op.eff_neg)}
                    continue
                children = [c for c in inst.methods_for(name) if _compatible(c, sub)]
                if not children:
                    doomed.append(m)
                    break
                for sign in (True, False):
                    target = m.pre_pos if sign else m.pre_neg
                    hoisted = [l for l in _shared(children, sub, sign) if l[0] not in marked]
                    for lit in hoisted:
                        if lit not in target and not settled(lit, sign):
                            target.append(lit)
                            report.bump("literals_hoisted")
                            if not sign:
                                report.bump("negatives_hoisted")
                            changed = True
                    if counter[name] == 1 and hoisted and m.task_name != name:
                        for child in children:
                            mapping = _head_mapping(child.parameters, sub[1:])
                            own = child.pre_pos if sign else child.pre_neg
                            kept = [l for l in own if _rename(l, mapping) not in hoisted
                                    or any(is_var(t) and t not in child.parameters for t in l[1:])]
                            if len(kept) != len(own):
                                report.bump("literals_deleted", len(own) - len(kept))
                                changed = True
                                if sign:
                                    child.pre_pos = kept
                                else:
                                    child.pre_neg = kept
                marked |= effects.of(name)
            m.refresh_free_variables()
        if doomed:
            inst.methods = [m for m in inst.methods if all(m is not d for d in doomed)]
            report.bump("methods_removed", len(doomed))
            _prune(inst, report)
            changed = True
    report.counters["iterations"] = report.counters.get("iterations", 0) + iterations
    return inst, report


def remove_dead_branches(instance, report=None):
    """Second removal pass over the strengthened branches.  Returns (instance, report)."""
    report = report or PassReport("pullup")
    inst, _ = remove_loose_branches(instance, report)
    return inst, report


def pullup(instance):
    report = PassReport("pullup", {"methods_removed": 0, "operators_removed": 0,
                                   "variables_substituted": 0, "literals_hoisted": 0,
                                   "negatives_hoisted": 0, "literals_deleted": 0})
    inst, counter = remove_loose_branches(instance, report)
    inst, report = pullup_fixpoint(inst, counter, report)
    inst, report = remove_dead_branches(inst, report)
    return inst, report
