"""Split predicates by the types of their arguments.

A predicate used with several mutually exclusive argument typings, for
example ``at`` over (vehicle, location) and (package, location), becomes
one predicate per typing.  Each new predicate has a smaller extension, so
the unifier scans fewer rows.

Types come from unary rigid predicates in the preconditions of the same
operator or method.  A variable that two such predicates claim is left
untyped.  Only leaf types qualify, and only when the objects of the
varying types are disjoint in the initial state.
"""
from __future__ import annotations

import itertools

from ..ir import (
    EQUALITY,
    GOAL_OPERATOR,
    RESERVED_PREFIXES,
    classify_rigidity,
    dedupe,
    is_var,
)
from . import PassReport


def _reserved(name: str) -> bool:
    return name.startswith(RESERVED_PREFIXES)


def infer_types(pre_pos, rigid) -> dict:
    """Variable -> type predicate, from the unary rigid positive literals given."""
    table, conflicts = {}, set()
    for lit in pre_pos:
        if len(lit) != 2 or lit[0] not in rigid or lit[0] == EQUALITY or not is_var(lit[1]):
            continue
        var = lit[1]
        if var in conflicts:
            continue
        if var in table and table[var] != lit[0]:
            del table[var]
            conflicts.add(var)
        else:
            table[var] = lit[0]
    return table


class _Context:
    def __init__(self, instance):
        self.inst = instance
        self.rigid = instance.rigid
        unary = {n for n, a in instance.predicates.items() if a == 1 and n in self.rigid}
        self.members: dict[str, set] = {}
        self.object_types: dict[str, set] = {}
        for atom in instance.initial:
            if atom[0] in unary:
                self.members.setdefault(atom[0], set()).add(atom[1])
                self.object_types.setdefault(atom[1], set()).add(atom[0])
        self.supertypes = {p for p in instance.types.values() if p}

    def is_leaf(self, t) -> bool:
        return t is not None and t not in self.supertypes

    def constant_type(self, obj):
        leaves = [t for t in self.object_types.get(obj, ()) if self.is_leaf(t)]
        return leaves[0] if len(leaves) == 1 else None

    def typing(self, lit, table) -> tuple:
        return tuple(table.get(t) if is_var(t) else self.constant_type(t) for t in lit[1:])

    def operators(self):
        for op in self.inst.operators.values():
            if op.name != GOAL_OPERATOR and not _reserved(op.name):
                yield op


def _candidate(ctx, name) -> bool:
    return name != EQUALITY and not _reserved(name) and ctx.inst.predicates.get(name, 0) > 0


def collect_specializations(instance) -> dict:
    """Return the transformation table {(predicate, typing): new name}.

    Typings are collected from operators only; method occurrences are
    checked afterwards so that they never block or widen a split.
    """
    ctx = _Context(instance)
    usages: dict[str, list] = {}
    for op in ctx.operators():
        table = infer_types(op.pre_pos, ctx.rigid)
        for lit in op.literals():
            if _candidate(ctx, lit[0]):
                usages.setdefault(lit[0], []).append(ctx.typing(lit, table))
    taken = set(instance.predicates) | set(instance.operators) | set(instance.compound_names())
    transf = {}
    for pred, typings in usages.items():
        typings = dedupe(typings)
        if len(typings) < 2:
            continue
        if not all(ctx.is_leaf(t) for typ in typings for t in typ):
            continue
        varying = [i for i in range(len(typings[0])) if len({typ[i] for typ in typings}) > 1]
        exclusive = all(
            not (ctx.members.get(a, set()) & ctx.members.get(b, set()))
            for i in varying
            for a, b in itertools.combinations(dedupe(typ[i] for typ in typings), 2)
        )
        if not exclusive:
            continue
        for typ in typings:
            if not all(t in ctx.members for t in typ):
                continue  # a type without objects: occurrences can never hold
            base = new = "_".join([pred] + [typ[i] for i in varying])
            n = 1
            while new in taken:
                new, n = f"{base}~{n}", n + 1
            taken.add(new)
            transf[(pred, typ)] = new
    return transf


def _ground_key(ctx, atom, by_pred):
    """Unique key of the transformation table matching a ground atom, or None."""
    matches = [
        typ for typ in by_pred.get(atom[0], ())
        if all(obj in ctx.members.get(t, ()) for t, obj in zip(typ, atom[1:]))
    ]
    return (atom[0], matches[0]) if len(matches) == 1 else None


def _methods_safe(ctx, transf) -> set:
    """Predicates whose every method occurrence has a typing covered by the table."""
    split = {p for p, _ in transf}
    unsafe = set()
    for m in ctx.inst.methods:
        table = infer_types(m.pre_pos, ctx.rigid)
        for lit in itertools.chain(m.pre_pos, m.pre_neg):
            if lit[0] not in split:
                continue
            typ = ctx.typing(lit, table)
            if any(t is not None and t not in ctx.members for t in typ):
                continue  # a type without objects: the literal can never hold
            if (lit[0], typ) not in transf:
                unsafe.add(lit[0])
    return split - unsafe


def apply_specializations(instance, transf, report=None):
    """Rewrite every occurrence, lifted and ground, through the table.  Pure."""
    out = instance.copy()
    classify_rigidity(out)
    report = report or PassReport("typredicate")
    ctx = _Context(out)
    safe = _methods_safe(ctx, transf)
    dropped = {p for p, _ in transf} - safe
    for p in sorted(dropped):
        report.notes.append(f"{p} left whole: a method uses it with an uncovered typing")
    transf = {k: v for k, v in transf.items() if k[0] in safe}
    by_pred: dict[str, list] = {}
    for pred, typ in transf:
        by_pred.setdefault(pred, []).append(typ)

    def lifted(lits, table):
        result = []
        for lit in lits:
            new = transf.get((lit[0], ctx.typing(lit, table))) if lit[0] in by_pred else None
            if new:
                report.bump("occurrences_rewritten")
                lit = (new,) + tuple(lit[1:])
            result.append(lit)
        return result

    def ground(lits):
        result = []
        for lit in lits:
            key = _ground_key(ctx, lit, by_pred) if lit[0] in by_pred else None
            if key:
                report.bump("ground_rewritten")
                lit = (transf[key],) + tuple(lit[1:])
            result.append(lit)
        return result

    for op in out.operators.values():
        if op.name == GOAL_OPERATOR:
            op.pre_pos, op.pre_neg = ground(op.pre_pos), ground(op.pre_neg)
            continue
        if _reserved(op.name):
            continue
        table = infer_types(op.pre_pos, ctx.rigid)
        op.pre_pos, op.pre_neg = lifted(op.pre_pos, table), lifted(op.pre_neg, table)
        op.eff_pos, op.eff_neg = lifted(op.eff_pos, table), lifted(op.eff_neg, table)
    for m in out.methods:
        table = infer_types(m.pre_pos, ctx.rigid)
        m.pre_pos, m.pre_neg = lifted(m.pre_pos, table), lifted(m.pre_neg, table)
    out.initial = ground(out.initial)
    out.goal_pos, out.goal_neg = ground(out.goal_pos), ground(out.goal_neg)

    used = {a[0] for op in out.operators.values() for a in op.literals()}
    used |= {a[0] for m in out.methods for a in itertools.chain(m.pre_pos, m.pre_neg)}
    used |= {a[0] for a in itertools.chain(out.initial, out.goal_pos, out.goal_neg)}
    for (pred, _), new in transf.items():
        out.predicates[new] = out.predicates[pred]
        out.renamed[new] = instance.renamed.get(pred, pred)
    for pred in by_pred:
        report.bump("predicates_split")
        if pred not in used:
            out.predicates.pop(pred, None)
    report.bump("specializations", len(transf))
    classify_rigidity(out)
    return out, report


def typredicate(instance):
    """Run the whole pass: collect the table, then rewrite.  Returns (instance, report)."""
    work = instance.copy()
    classify_rigidity(work)
    report = PassReport("typredicate", {"predicates_split": 0, "specializations": 0,
                                        "occurrences_rewritten": 0, "ground_rewritten": 0})
    transf = collect_specializations(work)
    if not transf:
        return work, report
    return apply_specializations(work, transf, report)
