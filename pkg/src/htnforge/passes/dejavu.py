"""Guard recursive decompositions with visited markers.

A knot is a subtask that names a task already open on the current path of
the hierarchy.  Each useful knot gets an invisible ``visit`` action before
it and an ``unvisit`` action after it, and its branch gains a negative
precondition on the marker.  The planner then refuses to re-enter the same
recursion with the same terms, and caches the knots that failed.
"""
from __future__ import annotations

from dataclasses import dataclass

from ..ir import (
    Operator,
    RESERVED_PREFIXES,
    classify_rigidity,
    dedupe,
)
from . import PassReport


@dataclass(frozen=True)
class Knot:
    task: tuple
    owner: str
    branch: int  # index into instance.methods
    index: int
    prior_terms: tuple


def detect_knots(instance) -> list[Knot]:
    """Depth-first walk from the top-level tasks; the visited set is copied per path."""
    knots: dict = {}
    methods = instance.methods
    by_task: dict[str, list[int]] = {}
    for i, m in enumerate(methods):
        by_task.setdefault(m.task_name, []).append(i)
    seen_calls = set()

    def visit(name, visited):
        if name not in by_task or (name, visited) in seen_calls:
            return
        seen_calls.add((name, visited))
        visited = visited | {name}
        for i in by_task[name]:
            d = methods[i]
            for idx, sub in enumerate(d.subtasks):
                if sub[0].startswith(RESERVED_PREFIXES):
                    continue
                if sub[0] in visited:
                    if (i, idx) not in knots:
                        prior = tuple(dedupe(t for s in d.subtasks[:idx] for t in s[1:]))
                        knots[(i, idx)] = Knot(tuple(sub), d.task_name, i, idx, prior)
                else:
                    visit(sub[0], visited)

    for t in dedupe(t[0] for t in instance.top_tasks):
        visit(t, frozenset())
    return list(knots.values())


def is_useful(knot: Knot, instance) -> bool:
    d = instance.methods[knot.branch]
    task_terms = tuple(knot.task[1:])
    return (
        (knot.owner == knot.task[0] and len(d.subtasks) > 1)
        or not d.free_variables
        or not task_terms
        or task_terms != knot.prior_terms
    )


def _operator_names(instance, owner, arity, registry):
    key = (owner, arity)
    if key in registry:
        return registry[key]
    suffix = "" if not any(o == owner for o, _ in registry) else f"_{arity}"
    names = {kind: f"{kind}_{owner}{suffix}" for kind in ("visit", "unvisit", "mark", "unmark")}
    names["visited"] = f"visited_{owner}{suffix}"
    registry[key] = names
    return names


def _ensure_operator(instance, name, kind, marker, arity, report):
    if name in instance.operators:
        return
    params = tuple(f"?t{i}" for i in range(arity))
    atom = (marker,) + params
    add, delete = ([atom], []) if kind in ("visit", "mark") else ([], [atom])
    instance.operators[name] = Operator(
        name, params, eff_pos=add, eff_neg=delete, cost=0.0, visible=False, cycle_kind=kind
    )
    instance.predicates.setdefault(marker, arity)
    report.bump("operators_added")


def instrument(instance, knots, report=None):
    """Insert marker actions around the useful knots.  Returns (instance, report)."""
    out = instance.copy()
    report = report or PassReport("dejavu")
    registry: dict = {}
    # later indices first so that earlier positions in the same branch stay valid
    for knot in sorted(knots, key=lambda k: (k.branch, -k.index)):
        if not is_useful(knot, out):
            report.bump("knots_skipped")
            continue
        d = out.methods[knot.branch]
        terms = knot.prior_terms
        names = _operator_names(out, knot.owner, len(terms), registry)
        marker = (names["visited"],) + terms
        if marker in d.pre_neg:
            continue
        for kind in ("visit", "unvisit"):
            _ensure_operator(out, names[kind], kind, names["visited"], len(terms), report)
        d.pre_neg.append(marker)
        d.subtasks.insert(knot.index, (names["visit"],) + terms)
        d.subtasks.insert(knot.index + 2, (names["unvisit"],) + terms)
        report.bump("knots_instrumented")
        for earlier in out.methods[: knot.branch]:
            if earlier.task_name != d.task_name:
                continue
            for pos, sub in enumerate(earlier.subtasks):
                for kind, repl in (("visit", "mark"), ("unvisit", "unmark")):
                    if sub[0] == names[kind] and tuple(sub[1:]) == terms:
                        _ensure_operator(out, names[repl], repl, names["visited"], len(terms), report)
                        earlier.subtasks[pos] = (names[repl],) + terms
                        report.bump("renamed_to_mark")
        d.refresh_free_variables()
    classify_rigidity(out)
    return out, report


def dejavu(instance):
    work = instance.copy()
    classify_rigidity(work)
    report = PassReport("dejavu", {"knots_found": 0, "knots_instrumented": 0,
                                   "knots_skipped": 0, "operators_added": 0, "renamed_to_mark": 0})
    knots = detect_knots(work)
    report.counters["knots_found"] = len(knots)
    return instrument(work, knots, report)


__all__ = ["Knot", "detect_knots", "is_useful", "instrument", "dejavu"]
