"""JSHOP reader and writer.

Emitted files carry ``;;`` header lines (``objects``, ``type``,
``renamed``, ``mangled``) that keep what JSHOP cannot express: object
declaration order, the type hierarchy, predicate back-renaming and the
``-`` to ``_`` symbol mangling.  The reader honours them when present, so
emit followed by parse reproduces the instance exactly.
"""
from __future__ import annotations

import itertools
import re

from .errors import ParseError, UnsupportedFeatureError
from .ir import (
    CYCLE_KINDS,
    EQUALITY,
    GOAL_OPERATOR,
    RESERVED_PREFIXES,
    Method,
    Operator,
    PlanningInstance,
    compile_goal,
    dedupe,
    is_var,
)
from .sexpr import position, tokenize

UNSUPPORTED = {
    ":-": "axioms",
    "call": "call terms",
    "assign": "assignments",
    "forall": "quantified preconditions",
    "or": "disjunctions",
    "imply": "implications",
    ":first": ":first preconditions",
    ":sort-by": ":sort-by preconditions",
    ":unordered": "unordered subtasks",
    ":protection": "protections",
    "eval": "external calls",
}

_HEADER = re.compile(r"^\s*;;\s*(objects|type|renamed|mangled)\b(.*)$")


def _fail(message, node, cls=ParseError):
    line, col = position(node)
    raise cls(message, line, col)


def _read_headers(texts):
    meta = {"objects": [], "types": {}, "renamed": {}, "mangled": {}}
    for text in texts:
        for line in text.splitlines():
            m = _HEADER.match(line)
            if not m:
                continue
            kind, rest = m.group(1), m.group(2).split()
            if kind == "objects":
                meta["objects"] += rest
            elif kind == "type" and len(rest) == 2:
                meta["types"][rest[0]] = None if rest[1] == "-" else rest[1]
            elif kind == "renamed" and len(rest) == 2:
                meta["renamed"][rest[0]] = rest[1]
            elif kind == "mangled" and len(rest) == 2:
                meta["mangled"][rest[0]] = rest[1]
    return meta


class _Reader:
    def __init__(self, mangled):
        self.unmangle = mangled

    def sym(self, s) -> str:
        s = str(s)
        return self.unmangle.get(s, s)

    def atom(self, node, context):
        if not isinstance(node, list) or not node:
            _fail(f"expected an atom in {context}", node)
        for t in node:
            if isinstance(t, list):
                _fail(f"nested term in {context}", t, UnsupportedFeatureError)
        if str(node[0]) in UNSUPPORTED:
            _fail(f"{UNSUPPORTED[str(node[0])]} are not supported ({context})", node, UnsupportedFeatureError)
        return tuple(self.sym(t) for t in node)

    def literals(self, node, context):
        pos, neg = [], []
        if not isinstance(node, list):
            if str(node) == "nil":
                return pos, neg
            _fail(f"expected a literal list in {context}", node)
        items = node
        if items and not isinstance(items[0], list):
            head = str(items[0])
            if head in UNSUPPORTED:
                _fail(f"{UNSUPPORTED[head]} are not supported ({context})", node, UnsupportedFeatureError)
            if head == "and":
                items = items[1:]
            else:
                items = [items]
        for lit in items:
            if isinstance(lit, list) and lit and str(lit[0]) == "not":
                if len(lit) != 2:
                    _fail(f"malformed negation in {context}", lit)
                neg.append(self.atom(lit[1], context))
            else:
                pos.append(self.atom(lit, context))
        return dedupe(pos), dedupe(neg)

    def task(self, node, context):
        atom = self.atom(node, context)
        name = atom[0]
        if name.startswith("!!"):
            return (self.sym(name[2:]),) + atom[1:], "invisible"
        if name.startswith("!"):
            return (self.sym(name[1:]),) + atom[1:], "primitive"
        return atom, "compound"

    def task_list(self, node, context):
        if not isinstance(node, list):
            if str(node) == "nil":
                return []
            _fail(f"expected a task list in {context}", node)
        items = list(node)
        if items and not isinstance(items[0], list):
            head = str(items[0])
            if head == ":ordered":
                items = items[1:]
            elif head in UNSUPPORTED:
                _fail(f"{UNSUPPORTED[head]} are not supported ({context})", node, UnsupportedFeatureError)
            else:
                items = [items]
        return [self.task(t, context)[0] for t in items]


def _cycle_kind(name):
    for kind in CYCLE_KINDS[1:]:
        if name.startswith(kind + "_"):
            return kind
    return "none"


def parse_jshop(domain_text: str, problem_text: str) -> PlanningInstance:
    """Parse ``(defdomain ...)`` and ``(defproblem ...)`` texts."""
    meta = _read_headers([domain_text, problem_text])
    r = _Reader(meta["mangled"])
    forms = tokenize(domain_text)
    dom = next((f for f in forms if isinstance(f, list) and f and f[0] == "defdomain"), None)
    if dom is None or len(dom) < 3:
        _fail("no (defdomain name (...)) form found", forms[0] if forms else None)
    inst = PlanningInstance(domain_name=r.sym(dom[1]))
    inst.types = dict(meta["types"])
    inst.renamed = dict(meta["renamed"])
    for item in dom[2]:
        if not isinstance(item, list) or not item:
            _fail("expected (:operator ...) or (:method ...)", item)
        key = str(item[0])
        if key == ":operator":
            _read_operator(item, r, inst)
        elif key == ":method":
            _read_method(item, r, inst)
        elif key in UNSUPPORTED:
            _fail(f"{UNSUPPORTED[key]} are not supported", item, UnsupportedFeatureError)
        else:
            _fail(f"unknown domain element {key!r}", item)

    forms = tokenize(problem_text)
    prob = next((f for f in forms if isinstance(f, list) and f and f[0] == "defproblem"), None)
    if prob is None or len(prob) < 5:
        _fail("no (defproblem name domain (init) (tasks)) form found", forms[0] if forms else None)
    inst.problem_name = r.sym(prob[1])
    init_node = prob[3]
    if isinstance(init_node, list):
        inst.initial = dedupe(r.atom(f, "initial state") for f in init_node)
    inst.top_tasks = r.task_list(prob[4], "problem tasks")

    objects = list(meta["objects"])
    for atom in itertools.chain(inst.initial, inst.top_tasks):
        objects += [t for t in atom[1:] if not is_var(t)]
    for element in itertools.chain(inst.operators.values(), inst.methods):
        atoms = element.literals() if isinstance(element, Operator) else itertools.chain(
            element.pre_pos, element.pre_neg, element.subtasks, [(element.task_name,) + tuple(element.parameters)]
        )
        for atom in atoms:
            objects += [t for t in atom[1:] if not is_var(t)]
    inst.objects = dedupe(objects)
    for atom in itertools.chain(
        inst.initial, *(op.literals() for op in inst.operators.values()), *(m.pre_pos + m.pre_neg for m in inst.methods)
    ):
        if atom[0] != EQUALITY:
            inst.predicates.setdefault(atom[0], len(atom) - 1)
    for m in inst.methods:
        inst.tasks.setdefault(m.task_name, len(m.parameters))
    return inst


def _read_operator(item, r, inst):
    if len(item) not in (5, 6):
        _fail("operator needs head, precondition, delete and add lists", item)
    head, kind = r.task(item[1], "operator head")
    name = head[0]
    if kind == "compound":
        _fail(f"operator name {name!r} must start with '!'", item[1])
    visible = kind == "primitive"
    if visible and name.startswith(RESERVED_PREFIXES):
        _fail(f"name {name!r} uses a prefix reserved for cycle instrumentation", item[1])
    pre_pos, pre_neg = r.literals(item[2], f"operator {name}")
    dels, dneg = r.literals(item[3], f"operator {name}")
    adds, aneg = r.literals(item[4], f"operator {name}")
    if dneg or aneg:
        _fail(f"negated literal inside an effect list of {name}", item)
    cost = 1.0
    if len(item) == 6:
        try:
            cost = float(str(item[5]))
        except ValueError:
            _fail(f"non-numeric cost for {name}", item[5], UnsupportedFeatureError)
    if name in inst.operators:
        _fail(f"duplicate operator {name!r}", item)
    inst.operators[name] = Operator(
        name,
        parameters=head[1:],
        pre_pos=pre_pos,
        pre_neg=pre_neg,
        eff_pos=adds,
        eff_neg=dels,
        cost=cost,
        visible=visible,
        cycle_kind="none" if visible else _cycle_kind(name),
    )


def _read_method(item, r, inst):
    head = r.atom(item[1], "method head")
    name = head[0]
    if name.startswith("!"):
        _fail(f"method task {name!r} must not start with '!'", item[1])
    if name.startswith(RESERVED_PREFIXES):
        _fail(f"name {name!r} uses a prefix reserved for cycle instrumentation", item[1])
    rest = list(item[2:])
    count = 0
    while rest:
        if not isinstance(rest[0], list) and str(rest[0]) != "nil":
            label = r.sym(rest.pop(0))
        else:
            label = f"{name}_{count}"
        if len(rest) < 2:
            _fail(f"method {name} branch {label} lacks precondition or subtasks", item)
        pre_node, sub_node = rest.pop(0), rest.pop(0)
        pre_pos, pre_neg = r.literals(pre_node, f"method {label}")
        m = Method(
            task_name=name,
            label=label,
            parameters=head[1:],
            pre_pos=pre_pos,
            pre_neg=pre_neg,
            subtasks=r.task_list(sub_node, f"method {label}"),
        )
        m.refresh_free_variables()
        inst.methods.append(m)
        count += 1


# ---------------------------------------------------------------- writer


def _mangle_table(instance: PlanningInstance) -> dict:
    symbols = set()
    for op in instance.operators.values():
        symbols.add(op.name)
        symbols.update(op.parameters)
        for a in op.literals():
            symbols.update(a)
    for m in instance.methods:
        symbols.update((m.task_name, m.label))
        symbols.update(m.parameters)
        for a in itertools.chain(m.pre_pos, m.pre_neg, m.subtasks):
            symbols.update(a)
    for a in itertools.chain(instance.initial, instance.top_tasks):
        symbols.update(a)
    symbols.update(instance.objects)
    symbols.update((instance.domain_name, instance.problem_name))
    table = {}
    taken = set(symbols)
    for s in sorted(symbols):
        if "-" in s:
            alt = s.replace("-", "_")
            if alt not in taken:
                table[s] = alt
                taken.add(alt)
    return table


def emit_jshop(instance: PlanningInstance) -> tuple[str, str]:
    """Return (domain text, problem text); a pending goal is compiled first."""
    instance = compile_goal(instance)
    table = _mangle_table(instance)

    def s(x):
        return table.get(x, x)

    def atom(a):
        return "(" + " ".join(s(t) for t in a) + ")"

    def lits(pos, neg=()):
        parts = [atom(a) for a in pos] + [f"(not {atom(a)})" for a in neg]
        return "(" + " ".join(parts) + ")"

    def task(t):
        name = t[0]
        if name in instance.operators:
            bang = "!" if instance.operators[name].visible else "!!"
            return "(" + " ".join([bang + s(name)] + [s(x) for x in t[1:]]) + ")"
        return atom(t)

    header = [";; htnforge jshop"]
    if instance.objects:
        header.append(";; objects " + " ".join(instance.objects))
    for t, parent in instance.types.items():
        header.append(f";; type {t} {parent if parent is not None else '-'}")
    for new, old in instance.renamed.items():
        header.append(f";; renamed {new} {old}")
    for orig, alt in sorted(table.items()):
        header.append(f";; mangled {alt} {orig}")

    out = list(header)
    out.append(f"(defdomain {s(instance.domain_name)} (")
    for op in instance.operators.values():
        bang = "!" if op.visible else "!!"
        head = "(" + " ".join([bang + s(op.name)] + [s(p) for p in op.parameters]) + ")"
        cost = f"{op.cost:g}"
        out.append(f"  (:operator {head}")
        out.append(f"    {lits(op.pre_pos, op.pre_neg)}")
        out.append(f"    {lits(op.eff_neg)}")
        out.append(f"    {lits(op.eff_pos)}")
        out.append(f"    {cost})")
    for _, group in itertools.groupby(instance.methods, key=lambda m: (m.task_name, tuple(m.parameters))):
        group = list(group)
        first = group[0]
        out.append(f"  (:method {atom((first.task_name,) + tuple(first.parameters))}")
        for m in group:
            out.append(f"    {s(m.label)}")
            out.append(f"    {lits(m.pre_pos, m.pre_neg)}")
            out.append("    (" + " ".join(task(t) for t in m.subtasks) + ")")
        out[-1] += ")"
    out.append("))")
    domain_text = "\n".join(out) + "\n"

    prob = list(header)
    prob.append(f"(defproblem {s(instance.problem_name)} {s(instance.domain_name)}")
    prob.append("  (" + "\n   ".join(atom(a) for a in instance.initial) + ")")
    prob.append("  (" + " ".join(task(t) for t in instance.top_tasks) + "))")
    return domain_text, "\n".join(prob) + "\n"


__all__ = ["parse_jshop", "emit_jshop", "GOAL_OPERATOR"]
