"""Reader for the total-order subset of HDDL."""
from __future__ import annotations

import warnings

from .errors import ParseError, UnsupportedFeatureError
from .ir import (
    EQUALITY,
    RESERVED_PREFIXES,
    Method,
    Operator,
    PlanningInstance,
    dedupe,
    is_var,
)
from .sexpr import SList, position, tokenize

KNOWN_REQUIREMENTS = {
    ":strips",
    ":typing",
    ":hierarchy",
    ":hierachie",
    ":htn",
    ":negative-preconditions",
    ":method-preconditions",
    ":equality",
}
UNSUPPORTED_CONNECTIVES = {"or", "forall", "exists", "imply", "when", "either", "increase", "decrease", "assign"}


def _fail(message, node, cls=ParseError):
    line, col = position(node)
    raise cls(message, line, col)


def _expect_list(node, what):
    if not isinstance(node, list):
        _fail(f"expected a list for {what}", node)
    return node


def _check_reserved(name, node):
    if name.startswith(RESERVED_PREFIXES):
        _fail(f"name {name!r} uses a prefix reserved for cycle instrumentation", node)


def typed_list(items) -> list[tuple]:
    """``a b - t c`` -> [(a, t), (b, t), (c, None)]."""
    out, pending = [], []
    i = 0
    while i < len(items):
        item = items[i]
        if isinstance(item, list):
            _fail("unexpected list inside a typed list", item)
        if item == "-":
            if i + 1 >= len(items):
                _fail("dangling '-' in typed list", item)
            parent = items[i + 1]
            if isinstance(parent, list):
                _fail("union types (either ...) are not supported", parent, UnsupportedFeatureError)
            out += [(p, str(parent)) for p in pending]
            pending = []
            i += 2
            continue
        pending.append(item)
        i += 1
    return out + [(p, None) for p in pending]


def parse_formula(node, pos: list, neg: list, context: str, effect=False) -> None:
    if not isinstance(node, list):
        _fail(f"expected a literal in {context}", node)
    if not node:
        return
    head = node[0]
    if isinstance(head, list):
        _fail(f"malformed literal in {context}", node)
    if head == "and":
        for sub in node[1:]:
            parse_formula(sub, pos, neg, context, effect)
    elif head == "not":
        if len(node) != 2 or not isinstance(node[1], list) or not node[1]:
            _fail(f"malformed negation in {context}", node)
        inner = node[1]
        if inner[0] in ("and", "not") or inner[0] in UNSUPPORTED_CONNECTIVES:
            _fail(f"negation of compound formula in {context}", inner, UnsupportedFeatureError)
        neg.append(_atom(inner, context))
    elif head in UNSUPPORTED_CONNECTIVES:
        _fail(f"{head!r} is outside the supported subset ({context})", node, UnsupportedFeatureError)
    else:
        if effect and head == EQUALITY:
            _fail(f"equality in an effect ({context})", node)
        pos.append(_atom(node, context))


def _atom(node, context):
    for t in node:
        if isinstance(t, list):
            _fail(f"nested term in {context} (function terms are not supported)", t, UnsupportedFeatureError)
    return tuple(str(t) for t in node)


def _sections(form, start):
    """Split ``(:key value ...)`` style keyword arguments of a form."""
    out = {}
    i = start
    while i < len(form):
        key = form[i]
        if isinstance(key, list) or not key.startswith(":"):
            _fail(f"expected a keyword, got {key!r}", key)
        value = form[i + 1] if i + 1 < len(form) else None
        out[str(key)] = value
        i += 2
    return out


def _parse_subtask_list(node, context):
    """Return [(label or None, atom)] from an ordered/unordered subtask expression."""
    if node is None or (isinstance(node, list) and not node):
        return []
    node = _expect_list(node, context)
    items = node[1:] if node[0] == "and" else [node]
    out = []
    for item in items:
        item = _expect_list(item, context)
        if len(item) == 2 and not isinstance(item[0], list) and isinstance(item[1], list):
            out.append((str(item[0]), _atom(item[1], context)))
        else:
            out.append((None, _atom(item, context)))
    return out


def _linearize(subtasks, ordering, context, node):
    if len(subtasks) <= 1:
        return [atom for _, atom in subtasks]
    labels = [label for label, _ in subtasks]
    if None in labels:
        _fail(f"unordered subtasks without ids in {context}", node, UnsupportedFeatureError)
    pairs = set()
    if ordering:
        items = ordering[1:] if ordering[0] == "and" else [ordering]
        for item in items:
            if not isinstance(item, list) or len(item) != 3 or item[0] != "<":
                _fail(f"unsupported ordering constraint in {context}", item, UnsupportedFeatureError)
            a, b = str(item[1]), str(item[2])
            if a not in labels or b not in labels:
                _fail(f"ordering mentions unknown subtask id in {context}", item)
            pairs.add((a, b))
    before = {label: set() for label in labels}
    for a, b in pairs:
        before[b].add(a)
    changed = True
    while changed:
        changed = False
        for label in labels:
            extra = set().union(*(before[p] for p in before[label])) - before[label]
            if extra:
                before[label] |= extra
                changed = True
    for label in labels:
        if label in before[label]:
            _fail(f"cyclic ordering in {context}: only total orders are supported", node, UnsupportedFeatureError)
    for i, a in enumerate(labels):
        for b in labels[i + 1 :]:
            if a not in before[b] and b not in before[a]:
                _fail(
                    f"{context} is partially ordered ({a}, {b} unordered); only total order is supported",
                    node,
                    UnsupportedFeatureError,
                )
    order = sorted(labels, key=lambda label: len(before[label]))
    by_label = dict(subtasks)
    return [by_label[label] for label in order]


def _subtasks(sections, context, node):
    for key in (":ordered-subtasks", ":ordered-tasks"):
        if key in sections:
            return [atom for _, atom in _parse_subtask_list(sections[key], context)]
    for key in (":subtasks", ":tasks"):
        if key in sections:
            items = _parse_subtask_list(sections[key], context)
            return _linearize(items, sections.get(":ordering"), context, node)
    return []


class _Domain:
    def __init__(self):
        self.name = "domain"
        self.types: dict = {}
        self.constants: list = []
        self.predicates: dict = {}
        self.tasks: dict = {}
        self.operators: dict = {}
        self.methods: list = []


def _ancestors(types, t):
    chain = []
    while t is not None and t not in chain:
        chain.append(t)
        t = types.get(t)
    return chain


def _type_literals(params, domain, node):
    lits = []
    for var, t in params:
        if not is_var(var):
            _fail(f"parameter {var!r} must start with '?'", node)
        if t is not None:
            if t not in domain.types:
                domain.types[t] = "object" if t != "object" else None
                domain.types.setdefault("object", None)
            lits.append((t, str(var)))
    return lits


def _register_types(domain):
    for t in domain.types:
        _check_reserved(t, None)
        domain.predicates.setdefault(t, 1)


def _parse_domain(forms) -> _Domain:
    if len(forms) != 1 or not isinstance(forms[0], list) or not forms[0] or forms[0][0] != "define":
        _fail("domain file must contain a single (define ...)", forms[0] if forms else None)
    form = forms[0]
    d = _Domain()
    for section in form[1:]:
        section = _expect_list(section, "domain section")
        key = section[0]
        if key == "domain":
            d.name = str(section[1])
        elif key == ":requirements":
            for req in section[1:]:
                if req not in KNOWN_REQUIREMENTS:
                    warnings.warn(f"unknown requirement {req} ignored", stacklevel=3)
        elif key == ":types":
            for t, parent in typed_list(section[1:]):
                _check_reserved(t, t)
                d.types[str(t)] = parent if parent is not None else ("object" if t != "object" else None)
                if parent is not None and parent not in d.types:
                    d.types[parent] = "object" if parent != "object" else None
            d.types.setdefault("object", None)
        elif key == ":constants":
            d.constants += [(str(o), t) for o, t in typed_list(section[1:])]
        elif key == ":predicates":
            for pred in section[1:]:
                pred = _expect_list(pred, "predicate declaration")
                _check_reserved(pred[0], pred[0])
                d.predicates[str(pred[0])] = len(typed_list(pred[1:]))
        elif key == ":task":
            name = str(section[1])
            _check_reserved(name, section[1])
            sec = _sections(section, 2)
            d.tasks[name] = len(typed_list(sec.get(":parameters") or []))
        elif key == ":action":
            _parse_action(section, d)
        elif key == ":method":
            _parse_method(section, d)
        elif key in (":functions", ":axiom", ":derived"):
            _fail(f"{key} is not supported", section, UnsupportedFeatureError)
        else:
            _fail(f"unknown domain section {key!r}", section)
    _register_types(d)
    return d


def _parse_action(section, d):
    name = str(section[1])
    _check_reserved(name, section[1])
    sec = _sections(section, 2)
    params = typed_list(sec.get(":parameters") or [])
    pre_pos = _type_literals(params, d, section)
    pre_neg: list = []
    eff_pos: list = []
    eff_neg: list = []
    if sec.get(":precondition") is not None:
        parse_formula(sec[":precondition"], pre_pos, pre_neg, f"action {name}")
    if sec.get(":effect") is not None:
        parse_formula(sec[":effect"], eff_pos, eff_neg, f"action {name}", effect=True)
    if name in d.operators:
        _fail(f"duplicate action {name!r}", section)
    d.operators[name] = Operator(
        name,
        parameters=tuple(str(v) for v, _ in params),
        pre_pos=dedupe(pre_pos),
        pre_neg=dedupe(pre_neg),
        eff_pos=dedupe(eff_pos),
        eff_neg=dedupe(eff_neg),
    )


def _parse_method(section, d):
    label = str(section[1])
    sec = _sections(section, 2)
    params = typed_list(sec.get(":parameters") or [])
    task = sec.get(":task")
    if not isinstance(task, list) or not task:
        _fail(f"method {label} lacks a :task", section)
    pre_pos = _type_literals(params, d, section)
    pre_neg: list = []
    if sec.get(":precondition") is not None:
        parse_formula(sec[":precondition"], pre_pos, pre_neg, f"method {label}")
    m = Method(
        task_name=str(task[0]),
        label=label,
        parameters=_atom(task, f"method {label}")[1:],
        pre_pos=dedupe(pre_pos),
        pre_neg=dedupe(pre_neg),
        subtasks=_subtasks(sec, f"method {label}", section),
    )
    m.refresh_free_variables()
    if any(existing.label == label and existing.task_name == m.task_name for existing in d.methods):
        _fail(f"duplicate method {label!r}", section)
    d.methods.append(m)


def parse_hddl(domain_text: str, problem_text: str) -> PlanningInstance:
    """Parse an HDDL domain/problem pair into a PlanningInstance.

    Types are downgraded to unary rigid predicates: every object gets one
    fact per ancestor type and every typed parameter a type precondition.
    """
    d = _parse_domain(tokenize(domain_text))
    forms = tokenize(problem_text)
    if len(forms) != 1 or not isinstance(forms[0], list) or not forms[0] or forms[0][0] != "define":
        _fail("problem file must contain a single (define ...)", forms[0] if forms else None)
    inst = PlanningInstance(domain_name=d.name)
    objects = list(d.constants)
    init: list = []
    goal_pos: list = []
    goal_neg: list = []
    top: list = []
    for section in forms[0][1:]:
        section = _expect_list(section, "problem section")
        key = section[0]
        if key == "problem":
            inst.problem_name = str(section[1])
        elif key == ":domain":
            pass
        elif key == ":requirements":
            for req in section[1:]:
                if req not in KNOWN_REQUIREMENTS:
                    warnings.warn(f"unknown requirement {req} ignored", stacklevel=2)
        elif key == ":objects":
            objects += [(str(o), t) for o, t in typed_list(section[1:])]
        elif key == ":htn":
            sec = _sections(section, 1)
            if sec.get(":parameters"):
                _fail("problem :htn parameters are not supported", section, UnsupportedFeatureError)
            top = _subtasks(sec, "problem :htn", section)
        elif key == ":init":
            for fact in section[1:]:
                fact = _expect_list(fact, ":init")
                if fact and fact[0] in ("not", "and", "="):
                    _fail("only positive ground atoms are allowed in :init", fact)
                init.append(_atom(fact, ":init"))
        elif key == ":goal":
            parse_formula(section[1], goal_pos, goal_neg, "goal")
        else:
            _fail(f"unknown problem section {key!r}", section)

    type_facts = []
    for o, t in objects:
        if t is not None:
            if t not in d.types:
                d.types[t] = "object" if t != "object" else None
                d.types.setdefault("object", None)
                _register_types(d)
            type_facts += [(anc, o) for anc in _ancestors(d.types, t)]
    inst.types = dict(d.types)
    inst.objects = dedupe(o for o, _ in objects)
    inst.predicates = dict(d.predicates)
    inst.tasks = dict(d.tasks)
    inst.operators = dict(d.operators)
    inst.methods = list(d.methods)
    inst.initial = dedupe(type_facts + init)
    inst.goal_pos = dedupe(goal_pos)
    inst.goal_neg = dedupe(goal_neg)
    inst.top_tasks = top
    for atom in inst.initial + inst.goal_pos + inst.goal_neg:
        for t in atom[1:]:
            if is_var(t):
                raise ParseError(f"variable {t} in a ground problem atom")
            if t not in inst.objects:
                inst.objects.append(t)
    return inst
