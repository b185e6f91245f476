import pytest

from htnforge import (
    Method,
    Operator,
    PlanningInstance,
    SearchConfig,
    classify_rigidity,
    oracle_enumerate,
    plan,
    run_passes,
)
from htnforge.ir import compile_goal
from htnforge.passes import PassReport
from htnforge.passes.dejavu import Knot, detect_knots, instrument, is_useful
from htnforge.passes.pullup import pullup, remove_dead_branches, remove_loose_branches
from htnforge.passes.typredicate import (
    apply_specializations,
    collect_specializations,
    infer_types,
    typredicate,
)

from conftest import load

# ---------------------------------------------------------------- typredicate

RIGID = {"vehicle", "person", "at_rigid"}


def test_infer_types_rules():
    assert infer_types([("vehicle", "?v"), ("at", "?v", "?p")], RIGID) == {"?v": "vehicle"}
    assert infer_types([("at", "?v", "?p")], RIGID) == {}
    assert infer_types([("vehicle", "?x"), ("person", "?x")], RIGID) == {}


def test_typed_locations_specializations():
    inst = compile_goal(load("typed-locations"))
    classify_rigidity(inst)
    assert collect_specializations(inst) == {
        ("at", ("person", "position")): "at_person",
        ("at", ("vehicle", "position")): "at_vehicle",
    }


def test_typed_locations_rewrites_move():
    out, _ = typredicate(compile_goal(load("typed-locations")))
    move = out.operators["move"]
    assert ("at_vehicle", "?v", "?from") in move.pre_pos
    assert move.eff_pos == [("at_vehicle", "?v", "?to")]
    assert "at" not in out.predicates


def _single_typed():
    """``at`` is only ever used with vehicles."""
    op = Operator("move", ("?v", "?a", "?b"), pre_pos=[("vehicle", "?v"), ("at", "?v", "?a")],
                  eff_pos=[("at", "?v", "?b")], eff_neg=[("at", "?v", "?a")])
    return PlanningInstance(predicates={"vehicle": 1, "at": 2}, operators={"move": op},
                            types={"vehicle": None}, objects=["t", "a", "b"],
                            initial=[("vehicle", "t"), ("at", "t", "a")], top_tasks=[("move", "t", "a", "b")])


def test_single_typing_gives_no_entry():
    inst = _single_typed()
    classify_rigidity(inst)
    assert collect_specializations(inst) == {}


def test_parent_type_blocks_the_split():
    inst = load("typed-locations")
    # make walk use the parent type: the predicate is then left whole
    walk = inst.operators["walk"]
    walk.pre_pos = [("object", lit[1]) if lit[0] == "person" else lit for lit in walk.pre_pos]
    classify_rigidity(inst)
    assert collect_specializations(inst) == {}


def test_empty_table_is_identity():
    inst = _single_typed()
    classify_rigidity(inst)
    out, report = apply_specializations(inst, {})
    assert out == inst and not report.changed


def test_ground_atom_rewrite():
    out, report = typredicate(compile_goal(load("typed-locations")))
    assert ("at_vehicle", "truck1", "loc1") in out.initial
    assert ("at_person", "alice", "loc1") in out.initial
    assert report.counters["ground_rewritten"] > 0


def test_typredicate_is_idempotent():
    once, _ = typredicate(compile_goal(load("typed-locations")))
    twice, report = typredicate(once)
    assert twice == once and not report.changed


def test_typredicate_splits_mini_transport():
    out, report = typredicate(compile_goal(load("mini-transport")))
    assert "at_vehicle" in out.predicates and report.changed


# ---------------------------------------------------------------- pullup


def _roads(methods, initial, top):
    op = Operator("go", ("?x",), pre_pos=[("here", "?x")], eff_pos=[("gone", "?x")])
    inst = PlanningInstance(predicates={"road": 2, "here": 1, "gone": 1}, operators={"go": op},
                            objects=["a", "b", "c"], methods=methods, initial=initial, top_tasks=top,
                            tasks={"trip": 0})
    classify_rigidity(inst)
    return inst


def test_unsatisfiable_rigid_method_is_removed():
    m = Method("trip", "via", (), ("?x",), pre_pos=[("road", "a", "?x")], subtasks=[("go", "?x")])
    keep = Method("trip", "stay", (), subtasks=[])
    inst = _roads([m, keep], [("here", "a")], [("trip",)])
    out, _ = remove_loose_branches(inst)
    assert [x.label for x in out.methods] == ["stay"]


def test_unique_rigid_value_is_substituted():
    m = Method("trip", "via", (), ("?x",), pre_pos=[("road", "a", "?x"), ("here", "?x")], subtasks=[("go", "?x")])
    inst = _roads([m], [("road", "a", "c"), ("here", "c")], [("trip",)])
    report = PassReport("pullup")
    out, _ = remove_loose_branches(inst, report)
    assert out.methods[0].subtasks == [("go", "c")]
    assert ("road", "a", "c") not in out.methods[0].pre_pos
    assert report.counters["variables_substituted"] == 1


def test_no_rigid_preconditions_changes_nothing():
    inst = compile_goal(load("one-op"))
    classify_rigidity(inst)
    out, counter = remove_loose_branches(inst)
    assert out.methods == inst.methods and out.operators == inst.operators
    assert counter


def _gated(prior_effect):
    """top -> [first, second]; second's operator needs (p ?x); first may add it."""
    first = Operator("first", ("?x",), eff_pos=[("p", "?x")] if prior_effect else [("r", "?x")])
    second = Operator("second", ("?x",), pre_pos=[("p", "?x")], eff_pos=[("q", "?x")])
    top = Method("top", "m", ("?x",), subtasks=[("first", "?x"), ("second", "?x")])
    return PlanningInstance(predicates={"p": 1, "q": 1, "r": 1}, operators={"first": first, "second": second},
                            methods=[top], objects=["a"], initial=[("p", "a")], tasks={"top": 1},
                            top_tasks=[("top", "a")])


def test_effect_mark_blocks_hoisting():
    out, _ = pullup(_gated(prior_effect=True))
    assert ("p", "?x") not in out.methods[0].pre_pos and ("p", "a") not in out.methods[0].pre_pos
    assert out.operators["second"].pre_pos == [("p", "?x")]


def test_unmarked_literal_is_hoisted():
    out, report = pullup(_gated(prior_effect=False))
    assert out.operators["second"].pre_pos == []
    assert report.counters["literals_hoisted"] >= 1


def test_equality_reveals_shared_literal():
    use = Operator("use", ("?h",), pre_pos=[], eff_pos=[("done", "?h")])
    shift = Operator("shift", ("?h",), pre_pos=[], eff_neg=[("at", "?h")], eff_pos=[("done", "?h")])
    m1 = Method("step", "direct", ("?here",), pre_pos=[("at", "?here")], subtasks=[("use", "?here")])
    m2 = Method("step", "alias", ("?here",), ("?there",),
                pre_pos=[("at", "?there"), ("=", "?here", "?there")], subtasks=[("use", "?there")])
    top = Method("top", "go", ("?y",), subtasks=[("step", "?y"), ("shift", "?y")])
    inst = PlanningInstance(predicates={"at": 1, "done": 1}, operators={"use": use, "shift": shift},
                            methods=[top, m1, m2], objects=["a", "b"], initial=[("at", "a"), ("at", "b")],
                            tasks={"top": 1, "step": 1}, top_tasks=[("top", "a")])
    out, _ = pullup(inst)
    parent = next(m for m in out.methods if m.task_name == "top")
    assert any(lit[0] == "at" for lit in parent.pre_pos)
    assert oracle_enumerate(out, 6) == oracle_enumerate(inst, 6)


def test_dead_branch_removal_on_abstract_hierarchy():
    out, report = pullup(compile_goal(load("hoist-abstract")))
    labels = [m.label for m in out.methods]
    assert "method4" not in labels and "method5" not in labels
    assert report.counters["methods_removed"] == 2


def test_dead_branch_noop():
    inst = compile_goal(load("one-op"))
    classify_rigidity(inst)
    out, report = remove_dead_branches(inst)
    assert out.methods == inst.methods and not report.counters.get("methods_removed")


def test_top_task_without_methods_flags_unsolvable():
    m = Method("trip", "via", (), ("?x",), pre_pos=[("road", "a", "?x")], subtasks=[("go", "?x")])
    inst = _roads([m], [("here", "a")], [("trip",)])
    out, report = pullup(inst)
    assert out.unsolvable
    assert plan(out, SearchConfig()).outcome == "failure"
    assert any("never be decomposed" in n for n in report.notes)


def test_pullup_is_idempotent_on_corpus():
    once, _ = pullup(compile_goal(load("mini-transport")))
    twice, report = pullup(once)
    assert twice.methods == once.methods and twice.operators == once.operators
    assert not report.changed


# ---------------------------------------------------------------- dejavu


def _hier(methods, tasks):
    inst = PlanningInstance(operators={"b": Operator("b", ("?x",))}, methods=methods, objects=["o"],
                            tasks=tasks, top_tasks=[("a", "o")])
    classify_rigidity(inst)
    return inst


def test_direct_recursion_knot():
    inst = _hier([Method("a", "m", ("?x",), subtasks=[("b", "?x"), ("a", "?x")])], {"a": 1})
    knots = detect_knots(inst)
    assert [(k.task[0], k.index) for k in knots] == [("a", 1)]


def test_indirect_recursion_knot():
    inst = _hier([Method("a", "ma", ("?x",), subtasks=[("c", "?x")]),
                  Method("c", "mc", ("?x",), subtasks=[("a", "?x")])], {"a": 1, "c": 1})
    knots = detect_knots(inst)
    assert [(k.owner, k.task[0]) for k in knots] == [("c", "a")]


def test_acyclic_has_no_knots():
    inst = _hier([Method("a", "m", ("?x",), subtasks=[("b", "?x")])], {"a": 1})
    assert detect_knots(inst) == []


def test_instrumentation_layout():
    inst = _hier([Method("a", "m", ("?x",), subtasks=[("b", "?x"), ("a", "?x")])], {"a": 1})
    out, report = instrument(inst, detect_knots(inst))
    m = out.methods[0]
    assert m.subtasks == [("b", "?x"), ("visit_a", "?x"), ("a", "?x"), ("unvisit_a", "?x")]
    assert ("visited_a", "?x") in m.pre_neg
    assert not out.operators["visit_a"].visible and out.operators["visit_a"].cost == 0
    assert report.counters["knots_instrumented"] == 1


def test_zero_parameter_task_uses_state_fallback():
    inst = compile_goal(load("zero-param"))
    out, report = run_passes(inst, ["dejavu"])
    assert report[0].counters["knots_instrumented"] >= 1
    assert plan(out, SearchConfig(expansion_budget=10**4)).outcome == "failure"


def test_useless_knot_is_skipped():
    # one subtask, all free variables bound to the same terms as before the knot
    m = Method("a", "m", ("?x",), free_variables=("?y",), pre_pos=[("r", "?x", "?y")],
               subtasks=[("a", "?x")])
    inst = _hier([m], {"a": 1})
    inst.predicates["r"] = 2
    knot = Knot(("a", "?x"), "a", 0, 0, ("?x",))
    assert not is_useful(Knot(("a", "?x"), "b", 0, 0, ("?x",)), inst)
    out, report = instrument(inst, [Knot(("a", "?x"), "b", 0, 0, ("?x",))])
    assert out.methods == inst.methods and report.counters["knots_skipped"] == 1
    assert knot.owner == "a"


def test_dejavu_is_idempotent():
    once, _ = run_passes(compile_goal(load("mini-transport")), ["dejavu"])
    twice, reports = run_passes(once, ["dejavu"])
    assert twice.methods == once.methods and not reports[0].changed


@pytest.mark.parametrize("domain", ["mini-transport", "wander-unsolvable", "ping-pong", "zero-param"])
def test_dejavu_preserves_plans(domain):
    inst = compile_goal(load(domain))
    out, _ = run_passes(inst, ["dejavu"])
    assert oracle_enumerate(out, 10) == oracle_enumerate(inst, 10)
