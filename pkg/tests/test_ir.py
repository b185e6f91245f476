import pytest

from htnforge import (
    InvariantViolation,
    Method,
    Operator,
    PlanningInstance,
    State,
    ValidationError,
    applicable,
    apply,
    build_indexes,
    classify_rigidity,
    compile_goal,
    decomposition,
    unify,
)
from htnforge.ir import GOAL_OPERATOR

from conftest import load


def test_rigidity_from_effects():
    inst = PlanningInstance(
        predicates={"at": 2, "road": 2},
        operators={"drive": Operator("drive", ("?t", "?a", "?b"),
                                     pre_pos=[("at", "?t", "?a"), ("road", "?a", "?b")],
                                     eff_pos=[("at", "?t", "?b")], eff_neg=[("at", "?t", "?a")])},
    )
    assert classify_rigidity(inst) == {"at": "fluent", "road": "rigid"}


def test_no_operators_means_everything_rigid():
    inst = PlanningInstance(predicates={"p": 1, "q": 0})
    assert set(classify_rigidity(inst).values()) == {"rigid"}


def test_mini_transport_rigidity():
    flags = classify_rigidity(load("mini-transport"))
    assert {p for p, f in flags.items() if f == "fluent"} >= {"at", "in", "capacity"}
    assert flags["road"] == "rigid" and flags["capacity-predecessor"] == "rigid"


def test_arity_clash_is_rejected():
    inst = PlanningInstance(predicates={"p": 1}, initial=[("p", "a", "b")])
    with pytest.raises(ValidationError):
        classify_rigidity(inst)


@pytest.mark.parametrize(
    "pos, neg, expected",
    [([("p",)], [("q",)], True), ([("p",)], [("r",)], False), ([], [], True)],
)
def test_applicable(pos, neg, expected):
    assert applicable(pos, neg, {("p",), ("r",)}) is expected


def test_applicable_rejects_lifted_literals():
    with pytest.raises(InvariantViolation):
        applicable([("at", "?x")], [], set())


def test_apply_cases():
    assert apply([("r",)], [("q",)], {("p",), ("q",)}) == {("p",), ("r",)}
    assert apply([], [], {("p",)}) == {("p",)}
    # deletion happens before addition
    assert apply([("p",)], [("p",)], {("p",)}) == {("p",)}


def test_apply_on_state_is_pure():
    s = State.from_atoms([("at", "t1", "a"), ("road", "a", "b")], rigid_names={"road"})
    after = apply([("at", "t1", "b")], [("at", "t1", "a")], s)
    assert s.holds(("at", "t1", "a")) and not s.holds(("at", "t1", "b"))
    assert after.holds(("at", "t1", "b")) and after.holds(("road", "a", "b"))


def test_apply_refuses_rigid_effects():
    s = State.from_atoms([("road", "a", "b")], rigid_names={"road"})
    with pytest.raises(ValidationError):
        apply([("road", "b", "a")], [], s)


def test_unify_enumerates_matching_facts():
    s = State.from_atoms([("at", "t1", "l1"), ("at", "t2", "l2")])
    got = list(unify([("at", "?v", "?p")], [], {}, s))
    assert got == [{"?v": "t1", "?p": "l1"}, {"?v": "t2", "?p": "l2"}]


def test_unify_ground_literal_gives_one_binding():
    s = State.from_atoms([("at", "t1", "l1")])
    assert list(unify([("at", "t1", "l1")], [], {"?z": "k"}, s)) == [{"?z": "k"}]
    assert list(unify([("at", "t1", "l2")], [], {}, s)) == []


def test_unify_negatives_and_free_variables():
    s = State.from_atoms([("at", "a")], objects=["a", "b", "c"])
    got = list(unify([], [("at", "?x")], {}, s, free=("?x",)))
    assert got == [{"?x": "b"}, {"?x": "c"}]


def test_unify_equality():
    s = State.from_atoms([("at", "a"), ("at", "b")])
    got = list(unify([("at", "?x"), ("at", "?y")], [("=", "?x", "?y")], {}, s))
    assert got == [{"?x": "a", "?y": "b"}, {"?x": "b", "?y": "a"}]


def test_rover_navigate_rigid_part_has_two_bindings():
    compiled = build_indexes(load("mini-rover"))
    pre = compiled.operators["navigate"].pre
    assert "can_traverse" in [lit[0] for lit in pre.rigid]  # type literals are rigid too
    got = list(unify(list(pre.rigid), [], {}, compiled.initial))
    assert len(got) == 2
    # the fluent (at ?r ?from) narrows it to the one move available from w1
    assert len(list(unify(list(pre.rigid + pre.fluent), [], {}, compiled.initial))) == 1


def test_compile_goal():
    inst = PlanningInstance(predicates={"at": 2, "in": 2}, goal_pos=[("at", "p1", "l2")])
    out = compile_goal(inst)
    goal = out.operators[GOAL_OPERATOR]
    assert goal.pre_pos == [("at", "p1", "l2")] and not goal.visible and goal.cost == 0
    assert out.top_tasks == [(GOAL_OPERATOR,)]
    assert inst.top_tasks == []

    both = compile_goal(PlanningInstance(predicates={"at": 2, "in": 2}, goal_pos=[("at", "p1", "l2")],
                                         goal_neg=[("in", "p1", "t1")]))
    g = both.operators[GOAL_OPERATOR]
    assert (len(g.pre_pos), len(g.pre_neg)) == (1, 1)

    empty = PlanningInstance()
    assert compile_goal(empty) is empty


def test_compile_goal_is_idempotent():
    inst = compile_goal(PlanningInstance(predicates={"at": 1}, goal_pos=[("at", "a")]))
    assert compile_goal(inst).top_tasks == inst.top_tasks


def test_build_indexes_splits_rigid_facts():
    compiled = build_indexes(load("mini-transport"))
    assert "road" not in compiled.initial.fluents
    assert compiled.world.rows("road")


def test_build_indexes_all_fluent():
    inst = PlanningInstance(
        predicates={"p": 1},
        operators={"flip": Operator("flip", ("?x",), pre_pos=[("p", "?x")], eff_neg=[("p", "?x")])},
        initial=[("p", "a")],
    )
    compiled = build_indexes(inst)
    assert all(not rows for rows in compiled.world.rigid.values())
    assert compiled.initial.holds(("p", "a"))


def test_road_precondition_is_rigid_phase():
    compiled = build_indexes(load("mini-transport"))
    m = next(cm for cm in compiled.methods["get-to"] if cm.method.label == "m-drive-to")
    assert any(lit[0] == "road" for lit in m.pre.rigid)


def test_decomposition_in_file_order():
    methods = [Method("deliver", "m1", ("?p",)), Method("deliver", "m2", ("?p",)), Method("other", "m3", ())]
    got = decomposition(("deliver", "p1"), methods)
    assert [m.label for m, _ in got] == ["m1", "m2"]
    assert got[0][1] == {"?p": "p1"}
    assert decomposition(("nothing",), methods) == []
    with pytest.raises(ValidationError):
        decomposition(("deliver",), methods)


def test_arity_mismatch_at_compile():
    inst = PlanningInstance(
        methods=[Method("t", "m", ("?x",))],
        tasks={"t": 1},
        top_tasks=[("t",)],
    )
    with pytest.raises(ValidationError):
        build_indexes(inst)
