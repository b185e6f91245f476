"""HTN compiler and planner: parse HDDL or JSHOP, transform, plan, emit."""
from .errors import (
    HTNError,
    InvariantViolation,
    OracleOverflow,
    ParseError,
    UnsupportedFeatureError,
    ValidationError,
)
from .hddl import parse_hddl
from .ir import (
    Method,
    Operator,
    PlanningInstance,
    State,
    applicable,
    apply,
    build_indexes,
    classify_rigidity,
    compile_goal,
    decomposition,
    unify,
)
from .jshop import emit_jshop, parse_jshop
from .dot import emit_dot
from .passes import PASSES, PassReport, run_passes
from .planner import BUDGET, FAILURE, PLAN, Plan, PlanResult, SearchConfig, SearchStats, plan
from .validator import oracle_enumerate, validate

__all__ = [
    "HTNError", "InvariantViolation", "OracleOverflow", "ParseError", "UnsupportedFeatureError",
    "ValidationError", "parse_hddl", "parse_jshop", "emit_jshop", "emit_dot", "Method", "Operator",
    "PlanningInstance", "State", "applicable", "apply", "build_indexes", "classify_rigidity",
    "compile_goal", "decomposition", "unify", "PASSES", "PassReport", "run_passes", "BUDGET",
    "FAILURE", "PLAN", "Plan", "PlanResult", "SearchConfig", "SearchStats", "plan",
    "oracle_enumerate", "validate",
]
