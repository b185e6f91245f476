"""Graphviz rendering of the decomposition hierarchy."""
from __future__ import annotations

from .ir import PlanningInstance


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def emit_dot(instance: PlanningInstance) -> str:
    """Operators are boxes, method branches ellipses, compound tasks diamonds.

    Edges go task -> branch (labelled with the branch label) and branch ->
    subtask (labelled with the subtask position).  Invisible operators are
    dashed.
    """
    lines = [f"digraph {_quote(instance.domain_name)} {{", "  rankdir=TB;"]
    for op in instance.operators.values():
        style = ", style=dashed" if not op.visible else ""
        label = " ".join((op.name,) + tuple(op.parameters))
        lines.append(f"  {_quote('op:' + op.name)} [shape=box, label={_quote(label)}{style}];")
    for name in instance.compound_names():
        lines.append(f"  {_quote('task:' + name)} [shape=diamond, label={_quote(name)}];")
    for i, m in enumerate(instance.methods):
        node = f"method:{m.task_name}:{m.label}:{i}"
        lines.append(f"  {_quote(node)} [shape=ellipse, label={_quote(m.label)}];")
        lines.append(f"  {_quote('task:' + m.task_name)} -> {_quote(node)} [label={_quote(m.label)}];")
        for pos, sub in enumerate(m.subtasks):
            kind = "op:" if sub[0] in instance.operators else "task:"
            lines.append(f"  {_quote(node)} -> {_quote(kind + sub[0])} [label={_quote(str(pos))}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
