"""Domain transformation passes.  Each takes an instance and returns a new one plus a report."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class PassReport:
    name: str
    counters: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def bump(self, key: str, n: int = 1) -> None:
        self.counters[key] = self.counters.get(key, 0) + n

    @property
    def changed(self) -> bool:
        return any(v for k, v in self.counters.items() if k not in ("iterations", "knots_found", "knots_skipped"))

    def text(self) -> str:
        parts = [f"pass={self.name}"] + [f"{k}={v}" for k, v in self.counters.items()]
        parts.append(f"changed={'yes' if self.changed else 'no'}")
        lines = [" ".join(parts)]
        lines += [f"  note: {n}" for n in self.notes]
        return "\n".join(lines)


from .dejavu import dejavu  # noqa: E402
from .pullup import pullup  # noqa: E402
from .typredicate import typredicate  # noqa: E402

PASSES = {"typredicate": typredicate, "pullup": pullup, "dejavu": dejavu}
CANONICAL_ORDER = ("typredicate", "pullup", "dejavu")


def run_passes(instance, names):
    """Apply passes in the given order (repeats allowed); returns (instance, reports)."""
    reports = []
    for name in names:
        if name not in PASSES:
            raise KeyError(name)
        instance, report = PASSES[name](instance)
        reports.append(report)
    return instance, reports


__all__ = ["PassReport", "PASSES", "CANONICAL_ORDER", "run_passes", "typredicate", "pullup", "dejavu"]
