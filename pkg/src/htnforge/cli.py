"""Command line driver: front-end, pass pipeline, then planner or back-end.

Exit codes: 0 plan found or output emitted, 1 proven failure, 2 budget
exhausted, 3 usage or parse error.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .dot import emit_dot
from .errors import HTNError
from .hddl import parse_hddl
from .ir import compile_goal
from .jshop import emit_jshop, parse_jshop
from .passes import CANONICAL_ORDER, PASSES, run_passes
from .planner import BUDGET, FAILURE, PLAN, SearchConfig, run_with_budgets
from .validator import validate

EXIT_PLAN, EXIT_FAILURE, EXIT_BUDGET, EXIT_USAGE = 0, 1, 2, 3
EXIT_CODES = {PLAN: EXIT_PLAN, FAILURE: EXIT_FAILURE, BUDGET: EXIT_BUDGET}

# Column order of the configuration matrix: no passes, singles, pairs, all.
CONFIGS = (
    (),
    ("typredicate",),
    ("pullup",),
    ("dejavu",),
    ("typredicate", "pullup"),
    ("pullup", "dejavu"),
    ("typredicate", "dejavu"),
    ("typredicate", "pullup", "dejavu"),
)
BUNDLED_CORPUS = Path(__file__).parent / "corpus"
CSV_COLUMNS = ("domain", "instance", "config", "outcome", "expansions", "depth", "plan_length", "millis")


def config_name(passes) -> str:
    return "+".join(passes) if passes else "none"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def detect_language(path: Path, text: str) -> str:
    suffix = path.suffix.lower()
    if suffix in (".hddl", ".pddl"):
        return "hddl"
    if suffix in (".jshop", ".shop", ".lisp"):
        return "jshop"
    lowered = text.lower()
    return "jshop" if "defdomain" in lowered or "defproblem" in lowered else "hddl"


def load_instance(domain_path, problem_path, lang: str | None = None):
    domain_path, problem_path = Path(domain_path), Path(problem_path)
    domain_text = domain_path.read_text()
    problem_text = problem_path.read_text()
    lang = lang or detect_language(domain_path, domain_text)
    reader = parse_hddl if lang == "hddl" else parse_jshop
    return reader(domain_text, problem_text)


def prepare(instance, passes):
    """Fold the goal into the task list, then run the passes in order."""
    return run_passes(compile_goal(instance), passes)


def _add_common(p):
    p.add_argument("domain")
    p.add_argument("problem")
    p.add_argument("--pass", dest="passes", action="append", default=[], metavar="NAME",
                   help=f"apply a pass (repeatable, in order): {', '.join(PASSES)}")
    p.add_argument("--lang", choices=("hddl", "jshop"), help="override input language detection")
    p.add_argument("--verbose", "-v", action="store_true", help="print pass reports to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="htn-forge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command")
    for name, help_text in (("plan", "search for a plan"), ("dot", "emit Graphviz"),
                            ("jshop", "emit JSHOP domain and problem")):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        p.add_argument("--format", choices=("plan", "dot", "jshop"), help="override the output kind")
        p.add_argument("--stack-limit", type=int, default=SearchConfig().stack_limit)
        p.add_argument("--expansions", type=int, default=None, help="expansion budget")
        p.add_argument("--timeout", type=float, default=None, help="time budget in seconds")
        p.add_argument("--output", "-o", help="write output here (jshop: a directory)")
    m = sub.add_parser("matrix", help="run all pass configurations over a corpus")
    m.add_argument("corpus", nargs="?", default=str(BUNDLED_CORPUS),
                   help="directory of <domain>/domain.{hddl,jshop} plus p*.{hddl,jshop}; defaults to the bundled corpus")
    m.add_argument("--stack-limit", type=int, default=SearchConfig().stack_limit)
    m.add_argument("--expansions", type=int, default=10**6)
    m.add_argument("--timeout", type=float, default=None)
    m.add_argument("--jobs", type=int, default=1)
    m.add_argument("--csv", help="write per-run rows here instead of stdout")
    return parser


def _check_passes(names):
    unknown = [n for n in names if n not in PASSES]
    if unknown:
        raise UsageError(f"unknown pass {unknown[0]!r}; available passes: {', '.join(PASSES)}")


def run_pipeline(args, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    _check_passes(args.passes)
    if args.stack_limit < 1:
        raise UsageError("--stack-limit must be at least 1")
    source = load_instance(args.domain, args.problem, args.lang)
    instance, reports = prepare(source, args.passes)
    if args.verbose:
        for report in reports:
            print(report.text(), file=stderr)
    kind = args.format or args.command
    if kind == "dot":
        _write(args.output, emit_dot(instance), stdout)
        return EXIT_PLAN
    if kind == "jshop":
        domain_text, problem_text = emit_jshop(instance)
        if args.output:
            out = Path(args.output)
            out.mkdir(parents=True, exist_ok=True)
            (out / "domain.jshop").write_text(domain_text)
            (out / "problem.jshop").write_text(problem_text)
        else:
            stdout.write(domain_text + "\n" + problem_text)
        return EXIT_PLAN
    config = SearchConfig(args.stack_limit, args.expansions, args.timeout)
    result = run_with_budgets(instance, config)
    print(f"outcome={result.outcome}", file=stderr)
    for line in result.stats.lines():
        print(line, file=stderr)
    if result.solved:
        if args.verbose:
            report = validate(result.plan, compile_goal(source))
            print(f"validation={report.text()}", file=stderr)
        _write(args.output, result.plan.text(), stdout)
    return EXIT_CODES[result.outcome]


def _write(path, text, stdout):
    if path:
        Path(path).write_text(text)
    else:
        stdout.write(text)


# ---------------------------------------------------------------- matrix


@dataclass(frozen=True)
class MatrixConfig:
    stack_limit: int = SearchConfig().stack_limit
    expansions: int | None = 10**6
    timeout: float | None = None
    jobs: int = 1


@dataclass(frozen=True)
class RunRow:
    domain: str
    instance: str
    config: str
    outcome: str
    expansions: int
    depth: int
    plan_length: int
    millis: float

    def as_list(self, timing=True):
        row = [self.domain, self.instance, self.config, self.outcome, self.expansions,
               self.depth, self.plan_length]
        return row + [f"{self.millis:.1f}" if timing else ""]


def discover(corpus_dir):
    """[(domain name, domain path, [problem paths])]; malformed entries are warned about and skipped."""
    root = Path(corpus_dir)
    found = []
    if not root.is_dir():
        warnings.warn(f"corpus {root} is not a directory", stacklevel=2)
        return found
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        domains = [sub / n for n in ("domain.hddl", "domain.jshop") if (sub / n).exists()]
        problems = sorted(p for p in sub.iterdir() if p.suffix in (".hddl", ".jshop") and p.name.startswith("p"))
        if len(domains) != 1 or not problems:
            warnings.warn(f"skipping {sub}: expected one domain file and p*.hddl problems", stacklevel=2)
            continue
        found.append((sub.name, domains[0], problems))
    return found


def _run_one(job):
    domain, domain_path, problem_path, passes, mconf = job
    started = time.perf_counter()
    try:
        instance, _ = prepare(load_instance(domain_path, problem_path), passes)
        result = run_with_budgets(instance, SearchConfig(mconf.stack_limit, mconf.expansions, mconf.timeout))
        outcome, stats = result.outcome, result.stats
        length = len(result.plan) if result.plan is not None else 0
        expansions, depth = stats.expansions, stats.max_depth
    except HTNError as exc:
        outcome, expansions, depth, length = f"error: {exc}", 0, 0, 0
    millis = (time.perf_counter() - started) * 1000
    return RunRow(domain, Path(problem_path).stem, config_name(passes), outcome, expansions, depth, length, millis)


def run_matrix(corpus_dir, config: MatrixConfig | None = None) -> list[RunRow]:
    """Every instance under every configuration, in a fixed order."""
    config = config or MatrixConfig()
    jobs = [
        (domain, dpath, ppath, passes, config)
        for domain, dpath, problems in discover(corpus_dir)
        for ppath in problems
        for passes in CONFIGS
    ]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if config.jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=config.jobs) as pool:
                rows = list(pool.map(_run_one, jobs))
        else:
            rows = [_run_one(job) for job in jobs]
    return rows


def matrix_csv(rows, timing=True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.as_list(timing))
    return buf.getvalue()


def coverage(rows) -> dict:
    """{domain: {config: solved count}} plus the instance count under key ``total``."""
    table: dict = {}
    for row in rows:
        entry = table.setdefault(row.domain, {"total": set(), **{config_name(c): 0 for c in CONFIGS}})
        entry["total"].add(row.instance)
        if row.outcome == PLAN:
            entry[row.config] += 1
    return {d: {**{k: v for k, v in e.items() if k != "total"}, "total": len(e["total"])} for d, e in table.items()}


def coverage_text(rows) -> str:
    table = coverage(rows)
    names = [config_name(c) for c in CONFIGS]
    width = max([len("domain")] + [len(d) + 4 for d in table])
    lines = ["domain".ljust(width) + " " + " ".join(n.rjust(max(len(n), 5)) for n in names)]
    totals = dict.fromkeys(names, 0)
    for domain, entry in table.items():
        label = f"{domain}({entry['total']})"
        lines.append(label.ljust(width) + " " + " ".join(str(entry[n]).rjust(max(len(n), 5)) for n in names))
        for n in names:
            totals[n] += entry[n]
    count = sum(e["total"] for e in table.values())
    lines.append(f"total({count})".ljust(width) + " " + " ".join(str(totals[n]).rjust(max(len(n), 5)) for n in names))
    return "\n".join(lines) + "\n"


def _matrix_command(args, stdout, stderr) -> int:
    if args.stack_limit < 1:
        raise UsageError("--stack-limit must be at least 1")
    rows = run_matrix(args.corpus, MatrixConfig(args.stack_limit, args.expansions, args.timeout, args.jobs))
    text = matrix_csv(rows)
    if args.csv:
        Path(args.csv).write_text(text)
    else:
        stdout.write(text)
    stderr.write(coverage_text(rows))
    return EXIT_PLAN


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: plan, dot, jshop or matrix")
        if args.command == "matrix":
            return _matrix_command(args, stdout, stderr)
        return run_pipeline(args, stdout, stderr)
    except UsageError as exc:
        print(f"htn-forge: usage error: {exc}", file=stderr)
        print(parser.format_usage().rstrip(), file=stderr)
        return EXIT_USAGE
    except (HTNError, OSError) as exc:
        print(f"htn-forge: error: {exc}", file=stderr)
        return EXIT_USAGE


__all__ = [
    "BUNDLED_CORPUS", "CONFIGS", "CSV_COLUMNS", "MatrixConfig", "RunRow", "config_name", "coverage", "coverage_text",
    "detect_language", "discover", "load_instance", "main", "matrix_csv", "prepare", "run_matrix",
    "run_pipeline", "CANONICAL_ORDER",
]


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
