import csv
import io
import subprocess
import sys

import pytest

from htnforge.cli import (
    CONFIGS,
    CSV_COLUMNS,
    MatrixConfig,
    coverage,
    coverage_text,
    detect_language,
    main,
    matrix_csv,
    run_matrix,
)

from conftest import BUNDLED_CORPUS


def _paths(domain, problem="p01"):
    root = BUNDLED_CORPUS / domain
    return str(root / "domain.hddl"), str(root / f"{problem}.hddl")


def _run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(argv, out, err)
    return code, out.getvalue(), err.getvalue()


def test_canonical_invocation_prints_plan():
    code, out, err = _run(["plan", *_paths("mini-transport"),
                           "--pass", "typredicate", "--pass", "pullup", "--pass", "dejavu"])
    assert code == 0
    assert out.startswith(";; plan length")
    assert "(drive t1 s g)" in out
    assert "outcome=plan" in err


def test_dot_dispatch_does_not_search():
    code, out, err = _run(["dot", *_paths("mini-transport")])
    assert code == 0 and out.startswith("digraph")
    assert "expansions=" not in err


def test_format_flag_overrides_command():
    code, out, _ = _run(["plan", *_paths("one-op"), "--format", "jshop"])
    assert code == 0 and "(defdomain" in out and "(defproblem" in out


def test_jshop_output_directory(tmp_path):
    code, _, _ = _run(["jshop", *_paths("one-op"), "-o", str(tmp_path / "out")])
    assert code == 0
    domain, problem = tmp_path / "out" / "domain.jshop", tmp_path / "out" / "problem.jshop"
    code, out, _ = _run(["plan", str(domain), str(problem)])
    assert code == 0 and "(say hello)" in out


def test_repeated_pullup_is_a_reported_noop():
    code, _, err = _run(["plan", *_paths("mini-transport"), "--pass", "pullup", "--pass", "pullup",
                         "--pass", "dejavu", "--verbose"])
    reports = [line for line in err.splitlines() if line.startswith("pass=pullup")]
    assert code == 0 and len(reports) == 2
    assert reports[0].endswith("changed=yes")
    assert reports[1].endswith("changed=no")
    assert "validation=ok" in err


def test_exit_codes():
    assert _run(["plan", *_paths("wander-unsolvable")])[0] == 1
    assert _run(["plan", *_paths("mini-transport"), "--expansions", "100"])[0] == 2
    assert _run(["plan", *_paths("one-op"), "--pass", "nosuch"])[0] == 3
    assert _run(["plan", *_paths("one-op"), "--stack-limit", "0"])[0] == 3
    assert _run([])[0] == 3
    assert _run(["plan", "missing.hddl", "missing2.hddl"])[0] == 3


def test_unknown_pass_lists_available():
    _, _, err = _run(["plan", *_paths("one-op"), "--pass", "nosuch"])
    assert "typredicate, pullup, dejavu" in err


def test_parse_error_reports_position(tmp_path):
    bad = tmp_path / "domain.hddl"
    bad.write_text("(define (domain x)\n  (:predicates (p)\n")
    code, _, err = _run(["plan", str(bad), _paths("one-op")[1]])
    assert code == 3 and "line 2, column 3" in err


def test_language_detection(tmp_path):
    assert detect_language(tmp_path / "d.hddl", "") == "hddl"
    assert detect_language(tmp_path / "d.jshop", "") == "jshop"
    assert detect_language(tmp_path / "d.txt", "(defdomain x ())") == "jshop"
    assert detect_language(tmp_path / "d.txt", "(define (domain x))") == "hddl"


def test_matrix_rows_and_coverage():
    rows = run_matrix(BUNDLED_CORPUS, MatrixConfig(expansions=2000))
    text = matrix_csv(rows)
    table = list(csv.reader(io.StringIO(text)))
    assert tuple(table[0]) == CSV_COLUMNS
    configs = [r[2] for r in table[1:9]]
    assert configs == ["none", "typredicate", "pullup", "dejavu", "typredicate+pullup",
                       "pullup+dejavu", "typredicate+dejavu", "typredicate+pullup+dejavu"]
    cov = coverage(rows)
    assert cov["mini-transport"]["none"] == 0
    assert cov["mini-transport"]["typredicate+pullup+dejavu"] == cov["mini-transport"]["total"] == 2
    assert coverage_text(rows).splitlines()[-1].startswith("total(")


def test_matrix_timing_can_be_excluded():
    rows = run_matrix(BUNDLED_CORPUS, MatrixConfig(expansions=200))
    blank = matrix_csv(rows, timing=False)
    assert all(line.endswith(",") for line in blank.splitlines()[1:])


def test_empty_corpus(tmp_path):
    code, out, err = _run(["matrix", str(tmp_path)])
    assert code == 0
    assert out.strip() == ",".join(CSV_COLUMNS)
    assert "total(0)" in err


def test_layout_violation_is_skipped(tmp_path):
    (tmp_path / "broken").mkdir()
    (tmp_path / "broken" / "notes.txt").write_text("nothing here")
    with pytest.warns(UserWarning, match="skipping"):
        rows = run_matrix(tmp_path)
    assert rows == []


def test_matrix_process_pool_matches_serial():
    serial = run_matrix(BUNDLED_CORPUS, MatrixConfig(expansions=300))
    pooled = run_matrix(BUNDLED_CORPUS, MatrixConfig(expansions=300, jobs=2))
    assert matrix_csv(serial, timing=False) == matrix_csv(pooled, timing=False)
    assert len(serial) == len(CONFIGS) * len({(r.domain, r.instance) for r in serial})


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "htnforge", "plan", *_paths("one-op")],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "(say hello)" in proc.stdout
