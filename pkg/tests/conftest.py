"""Shared test plumbing: a per-criterion result line for the release gate.

The gate tests in test_acceptance.py register one entry each; after the
run, every registered criterion prints a single PASS/FAIL line in the
terminal summary so the verdicts are visible without scraping tracebacks.
Criteria that must report data (not just a verdict) attach extra lines,
printed indented under their line.
"""

ACCEPTANCE_RESULTS: dict[int, tuple[str, bool, str, tuple[str, ...]]] = {}


def record_criterion(
    number: int,
    description: str,
    passed: bool,
    detail: str = "",
    extra_lines: tuple[str, ...] = (),
) -> None:
    ACCEPTANCE_RESULTS[number] = (description, bool(passed), detail, tuple(extra_lines))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        description, passed, detail, extra = ACCEPTANCE_RESULTS[number]
        verdict = "PASS" if passed else "FAIL"
        line = f"criterion {number:2d} [{verdict}] {description}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)
        for item in extra:
            terminalreporter.write_line(f"    {item}")
