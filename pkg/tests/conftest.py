from __future__ import annotations

from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

# criterion number -> list of (passed, detail); filled by test_acceptance.py
CRITERIA: dict[int, list[tuple[bool, str]]] = {}


def record(number: int, passed: bool, detail: str) -> None:
    CRITERIA.setdefault(number, []).append((passed, detail))
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}: {detail}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        parts = CRITERIA[number]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}: {detail}")
