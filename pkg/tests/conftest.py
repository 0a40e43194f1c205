import re

_VERDICTS = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2).replace("_", " "))
    detail = dict(report.user_properties).get("detail", "")
    if report.when == "call" or report.failed:
        if report.passed:
            _VERDICTS.setdefault(key, ("PASS", detail))
        else:
            _VERDICTS[key] = ("FAIL" if report.failed else "SKIP", detail)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for (num, name), (verdict, detail) in sorted(_VERDICTS.items()):
        line = f"criterion {num:2d} {name}: {verdict}"
        terminalreporter.write_line(f"{line}  {detail}" if detail else line)
