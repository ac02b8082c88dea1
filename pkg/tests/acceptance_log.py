"""Collects one verdict line per acceptance criterion for the terminal summary."""

RESULTS = {}


def record(number, title, passed, detail, gating=True):
    if passed:
        verdict = "PASS"
    else:
        verdict = "FAIL" if gating else "DEVIATION (non-gating)"
    line = f"criterion {number} [{title}]: {verdict}: {detail}"
    RESULTS[number] = line
    print(line)
    return line
