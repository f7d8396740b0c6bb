"""Collects one pass/fail line per acceptance criterion."""

RESULTS = {}


def record(number, title, ok, detail=""):
    RESULTS[number] = (title, bool(ok), detail)
    line = format_line(number)
    print(line)
    return ok


def format_line(number):
    title, ok, detail = RESULTS[number]
    status = "PASS" if ok else "FAIL"
    return f"[{status}] criterion {number:>2}: {title}" + (f" ({detail})" if detail else "")
