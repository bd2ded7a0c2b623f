"""Shared sink for the acceptance criterion verdict lines."""

LINES = []


def record(num, name, ok, detail=""):
    verdict = "PASS" if ok else "FAIL"
    line = f"criterion {num:2d} ({name}): {verdict}"
    if detail:
        line += f" -- {detail}"
    LINES.append(line)
    print(line, flush=True)
    return ok
