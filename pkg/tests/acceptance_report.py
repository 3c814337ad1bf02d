"""Collects one PASS/FAIL outcome per acceptance criterion across tests."""

from contextlib import contextmanager

TITLES = {
    1: "suite containment",
    2: "single-cell closed forms",
    3: "sharpness",
    4: "oracle equivalence",
    5: "limit branches",
    6: "partition monotonicity",
    7: "derivative correctness",
    8: "determinism",
}

RESULTS = {}


@contextmanager
def criterion(number, detail=""):
    """Record the enclosed checks under ``number``; failures are re-raised."""
    notes = []
    try:
        yield notes
    except BaseException as e:
        RESULTS.setdefault(number, []).append((False, f"{type(e).__name__}: {e}".splitlines()[0]))
        raise
    RESULTS.setdefault(number, []).append((True, "; ".join([detail] + notes if detail else notes)))


def summary_lines():
    lines = []
    for n in sorted(TITLES):
        parts = RESULTS.get(n)
        if not parts:
            lines.append(f"criterion {n} ({TITLES[n]}): NOT RUN")
            continue
        ok = all(p for p, _ in parts)
        details = [d for p, d in parts if d and (ok or not p)]
        lines.append(f"criterion {n} ({TITLES[n]}): {'PASS' if ok else 'FAIL'}"
                     + (f" - {' | '.join(details)}" if details else ""))
    return lines
