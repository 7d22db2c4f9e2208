"""Deterministic generator for well-formed articles.

Benchmarks and tests need inputs of an exact line count that pass both
the structure and reference checks. The generator emits an environ/begin
prelude and then fills the body with small proof blocks whose labels are
referenced only while in scope.
"""

from __future__ import annotations

import random

_MIN_LINES = 3


def well_formed_article(lines: int, seed: int = 0) -> str:
    """Article text with exactly `lines` lines, clean under both checks."""
    if lines < _MIN_LINES:
        raise ValueError(f"need at least {_MIN_LINES} lines, got {lines}")
    rng = random.Random(seed)
    out = ["environ", "begin"]
    label = 0
    # Room for one trailing line; each block below spends 3 or 4 lines.
    while lines - len(out) - 1 >= 4:
        label += 1
        name = f"Th{label}"
        if rng.random() < 0.5 and lines - len(out) - 1 >= 4:
            out.append(f"theorem {name}: x = x")
            out.append("proof")
            out.append(f"  thus x = x by {name};")
            out.append("end;")
        else:
            out.append("now")
            out.append(f"  {name}: assume x = x;")
            out.append(f"  thus x = x by {name};")
            out.append("end;")
    while len(out) < lines - 1:
        out.append(f":: filler {len(out) + 1}")
    out.append(":: closing remark")
    assert len(out) == lines
    return "\n".join(out) + "\n"
