"""Arithmetic executor over prefix forms such as ``( + 2 ( * 3 4 ) )``.

Reads one form per line and prints its integer value; malformed input
prints ``error``. Used to exercise the denotation metric.
"""

from __future__ import annotations

import sys

OPS = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "max": max,
    "min": min,
}


def _parse(tokens: list[str], pos: int) -> tuple[int, int]:
    tok = tokens[pos]
    if tok == "(":
        op = tokens[pos + 1]
        if op not in OPS:
            raise ValueError(f"unknown operator {op!r}")
        a, pos = _parse(tokens, pos + 2)
        b, pos = _parse(tokens, pos)
        if tokens[pos] != ")":
            raise ValueError("expected ')'")
        return OPS[op](a, b), pos + 1
    return int(tok), pos + 1


def evaluate(form: str) -> str:
    tokens = form.split()
    try:
        value, end = _parse(tokens, 0)
        if end != len(tokens):
            raise ValueError("trailing tokens")
    except (ValueError, IndexError):
        return "error"
    return str(value)


def main() -> int:
    for line in sys.stdin:
        print(evaluate(line.strip()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
