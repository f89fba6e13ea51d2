"""Serialization helpers shared by the JSON-emitting modules."""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Any


def frac_str(x: Fraction | int) -> str:
    """Lowest-terms ``"num/den"``; integers keep an explicit ``/1``."""
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def parse_frac(s: str) -> Fraction:
    num, _, den = s.partition("/")
    return Fraction(int(num), int(den or 1))


def dumps(obj: Any) -> str:
    # insertion order is the canonical field order; no sort_keys
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))
