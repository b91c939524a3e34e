"""Parsing of unit-suffixed numbers used in config files.

Numbers may carry an SI prefix plus a unit, e.g. ``490nH``, ``0.14pF``,
``725`` (dimensionless), ``625MHz``, ``-2uA``, ``4.2K``.  Internally
everything is SI (H, F, Ohm, A, V, K, Hz, s, m, W).
"""

from __future__ import annotations

import re

from .errors import ConfigError

_PREFIXES = {
    "f": 1e-15,
    "p": 1e-12,
    "n": 1e-9,
    "u": 1e-6,
    "µ": 1e-6,
    "μ": 1e-6,
    "m": 1e-3,
    "k": 1e3,
    "M": 1e6,
    "G": 1e9,
}

# Unit spellings mapped to a canonical dimension tag.
_UNITS = {
    "H": "H",
    "F": "F",
    "Ohm": "Ohm",
    "ohm": "Ohm",
    "Ω": "Ohm",
    "R": "Ohm",
    "A": "A",
    "V": "V",
    "K": "K",
    "Hz": "Hz",
    "s": "s",
    "m": "m",
    "W": "W",
    "S": "S",
}

_NUMBER_RE = re.compile(r"^\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*(\S*)\s*$")


def parse_quantity(text: str) -> tuple[float, str | None]:
    """Parse ``text`` into ``(value_in_SI, dimension)``.

    ``dimension`` is ``None`` for a bare number.  Raises :class:`ConfigError`
    on anything unrecognized.
    """
    m = _NUMBER_RE.match(text)
    if not m:
        raise ConfigError(f"not a number: {text!r}")
    value = float(m.group(1))
    suffix = m.group(2)
    if not suffix:
        return value, None

    # Longest unit spelling first so 'mm' parses as milli+metre, 'm' as metre.
    for unit in sorted(_UNITS, key=len, reverse=True):
        if suffix == unit:
            return value, _UNITS[unit]
        if suffix.endswith(unit):
            prefix = suffix[: -len(unit)]
            if prefix in _PREFIXES:
                return value * _PREFIXES[prefix], _UNITS[unit]
    raise ConfigError(f"unknown unit suffix {suffix!r} in {text!r}")


def parse_typed(text: str, dimension: str | None) -> float:
    """Parse ``text`` and check it against the expected ``dimension``.

    A bare number is accepted for any dimension (taken as SI); a unit
    suffix must match the expected dimension exactly.
    """
    value, dim = parse_quantity(text)
    if dim is not None and dimension is not None and dim != dimension:
        raise ConfigError(f"expected a quantity in {dimension}, got {text!r}")
    if dim is not None and dimension is None:
        raise ConfigError(f"expected a dimensionless number, got {text!r}")
    return value
