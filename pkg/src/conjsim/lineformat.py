"""Line-delimited KEY=VALUE text format shared by the exporters.

One record per line, space-separated KEY=VALUE tokens, numbers printed
with 17 significant digits so floats survive a round trip losslessly.
Every file starts with a version header the readers verify.
"""

from __future__ import annotations

MISSING = "NA"


class FormatVersionError(ValueError):
    """File header missing or of an unsupported version."""


class LineFormatError(ValueError):
    """A data line does not parse; carries the 1-based line number."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


def format_float(x: float) -> str:
    return f"{x:.17g}"


def format_value(value) -> str:
    if value is None:
        return MISSING
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return format_float(value)
    text = str(value)
    if " " in text or "=" in text or not text:
        raise ValueError(f"value {text!r} cannot be encoded in KEY=VALUE format")
    return text


def header_line(kind: str, version: int = 1) -> str:
    return f"#CONJSIM {kind} V{version}"


def check_header(line: str, kind: str, version: int = 1) -> None:
    expected = header_line(kind, version)
    if line.rstrip("\r\n") != expected:
        raise FormatVersionError(
            f"expected header {expected!r}, found {line.strip()!r}"
        )


def kv_line(pairs) -> str:
    return " ".join(f"{key}={format_value(value)}" for key, value in pairs)


def parse_kv_line(line: str, line_number: int) -> dict[str, str]:
    fields: dict[str, str] = {}
    for token in line.split():
        key, sep, value = token.partition("=")
        if not sep or not key:
            raise LineFormatError(f"malformed token {token!r}", line_number)
        if key in fields:
            raise LineFormatError(f"duplicate key {key!r}", line_number)
        fields[key] = value
    return fields


def take_float(fields: dict[str, str], key: str, line_number: int) -> float:
    try:
        return float(fields.pop(key))
    except KeyError:
        raise LineFormatError(f"missing field {key}", line_number) from None
    except ValueError:
        raise LineFormatError(f"field {key} is not a number", line_number) from None


def take_optional_float(fields: dict[str, str], key: str, line_number: int):
    raw = fields.pop(key, MISSING)
    if raw == MISSING:
        return None
    try:
        return float(raw)
    except ValueError:
        raise LineFormatError(f"field {key} is not a number", line_number) from None


def take_str(fields: dict[str, str], key: str, line_number: int) -> str:
    try:
        return fields.pop(key)
    except KeyError:
        raise LineFormatError(f"missing field {key}", line_number) from None
