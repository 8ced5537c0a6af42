"""Key-value run configuration files.

Format: one `key = value` per line, `#` comments, blank lines ignored.
Booleans are true/false, tuples comma-separated. Every command writes the
resolved configuration it actually ran with next to its outputs.
"""

from __future__ import annotations


class ConfigError(ValueError):
    pass


def parse_config_text(text: str) -> dict:
    out = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read())


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    return str(v)


def write_config(path: str, values: dict, header: str = "") -> None:
    lines = [f"# {header}"] if header else []
    for k in sorted(values):
        lines.append(f"{k} = {format_value(values[k])}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def as_bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes"):
        return True
    if s.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected boolean, got {s!r}")


def as_int_tuple(s: str) -> tuple:
    return tuple(int(x) for x in s.split(",") if x.strip())


def as_str_tuple(s: str) -> tuple:
    return tuple(x.strip() for x in s.split(",") if x.strip())
