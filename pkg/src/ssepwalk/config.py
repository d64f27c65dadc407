"""Plain-text run configuration: `key = value` lines, `#` comments.

The file format round-trips exactly: parse(render(config)) == config.
Values use repr for floats and hex for seeds so nothing is lost.
"""
from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass(frozen=True)
class RunConfig:
    rho: float | None = None
    lam: float | None = None
    horizon: float | None = None
    lattice: int | None = None
    replicas: int | None = None
    seed: int | None = None
    out: str | None = None
    environments: int | None = None
    walks_per_env: int | None = None
    epsilon: float | None = None
    t_grid: tuple[float, ...] | None = None
    workers: int | None = None
    no_log: bool | None = None


# file key -> (dataclass field, parser, renderer)
_KEYS = {
    "rho": ("rho", float, repr),
    "lambda": ("lam", float, repr),
    "T": ("horizon", float, repr),
    "L": ("lattice", int, str),
    "replicas": ("replicas", int, str),
    "seed": ("seed", lambda s: int(s, 0), lambda v: f"0x{v:x}"),
    "out": ("out", str, str),
    "environments": ("environments", int, str),
    "walks_per_env": ("walks_per_env", int, str),
    "epsilon": ("epsilon", float, repr),
    "t_grid": (
        "t_grid",
        lambda s: tuple(float(x) for x in s.split(",")),
        lambda v: ",".join(repr(x) for x in v),
    ),
    "workers": ("workers", int, str),
    "no_log": ("no_log", lambda s: s == "true", lambda v: "true" if v else "false"),
}
_FIELD_TO_KEY = {f: k for k, (f, _, _) in _KEYS.items()}


def render_config(config: RunConfig) -> str:
    lines = ["# ssepwalk run configuration"]
    for f in fields(RunConfig):
        value = getattr(config, f.name)
        if value is None:
            continue
        key = _FIELD_TO_KEY[f.name]
        lines.append(f"{key} = {_KEYS[key][2](value)}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> RunConfig:
    values: dict[str, object] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {line_no}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _KEYS:
            raise ValueError(f"line {line_no}: unknown key {key!r}")
        field_name, parser, _ = _KEYS[key]
        try:
            values[field_name] = parser(value)
        except ValueError as exc:
            raise ValueError(f"line {line_no}: bad value for {key}: {exc}") from exc
    return RunConfig(**values)


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="ascii") as fh:
        return parse_config(fh.read())
