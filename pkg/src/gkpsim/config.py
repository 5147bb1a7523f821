"""Run configuration: a plain-text file of ``[section]`` blocks with
``key = value`` lines, e.g.::

    [equation]
    p = 2
    q = 1
    lambda = -1

    [grid]
    nx = 256
    ny = 256
    scale_x = 10
    scale_y = 4

    [time]
    n_steps = 1000
    t_end = 0.1
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from typing import Optional, get_type_hints


class ConfigError(ValueError):
    """Malformed or invalid configuration."""


@dataclass(frozen=True)
class EquationBlock:
    p: int = 1
    q: int = 1
    lam: int = -1


@dataclass(frozen=True)
class GridBlock:
    nx: int = 256
    ny: int = 256
    scale_x: float = 5.0
    scale_y: float = 5.0


@dataclass(frozen=True)
class TimeBlock:
    t_end: float = 0.1
    h: Optional[float] = None
    n_steps: Optional[int] = None


@dataclass(frozen=True)
class InitialBlock:
    beta: float = 1.0
    snapshot: Optional[str] = None


@dataclass(frozen=True)
class SolverBlock:
    kind: str = "direct"
    closure: str = "a-only"
    delta_stop: float = 1e-3
    mass_stop: float = 0.1
    stop_on: str = "energy"


@dataclass(frozen=True)
class OutputBlock:
    directory: str = "out"
    diag_stride: int = 1
    snapshot_stride: int = 0
    slices: bool = True


@dataclass(frozen=True)
class NumericsBlock:
    delta_regularization: float = 1e-12
    contour_points: int = 32
    dealias: bool = False
    deterministic: bool = False
    threads: int = 1


@dataclass(frozen=True)
class FitBlock:
    # comma-separated ``norm_id:k_last`` pairs, e.g. ``linf_u:800,l2_uy_squared:800``
    norms: str = ""
    xmin_k_last: int = 0
    t_star_from: str = "linf_u"


@dataclass(frozen=True)
class RunConfig:
    equation: EquationBlock = field(default_factory=EquationBlock)
    grid: GridBlock = field(default_factory=GridBlock)
    time: TimeBlock = field(default_factory=TimeBlock)
    initial: InitialBlock = field(default_factory=InitialBlock)
    solver: SolverBlock = field(default_factory=SolverBlock)
    output: OutputBlock = field(default_factory=OutputBlock)
    numerics: NumericsBlock = field(default_factory=NumericsBlock)
    fit: FitBlock = field(default_factory=FitBlock)

    def validate(self) -> "RunConfig":
        t = self.time
        if (t.h is None) == (t.n_steps is None):
            raise ConfigError("time: give exactly one of 'h' and 'n_steps'")
        if t.t_end <= 0:
            raise ConfigError("time.t_end must be positive")
        if t.h is not None and t.h <= 0:
            raise ConfigError("time.h must be positive")
        if t.n_steps is not None and t.n_steps < 1:
            raise ConfigError("time.n_steps must be >= 1")
        if self.output.diag_stride < 1:
            raise ConfigError("output.diag_stride must be >= 1")
        if self.output.snapshot_stride < 0:
            raise ConfigError("output.snapshot_stride must be >= 0")
        if self.solver.kind not in ("direct", "rescaled"):
            raise ConfigError(f"solver.kind must be 'direct' or 'rescaled', got {self.solver.kind!r}")
        if self.equation.lam not in (-1, 1):
            raise ConfigError("equation.lambda must be -1 or 1")
        return self

    @property
    def h(self) -> float:
        return self.time.h if self.time.h is not None else self.time.t_end / self.time.n_steps

    @property
    def n_steps(self) -> int:
        if self.time.n_steps is not None:
            return self.time.n_steps
        return int(round(self.time.t_end / self.time.h))

    def fit_recipe(self) -> list[tuple[str, int]]:
        out = []
        for item in filter(None, (s.strip() for s in self.fit.norms.split(","))):
            name, _, k = item.partition(":")
            out.append((name.strip(), int(k)))
        return out


# file keys that differ from attribute names
_ALIASES = {("equation", "lambda"): "lam"}
_REVERSE = {(s, a): k for (s, k), a in _ALIASES.items()}


def _parse_value(raw: str, typ, where: str):
    raw = raw.strip()
    base = typ
    optional = getattr(typ, "__origin__", None) is not None and type(None) in typ.__args__
    if optional:
        base = next(a for a in typ.__args__ if a is not type(None))
        if raw.lower() in ("", "none"):
            return None
    try:
        if base is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if base is int:
            return int(raw)
        if base is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {base.__name__}") from None


def _block_types(section: str):
    block_cls = get_type_hints(RunConfig)[section]
    return block_cls, get_type_hints(block_cls)


def apply_overrides(cfg: RunConfig, pairs: dict[tuple[str, str], str]) -> RunConfig:
    """Return ``cfg`` with ``{(section, key): raw_value}`` applied.

    Unknown sections or keys raise ConfigError naming the offending field.
    """
    sections = {f.name for f in fields(RunConfig)}
    updates: dict[str, dict] = {}
    for (section, key), raw in pairs.items():
        if section not in sections:
            raise ConfigError(f"unknown section [{section}]")
        attr = _ALIASES.get((section, key), key)
        _, hints = _block_types(section)
        if attr not in hints:
            raise ConfigError(f"unknown key '{key}' in [{section}]")
        updates.setdefault(section, {})[attr] = _parse_value(raw, hints[attr], f"{section}.{key}")
    blocks = {name: dataclasses.replace(getattr(cfg, name), **vals) for name, vals in updates.items()}
    return dataclasses.replace(cfg, **blocks)


def parse_config_text(text: str, base: RunConfig | None = None, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"parse error: {exc}") from None
    pairs = {(s, k): v for s in parser.sections() for k, v in parser.items(s)}
    return apply_overrides(base or RunConfig(), pairs).validate()


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    """Read a config file; with ``base`` the file only overrides what it sets."""
    with open(path) as fh:
        text = fh.read()
    return parse_config_text(text, base, source=str(path))


def parse_set_option(item: str) -> tuple[tuple[str, str], str]:
    """``section.key=value`` as used by ``--set``."""
    key, sep, value = item.partition("=")
    section, dot, name = key.strip().partition(".")
    if not sep or not dot:
        raise ConfigError(f"override must look like section.key=value, got {item!r}")
    return (section, name), value


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        block = getattr(cfg, f.name)
        lines.append(f"[{f.name}]")
        for bf in fields(block):
            val = getattr(block, bf.name)
            key = _REVERSE.get((f.name, bf.name), bf.name)
            lines.append(f"{key} = {'none' if val is None else val}")
        lines.append("")
    return "\n".join(lines)
