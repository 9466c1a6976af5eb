"""Run configuration: INI-style text with bracketed blocks, key = value.

parse_config validates everything it can decide statically and reports
every violation at once, not just the first.  Grid-dependent checks
(positivity of sampled fields) happen at model discretization.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .expressions import ExpressionError, as_field_fn
from .grid import GridError, GridSpec
from .model import InfeasibleModel, ModelSpec
from .solver import SolveOptions

COMMANDS = ("solve-td", "solve-stat", "diagnose", "refine", "kernel-check")

_SECTIONS = {
    "run": {"command"},
    "model": {"r", "q", "dim", "T", "c1", "c2", "m0", "phi_T"},
    "grid": {"n_space", "n_time", "ladder"},
    "solver": {"penalty", "max_iters", "gap_tol", "residual_tol", "seed"},
    "output": {"dir", "checkpoint_every", "congestion_s"},
}

_MODEL_DEFAULTS = {"c1": "1", "c2": "1", "m0": "1", "phi_T": "0"}
_SOLVER_DEFAULTS = {
    "penalty": 1.0,
    "max_iters": 20000,
    "gap_tol": 1e-4,
    "residual_tol": 1e-6,
    "seed": 0,
}


class ConfigError(ValueError):
    """Carries the complete list of violations found in one config."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {e}" for e in self.errors))


@dataclass
class RunConfig:
    command: str | None
    model: ModelSpec
    grid: GridSpec | None
    ladder: list[int] | None
    solve: SolveOptions
    out_dir: Path
    checkpoint_every: int = 0
    congestion_s: float = 1.0
    expressions: dict = field(default_factory=dict)

    def ladder_grids(self):
        if not self.ladder:
            raise ConfigError(["refine needs 'ladder' in the [grid] block"])
        base = self.grid
        return [
            GridSpec(dim=self.model.dim, n_space=n,
                     n_time=base.n_time if base else 0,
                     T=self.model.T if (base and base.n_time) else 0.0)
            for n in self.ladder
        ]


def _get(parser, section, key, default=None):
    if parser.has_option(section, key):
        return parser.get(section, key)
    return default


def parse_config(text: str, command: str | None = None) -> RunConfig:
    """Parse and fully validate one configuration document."""
    errors = []
    parser = configparser.ConfigParser(
        inline_comment_prefixes=("#",), interpolation=None, strict=True
    )
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from exc

    for section in parser.sections():
        if section not in _SECTIONS:
            errors.append(f"unknown section [{section}]")
            continue
        for key in parser.options(section):
            if key not in _SECTIONS[section]:
                errors.append(f"unknown key {key!r} in section [{section}]")

    def number(section, key, conv, default=None, cond=None, why=""):
        raw = _get(parser, section, key, None)
        if raw is None:
            return default
        try:
            value = conv(raw)
        except ValueError:
            errors.append(f"[{section}] {key} = {raw!r} is not a valid {conv.__name__}")
            return default
        if cond is not None and not cond(value):
            errors.append(f"[{section}] {key} = {raw!r}: {why}")
            return default
        return value

    cmd = command or _get(parser, "run", "command")
    if cmd is not None and cmd not in COMMANDS:
        errors.append(f"unknown command {cmd!r}; expected one of {', '.join(COMMANDS)}")

    r = number("model", "r", float, 2.0, lambda v: v > 1.0,
               "Hamiltonian growth exponent must be > 1")
    q = number("model", "q", float, 2.0, lambda v: v > 1.0,
               "coupling growth exponent must be > 1")
    dim = number("model", "dim", int, 1, lambda v: v in (1, 2), "dim must be 1 or 2")
    T = number("model", "T", float, 1.0, lambda v: v > 0.0, "horizon must be > 0")

    exprs = {}
    fns = {}
    for key, default in _MODEL_DEFAULTS.items():
        raw = _get(parser, "model", key, default)
        exprs[key] = raw
        try:
            fns[key] = as_field_fn(raw, dim if dim in (1, 2) else 1)
        except ExpressionError as exc:
            errors.append(f"[model] {key} = {raw!r}: {exc}")
            fns[key] = None

    n_space = number("grid", "n_space", int, 32,
                     lambda v: v >= 4 and (v & (v - 1)) == 0,
                     "n_space must be a power of two, at least 4")
    n_time = number("grid", "n_time", int, 0, lambda v: v >= 0, "n_time must be >= 0")

    ladder = None
    raw_ladder = _get(parser, "grid", "ladder")
    if raw_ladder is not None:
        try:
            ladder = [int(tok) for tok in raw_ladder.replace(",", " ").split()]
        except ValueError:
            errors.append(f"[grid] ladder = {raw_ladder!r} is not a list of integers")
        else:
            bad = [n for n in ladder if n < 4 or (n & (n - 1)) != 0]
            if bad:
                errors.append(f"[grid] ladder entries must be powers of two >= 4, got {bad}")
            if ladder != sorted(ladder) or len(ladder) != len(set(ladder)):
                errors.append("[grid] ladder must be strictly increasing")

    penalty = number("solver", "penalty", float, _SOLVER_DEFAULTS["penalty"],
                     lambda v: v > 0.0, "penalty must be > 0")
    max_iters = number("solver", "max_iters", int, _SOLVER_DEFAULTS["max_iters"],
                       lambda v: v >= 1, "max_iters must be >= 1")
    gap_tol = number("solver", "gap_tol", float, _SOLVER_DEFAULTS["gap_tol"],
                     lambda v: v > 0.0, "gap_tol must be > 0")
    residual_tol = number("solver", "residual_tol", float, _SOLVER_DEFAULTS["residual_tol"],
                          lambda v: v > 0.0, "residual_tol must be > 0")
    seed = number("solver", "seed", int, _SOLVER_DEFAULTS["seed"],
                  lambda v: v >= 0, "seed must be a nonnegative integer")

    out_dir = Path(_get(parser, "output", "dir", "out"))
    checkpoint_every = number("output", "checkpoint_every", int, 0,
                              lambda v: v >= 0, "checkpoint_every must be >= 0")
    congestion_s = number("output", "congestion_s", float, 1.0,
                          lambda v: v >= 1.0, "congestion exponent must be >= 1")

    if cmd == "solve-td" and (n_time or 0) < 1:
        errors.append("solve-td needs n_time >= 1 in the [grid] block")
    if cmd == "solve-stat" and (n_time or 0) != 0:
        errors.append("solve-stat needs n_time = 0 in the [grid] block")

    if errors:
        raise ConfigError(errors)

    model = ModelSpec(
        r=r, q=q, dim=dim, T=T,
        c1=fns["c1"], c2=fns["c2"], m0=fns["m0"], phi_T=fns["phi_T"],
        name="config",
    )
    try:
        grid = GridSpec(dim=dim, n_space=n_space, n_time=n_time,
                        T=T if n_time else 0.0)
    except GridError as exc:
        raise ConfigError([str(exc)]) from exc

    return RunConfig(
        command=cmd,
        model=model,
        grid=grid,
        ladder=ladder,
        solve=SolveOptions(
            penalty=penalty, max_iters=max_iters, gap_tol=gap_tol,
            residual_tol=residual_tol, seed=seed,
        ),
        out_dir=out_dir,
        checkpoint_every=checkpoint_every,
        congestion_s=congestion_s,
        expressions=exprs,
    )


def parse_config_file(path, command: str | None = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"config file {path} does not exist"])
    return parse_config(path.read_text(encoding="utf-8"), command=command)
