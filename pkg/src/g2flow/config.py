"""Scenario files.

Grammar: INI-style sections, ``key = value`` lines and ``#`` comments
(whole-line or after a value). Recognized sections and keys:

    [scenario]  mode (identity_suite | flow | reduced_flow | reduction_check),
                output_dir
    [grid]      n, active_axes (comma separated), k (optional, must match)
    [params]    preset (heterotic | monotone), C, gamma, sigma, dt_safety,
                t_end, scheme, snapshot_every, allow_illposed
    [initial]   kind, eps, seed, dilaton_amplitude, modes
    [identity]  suites (comma separated), count

Numbers may be written as fractions, e.g. ``C = -4/3``.
"""

import configparser
from dataclasses import dataclass, field as dc_field, replace
from fractions import Fraction
from pathlib import Path

from .errors import ParseError, ValidationError
from .flow import FlowParams, PRESETS
from .grid import Grid

MODES = ("identity_suite", "flow", "reduced_flow", "reduction_check")
INITIAL_KINDS = {
    "flow": ("flat", "coclosed", "conformal", "perturbed"),
    "reduced_flow": ("coframe", "flat"),
    "reduction_check": ("coframe", "invariant", "flat"),
    "identity_suite": (),
}
KEYS = {
    "scenario": {"mode", "output_dir"},
    "grid": {"n", "active_axes", "k"},
    "params": {"preset", "C", "gamma", "sigma", "dt_safety", "t_end", "scheme",
               "snapshot_every", "allow_illposed"},
    "initial": {"kind", "eps", "seed", "dilaton_amplitude", "modes"},
    "identity": {"suites", "count"},
}


@dataclass
class InitialSpec:
    kind: str = "coclosed"
    eps: float = 0.01
    seed: int = 0
    dilaton_amplitude: float = None
    modes: int = 2


@dataclass
class ScenarioConfig:
    mode: str
    grid: Grid = None
    params: FlowParams = None
    initial: InitialSpec = dc_field(default_factory=InitialSpec)
    output_dir: Path = Path("out")
    suites: tuple = ("algebra", "conformal")
    count: int = 1000
    preset: str = None

    def with_overrides(self, seed=None, output=None, snapshot_every=None):
        cfg = replace(self)
        if seed is not None:
            cfg.initial = replace(cfg.initial, seed=int(seed))
        if output is not None:
            cfg.output_dir = Path(output)
        if snapshot_every is not None:
            if int(snapshot_every) < 1:
                raise ValidationError("snapshot_every", "must be >= 1")
            cfg.params = replace(cfg.params, snapshot_every=int(snapshot_every))
        return cfg


def _number(text, name):
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise ValidationError(name, f"not a number: {text!r}") from None


def _integer(text, name):
    try:
        return int(text.strip())
    except ValueError:
        raise ValidationError(name, f"not an integer: {text!r}") from None


def _boolean(text, name):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValidationError(name, f"not a boolean: {text!r}")


def _read(text):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",),
                                   comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("expected a [section] header", exc.lineno) from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ParseError(exc.message.split(": ", 1)[-1], exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ParseError(f"cannot parse {line.strip()!r}", lineno) from None
    return cp


def _line_of(text, section, key):
    cur = None
    for i, raw in enumerate(text.splitlines(), 1):
        s = raw.split("#", 1)[0].strip()
        if s.startswith("[") and s.endswith("]"):
            cur = s[1:-1].strip()
        elif cur == section and "=" in s and s.split("=", 1)[0].strip() == key:
            return i
    return None


def parse_config(text):
    cp = _read(text)
    for sec in cp.sections():
        if sec not in KEYS:
            raise ParseError(f"unknown section [{sec}]", _line_of_section(text, sec))
        for key in cp[sec]:
            if key not in KEYS[sec]:
                raise ParseError(f"unknown key {key!r} in [{sec}]", _line_of(text, sec, key))

    def get(sec, key, default=None):
        return cp[sec][key] if cp.has_option(sec, key) else default

    mode = get("scenario", "mode")
    if mode is None:
        raise ValidationError("scenario.mode", "missing")
    mode = mode.strip()
    if mode not in MODES:
        raise ValidationError("scenario.mode", f"must be one of {MODES}")
    cfg = ScenarioConfig(mode=mode)
    if get("scenario", "output_dir"):
        cfg.output_dir = Path(get("scenario", "output_dir").strip())

    if mode == "identity_suite":
        suites = get("identity", "suites")
        if suites:
            cfg.suites = tuple(s.strip() for s in suites.split(",") if s.strip())
            from .identities import SUITES
            bad = [s for s in cfg.suites if s not in SUITES]
            if bad:
                raise ValidationError("identity.suites", f"unknown suite(s) {bad}")
        if get("identity", "count"):
            cfg.count = _integer(get("identity", "count"), "identity.count")
            if cfg.count < 1:
                raise ValidationError("identity.count", "must be >= 1")
        return cfg

    # grid
    if not cp.has_section("grid"):
        raise ValidationError("grid", f"mode {mode} needs a [grid] section")
    n = _integer(get("grid", "n", "32"), "grid.n")
    axes_text = get("grid", "active_axes")
    if axes_text is None:
        raise ValidationError("grid.active_axes", "missing")
    axes = tuple(_integer(a, "grid.active_axes") for a in axes_text.split(",") if a.strip())
    if get("grid", "k") is not None and _integer(get("grid", "k"), "grid.k") != len(axes):
        raise ValidationError("grid.k", "does not match the number of active axes")
    if n < 8 or n & (n - 1):
        raise ValidationError("grid.n", "must be a power of two >= 8")
    try:
        cfg.grid = Grid(n, axes, 6 if mode == "reduced_flow" else 7)
    except ValueError as exc:
        raise ValidationError("grid.active_axes", str(exc)) from None
    if mode in ("reduced_flow", "reduction_check") and 6 in axes:
        raise ValidationError("grid.active_axes", "the circle axis 6 must stay inactive")

    # params
    kw = {}
    name = get("params", "preset")
    if name is not None:
        name = name.strip()
        if name not in PRESETS:
            raise ValidationError("params.preset", f"unknown preset {name!r}")
        kw.update(PRESETS[name])
        cfg.preset = name
    for key in ("C", "gamma", "sigma", "dt_safety", "t_end"):
        if get("params", key) is not None:
            kw[key] = _number(get("params", key), f"params.{key}")
    if get("params", "scheme") is not None:
        kw["scheme"] = get("params", "scheme").strip()
    if get("params", "snapshot_every") is not None:
        kw["snapshot_every"] = _integer(get("params", "snapshot_every"), "params.snapshot_every")
    if get("params", "allow_illposed") is not None:
        kw["allow_illposed"] = _boolean(get("params", "allow_illposed"), "params.allow_illposed")
    try:
        cfg.params = FlowParams(**kw)
    except ValidationError as exc:
        raise ValidationError(f"params.{exc.field}", str(exc).split(": ", 1)[-1]) from None

    # initial data
    ini = InitialSpec()
    if mode == "reduced_flow":
        ini.kind = "coframe"
    if get("initial", "kind") is not None:
        ini.kind = get("initial", "kind").strip()
    if ini.kind not in INITIAL_KINDS[mode]:
        raise ValidationError("initial.kind", f"mode {mode} accepts {INITIAL_KINDS[mode]}")
    if get("initial", "eps") is not None:
        ini.eps = _number(get("initial", "eps"), "initial.eps")
    if ini.eps < 0:
        raise ValidationError("initial.eps", "must be >= 0")
    if get("initial", "seed") is not None:
        ini.seed = _integer(get("initial", "seed"), "initial.seed")
        if not 0 <= ini.seed < 2 ** 64:
            raise ValidationError("initial.seed", "must be a 64-bit unsigned integer")
    if get("initial", "dilaton_amplitude") is not None:
        ini.dilaton_amplitude = _number(get("initial", "dilaton_amplitude"),
                                        "initial.dilaton_amplitude")
    if get("initial", "modes") is not None:
        ini.modes = _integer(get("initial", "modes"), "initial.modes")
        if ini.modes < 1 or 2 * ini.modes >= n // 2:
            raise ValidationError("initial.modes", "must be >= 1 and well below n/4")
    if ini.kind == "coframe" and axes != (0,):
        raise ValidationError("grid.active_axes", "coframe data needs active_axes = 0")
    cfg.initial = ini
    return cfg


def _line_of_section(text, sec):
    for i, raw in enumerate(text.splitlines(), 1):
        if raw.split("#", 1)[0].strip() == f"[{sec}]":
            return i
    return None


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError("config", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)
