"""Experiment configuration files.

One format, TOML, with ``version = 1``::

    version = 1
    d_max = 2.0                      # delay bound, in periods
    algorithms = ["staircase", "greedy"]
    theta_cap = 1e6                  # optional

    [system]
    W = 10
    K = 10
    c = 1.0
    p_idle = 0.55

    [arrivals]
    transition = [[0.9, 0.1], [0.5, 0.5]]
    values = [1.0, 7.0]

    [sweep]                          # optional
    alpha = [0.5, 1.0, 1.5]

    [sim]                            # optional
    horizon = 1000000
    seed = 1
    warmup = 10000                   # optional, default horizon // 100
    thresholds = [0, 1, 2, 3]        # optional, default 0..30
"""
from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .arrivals import MarkovArrivalProcess
from .errors import ConfigError
from .ld import THETA_CAP
from .optimizers import Algorithm
from .policy import SystemParams
from .queue_sim import SimConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CONFIG_VERSION = 1
DEFAULT_THRESHOLDS = tuple(range(31))


@dataclass(frozen=True)
class ExperimentConfig:
    params: SystemParams
    arrivals: MarkovArrivalProcess
    d_max: float
    algorithms: tuple[str, ...] = ("staircase",)
    sweep: tuple[float, ...] | None = None
    sim: SimConfig | None = None
    thresholds: tuple[int, ...] = DEFAULT_THRESHOLDS
    theta_cap: float = THETA_CAP
    source: str | None = field(default=None, compare=False)


class _Locator:
    """Best-effort line numbers for keys, for error messages."""

    def __init__(self, text: str):
        self.lines = text.splitlines()

    def line_of(self, section: str | None, key: str) -> int | None:
        current = None
        for i, raw in enumerate(self.lines, start=1):
            line = raw.strip()
            m = re.match(r"^\[([^\[\]]+)\]", line)
            if m:
                current = m.group(1).strip()
                continue
            if current == section and re.match(rf"^{re.escape(key)}\s*=", line):
                return i
        return None


def _fail(loc: _Locator, section, key, msg):
    name = f"{section}.{key}" if section else key
    line = loc.line_of(section, key)
    where = f" (line {line})" if line else ""
    raise ConfigError(f"{name}{where}: {msg}")


def _get(loc, table, section, key, kind, required=True, default=None):
    if key not in table:
        if required:
            name = f"{section}.{key}" if section else key
            raise ConfigError(f"{name}: missing required field")
        return default
    value = table[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            _fail(loc, section, key, f"expected a number, got {value!r}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            _fail(loc, section, key, f"expected an integer, got {value!r}")
        return value
    if kind is list:
        if not isinstance(value, list):
            _fail(loc, section, key, f"expected an array, got {value!r}")
        return value
    return value


def _section(loc, doc, name, required=True):
    if name not in doc:
        if required:
            raise ConfigError(f"[{name}]: missing required section")
        return None
    if not isinstance(doc[name], dict):
        raise ConfigError(f"{name}: expected a table")
    return doc[name]


def _numbers(loc, section, key, seq):
    out = []
    for i, x in enumerate(seq):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            _fail(loc, section, key, f"entry {i} is not a number: {x!r}")
        out.append(float(x))
    return out


def parse_config_text(text: str, source: str | None = None) -> ExperimentConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from None
    loc = _Locator(text)

    version = _get(loc, doc, None, "version", int)
    if version != CONFIG_VERSION:
        _fail(loc, None, "version", f"unsupported version {version}, expected {CONFIG_VERSION}")

    d_max = _get(loc, doc, None, "d_max", float)
    if not d_max > 0:
        _fail(loc, None, "d_max", f"must be positive, got {d_max}")
    theta_cap = _get(loc, doc, None, "theta_cap", float, required=False, default=THETA_CAP)
    if not theta_cap > 0:
        _fail(loc, None, "theta_cap", f"must be positive, got {theta_cap}")

    algs = _get(loc, doc, None, "algorithms", list, required=False, default=["staircase"])
    valid = [a.value for a in Algorithm]
    for a in algs:
        if a not in valid:
            _fail(loc, None, "algorithms", f"unknown algorithm {a!r}; choose from {valid}")
    if not algs:
        _fail(loc, None, "algorithms", "must not be empty")

    sysd = _section(loc, doc, "system")
    W = _get(loc, sysd, "system", "W", int)
    K = _get(loc, sysd, "system", "K", int)
    c = _get(loc, sysd, "system", "c", float)
    p_idle = _get(loc, sysd, "system", "p_idle", float)
    if W < 1:
        _fail(loc, "system", "W", f"must be >= 1, got {W}")
    if K < W:
        _fail(loc, "system", "K", f"must satisfy K >= W (W={W}), got {K}")
    if not c > 0:
        _fail(loc, "system", "c", f"must be positive, got {c}")
    if not 0 < p_idle < 1:
        _fail(loc, "system", "p_idle", f"must lie in (0, 1), got {p_idle}")
    params = SystemParams(W, K, c, p_idle)

    arr = _section(loc, doc, "arrivals")
    rows = _get(loc, arr, "arrivals", "transition", list)
    values = _numbers(loc, "arrivals", "values", _get(loc, arr, "arrivals", "values", list))
    M = len(values)
    if M == 0:
        _fail(loc, "arrivals", "values", "must not be empty")
    if len(rows) != M:
        _fail(loc, "arrivals", "transition", f"expected {M} rows to match values, got {len(rows)}")
    P = []
    for m, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != M:
            _fail(loc, "arrivals", "transition", f"row {m} must have {M} entries")
        row = _numbers(loc, "arrivals", "transition", row)
        if any(x < 0 or x > 1 for x in row):
            _fail(loc, "arrivals", "transition", f"row {m} has entries outside [0, 1]")
        if abs(sum(row) - 1.0) > 1e-12:
            _fail(loc, "arrivals", "transition", f"row {m} sums to {sum(row)!r}, expected 1")
        P.append(row)
    if any(v < 0 for v in values):
        _fail(loc, "arrivals", "values", "entries must be nonnegative")
    try:
        arrivals = MarkovArrivalProcess(P, values)
    except ValueError as exc:
        _fail(loc, "arrivals", "transition", str(exc))

    sweep = None
    sw = _section(loc, doc, "sweep", required=False)
    if sw is not None:
        alphas = _numbers(loc, "sweep", "alpha", _get(loc, sw, "sweep", "alpha", list))
        if not alphas:
            _fail(loc, "sweep", "alpha", "must not be empty")
        if any(a <= 0 for a in alphas):
            _fail(loc, "sweep", "alpha", "scaling factors must be positive")
        if any(b <= a for a, b in zip(alphas, alphas[1:])):
            _fail(loc, "sweep", "alpha", "scaling factors must be strictly increasing")
        sweep = tuple(alphas)

    sim = None
    thresholds = DEFAULT_THRESHOLDS
    sm = _section(loc, doc, "sim", required=False)
    if sm is not None:
        horizon = _get(loc, sm, "sim", "horizon", int)
        seed = _get(loc, sm, "sim", "seed", int, required=False, default=0)
        warmup = _get(loc, sm, "sim", "warmup", int, required=False, default=None)
        try:
            sim = SimConfig(horizon=horizon, seed=seed, warmup=warmup)
        except ValueError as exc:
            raise ConfigError(f"sim: {exc}") from None
        th = _get(loc, sm, "sim", "thresholds", list, required=False, default=None)
        if th is not None:
            if not th or any(isinstance(d, bool) or not isinstance(d, int) or d < 0 for d in th):
                _fail(loc, "sim", "thresholds", "must be a nonempty list of nonnegative integers")
            thresholds = tuple(sorted(set(th)))

    return ExperimentConfig(
        params=params,
        arrivals=arrivals,
        d_max=d_max,
        algorithms=tuple(algs),
        sweep=sweep,
        sim=sim,
        thresholds=thresholds,
        theta_cap=theta_cap,
        source=source,
    )


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, source=str(path))


def demo_config_path(name: str = "demo_sweep.toml") -> Path:
    """Path of a config shipped inside the package."""
    return Path(__file__).parent / "configs" / name
