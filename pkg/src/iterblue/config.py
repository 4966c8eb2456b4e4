"""Plain-text experiment configuration.

One ``key = value`` pair per line, ``#`` starts a comment.  Values are
numbers, bare words, bracketed comma lists (``[1, 0.5, 0.25]``), nested
lists for matrices (``[[1, 0], [0, 1]]``) or ``diag(a, b, ...)`` for
diagonal matrices.  Missing keys take the reference-experiment defaults::

    n_h = 5
    n_x = 3
    x_true = [1.0, 0.5, 0.25]
    h_mean = [0.0, 0.0, 0.0, 0.0, 0.0]
    c_hh = diag(1.0, 1.0, 1.0, 1.0, 1.0)
    c_ee = diag(0.0001, 1e-05, 1e-06, 1e-06, 1e-06)
    sigma_n_sq = 1e-06            # used by single-scenario runs
    sigma_grid = [1e-08, ...]     # 31 log-spaced points, 1e-8 .. 1e-3
    trials = 10000
    n_iter = 10
    seed = 0
    estimators = [ls, proposed, blue_perfect_model, blue_perfect_cww]
"""

from __future__ import annotations

import re

from iterblue.errors import ConfigError, IterBlueError
from iterblue.simulation import ScenarioConfig, SweepConfig

__all__ = ["parse_config", "format_config", "normalize_config", "KEYS"]

KEYS = (
    "n_h",
    "n_x",
    "x_true",
    "h_mean",
    "c_hh",
    "c_ee",
    "sigma_n_sq",
    "sigma_grid",
    "trials",
    "n_iter",
    "seed",
    "estimators",
)

_LINE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$")
_WORD = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _number(text: str, key: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"malformed number {text!r}", key, line) from None
    if value != value or value in (float("inf"), float("-inf")):
        raise ConfigError(f"non-finite number {text!r}", key, line)
    return value


def _integer(text: str, key: str, line: int) -> int:
    try:
        return int(text, 10)
    except ValueError:
        raise ConfigError(f"malformed integer {text!r}", key, line) from None


def _split_top(body: str, key: str, line: int) -> list[str]:
    # split on commas that are not nested inside brackets
    parts, depth, cur = [], 0, []
    for ch in body:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
            if depth < 0:
                raise ConfigError("unbalanced brackets", key, line)
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    if depth != 0:
        raise ConfigError("unbalanced brackets", key, line)
    tail = "".join(cur).strip()
    if tail or parts:
        parts.append(tail)
    if any(p == "" for p in parts):
        raise ConfigError("empty list element", key, line)
    return parts


def _vector(text: str, key: str, line: int) -> tuple[float, ...]:
    if not (text.startswith("[") and text.endswith("]")):
        raise ConfigError(f"expected a bracketed list, got {text!r}", key, line)
    items = _split_top(text[1:-1], key, line)
    if not items:
        raise ConfigError("empty list", key, line)
    return tuple(_number(t, key, line) for t in items)


def _matrix(text: str, key: str, line: int) -> tuple[tuple[float, ...], ...]:
    if text.startswith("diag(") and text.endswith(")"):
        diag = _vector("[" + text[5:-1] + "]", key, line)
        n = len(diag)
        return tuple(tuple(diag[i] if i == j else 0.0 for j in range(n)) for i in range(n))
    if not (text.startswith("[") and text.endswith("]")):
        raise ConfigError(f"expected diag(...) or a nested list, got {text!r}", key, line)
    rows = tuple(_vector(r, key, line) for r in _split_top(text[1:-1], key, line))
    if not rows or any(len(r) != len(rows) for r in rows):
        raise ConfigError("matrix must be square", key, line)
    return rows


def _words(text: str, key: str, line: int) -> tuple[str, ...]:
    if not (text.startswith("[") and text.endswith("]")):
        raise ConfigError(f"expected a bracketed list, got {text!r}", key, line)
    items = _split_top(text[1:-1], key, line)
    for w in items:
        if not _WORD.match(w):
            raise ConfigError(f"invalid name {w!r}", key, line)
    return tuple(items)


_PARSERS = {
    "n_h": _integer,
    "n_x": _integer,
    "x_true": _vector,
    "h_mean": _vector,
    "c_hh": _matrix,
    "c_ee": _matrix,
    "sigma_n_sq": _number,
    "sigma_grid": _vector,
    "trials": _integer,
    "n_iter": _integer,
    "seed": _integer,
    "estimators": _words,
}


def parse_config(text: str) -> SweepConfig:
    """Parse and validate configuration text, filling defaults.

    Raises
    ------
    ConfigError
        On unknown or repeated keys, malformed values, or violated
        invariants; the message names the key and line where possible.
    """
    values: dict[str, object] = {}
    where: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        m = _LINE.match(stripped)
        if not m:
            raise ConfigError(f"expected 'key = value', got {stripped!r}", line=lineno)
        key, val = m.groups()
        if key not in _PARSERS:
            raise ConfigError("unknown key", key, lineno)
        if key in values:
            raise ConfigError("duplicate key", key, lineno)
        if not val:
            raise ConfigError("missing value", key, lineno)
        values[key] = _PARSERS[key](val, key, lineno)
        where[key] = lineno

    def check(key: str, ok: bool, message: str) -> None:
        if key in values and not ok:
            raise ConfigError(message, key, where[key])

    check("trials", values.get("trials", 1) >= 1, "trials must be >= 1")
    check("n_iter", values.get("n_iter", 0) >= 0, "n_iter must be >= 0")
    check("seed", 0 <= values.get("seed", 0) < 2**64, "seed must be in [0, 2**64)")
    check("sigma_n_sq", values.get("sigma_n_sq", 0.0) >= 0, "sigma_n_sq must be >= 0")
    check("n_x", values.get("n_x", 1) >= 1, "n_x must be >= 1")
    check("n_h", values.get("n_h", 2) >= 2, "n_h must be >= 2")

    defaults = ScenarioConfig()
    n_x = values.get("n_x", len(values["x_true"]) if "x_true" in values else defaults.n_x)
    if "n_h" in values:
        n_h = values["n_h"]
    elif "c_ee" in values:
        n_h = len(values["c_ee"])
    elif "h_mean" in values:
        n_h = len(values["h_mean"])
    else:
        n_h = defaults.n_h
    for key, length, fallback in (
        ("x_true", n_x, defaults.x_true),
        ("h_mean", n_h, (0.0,) * n_h),
        ("c_hh", n_h, tuple(tuple(1.0 if i == j else 0.0 for j in range(n_h)) for i in range(n_h))),
        ("c_ee", n_h, defaults.c_ee),
    ):
        if key not in values:
            if len(fallback) != length:
                raise ConfigError(f"no default of size {length}; set it explicitly", key)
            values[key] = fallback
        elif len(values[key]) != length:
            size = "n_x" if key == "x_true" else "n_h"
            raise ConfigError(f"expected size {length} to match {size}", key, where[key])

    try:
        scenario = ScenarioConfig(
            n_h=n_h,
            n_x=n_x,
            x_true=values["x_true"],
            h_mean=values["h_mean"],
            c_hh=values["c_hh"],
            c_ee=values["c_ee"],
            sigma_n_sq=values.get("sigma_n_sq", defaults.sigma_n_sq),
            seed=values.get("seed", defaults.seed),
        )
        kwargs = {k: values[k] for k in ("sigma_grid", "trials", "n_iter", "estimators") if k in values}
        return SweepConfig(scenario=scenario, **kwargs)
    except IterBlueError as exc:
        key = next((k for k in KEYS if k in str(exc)), None)
        raise ConfigError(str(exc), key, where.get(key)) from exc


def _fmt_vector(v) -> str:
    return "[" + ", ".join(repr(float(x)) for x in v) + "]"


def _fmt_matrix(m) -> str:
    n = len(m)
    if all(m[i][j] == 0.0 for i in range(n) for j in range(n) if i != j):
        return "diag(" + ", ".join(repr(float(m[i][i])) for i in range(n)) + ")"
    return "[" + ", ".join(_fmt_vector(r) for r in m) + "]"


def format_config(cfg: SweepConfig) -> str:
    """Canonical text for ``cfg``; ``parse_config(format_config(cfg)) == cfg``."""
    s = cfg.scenario
    lines = [
        f"n_h = {s.n_h}",
        f"n_x = {s.n_x}",
        f"x_true = {_fmt_vector(s.x_true)}",
        f"h_mean = {_fmt_vector(s.h_mean)}",
        f"c_hh = {_fmt_matrix(s.c_hh)}",
        f"c_ee = {_fmt_matrix(s.c_ee)}",
        f"sigma_n_sq = {float(s.sigma_n_sq)!r}",
        f"sigma_grid = {_fmt_vector(cfg.sigma_grid)}",
        f"trials = {cfg.trials}",
        f"n_iter = {cfg.n_iter}",
        f"seed = {s.seed}",
        "estimators = [" + ", ".join(cfg.estimators) + "]",
    ]
    return "\n".join(lines) + "\n"


def normalize_config(text: str) -> str:
    """Canonical form of configuration text (defaults made explicit)."""
    return format_config(parse_config(text))
