"""Experiment spec files: flat sectioned key-value text (INI syntax).

Example::

    [experiment]
    kind = fracmom
    seed = 1
    realizations = 200

    [model]
    d = 1
    n = 1
    mode = strict-lattice

    [domain]
    sites = 60

    [disorder]
    eta_max = 10

    [query]
    x = [[20]]
    separations = 4, 8, 12, 16
    s = 0.5
    re_z = 7
    im_z = 0.1, 0.01

Keys are case-insensitive. List values are comma separated; points and
configurations are JSON. ``output`` defaults to the spec path without
its suffix and is resolved relative to the spec file.
"""

from __future__ import annotations

import configparser
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import (
    Box,
    CoveringError,
    DisorderDistribution,
    InteractionSpec,
    ModelConfig,
    SingleSiteProfile,
)

KINDS = (
    "spectrum", "fracmom", "bs-scan", "correlator", "wegner", "lifshitz", "dynamical",
    "rescale-check", "iterate", "schedule", "initial-check", "subadd", "ct-check", "oracle",
)

# experiments that never touch a random operator
PURE_KINDS = ("iterate", "schedule", "rescale-check", "initial-check", "oracle")


class ConfigError(ValueError):
    """Unreadable or inconsistent experiment spec."""


@dataclass
class Section:
    """Typed read access to one section; remembers which keys were used."""

    name: str
    raw: dict
    used: set = field(default_factory=set)

    def has(self, key: str) -> bool:
        return key.lower() in self.raw

    def _get(self, key: str):
        k = key.lower()
        if k not in self.raw:
            raise ConfigError(f"missing key {self.name}.{key}")
        self.used.add(k)
        return self.raw[k].strip()

    def str(self, key: str, default=None):
        if default is not None and not self.has(key):
            return default
        return self._get(key)

    def float(self, key: str, default=None) -> float:
        if default is not None and not self.has(key):
            return float(default)
        text = self._get(key)
        try:
            val = float(text)
        except ValueError:
            raise ConfigError(f"{self.name}.{key}: expected a number, got {text!r}") from None
        if not math.isfinite(val):
            raise ConfigError(f"{self.name}.{key} must be finite")
        return val

    def int(self, key: str, default=None) -> int:
        val = self.float(key, default)
        if val != int(val):
            raise ConfigError(f"{self.name}.{key}: expected an integer, got {val}")
        return int(val)

    def floats(self, key: str, default=None) -> list:
        if default is not None and not self.has(key):
            return list(default)
        text = self._get(key)
        try:
            vals = [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
        except ValueError:
            raise ConfigError(f"{self.name}.{key}: expected a comma-separated list of numbers")
        if not vals:
            raise ConfigError(f"{self.name}.{key} is empty")
        return vals

    def json(self, key: str, default=None):
        if default is not None and not self.has(key):
            return default
        text = self._get(key)
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{self.name}.{key}: invalid JSON ({exc.msg})") from None

    def unused(self) -> list:
        return sorted(set(self.raw) - self.used)


@dataclass
class ExperimentSpec:
    kind: str
    seed: int
    realizations: int
    threads: int | None
    output: Path
    model: ModelConfig | None
    sections: dict
    text: str
    path: Path | None

    def section(self, name: str) -> Section:
        return self.sections.get(name) or Section(name, {})

    @property
    def query(self) -> Section:
        return self.section("query")

    @property
    def constants(self) -> Section:
        return self.section("constants")


def _vector(sec: Section, key: str, d: int) -> tuple:
    vals = sec.floats(key)
    if len(vals) == 1:
        vals = vals * d
    if len(vals) != d:
        raise ConfigError(f"{sec.name}.{key} needs 1 or {d} values")
    return tuple(vals)


def _domain(sec: Section, d: int, mode: str) -> tuple:
    """Boxes of the one-particle domain. ``sites = m`` is the open box (0, m+1)^d."""
    if sec.has("sites"):
        m = sec.int("sites")
        if m < 1:
            raise ConfigError("domain.sites must be at least 1")
        return (Box((0.0,) * d, (m + 1.0,) * d),)
    if sec.has("boxes"):
        boxes = sec.json("boxes")
        out = []
        for b in boxes:
            try:
                out.append(Box(tuple(map(float, b["lo"])), tuple(map(float, b["hi"]))))
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"domain.boxes: bad box {b!r} ({exc})") from None
        return tuple(out)
    if sec.has("lo") or sec.has("hi"):
        try:
            return (Box(_vector(sec, "lo", d), _vector(sec, "hi", d)),)
        except ValueError as exc:
            raise ConfigError(f"domain: {exc}") from None
    return ()


def build_model(sections: dict) -> ModelConfig:
    get = lambda name: sections.get(name) or Section(name, {})  # noqa: E731
    m, g, dom = get("model"), get("grid"), get("domain")
    ss, dis, w = get("single_site"), get("disorder"), get("interaction")
    d = m.int("d", 1)
    n = m.int("n", 1)
    mode = m.str("mode", "strict-lattice")
    try:
        single = SingleSiteProfile(ss.str("shape", "box"), ss.float("amplitude", 1.0),
                                   ss.float("r_u", 0.5))
        disorder = DisorderDistribution(dis.str("density", "uniform"), dis.float("eta_max", 1.0),
                                        dis.float("rate", 1.0))
        inter = InteractionSpec(w.str("kind", "none"), w.float("c_w", 0.0), w.float("mu_w", 1.0),
                                w.float("gamma_w", 1.0), w.float("p_w", 1.0), w.float("core", 1.0),
                                w.str("sign", "repulsive"))
        return ModelConfig(
            d=d, n=n, mode=mode, h=g.float("h", 1.0), domain=_domain(dom, d, mode),
            background=m.float("background", 0.0), background_cos=m.float("background_cos", 0.0),
            single_site=single, disorder=disorder, interaction=inter,
            alpha_W=m.float("alpha_w", 0.0),
        )
    except CoveringError as exc:
        raise ConfigError(f"covering condition: {exc}") from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def parse_spec(text: str, path: Path | None = None, seed: int | None = None,
               threads: int | None = None) -> ExperimentSpec:
    """Parse spec text. ``seed``/``threads`` override the file values."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=str(path or "<spec>"))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse spec: {exc}") from None
    sections = {name.lower(): Section(name.lower(), dict(parser[name])) for name in parser.sections()}
    if "experiment" not in sections:
        raise ConfigError("spec needs an [experiment] section")
    exp = sections["experiment"]
    kind = exp.str("kind")
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; choose from {', '.join(KINDS)}")
    the_seed = seed if seed is not None else exp.int("seed", 0)
    if the_seed < 0:
        raise ConfigError("seed must be nonnegative")
    count = exp.int("realizations", 1)
    if count < 1:
        raise ConfigError("experiment.realizations must be at least 1")
    file_threads = exp.int("threads", 0) or None
    the_threads = threads if threads is not None else file_threads
    base = path.parent if path is not None else Path.cwd()
    if exp.has("output"):
        out = Path(exp.str("output"))
        output = out if out.is_absolute() else base / out
    else:
        output = path.with_suffix("") if path is not None else Path("anderloc-result")
    model = None
    model_sections = ("model", "interaction", "domain", "disorder")
    if kind not in PURE_KINDS or any(s in sections for s in model_sections):
        model = build_model(sections)
    return ExperimentSpec(kind, the_seed, count, the_threads, output, model, sections, text, path)


def load_spec(path, seed: int | None = None, threads: int | None = None) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_spec(text, path, seed, threads)


def points_from(sec: Section, key: str, n: int, d: int) -> np.ndarray:
    """A configuration (n, d) from JSON; a bare number is broadcast to all coordinates."""
    raw = sec.json(key)
    arr = np.array(raw, dtype=float)
    if arr.ndim == 0:
        arr = np.full((n, d), float(arr))
    arr = arr.reshape(n, d) if arr.size == n * d else arr
    if arr.shape != (n, d):
        raise ConfigError(f"{sec.name}.{key}: expected {n} points in R^{d}")
    return arr
