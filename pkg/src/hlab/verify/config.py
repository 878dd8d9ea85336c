"""Flat ``key = value`` experiment configs with dotted keys."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from ..data import F_IDS, G_IDS, DataError, f_IDS, parse_id

EXPERIMENTS = ("homogenize", "two-scale", "lipschitz-sweep", "psi-decay", "kernel-sweep",
               "ntmf-sweep", "rellich-sweep", "w1p-sweep")
PROFILES = {"fast": ("1/8", "1/16", "1/32"), "deep": ("1/8", "1/16", "1/32", "1/64")}


class ConfigError(ValueError):
    pass


def _eps_list(text):
    out = []
    for tok in str(text).replace(";", ",").split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            v = float(Fraction(tok))
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad epsilon {tok!r}") from exc
        if v <= 0:
            raise ConfigError(f"epsilon must be positive, got {tok!r}")
        out.append(v)
    if not out:
        raise ConfigError("empty epsilon list")
    return tuple(sorted(set(out), reverse=True))


def _hrule(text):
    t = str(text).replace(" ", "")
    if not t.startswith("eps/"):
        raise ConfigError(f"h-rule must look like 'eps/16', got {text!r}")
    try:
        k = float(t[4:])
    except ValueError as exc:
        raise ConfigError(f"bad h-rule {text!r}") from exc
    if k < 4:
        raise ConfigError("h-rule must resolve the oscillation (h <= eps/4)")
    return k


def _pair(text):
    parts = [p for p in str(text).replace(";", ",").split(",") if p.strip()]
    if len(parts) != 2:
        raise ConfigError(f"expected 'x,y', got {text!r}")
    return tuple(float(p) for p in parts)


# key -> (parser, default)
SCHEMA = {
    "experiment.kind": (str, None),
    "coeff.name": (str, "laminate"),
    "coeff.c": (float, None),
    "coeff.c0": (float, None),
    "coeff.c1": (float, None),
    "coeff.k": (float, None),
    "coeff.coupling": (float, 0.0),
    "system.m": (int, 1),
    "domain.shape": (str, "disk"),
    "domain.n": (int, None),
    "sweep.eps": (_eps_list, None),
    "solver.tol": (float, 1e-10),
    "solver.ctol": (float, 1e-10),
    "solver.hrule": (_hrule, 16.0),
    "solver.precond": (str, "amg"),
    "data.g": (str, "cos-theta"),
    "data.F": (str, "zero"),
    "data.f": (str, "zero"),
    "seed": (int, 0),
    "cell.n": (int, 256),
    "ntmf.c0": (float, 2.0),
    "holder.gamma": (float, 0.5),
    "holder.samples": (int, 1000),
    "lp.p": (float, 4.0),
    "kernel.pairs": (int, 10),
    "kernel.source": (_pair, (0.0, 0.0)),
    "kernel.bins": (int, 48),
    "psi.method": (str, "solve"),
    "check.symmetric-tol": (float, 1e-8),
}


@dataclass
class Config:
    values: dict
    raw: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v

    @property
    def kind(self) -> str:
        return self.values["experiment.kind"]

    @property
    def eps_list(self):
        return self.values["sweep.eps"]

    def coefficient_params(self) -> dict:
        out = {}
        for k in ("c", "c0", "c1", "k"):
            v = self.values.get(f"coeff.{k}")
            if v is not None:
                out[k] = v
        return out

    def echo(self) -> dict:
        """Parsed values, JSON-friendly, in key order."""
        out = {}
        for k in sorted(self.values):
            v = self.values[k]
            out[k] = list(v) if isinstance(v, tuple) else v
        return out


def parse_text(text: str, profile: str = "fast", overrides: dict | None = None) -> Config:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ConfigError(f"line {lineno}: expected key = value, got {line.strip()!r}")
        k, v = (p.strip() for p in s.split("=", 1))
        if k in raw:
            raise ConfigError(f"line {lineno}: duplicate key {k!r}")
        raw[k] = v
    raw.update(overrides or {})
    return build(raw, profile)


def build(raw: dict, profile: str = "fast") -> Config:
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {tuple(PROFILES)}")
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    vals = {}
    for key, (parse, default) in SCHEMA.items():
        if key in raw and raw[key] is not None:
            try:
                vals[key] = raw[key] if isinstance(raw[key], (tuple, list)) and parse is not str else parse(raw[key])
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {raw[key]!r}") from exc
        else:
            vals[key] = default
    if isinstance(vals["sweep.eps"], list):
        vals["sweep.eps"] = tuple(sorted(vals["sweep.eps"], reverse=True))
    if vals["sweep.eps"] is None:
        vals["sweep.eps"] = _eps_list(",".join(PROFILES[profile]))
    if vals["experiment.kind"] is not None and vals["experiment.kind"] not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment kind {vals['experiment.kind']!r}; choose from {EXPERIMENTS}")
    if vals["system.m"] not in (1, 2):
        raise ConfigError("system.m must be 1 or 2")
    if vals["solver.precond"] not in ("jacobi", "amg", "none"):
        raise ConfigError(f"unknown preconditioner {vals['solver.precond']!r}")
    if vals["psi.method"] not in ("solve", "sampled"):
        raise ConfigError(f"unknown psi.method {vals['psi.method']!r}")
    for key, ids in (("data.g", G_IDS), ("data.F", F_IDS), ("data.f", f_IDS)):
        try:
            name, _ = parse_id(vals[key])
        except DataError as exc:
            raise ConfigError(str(exc)) from exc
        if name not in ids:
            raise ConfigError(f"unknown {key} id {vals[key]!r}; choose from {ids}")
    return Config(values=vals, raw=dict(raw))


def load(path, profile: str = "fast", overrides: dict | None = None) -> Config:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_text(text, profile, overrides)
