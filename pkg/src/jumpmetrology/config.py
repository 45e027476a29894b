"""Run configuration: an INI document with one section per concern.

Complex numbers are written ``re+imi`` (e.g. ``0+1i``); scalar entries may
use ``pi`` in simple arithmetic (``pi/10``). Phase grids are either a comma
list or ``start:stop:count`` (inclusive linspace). Serialisation writes
every value back out fully resolved, with floats in repr form, so
parse -> serialise -> parse is the identity.
"""

from __future__ import annotations

import ast
import configparser
import io
import math
import operator
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .network import REFERENCE_PHI2, FeedbackConfig, NetworkParams, cavity, feedback
from .trajectory import InitialState


class ConfigError(ValueError):
    pass


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}


def parse_number(text: str) -> float:
    """Evaluate a float literal or a small arithmetic expression in ``pi``."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](ev(node.operand))
        raise ConfigError(f"unsupported expression: {text!r}")

    try:
        value = ev(ast.parse(text.strip(), mode="eval"))
    except (SyntaxError, ZeroDivisionError) as exc:
        raise ConfigError(f"cannot parse number {text!r}: {exc}") from None
    if not math.isfinite(value):
        raise ConfigError(f"number must be finite: {text!r}")
    return value


def parse_complex(text: str) -> complex:
    s = text.strip().replace(" ", "")
    if s.endswith("i"):
        s = s[:-1] + "j"
    try:
        z = complex(s)
    except ValueError:
        raise ConfigError(f"cannot parse complex number {text!r}; expected e.g. 1+0.5i") from None
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ConfigError(f"complex number must be finite: {text!r}")
    return z


def format_complex(z: complex) -> str:
    sign = "-" if math.copysign(1.0, z.imag) < 0 else "+"
    return f"{z.real!r}{sign}{abs(z.imag)!r}i"


def parse_pair(text: str) -> tuple[complex, complex]:
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) != 2:
        raise ConfigError(f"expected two complex entries, got {text!r}")
    return parse_complex(parts[0]), parse_complex(parts[1])


def parse_float_list(text: str) -> tuple[float, ...]:
    text = text.strip()
    if not text:
        return ()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"range must be start:stop:count, got {text!r}")
        start, stop = parse_number(parts[0]), parse_number(parts[1])
        try:
            count = int(parts[2])
        except ValueError:
            raise ConfigError(f"range count must be an integer, got {parts[2]!r}") from None
        if count < 1:
            raise ConfigError("range count must be >= 1")
        return tuple(float(x) for x in np.linspace(start, stop, count))
    return tuple(parse_number(p) for p in text.split(",") if p.strip())


def _fmt_list(values) -> str:
    return ", ".join(repr(float(v)) for v in values)


@dataclass(frozen=True)
class RunConfig:
    master_seed: int
    network: NetworkParams = field(default_factory=lambda: NetworkParams.reference())
    feedback: FeedbackConfig = field(default_factory=FeedbackConfig.crossed)
    initial: InitialState = field(default_factory=InitialState)
    horizon: float = 10.0
    n_traj: int = 500
    sample_every: int = 100
    threshold: int = 5
    workers: int = 0
    phi_grid: tuple[float, ...] = ()
    signal_times: tuple[float, ...] = (0.5, 1.0, 10.0)
    phi_star: float = math.pi / 10
    delta_phi: float = 0.05
    uncertainty_times: tuple[float, ...] = (1.0, 2.0, 4.0, 6.0, 8.0, 10.0)
    n_subensembles: int = 10
    n_traj_per_sub: int = 1000
    fisher_result: str = ""
    fisher_n_max: int = 12
    fisher_cap: int = 14
    fisher_dt: float = 0.0  # 0 -> use network dt

    def __post_init__(self) -> None:
        if self.master_seed < 0:
            raise ConfigError("master_seed must be a non-negative integer")
        for name in ("n_traj", "sample_every", "n_traj_per_sub", "fisher_n_max", "fisher_cap"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.horizon <= 0:
            raise ConfigError("horizon must be positive")
        if self.threshold < 0:
            raise ConfigError("threshold must be non-negative")
        if self.n_subensembles < 2:
            raise ConfigError("n_subensembles must be >= 2")
        if self.delta_phi <= 0:
            raise ConfigError("delta_phi must be positive")
        if self.fisher_dt < 0:
            raise ConfigError("fisher dt must be positive (or 0 for the network dt)")
        for name in ("signal_times", "uncertainty_times"):
            if any(t <= 0 for t in getattr(self, name)):
                raise ConfigError(f"{name} must be positive")

    @property
    def effective_fisher_dt(self) -> float:
        return self.fisher_dt or self.network.dt

    def with_overrides(self, seed: int | None = None, workers: int | None = None) -> RunConfig:
        changes = {}
        if seed is not None:
            changes["master_seed"] = seed
        if workers is not None:
            changes["workers"] = workers
        return replace(self, **changes) if changes else self


_SCHEMA = {
    "network": {"phi1", "phi2", "phi_tilde", "kappa1", "kappa2", "dt", "eps_jump", "abort_population"},
    "feedback": {"beta_d1", "beta_d2"},
    "initial": {"mode", "gamma"},
    "run": {"horizon", "n_traj", "sample_every", "threshold", "master_seed", "workers"},
    "signal": {"phi_grid", "times"},
    "uncertainty": {"phi_star", "delta_phi", "times", "n_subensembles", "n_traj_per_sub", "fisher_result"},
    "fisher": {"n_max", "cap", "dt"},
}


def _int(text: str, key: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {text!r}") from None


def loads(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        unknown = set(cp[section]) - _SCHEMA[section]
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")

    def get(section, key):
        return cp.get(section, key, fallback=None)

    seed = get("run", "master_seed")
    if seed is None:
        raise ConfigError("[run] master_seed is mandatory")
    kw: dict = {"master_seed": _int(seed, "master_seed")}

    net = {}
    for key in ("phi2", "kappa1", "kappa2", "dt", "eps_jump", "abort_population"):
        if get("network", key) is not None:
            net[key] = parse_number(get("network", key))
    net.setdefault("phi2", REFERENCE_PHI2)
    if get("network", "phi1") is not None and get("network", "phi_tilde") is not None:
        raise ConfigError("give either phi1 or phi_tilde, not both")
    if get("network", "phi1") is not None:
        net["phi1"] = parse_number(get("network", "phi1"))
    else:
        net["phi1"] = net["phi2"] + parse_number(get("network", "phi_tilde") or "0")
    try:
        kw["network"] = NetworkParams(**net)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    if cp.has_section("feedback"):
        default = FeedbackConfig.crossed()
        b1 = parse_pair(get("feedback", "beta_d1")) if get("feedback", "beta_d1") else (default.beta_d1.a1, default.beta_d1.a2)
        b2 = parse_pair(get("feedback", "beta_d2")) if get("feedback", "beta_d2") else (default.beta_d2.a1, default.beta_d2.a2)
        kw["feedback"] = FeedbackConfig(feedback(*b1), feedback(*b2))

    if cp.has_section("initial"):
        mode = (get("initial", "mode") or "explicit").strip()
        gamma = parse_pair(get("initial", "gamma")) if get("initial", "gamma") else (1, 1)
        try:
            kw["initial"] = InitialState(mode, cavity(*gamma))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    run_keys = {"horizon": ("horizon", parse_number), "n_traj": ("n_traj", _int),
                "sample_every": ("sample_every", _int), "threshold": ("threshold", _int),
                "workers": ("workers", _int)}
    for key, (name, conv) in run_keys.items():
        if get("run", key) is not None:
            v = get("run", key)
            kw[name] = conv(v) if conv is parse_number else conv(v, key)

    if get("signal", "phi_grid") is not None:
        kw["phi_grid"] = parse_float_list(get("signal", "phi_grid"))
    if get("signal", "times") is not None:
        kw["signal_times"] = parse_float_list(get("signal", "times"))

    for key in ("phi_star", "delta_phi"):
        if get("uncertainty", key) is not None:
            kw[key] = parse_number(get("uncertainty", key))
    if get("uncertainty", "times") is not None:
        kw["uncertainty_times"] = parse_float_list(get("uncertainty", "times"))
    for key in ("n_subensembles", "n_traj_per_sub"):
        if get("uncertainty", key) is not None:
            kw[key] = _int(get("uncertainty", key), key)
    if get("uncertainty", "fisher_result") is not None:
        kw["fisher_result"] = get("uncertainty", "fisher_result").strip()

    for key, name in (("n_max", "fisher_n_max"), ("cap", "fisher_cap")):
        if get("fisher", key) is not None:
            kw[name] = _int(get("fisher", key), key)
    if get("fisher", "dt") is not None:
        kw["fisher_dt"] = parse_number(get("fisher", "dt"))

    try:
        return RunConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def to_sections(cfg: RunConfig, runtime: bool = True) -> dict[str, dict[str, str]]:
    """String form of every field. ``runtime=False`` leaves out ``workers``,
    which never changes results and so stays out of output provenance."""
    n = cfg.network
    fb = cfg.feedback
    sections = {
        "network": {
            "phi1": repr(n.phi1), "phi2": repr(n.phi2), "kappa1": repr(n.kappa1),
            "kappa2": repr(n.kappa2), "dt": repr(n.dt), "eps_jump": repr(n.eps_jump),
            "abort_population": repr(n.abort_population),
        },
        "feedback": {
            "beta_d1": f"{format_complex(fb.beta_d1.a1)}, {format_complex(fb.beta_d1.a2)}",
            "beta_d2": f"{format_complex(fb.beta_d2.a1)}, {format_complex(fb.beta_d2.a2)}",
        },
        "initial": {
            "mode": cfg.initial.mode,
            "gamma": f"{format_complex(cfg.initial.gamma.a1)}, {format_complex(cfg.initial.gamma.a2)}",
        },
        "run": _run_section(cfg),
        "signal": {"phi_grid": _fmt_list(cfg.phi_grid), "times": _fmt_list(cfg.signal_times)},
        "uncertainty": {
            "phi_star": repr(cfg.phi_star), "delta_phi": repr(cfg.delta_phi),
            "times": _fmt_list(cfg.uncertainty_times), "n_subensembles": str(cfg.n_subensembles),
            "n_traj_per_sub": str(cfg.n_traj_per_sub), "fisher_result": cfg.fisher_result,
        },
        "fisher": {"n_max": str(cfg.fisher_n_max), "cap": str(cfg.fisher_cap), "dt": repr(cfg.fisher_dt)},
    }
    if not runtime:
        del sections["run"]["workers"]
    return sections


def _run_section(cfg: RunConfig) -> dict[str, str]:
    return {
        "horizon": repr(cfg.horizon), "n_traj": str(cfg.n_traj),
        "sample_every": str(cfg.sample_every), "threshold": str(cfg.threshold),
        "master_seed": str(cfg.master_seed), "workers": str(cfg.workers),
    }


def dumps(cfg: RunConfig, runtime: bool = True) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_dict(to_sections(cfg, runtime))
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
