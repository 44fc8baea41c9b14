"""Scenario configuration: ``key = value`` sections, strictly validated."""

import configparser
import dataclasses
from dataclasses import dataclass

from . import gp
from .ekf import SlamModel

DEFAULT_BIASES = ((0.0, 0.001, 0.0), (-0.001, -0.0005, 0.0), (0.001, -0.0005, 0.0))

TRAJECTORY_KINDS = ("waypoint-loop", "random-walk")
ODOMETRY_MODES = ("constant-bias", "gaussian", "both")
FIELD_KINDS = ("basis", "full-gp")
BIAS_FRAMES = ("world", "body")


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


@dataclass
class ScenarioConfig:
    m: int = 3
    N: int = 500
    dt: float = 0.1
    trajectory: str = "waypoint-loop"
    speed: float = 0.5
    region_lower: tuple = (-1.5, -1.5, -0.2)
    region_upper: tuple = (1.5, 1.5, 0.2)
    field_kind: str = "basis"
    domain_lower: tuple = None
    domain_upper: tuple = None
    margin: float = None  # default 3 * l_se
    M: int = 100
    sigma_se: float = 0.074
    l_se: float = 0.86
    sigma_y: float = 0.0042
    odometry_mode: str = "constant-bias"
    biases: tuple = None  # per-agent 3-vectors, m / step
    bias_frame: str = "world"
    odo_sigma_p: float = 0.0
    odo_sigma_q: float = 1e-5
    filter_sigma_p: float = 0.0022
    filter_sigma_q: float = 2e-5
    alpha: float = 0.0
    n_c: int = 1
    seed: int = 0
    grid_spacing: float = None  # default l_se / 4

    def __post_init__(self):
        if self.biases is None:
            self.biases = tuple(DEFAULT_BIASES[i % 3] for i in range(self.m))
        self.validate()

    def validate(self):
        problems = []

        def need(cond, msg):
            if not cond:
                problems.append(msg)

        need(isinstance(self.m, int) and self.m >= 1, "scenario.agents must be an integer >= 1")
        need(isinstance(self.N, int) and self.N >= 2, "scenario.steps must be an integer >= 2")
        need(self.dt > 0, "scenario.dt must be > 0")
        need(self.speed >= 0, "scenario.speed must be >= 0")
        need(self.trajectory in TRAJECTORY_KINDS, f"scenario.trajectory must be one of {TRAJECTORY_KINDS}")
        need(self.field_kind in FIELD_KINDS, f"scenario.field must be one of {FIELD_KINDS}")
        need(len(self.region_lower) == 3 and len(self.region_upper) == 3, "region corners must be 3-vectors")
        if len(self.region_lower) == 3 and len(self.region_upper) == 3:
            need(all(u >= l for l, u in zip(self.region_lower, self.region_upper)),
                 "scenario.region_upper must be >= region_lower")
        need((self.domain_lower is None) == (self.domain_upper is None),
             "domain.lower and domain.upper must be given together")
        if self.domain_lower is not None and self.domain_upper is not None:
            try:
                dom = gp.DomainBox(self.domain_lower, self.domain_upper)
                need(dom.contains(self.region_lower) and dom.contains(self.region_upper),
                     "sampling region must lie inside the domain")
            except ValueError as exc:
                problems.append(f"domain: {exc}")
        need(self.margin is None or self.margin >= 0, "domain.margin must be >= 0")
        need(isinstance(self.M, int) and self.M >= 1, "gp.basis_functions must be an integer >= 1")
        for name in ("sigma_se", "l_se"):
            need(getattr(self, name) > 0, f"gp.{name} must be > 0")
        need(self.sigma_y >= 0, "gp.sigma_y must be >= 0")
        need(self.odometry_mode in ODOMETRY_MODES, f"odometry.mode must be one of {ODOMETRY_MODES}")
        need(self.bias_frame in BIAS_FRAMES, f"odometry.bias_frame must be one of {BIAS_FRAMES}")
        need(len(self.biases) == self.m and all(len(b) == 3 for b in self.biases),
             "odometry.biases must list one 3-vector per agent")
        need(self.odo_sigma_p >= 0 and self.odo_sigma_q >= 0, "odometry sigmas must be >= 0")
        need(self.filter_sigma_p >= 0 and self.filter_sigma_q >= 0, "filter sigmas must be >= 0")
        need(0.0 <= self.alpha <= 1.0, "network.alpha must lie in [0, 1]")
        need(isinstance(self.n_c, int) and self.n_c >= 0, "network.n_c must be an integer >= 0")
        need(isinstance(self.seed, int) and self.seed >= 0, "run.seed must be a non-negative integer")
        need(self.grid_spacing is None or self.grid_spacing > 0, "run.grid_spacing must be > 0")
        if problems:
            raise ConfigError(problems)

    def replace(self, **changes):
        if changes.get("m", self.m) != self.m and "biases" not in changes:
            changes["biases"] = None
        return dataclasses.replace(self, **changes)

    # derived objects

    @property
    def domain_margin(self):
        return 3.0 * self.l_se if self.margin is None else self.margin

    @property
    def grid_step(self):
        return self.l_se / 4.0 if self.grid_spacing is None else self.grid_spacing

    @property
    def hyper(self):
        return gp.Hyperparameters(self.sigma_se, self.l_se, self.sigma_y)

    @property
    def domain(self):
        if self.domain_lower is not None:
            return gp.DomainBox(self.domain_lower, self.domain_upper)
        return gp.DomainBox.cube_around(self.region_lower, self.region_upper, self.domain_margin)

    def basis(self):
        return gp.select_basis_indices(self.M, self.domain)

    def model(self, basis=None):
        return SlamModel.from_sigmas(basis or self.basis(), self.hyper, self.filter_sigma_p, self.filter_sigma_q)


# section -> {ini key: (attribute, parser)}
def _vec(s):
    vals = tuple(float(v) for v in s.replace(",", " ").split())
    if len(vals) != 3:
        raise ValueError(f"expected 3 numbers, got {len(vals)}")
    return vals


def _vecs(s):
    return tuple(_vec(part) for part in s.split(";") if part.strip())


def _int(s):
    return int(s.strip())


_SCHEMA = {
    "scenario": {
        "agents": ("m", _int),
        "steps": ("N", _int),
        "dt": ("dt", float),
        "trajectory": ("trajectory", str.strip),
        "speed": ("speed", float),
        "region_lower": ("region_lower", _vec),
        "region_upper": ("region_upper", _vec),
        "field": ("field_kind", str.strip),
    },
    "domain": {
        "lower": ("domain_lower", _vec),
        "upper": ("domain_upper", _vec),
        "margin": ("margin", float),
    },
    "gp": {
        "basis_functions": ("M", _int),
        "sigma_se": ("sigma_se", float),
        "l_se": ("l_se", float),
        "sigma_y": ("sigma_y", float),
    },
    "odometry": {
        "mode": ("odometry_mode", str.strip),
        "biases": ("biases", _vecs),
        "bias_frame": ("bias_frame", str.strip),
        "sigma_p": ("odo_sigma_p", float),
        "sigma_q": ("odo_sigma_q", float),
    },
    "filter": {
        "sigma_p": ("filter_sigma_p", float),
        "sigma_q": ("filter_sigma_q", float),
    },
    "network": {
        "alpha": ("alpha", float),
        "n_c": ("n_c", _int),
    },
    "run": {
        "seed": ("seed", _int),
        "grid_spacing": ("grid_spacing", float),
    },
}


def parse_config_text(text):
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([str(exc)]) from None
    problems = []
    kwargs = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            problems.append(f"unknown section [{section}]")
            continue
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                problems.append(f"unknown key {section}.{key}")
                continue
            attr, conv = _SCHEMA[section][key]
            try:
                kwargs[attr] = conv(raw)
            except ValueError as exc:
                problems.append(f"{section}.{key}: {exc}")
    try:
        cfg = ScenarioConfig(**kwargs)
    except ConfigError as exc:
        problems.extend(exc.problems)
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path):
    with open(path) as fh:
        return parse_config_text(fh.read())


def _fmt(v):
    if isinstance(v, tuple) and v and isinstance(v[0], tuple):
        return "; ".join(_fmt(x) for x in v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def config_to_text(cfg):
    lines = []
    for section, keys in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (attr, _) in keys.items():
            val = getattr(cfg, attr)
            if val is None:
                continue
            lines.append(f"{key} = {_fmt(val)}")
        lines.append("")
    return "\n".join(lines)


def default_config_text():
    return config_to_text(ScenarioConfig())
