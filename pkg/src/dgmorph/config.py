"""Run configuration: value objects, the flat key-value config format,
and its parser/writer.

The file format is INI-like: `[section]` headers and `key = value` lines,
`#` comments, whitespace-delimited value lists. Unknown sections or keys
are errors (configs are meant to be diffable and exact). All lengths in
meters, times in seconds, densities in kg/m^3.
"""

from dataclasses import dataclass, field, asdict

from .physics import SedimentParams


class ConfigError(ValueError):
    pass


@dataclass
class MeshSpec:
    kind: str = "strip"  # strip | file | lshape_flume | partial_dam
    nx: int = 10
    ny: int = 1
    x_min: float = 0.0
    x_max: float = 1.0
    y_min: float = 0.0
    y_max: float = 1.0
    path: str = ""
    dx: float = 0.05  # target cell size of the generated 2D flume meshes
    scale: str = "desk"  # partial_dam: desk | published grids

    def validate(self):
        if self.kind not in ("strip", "file", "lshape_flume", "partial_dam"):
            raise ConfigError(f"unknown mesh kind {self.kind!r}")
        if self.kind == "strip":
            if self.nx < 1 or self.ny < 1:
                raise ConfigError("strip mesh needs nx, ny >= 1")
            if not (self.x_max > self.x_min and self.y_max > self.y_min):
                raise ConfigError("degenerate strip extents")
        if self.kind == "file" and not self.path:
            raise ConfigError("mesh kind 'file' needs a path")
        if self.kind in ("lshape_flume",) and self.dx <= 0:
            raise ConfigError("flume mesh needs dx > 0")


@dataclass
class InitialSpec:
    kind: str = "lake"  # dam_break | solitary | lake | table
    h_left: float = 1.0
    h_right: float = 1.0
    x_dam: float = 0.0
    h0: float = 0.4  # solitary reference depth
    a0: float = 0.071  # solitary amplitude
    x0: float = 0.0  # solitary crest position
    h_const: float = 1.0
    path: str = ""

    def validate(self):
        if self.kind not in ("dam_break", "solitary", "lake", "table"):
            raise ConfigError(f"unknown initial condition {self.kind!r}")
        if self.kind == "dam_break" and (self.h_left < 0 or self.h_right < 0):
            raise ConfigError("dam-break depths must be non-negative")
        if self.kind == "solitary" and (self.h0 <= 0 or self.a0 <= 0):
            raise ConfigError("solitary wave needs h0 > 0 and a0 > 0")
        if self.kind == "table" and not self.path:
            raise ConfigError("tabulated initial condition needs a path")


@dataclass
class BedSpec:
    kind: str = "flat"  # flat | ramp | step
    b0: float = 0.0
    toe_x: float = 0.0  # ramp: b = b0 + max(0, (x - toe_x) * slope)
    slope: float = 0.0
    x_step: float = 0.0  # step: b0 for x <= x_step else b1
    b1: float = 0.0

    def validate(self):
        if self.kind not in ("flat", "ramp", "step"):
            raise ConfigError(f"unknown bed kind {self.kind!r}")


@dataclass
class NumericsSpec:
    dt: float = 0.1
    t_end: float = 1.0
    scheme: str = "euler"
    flux_scheme: str = "hll_dg"
    strang: bool = False
    alpha: float = 1.0
    sigma: float = 1.0
    breaking_threshold: float = 1.0
    h_wet: float = 1e-6
    limiter_m: float = 50.0
    dispersive_min_depth: float = 1e-3
    g: float = 9.81
    h0_datum: float = 0.0

    def validate(self):
        if self.dt <= 0 or self.t_end <= 0:
            raise ConfigError("dt and t_end must be positive")
        if self.scheme not in ("euler", "rk2"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.flux_scheme not in ("hll_dg", "np_hdg"):
            raise ConfigError(f"unknown flux scheme {self.flux_scheme!r}")


@dataclass
class OutputSpec:
    directory: str = "out"
    interval: float = 1.0  # gauge/audit cadence in seconds
    profile_times: tuple = ()

    def validate(self):
        if self.interval <= 0:
            raise ConfigError("output interval must be positive")


@dataclass
class BoundarySpec:
    # retags: (tag_name, x0, x1, y0, y1) boxes applied to boundary-edge midpoints
    retags: tuple = ()
    flow_state: tuple = ()  # (h, hu_x, hu_y, hc) weakly imposed far field

    def validate(self):
        for r in self.retags:
            if r[0] not in ("land", "flow", "radiation"):
                raise ConfigError(f"unknown boundary tag {r[0]!r}")
        if any(r[0] == "flow" for r in self.retags) and len(self.flow_state) != 4:
            raise ConfigError("flow boundaries need flow_state = h hux huy hc")


@dataclass
class RunConfig:
    name: str = "run"
    mesh: MeshSpec = field(default_factory=MeshSpec)
    initial: InitialSpec = field(default_factory=InitialSpec)
    bed: BedSpec = field(default_factory=BedSpec)
    sediment: SedimentParams = field(default_factory=SedimentParams)
    numerics: NumericsSpec = field(default_factory=NumericsSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    boundary: BoundarySpec = field(default_factory=BoundarySpec)
    gauges: tuple = ()  # (name, x, y)
    sections: tuple = ()  # (name, x0, y0, x1, y1, n)

    def validate(self):
        self.mesh.validate()
        self.initial.validate()
        self.bed.validate()
        self.numerics.validate()
        self.output.validate()
        self.boundary.validate()
        for s in self.sections:
            if int(s[5]) < 2:
                raise ConfigError(f"section {s[0]} needs at least 2 samples")
        return self


_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _parse_bool(v, key):
    try:
        return _BOOL[v.lower()]
    except KeyError:
        raise ConfigError(f"{key}: expected a boolean, got {v!r}") from None


def _split_sections(text, path):
    sections = {}
    current = None
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected 'key = value'")
        if current is None:
            raise ConfigError(f"{path}:{ln}: key before any [section]")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in sections[current]:
            raise ConfigError(f"{path}:{ln}: duplicate key {key!r}")
        sections[current][key] = val
    return sections


_SCALARS = {
    "mesh": {
        "kind": str, "nx": int, "ny": int, "x_min": float, "x_max": float,
        "y_min": float, "y_max": float, "path": str, "dx": float, "scale": str,
    },
    "initial": {
        "kind": str, "h_left": float, "h_right": float, "x_dam": float,
        "h0": float, "a0": float, "x0": float, "h_const": float, "path": str,
    },
    "bed": {"kind": str, "b0": float, "toe_x": float, "slope": float,
            "x_step": float, "b1": float},
    "numerics": {
        "dt": float, "t_end": float, "scheme": str, "flux_scheme": str,
        "strang": "bool", "alpha": float, "sigma": float,
        "breaking_threshold": float, "h_wet": float, "limiter_m": float,
        "dispersive_min_depth": float, "g": float, "h0_datum": float,
    },
    "output": {"directory": str, "interval": float, "profile_times": "floats"},
    "sediment": {
        "rho_s": float, "rho_w": float, "porosity": float, "theta_c": float,
        "d50": float, "phi_cal": float, "settling_velocity": "auto_float",
        "grass_a": float, "m_exp": float, "n_manning": float,
        "shields_form": str, "entrainment_form": str,
        "max_exchange_rate": float, "u_max": float, "friction_sign": float,
        "suspended": "bool",
    },
}


def _convert(section, key, val, kind):
    try:
        if kind is str:
            return val
        if kind is int:
            return int(val)
        if kind is float:
            return float(val)
        if kind == "bool":
            return _parse_bool(val, key)
        if kind == "floats":
            return tuple(float(t) for t in val.split())
        if kind == "auto_float":
            return None if val == "auto" else float(val)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {val!r}") from None
    raise AssertionError(kind)


def parse_config(path) -> RunConfig:
    with open(path) as f:
        text = f.read()
    return parse_config_text(text, str(path))


def parse_config_text(text, label="<config>") -> RunConfig:
    sections = _split_sections(text, label)
    cfg = RunConfig()
    known = set(_SCALARS) | {"run", "gauges", "sections", "boundary"}
    for sec in sections:
        if sec not in known:
            raise ConfigError(f"unknown section [{sec}]")

    if "run" in sections:
        for k, v in sections["run"].items():
            if k != "name":
                raise ConfigError(f"[run] unknown key {k!r}")
            cfg.name = v

    for sec, schema in _SCALARS.items():
        if sec not in sections:
            continue
        target = getattr(cfg, sec)
        fields = {}
        for k, v in sections[sec].items():
            if k not in schema:
                raise ConfigError(f"[{sec}] unknown key {k!r}")
            fields[k] = _convert(sec, k, v, schema[k])
        if sec == "sediment":
            base = asdict(cfg.sediment)
            base.update(fields)
            try:
                cfg.sediment = SedimentParams(**base)
            except ValueError as exc:
                raise ConfigError(f"[sediment] {exc}") from None
        else:
            for k, v in fields.items():
                setattr(target, k, v)

    # g and h_wet live in [numerics] and are shared into the parameter set
    if (cfg.sediment.g != cfg.numerics.g) or (cfg.sediment.h_wet != cfg.numerics.h_wet):
        base = asdict(cfg.sediment)
        base["g"] = cfg.numerics.g
        base["h_wet"] = cfg.numerics.h_wet
        cfg.sediment = SedimentParams(**base)

    if "gauges" in sections:
        gauges = []
        for k, v in sections["gauges"].items():
            parts = v.split()
            if len(parts) != 2:
                raise ConfigError(f"[gauges] {k}: expected 'x y'")
            gauges.append((k, float(parts[0]), float(parts[1])))
        cfg.gauges = tuple(gauges)

    if "sections" in sections:
        lines = []
        for k, v in sections["sections"].items():
            parts = v.split()
            if len(parts) != 5:
                raise ConfigError(f"[sections] {k}: expected 'x0 y0 x1 y1 n'")
            lines.append((k, float(parts[0]), float(parts[1]), float(parts[2]),
                          float(parts[3]), int(parts[4])))
        cfg.sections = tuple(lines)

    if "boundary" in sections:
        retags = []
        flow_state = ()
        for k, v in sections["boundary"].items():
            if k == "flow_state":
                parts = v.split()
                if len(parts) != 4:
                    raise ConfigError("[boundary] flow_state: expected 'h hux huy hc'")
                flow_state = tuple(float(p) for p in parts)
            elif k.startswith("retag"):
                parts = v.split()
                if len(parts) != 5:
                    raise ConfigError(f"[boundary] {k}: expected 'tag x0 x1 y0 y1'")
                retags.append((parts[0], *(float(p) for p in parts[1:])))
            else:
                raise ConfigError(f"[boundary] unknown key {k!r}")
        cfg.boundary = BoundarySpec(retags=tuple(retags), flow_state=flow_state)

    return cfg.validate()


def write_config(cfg: RunConfig, path):
    with open(path, "w") as f:
        f.write(config_text(cfg))


def config_text(cfg: RunConfig) -> str:
    out = [f"[run]\nname = {cfg.name}\n"]

    def sec(name, obj, keys):
        lines = [f"[{name}]"]
        for k in keys:
            v = getattr(obj, k)
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, tuple):
                v = " ".join(repr(float(t)) for t in v)
            elif isinstance(v, float):
                v = repr(float(v))
            lines.append(f"{k} = {v}")
        out.append("\n".join(lines) + "\n")

    sec("mesh", cfg.mesh, _SCALARS["mesh"].keys())
    sec("initial", cfg.initial, _SCALARS["initial"].keys())
    sec("bed", cfg.bed, _SCALARS["bed"].keys())
    sec("sediment", cfg.sediment, _SCALARS["sediment"].keys())
    sec("numerics", cfg.numerics, _SCALARS["numerics"].keys())
    sec("output", cfg.output, ["directory", "interval", "profile_times"])
    if cfg.gauges:
        out.append(
            "[gauges]\n"
            + "\n".join(f"{n} = {repr(x)} {repr(y)}" for n, x, y in cfg.gauges)
            + "\n"
        )
    if cfg.sections:
        out.append(
            "[sections]\n"
            + "\n".join(
                f"{n} = {repr(x0)} {repr(y0)} {repr(x1)} {repr(y1)} {int(k)}"
                for n, x0, y0, x1, y1, k in cfg.sections
            )
            + "\n"
        )
    if cfg.boundary.retags or cfg.boundary.flow_state:
        lines = ["[boundary]"]
        for i, r in enumerate(cfg.boundary.retags):
            lines.append(f"retag{i} = {r[0]} " + " ".join(repr(v) for v in r[1:]))
        if cfg.boundary.flow_state:
            lines.append("flow_state = " + " ".join(repr(v) for v in cfg.boundary.flow_state))
        out.append("\n".join(lines) + "\n")
    return "\n".join(out)
