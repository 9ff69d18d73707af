"""Run configuration: defaults per experiment, flat ``key = value`` files and overrides."""

from __future__ import annotations

import dataclasses
import enum
from pathlib import Path

from .ensemble import SchemeKind


class Experiment(enum.Enum):
    BENCHMARK = "benchmark"
    CONVERGENCE_SPACE = "convergence-space"
    CONVERGENCE_TIME = "convergence-time"
    PREDICTABILITY = "predictability"


class Formulation(enum.Enum):
    # lifted temperature with homogeneous wall data and a u1 source
    DECOMPOSED = "decomposed"
    # T = 1 / T = 0 on the vertical walls
    PHYSICAL = "physical"


@dataclasses.dataclass
class RunConfig:
    experiment: Experiment
    m: int = 32
    dt0: float = 1e-3
    t_final: float | None = None
    tolerance: float | None = None
    Pr: float = 1.0
    Ra: tuple = (100.0,)
    kappa_f: float = 1.0
    kappa_s: float = 1.0
    J: int = 2
    scheme: SchemeKind = SchemeKind.THIN_WALL
    include_u1_source: bool = True
    formulation: Formulation = Formulation.DECOMPOSED
    solid_cells: int = 2
    bv_delta_t: float = 1e-3
    bv_k_star: int = 5
    seed: int = 0
    eps: tuple | None = None
    mms_eps: float = 0.01
    m_list: tuple = ()
    dt_list: tuple = ()
    max_steps: int = 50000
    gamma_window: float = 0.05
    delta_max: float = 0.15
    symmetric_energy: bool = False
    vtk: bool = True
    outdir: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.m < 1:
            raise ValueError("m must be positive")
        if self.dt0 <= 0:
            raise ValueError("dt0 must be positive")
        if self.Pr <= 0 or self.kappa_f <= 0 or self.kappa_s <= 0:
            raise ValueError("Pr and conductivities must be positive")
        if any(r < 0 for r in self.Ra):
            raise ValueError("Rayleigh numbers must be non-negative")
        if self.J < 1:
            raise ValueError("J must be at least 1")
        if self.t_final is not None and self.t_final <= 0:
            raise ValueError("t_final must be positive")
        if self.tolerance is not None and self.tolerance < 0:
            raise ValueError("tolerance must be non-negative")
        if any(v <= 0 for v in self.dt_list) or any(v < 1 for v in self.m_list):
            raise ValueError("resolution lists must be positive")
        if self.scheme is SchemeKind.THICK_WALL and self.formulation is Formulation.DECOMPOSED:
            raise ValueError("the thick-wall scheme has no u1 source; use the physical formulation")
        if self.gamma_window <= 0 or self.delta_max <= 0:
            raise ValueError("gamma_window and delta_max must be positive")

    @classmethod
    def defaults(cls, experiment: Experiment | str, **overrides) -> "RunConfig":
        experiment = Experiment(experiment)
        base = {
            Experiment.BENCHMARK: dict(Pr=0.71, kappa_f=1.0, kappa_s=1.0, m=64, dt0=1e-3,
                                       tolerance=1e-5, Ra=(1e3, 1e4, 1e5, 1e6)),
            Experiment.CONVERGENCE_SPACE: dict(Pr=1.0, kappa_f=1.0, Ra=(100.0,), dt0=1e-4, t_final=1e-3,
                                               m_list=(4, 8, 16, 32)),
            Experiment.CONVERGENCE_TIME: dict(Pr=1.0, kappa_f=1.0, Ra=(100.0,), m=32, t_final=1.0,
                                              dt_list=(1 / 8, 1 / 16, 1 / 32, 1 / 64)),
            Experiment.PREDICTABILITY: dict(Pr=1.0, kappa_f=1.0, Ra=(1e2, 1e3, 1e4), m=32, dt0=1e-3,
                                            t_final=0.5),
        }[experiment]
        base.update(overrides)
        return cls(experiment=experiment, **base)

    # -- text form --------------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def with_overrides(self, pairs: dict) -> "RunConfig":
        """Return a copy with string-valued overrides parsed against the field types."""
        values = dataclasses.asdict(self)
        for key, raw in pairs.items():
            key = key.replace("-", "_")
            if key not in values:
                raise KeyError(f"unknown configuration key {key!r}")
            values[key] = _parse(key, raw) if isinstance(raw, str) else raw
        return RunConfig(**values)

    @classmethod
    def from_text(cls, text: str, base: "RunConfig | None" = None) -> "RunConfig":
        pairs = parse_key_values(text)
        if base is None:
            if "experiment" not in pairs:
                raise ValueError("configuration needs an 'experiment' key")
            base = cls.defaults(pairs.pop("experiment"))
        return base.with_overrides(pairs)

    @classmethod
    def from_file(cls, path, base: "RunConfig | None" = None) -> "RunConfig":
        return cls.from_text(Path(path).read_text(), base)


def parse_key_values(text: str) -> dict:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


_TUPLE_FLOAT = {"Ra", "eps", "dt_list"}
_TUPLE_INT = {"m_list"}
_INT = {"m", "J", "solid_cells", "bv_k_star", "seed", "max_steps"}
_FLOAT = {"dt0", "t_final", "tolerance", "Pr", "kappa_f", "kappa_s", "bv_delta_t", "mms_eps",
          "gamma_window", "delta_max"}
_BOOL = {"include_u1_source", "symmetric_energy", "vtk"}


def _parse(key: str, raw: str):
    raw = raw.strip()
    if raw.lower() == "none":
        return None
    if key == "experiment":
        return Experiment(raw)
    if key == "scheme":
        return SchemeKind(raw)
    if key == "formulation":
        return Formulation(raw)
    if key in _BOOL:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: not a boolean: {raw!r}")
    if key in _TUPLE_FLOAT:
        return tuple(_fraction(v) for v in raw.replace(",", " ").split())
    if key in _TUPLE_INT:
        return tuple(int(v) for v in raw.replace(",", " ").split())
    if key in _INT:
        return int(raw)
    if key in _FLOAT:
        return _fraction(raw)
    return raw


def _fraction(s: str) -> float:
    if "/" in s:
        num, den = s.split("/", 1)
        return float(num) / float(den)
    return float(s)


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)
