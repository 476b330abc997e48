"""Run configuration: flat JSON file plus command-line overrides."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .geometry import InterfaceCurve, make_curve
from .local_fe import PolySpaceTag
from .problems import DEFAULT_R0

MODES = ("interp", "solve", "verify")
FORMATS = ("csv", "md")


@dataclass
class RunConfig:
    mode: str = "interp"
    element: str = "q1"
    domain: tuple[float, float, float, float] = (-1.0, 1.0, -1.0, 1.0)
    curve: str = "circle"
    cx: float = 0.0
    cy: float = 0.0
    r: float = DEFAULT_R0
    a: float = 0.6
    b: float = 0.4
    alpha: float = 5.0
    beta_minus: float = 1.0
    beta_plus: float = 10000.0
    mesh_sizes: list[int] = field(default_factory=lambda: [40, 80, 160])
    epsilon: float = 0.4
    kappa_bar: float = 0.031
    lam: float = 0.5
    check_preconditions: bool = True
    quad_degree: int = 5
    sigma: float | None = None  # None: 10 * max(beta)
    symmetry: int = -1
    cg_tol: float = 1e-10
    seed: int = 0
    verify_samples: int = 1000
    output: str | None = None
    format: str = "csv"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.format not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}")
        PolySpaceTag.parse(self.element)
        self.domain = tuple(float(v) for v in self.domain)
        if len(self.domain) != 4 or not (self.domain[1] > self.domain[0] and self.domain[3] > self.domain[2]):
            raise ValueError("domain must be (x0, x1, y0, y1) with x1 > x0 and y1 > y0")
        self.mesh_sizes = [int(n) for n in self.mesh_sizes]
        if self.mode != "verify":
            if not self.mesh_sizes:
                raise ValueError("mesh_sizes is empty")
            if any(n < 1 for n in self.mesh_sizes) or any(b <= a for a, b in zip(self.mesh_sizes, self.mesh_sizes[1:])):
                raise ValueError("mesh_sizes must be positive and strictly increasing")
        for name in ("beta_minus", "beta_plus", "kappa_bar", "r", "a", "b", "cg_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.epsilon < math.sqrt(2.0) / 2.0:
            raise ValueError("epsilon must lie in (0, sqrt(2)/2)")
        if self.kappa_bar > 1.0:
            raise ValueError("kappa_bar must lie in (0, 1]")
        if not 0.0 <= self.lam < 1.0:
            raise ValueError("lambda must lie in [0, 1)")
        if self.quad_degree < 1:
            raise ValueError("quad_degree must be at least 1")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.symmetry not in (-1, 0, 1):
            raise ValueError("symmetry must be -1, 0 or 1")

    @property
    def tag(self) -> PolySpaceTag:
        return PolySpaceTag.parse(self.element)

    def make_curve(self) -> InterfaceCurve:
        if self.curve == "circle":
            return make_curve("circle", cx=self.cx, cy=self.cy, r=self.r)
        if self.curve == "ellipse":
            return make_curve("ellipse", cx=self.cx, cy=self.cy, a=self.a, b=self.b)
        raise ValueError(f"unknown curve {self.curve!r}")

    def penalty_sigma(self) -> float:
        return 10.0 * max(self.beta_minus, self.beta_plus) if self.sigma is None else self.sigma

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["domain"] = list(self.domain)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path, overrides: dict | None = None) -> "RunConfig":
        data = json.loads(Path(path).read_text())
        if not isinstance(data, dict):
            raise ValueError("configuration file must hold a JSON object")
        data.update(overrides or {})
        return cls.from_dict(data)
