"""JSON run configuration, validated before any computation."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import exponent as expo
from . import functions as fn
from .error import StudySetup
from .fem import SolverOptions
from .nfunction import VARIANTS


class ConfigError(ValueError):
    """Unreadable, malformed or inconsistent configuration."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MeshSection(_Strict):
    n0: int = Field(4, ge=1)
    levels: int = Field(0, ge=0)
    input: Optional[str] = None  # existing pxmesh file used instead of generation


class SolverSection(_Strict):
    tol: float = Field(1e-10, ge=0.0)
    max_iter: int = Field(50, ge=1)
    kappa_solve: float = Field(1e-7, ge=0.0)
    linear: Literal["auto", "direct", "cg"] = "auto"


class StudySection(_Strict):
    assert_eoc: Optional[float] = None
    plot: bool = False


PROBE_NAMES = (
    "hammer", "young", "shift_sim", "double_shift", "shift_ch", "shifted2", "shiftedindex",
    "ellipticity", "key_estimate", "shifted_key", "poincare", "interp_stability",
    "interp_approximability",
)


class ProbeSection(_Strict):
    names: list[str] = Field(default_factory=lambda: ["hammer", "key_estimate"])
    draws: int = Field(10_000, ge=1)
    sweep_draws: int = Field(16, ge=1)
    kappas: Optional[list[float]] = None
    resolution: int = Field(64, ge=2)
    m: float = Field(2.0, gt=0)
    seed: int = 0

    @field_validator("names")
    @classmethod
    def _known(cls, v):
        bad = sorted(set(v) - set(PROBE_NAMES))
        if bad:
            raise ValueError(f"unknown probes {bad}; choose from {list(PROBE_NAMES)}")
        return v


class RunConfig(_Strict):
    domain: Literal["unit-square", "l-shape"] = "unit-square"
    exponent: dict = Field(default_factory=lambda: {"kind": "constant", "value": 2.0})
    kappa: float = Field(0.0, ge=0.0, le=1.0)
    variant: str = "integral"
    manufactured: Optional[Union[str, dict]] = None
    rhs: Optional[Union[str, dict]] = None
    frozen: bool = False
    quadrature_degree: int = 4
    mesh: MeshSection = Field(default_factory=MeshSection)
    solver: SolverSection = Field(default_factory=SolverSection)
    study: StudySection = Field(default_factory=StudySection)
    probe: ProbeSection = Field(default_factory=ProbeSection)

    @field_validator("variant")
    @classmethod
    def _variant(cls, v):
        if v not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        return v

    @field_validator("quadrature_degree")
    @classmethod
    def _degree(cls, v):
        if v not in (1, 2, 4, 7):
            raise ValueError("quadrature_degree must be 1, 2, 4 or 7")
        return v

    # --- derived objects --------------------------------------------------------

    def domain_obj(self) -> expo.Domain:
        return expo.Domain(self.domain)

    def exponent_obj(self) -> expo.ExponentField:
        return expo.from_config(self.exponent, self.domain_obj())

    def solver_options(self) -> SolverOptions:
        return SolverOptions(tol=self.solver.tol, max_iter=self.solver.max_iter,
                             kappa_solve=self.solver.kappa_solve, linear=self.solver.linear)

    def load(self):
        """(rhs, manufactured) field functions; manufactured sinsin by default."""
        if self.rhs is not None and self.manufactured is not None:
            raise ConfigError("give either 'rhs' or 'manufactured', not both")
        if self.rhs is not None:
            return fn.from_config(self.rhs), None
        return None, fn.from_config(self.manufactured or "sinsin")

    def study_setup(self) -> StudySetup:
        rhs, v = self.load()
        if v is None:
            raise ConfigError("a study needs a 'manufactured' solution")
        return StudySetup(
            self.domain_obj(), self.exponent_obj(), self.kappa, v, n0=self.mesh.n0,
            levels=self.mesh.levels, frozen=self.frozen, options=self.solver_options(),
            degree=self.quadrature_degree, variant=self.variant, name="study",
        )

    def check(self) -> None:
        """Build every derived object once so errors surface before computing."""
        try:
            self.domain_obj()
            p = self.exponent_obj()
            self.load()
            self.solver_options()
        except ConfigError:
            raise
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc
        if p.p_minus <= 1:
            raise ConfigError(f"exponent must satisfy p^- > 1, got {p.p_minus}")
        if self.domain == "l-shape" and self.mesh.n0 % 2:
            raise ConfigError("l-shape meshes need an even n0")


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"schema error:\n{exc}") from exc
    cfg.check()
    return cfg
