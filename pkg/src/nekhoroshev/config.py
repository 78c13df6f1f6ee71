"""Run configuration: one JSON file with a block per command.

Parsing goes through pydantic models with unknown keys rejected, so every
error names the offending field path. :func:`dump_config` writes the
canonical form (sorted keys, all defaults filled in); parsing that output
gives back an equal configuration.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .lattice import BlockPartition, ModeTable
from .measure import DiophantineFamilySpec
from .spectrum import NonResonanceParams, beam, conv_nls, fractional, random_potential
from .weights import WeightSpec, gevrey, log_ultra, reference_scale


class ConfigError(ValueError):
    """Invalid configuration; the message names the field (or line) at fault."""


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ParamsBlock(_Block):
    beta: float = 2.0
    C0: float = 2.0
    delta: float = 1.0
    C2: float = 0.5
    tau: float = 1.0
    gamma: float = 0.5
    p: float = 1.0


class ModelBlock(_Block):
    kind: Literal["convnls", "fractional", "beam"] = "convnls"
    dim: int = Field(1, ge=1, le=3)
    potential: Union[Literal["zero", "random"], list] = "random"
    n: float = 1.0
    eta: float = 0.75
    m: float = 1.0
    g: Optional[list[list[float]]] = None
    params: ParamsBlock = ParamsBlock()

    @field_validator("potential")
    @classmethod
    def _potential(cls, v):
        if isinstance(v, list):
            for item in v:
                if not (isinstance(item, list) and len(item) == 2 and isinstance(item[0], list)):
                    raise ValueError("explicit potential entries are [[j...], value]")
        return v


class WeightBlock(_Block):
    kind: Literal["gevrey", "logultra"] = "gevrey"
    theta: float = 0.5
    q: float = 2.0
    kappa: Optional[float] = None
    s: float = 1.0
    c: float = 2.0


class LatticeBlock(_Block):
    K_max: int = Field(4, ge=1)
    shell: float = Field(1.0, gt=0)


class VerifyBlock(_Block):
    j_min: float = 1.0
    K_max: int = Field(8, ge=1)
    N: int = Field(4, ge=1)
    d_max: int = Field(4, ge=3)
    a0_samples: int = Field(2000, ge=1)
    a0_d_max: int = Field(6, ge=2)
    bracket_samples: int = Field(20, ge=0)
    homological_samples: int = Field(10, ge=0)
    check_A3: bool = True


class NormalFormBlock(_Block):
    N: float = 3.0
    d: int = Field(5, ge=3)
    r: float = 1e-3
    C_P: float = Field(1e-3, gt=0)
    degrees: list[int] = [3]
    density: float = Field(1.0, gt=0, le=1)
    exact: bool = False
    override_gate: bool = True
    explicit_remainder_degree: Optional[int] = None
    oracle_samples: int = Field(20, ge=0)
    residual_tol: float = 1e-8
    budget: int = Field(1_000_000, ge=1)


class StabilityBlock(_Block):
    log_eps: list[float] = [-100.0, -200.0, -400.0, -800.0]
    d_min: int = Field(4, ge=3)
    d_max: int = Field(100_000, ge=4)
    log_eps0: Optional[float] = None
    C_P: float = Field(1.0, gt=0)


class MeasureBlock(_Block):
    family: Literal["fractional_mass", "beam_metric", "convolution"] = "fractional_mass"
    gammas: list[float] = [1e-3, 1e-2, 1e-1]
    N: int = Field(4, ge=1)
    d: int = Field(3, ge=2)
    samples: int = Field(10_000, ge=1)
    exponent: Optional[float] = 1.0
    interval: tuple[float, float] = (1.0, 2.0)
    zeta: tuple[float, float] = (1.0, 2.0)
    Gamma: float = 1e-3
    mu1: float = 2.0
    mu2: float = 2.0


class SimulateBlock(_Block):
    nonlinearity: list[float] = [1.0]
    K: int = Field(16, ge=1)
    dt: float = 1e-2
    T_end: float = 10.0
    record_stride: int = Field(100, ge=1)
    eps: float = Field(1e-2, ge=0)
    support: Optional[float] = None
    N_split: float = 4.0
    eps_grid: list[float] = []
    threshold: Literal["2r", "C_sta"] = "2r"
    log_eps0: Optional[float] = None


class RunConfig(_Block):
    seed: int = 0
    format: Literal["csv", "json"] = "json"
    model: ModelBlock = ModelBlock()
    weight: WeightBlock = WeightBlock()
    lattice: LatticeBlock = LatticeBlock()
    verify: VerifyBlock = VerifyBlock()
    normalform: NormalFormBlock = NormalFormBlock()
    stability: StabilityBlock = StabilityBlock()
    measure: MeasureBlock = MeasureBlock()
    simulate: SimulateBlock = SimulateBlock()

    @model_validator(mode="after")
    def _beam_metric(self):
        if self.model.kind == "beam" and self.model.g is not None:
            if len(self.model.g) != self.model.dim or any(len(r) != self.model.dim for r in self.model.g):
                raise ValueError("model.g must be a dim x dim matrix")
        return self

    # -- builders

    def build_model(self):
        mb, pr = self.model, NonResonanceParams(**self.model.params.model_dump())
        if mb.kind == "convnls":
            if mb.potential == "zero":
                V = {}
            elif mb.potential == "random":
                V = random_potential(mb.dim, self.lattice.K_max, mb.n, self.seed)
            else:
                V = {tuple(int(x) for x in j): float(v) for j, v in mb.potential}
            return conv_nls(mb.dim, V, n=mb.n if V else 0.0, params=pr)
        if mb.kind == "fractional":
            return fractional(mb.dim, mb.eta, mb.m, params=pr)
        g = mb.g if mb.g is not None else [[1.0 if a == b else 0.0 for b in range(mb.dim)] for a in range(mb.dim)]
        return beam(g, mb.m, params=pr)

    def build_weight(self, with_s0: bool = True) -> WeightSpec:
        wb = self.weight
        if wb.kind == "gevrey":
            w = gevrey(wb.theta, wb.s, wb.c)
        else:
            w = log_ultra(wb.q, wb.s, wb.kappa, wb.c)
        if with_s0:
            from dataclasses import replace

            w = replace(w, s0=reference_scale(w, ModeTable(self.model.dim, self.lattice.K_max, wb.c)))
        return w

    def build_partition(self) -> BlockPartition:
        return BlockPartition(C1=self.lattice.shell)

    def build_family(self) -> DiophantineFamilySpec:
        mb, ms = self.model, self.measure
        return DiophantineFamilySpec(ms.family, dim=mb.dim, interval=tuple(ms.interval), eta=mb.eta,
                                     zeta=tuple(ms.zeta), m=mb.m, Gamma=ms.Gamma, n=mb.n,
                                     mu1=ms.mu1, mu2=ms.mu2)


def _describe(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        lines.append(f"field '{loc}': {e['msg']}")
    return "; ".join(lines)


def parse_config(data: dict | None = None) -> RunConfig:
    """Validate a decoded JSON object."""
    try:
        return RunConfig.model_validate(data or {})
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from None


def loads_config(text: str) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError("line 1: top level must be a JSON object")
    return parse_config(data)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return loads_config(text)


def dump_config(cfg: RunConfig) -> str:
    """Canonical JSON text of ``cfg``."""
    return json.dumps(cfg.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"
