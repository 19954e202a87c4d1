"""Experiment configuration: schema, loading and hashing."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

COMMANDS = ("simulate", "entropy", "dlr", "free-energy", "moment-check", "verify-drift")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DriftBlock(_Strict):
    name: Literal["zero", "constant", "ou", "barycentre_delay", "running_integral"]
    params: dict[str, Any] = Field(default_factory=dict)


class SimBlock(_Strict):
    d: int = Field(1, ge=1)
    n: int = Field(2, ge=1)
    M: int = Field(200, ge=1)
    R: int = Field(1000, ge=1)
    boundary: Literal["zero", "periodic"] = "zero"


class LawBlock(_Strict):
    kind: Literal["dirac", "gaussian_product"] = "gaussian_product"
    z: float = 0.0
    mean: float = 0.0
    var: float = Field(1.0, gt=0.0)

    def as_spec(self) -> dict:
        if self.kind == "dirac":
            return {"kind": "dirac", "z": self.z}
        return {"kind": "gaussian_product", "mean": self.mean, "var": self.var}


class TestFunctionBlock(_Strict):
    site: list[int] = Field(default_factory=lambda: [0])
    t: float = Field(1.0, ge=0.0, le=1.0)
    transform: Literal["identity", "square", "positive"] = "identity"
    cap: Optional[float] = None


class DlrBlock(_Strict):
    lam: list[list[int]] = Field(default_factory=lambda: [[0]], alias="lambda")
    tests: list[TestFunctionBlock] = Field(
        default_factory=lambda: [
            TestFunctionBlock(cap=5.0),
            TestFunctionBlock(t=0.5, transform="square"),
            TestFunctionBlock(transform="positive"),
        ]
    )
    outer: int = Field(1000, ge=2)
    inner: int = Field(200, ge=1)
    threshold: float = Field(3.0, gt=0.0)
    ess_fraction: float = Field(0.1, ge=0.0, le=1.0)
    max_ess_failure_rate: float = Field(0.05, ge=0.0, le=1.0)

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class EntropyBlock(_Strict):
    sizes: Optional[list[int]] = None


class FreeEnergyBlock(_Strict):
    beta: Optional[DriftBlock] = None
    beta_offset: float = 0.0

    @model_validator(mode="after")
    def _one_source(self):
        if self.beta is not None and self.beta_offset != 0.0:
            raise ValueError("give either beta or beta_offset, not both")
        return self


class MomentBlock(_Strict):
    sizes: list[int] = Field(default_factory=lambda: [1, 2, 3, 4])
    xi_value: float = 0.0
    tolerance: float = Field(2.0, ge=1.0)


class VerifyBlock(_Strict):
    trials: int = Field(10_000, ge=1)
    builtins: bool = True
    negative_controls: bool = True


class ExperimentConfig(_Strict):
    command: Optional[Literal[COMMANDS]] = None  # type: ignore[valid-type]
    seed: int = Field(0, ge=0)
    drift: DriftBlock = DriftBlock(name="zero")
    sim: SimBlock = SimBlock()
    initial_law: LawBlock = LawBlock()
    entropy: EntropyBlock = EntropyBlock()
    dlr: DlrBlock = DlrBlock()
    free_energy: FreeEnergyBlock = FreeEnergyBlock()
    moments: MomentBlock = MomentBlock()
    verify: VerifyBlock = VerifyBlock()
    refine: bool = True
    threads: Optional[int] = Field(None, ge=1)
    out: Optional[str] = None

    @field_validator("seed", mode="before")
    @classmethod
    def _int_seed(cls, v):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ValueError("seed must be an integer")
        return v

    def canonical(self) -> dict:
        """The fields that determine results. Thread count and output
        location are excluded so they never change the hash."""
        return self.model_dump(mode="json", by_alias=True, exclude={"threads", "out"})

    def content_hash(self) -> str:
        data = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()

    def worker_threads(self) -> int:
        return self.threads or os.cpu_count() or 1


TestFunctionBlock.__test__ = False  # not a pytest class


def load(path: Union[str, Path, None], **overrides) -> ExperimentConfig:
    raw: dict = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        raw = (json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)) or {}
        if not isinstance(raw, dict):
            raise ValueError("config file must hold a mapping at top level")
    for k, v in overrides.items():
        if v is not None:
            raw[k] = v
    return ExperimentConfig.model_validate(raw)
