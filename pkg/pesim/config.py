"""
Configuration models and process settings.

Core and layer configuration are pydantic models so config files and CLI
flags are validated in one place. Process-level settings (thread count,
report directory) come from the environment, optionally via a .env file.
"""

import os
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import List, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator

from core.tensor import ConvLayerSpec, Precision

load_dotenv()

# ============================================================================
# CORE CONFIGURATION
# ============================================================================


class SubtilePolicy(str, Enum):
    # remainder-strip sub-tiles capped at P along the long axis
    SQUARE = "square"
    # remainder-strip sub-tiles as long as the PE count allows
    FILL = "fill"


class CoreConfig(BaseModel):
    num_pes: int = Field(..., ge=1, description="PEs (or vPEs) in the 1-D array")
    input_buffer_entries: int = Field(default=32, ge=1, description="Input FIFO entries per PE")
    psum_buffer_entries: int = Field(default=512, ge=1, description="Partial-sum FIFO entries per PE")
    output_buffer_entries: int = Field(default=512, ge=1, description="Output FIFO entries per PE")
    precision: Precision = Field(default=Precision.FP32, description="fp32 or int8x4")
    clock_mhz: float = Field(default=250.0, gt=0, description="Clock used for reporting only")
    subtile_policy: SubtilePolicy = Field(
        default=SubtilePolicy.SQUARE,
        description="How remainder strips larger than the core are split",
    )

    model_config = {"frozen": True}

    @property
    def lanes(self) -> int:
        return 4 if self.precision == Precision.INT8X4 else 1

    @property
    def clock_ghz(self) -> float:
        return self.clock_mhz / 1000.0


# ============================================================================
# LAYER / RUN CONFIGURATION
# ============================================================================


class LayerConfig(BaseModel):
    name: str = Field(default="layer", description="Layer name used in reports")
    c_in: int = Field(..., ge=1)
    c_out: int = Field(..., ge=1)
    h_in: int = Field(..., ge=1)
    w_in: int = Field(..., ge=1)
    k_y: int = Field(default=3, ge=1)
    k_x: int = Field(default=3, ge=1)
    stride: int = Field(default=1, ge=1)
    pad: int = Field(default=0, ge=0, description="Zero padding on every side")
    precision: Precision = Field(default=Precision.FP32)

    def to_spec(self) -> ConvLayerSpec:
        return ConvLayerSpec(
            c_in=self.c_in,
            c_out=self.c_out,
            h_in=self.h_in,
            w_in=self.w_in,
            k_y=self.k_y,
            k_x=self.k_x,
            stride=self.stride,
            pad=self.pad,
            precision=self.precision,
            name=self.name,
        )

    @staticmethod
    def from_spec(spec: ConvLayerSpec) -> "LayerConfig":
        return LayerConfig(**spec.to_dict())


class FixtureDocument(BaseModel):
    layout: str = Field(..., description="CHW, WHC, KyKxCiCo or CiKyKxCo")
    dims: List[int] = Field(..., min_length=3, max_length=4)
    dtype: str = Field(default="fp32", description="fp32 or int8")
    data: Optional[List[Union[int, float, str]]] = Field(
        default=None, description="Flat values; strings may carry a 0x/0o/0b prefix"
    )
    seed: Optional[int] = Field(default=None, ge=0, description="SplitMix64 seed for deterministic fill")

    @field_validator("dims")
    @classmethod
    def _positive_dims(cls, dims: List[int]) -> List[int]:
        if any(d < 1 for d in dims):
            raise ValueError(f"dims must be positive, got {dims}")
        return dims


class RunConfig(BaseModel):
    layer: LayerConfig
    core: CoreConfig
    input: Optional[FixtureDocument] = Field(default=None, description="Input feature map (CHW or WHC)")
    weights: Optional[FixtureDocument] = Field(default=None, description="Weights (CiKyKxCo or KyKxCiCo)")


# ============================================================================
# PROCESS SETTINGS
# ============================================================================


class Settings(BaseModel):
    threads: int = Field(default=1, ge=1, description="Worker threads for independent tile jobs")
    output_dir: Path = Field(default=Path("./output"), description="Report directory")


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings(
        threads=int(os.getenv("PESIM_THREADS", "1")),
        output_dir=Path(os.getenv("PESIM_OUTPUT_DIR", "./output")),
    )
