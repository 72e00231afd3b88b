from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.core.config import settings


class FunctionConfig(BaseModel):
    kind: Literal["builtin", "superposition"] = "builtin"
    name: str = Field("arithmetic_mean", description="Builtin or demo superposition name")
    params: Dict[str, float] = Field(default_factory=dict, description="e.g. {\"s_min\": 1e-20}")
    # fusion center index -> post-processing set of a superposition
    post_sets: Dict[int, str] = Field(default_factory=dict)


class TopologyConfig(BaseModel):
    N: int = Field(10, ge=1)
    clusters: Optional[List[List[int]]] = Field(None, description="0-based members; one cluster of all nodes if omitted")


class ChannelSection(BaseModel):
    P: float = Field(1.0, gt=0)
    n: int = Field(4, ge=1, description="Block length")


class LatticeSection(BaseModel):
    p: Optional[int] = Field(None, description="Prime alphabet; smallest admissible prime if omitted")
    k: int = Field(1, ge=1)


class ExperimentConfig(BaseModel):
    """Everything the CLI commands need; loaded from and printed as JSON"""
    model_config = ConfigDict(extra="forbid")

    function: FunctionConfig = Field(default_factory=FunctionConfig)
    topology: TopologyConfig = Field(default_factory=TopologyConfig)
    eps: float = Field(1e-3, gt=0)
    b0: Optional[int] = Field(None, ge=1, description="Overrides the b0 search when set")
    snr_db: List[float] = Field(default_factory=lambda: [float(x) for x in range(0, 31)])
    channel: ChannelSection = Field(default_factory=ChannelSection)
    lattice: LatticeSection = Field(default_factory=LatticeSection)
    trials: int = Field(settings.DEFAULT_TRIALS, ge=0)
    seed: int = Field(settings.DEFAULT_SEED, ge=0, lt=2**64)
    noiseless: bool = False
    compare: List[str] = Field(default_factory=lambda: ["arithmetic_mean", "geometric_mean", "euclidean_norm"])
    output: Optional[str] = None

    @field_validator("snr_db")
    @classmethod
    def _sorted_grid(cls, grid):
        if any(b < a for a, b in zip(grid, grid[1:])):
            raise ValueError("SNR grid must be sorted ascending")
        return grid

    @model_validator(mode="after")
    def _check_clusters(self) -> "ExperimentConfig":
        for members in self.topology.clusters or []:
            if any(not 0 <= m < self.topology.N for m in members):
                raise ValueError(f"cluster {members} references a node outside 0..{self.topology.N - 1}")
        return self


# ---------------------------------------------------------------------------
# API requests
# ---------------------------------------------------------------------------

class RateCurveRequest(BaseModel):
    N: int = Field(..., ge=1)
    b0: Optional[int] = Field(None, ge=1)
    eps: float = Field(1e-3, gt=0)
    function: str = "arithmetic_mean"
    params: Dict[str, float] = Field(default_factory=dict)
    snr_db: List[float] = Field(..., min_length=1)
    clusters: Optional[List[List[int]]] = None


class B0Request(BaseModel):
    function: str = "arithmetic_mean"
    N: int = Field(..., ge=1)
    eps: float = Field(..., gt=0)
    params: Dict[str, float] = Field(default_factory=dict)


class MulticlusterRequest(BaseModel):
    N: int = Field(..., ge=1)
    clusters: List[List[int]]
    b0: int = Field(..., ge=1)
    snr_db: float
    variant: str = "nomographic_tdma"


class MulticlusterResponse(BaseModel):
    variant: str
    rates: List[float]
    common_nodes: List[int]
    merge_opportunities: List[List[int]]


class SimulationRequest(BaseModel):
    function: str = "arithmetic_mean"
    params: Dict[str, float] = Field(default_factory=dict)
    N: int = Field(..., ge=1)
    eps: float = Field(1e-3, gt=0)
    snr_db: List[float] = Field(..., min_length=1)
    P: float = Field(1.0, gt=0)
    n: int = Field(4, ge=1)
    p: Optional[int] = None
    k: int = Field(1, ge=1)
    trials: int = Field(100, ge=0)
    seed: int = Field(settings.DEFAULT_SEED, ge=0)
    noiseless: bool = False
    clusters: Optional[List[List[int]]] = None
    post_sets: Dict[int, str] = Field(default_factory=dict)

    @field_validator("trials")
    @classmethod
    def _cap_trials(cls, trials):
        if trials > settings.MAX_API_TRIALS:
            raise ValueError(f"at most {settings.MAX_API_TRIALS} trials per request")
        return trials


class TrialRow(BaseModel):
    snr_db: float
    trials: int
    sum_decode_failures: int
    accuracy_failures: int
    max_ok_error: float


class LatticeDemoResponse(BaseModel):
    p: int
    k: int
    n: int
    gamma: float
    generator: List[List[int]]
    codebook: Optional[List[List[float]]] = None
    codebook_size: int
    messages: List[List[int]]
    transmitted: List[List[float]]
    received: List[float]
    expected_sum: List[int]
    decoded_sum: List[int]
    success: bool
