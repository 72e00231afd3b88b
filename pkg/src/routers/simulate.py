# src/routers/simulate.py - Monte Carlo runs over the simulated channel
from typing import List

from fastapi import APIRouter

from schemas import ExperimentConfig, SimulationRequest, TrialRow
from src.core.exceptions import ConfigError
from src.services.experiment_service import experiment_service

router = APIRouter()


def _config(request: SimulationRequest, kind: str) -> ExperimentConfig:
    try:
        return ExperimentConfig(
            function={"kind": kind, "name": request.function, "params": request.params,
                      "post_sets": request.post_sets},
            topology={"N": request.N, "clusters": request.clusters},
            eps=request.eps,
            snr_db=sorted(request.snr_db),
            channel={"P": request.P, "n": request.n},
            lattice={"p": request.p, "k": request.k},
            trials=request.trials,
            seed=request.seed,
            noiseless=request.noiseless,
        )
    except ValueError as e:
        raise ConfigError(f"invalid simulation request: {e}", "request")


@router.post("/single", response_model=List[TrialRow])
def simulate_single(request: SimulationRequest):
    """Nomographic builtin; several clusters run under the TDMA schedule"""
    return experiment_service.simulate_reports(_config(request, "builtin"))


@router.post("/kolmogorov", response_model=List[TrialRow])
def simulate_kolmogorov(request: SimulationRequest):
    """Demo superposition heard by every cluster at once"""
    return experiment_service.simulate_reports(_config(request, "superposition"))
