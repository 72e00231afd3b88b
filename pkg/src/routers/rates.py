# src/routers/rates.py - Rate curves, b0 search and multi-cluster rates
from typing import List

from fastapi import APIRouter

from schemas import B0Request, MulticlusterRequest, MulticlusterResponse, RateCurveRequest
from src.services.channel import make_topology, tdma_schedule
from src.services.functions import builtin
from src.services.rates import B0Report, RateContext, RatePoint, compute_b0, db_to_linear, rate_multicluster, sweep

router = APIRouter()


"""
[POST]
/rates/curve:
Evaluate every closed-form rate on an SNR grid (dB).
b0 is searched for the named builtin when not given.
"""


@router.post("/curve", response_model=List[RatePoint])
def rate_curve(request: RateCurveRequest):
    b0 = request.b0 or compute_b0(builtin(request.function, request.N, request.params), request.eps).b0
    context = RateContext(N=request.N, b0=b0, eps=request.eps, topology=make_topology(request.N, request.clusters))
    return sweep(request.snr_db, context)


@router.post("/b0", response_model=B0Report)
def b0_search(request: B0Request):
    return compute_b0(builtin(request.function, request.N, request.params), request.eps)


@router.post("/multicluster", response_model=MulticlusterResponse)
def multicluster(request: MulticlusterRequest):
    topology = make_topology(request.N, request.clusters)
    rates = rate_multicluster(db_to_linear(request.snr_db), request.b0, topology, request.variant)
    schedule = tdma_schedule(topology)
    return MulticlusterResponse(
        variant=request.variant,
        rates=rates,
        common_nodes=topology.common_nodes,
        merge_opportunities=[list(pair) for pair in schedule.merge_opportunities],
    )
