# src/routers/lattice.py - Lattice code inspection
from fastapi import APIRouter, Query

from schemas import LatticeDemoResponse
from src.services.experiment_service import experiment_service

router = APIRouter()


@router.get("/demo", response_model=LatticeDemoResponse)
def lattice_demo(
    p: int = Query(3, description="Prime alphabet"),
    k: int = Query(1, ge=1),
    n: int = Query(2, ge=1),
    snr_db: float = Query(20.0),
    seed: int = Query(0, ge=0),
):
    return experiment_service.lattice_demo(p, k, n, snr_db, seed)
