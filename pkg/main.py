# main.py - HTTP API for rate curves, b0 search and channel simulations
import logging
from contextlib import asynccontextmanager

import uvicorn
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from src.core.config import configure_logging, settings
from src.core.exceptions import ComputationError

configure_logging()
logger = logging.getLogger(__name__)

# Track loaded routers
routers_loaded = []
router_errors = []


# Define lifespan event handler
@asynccontextmanager
async def lifespan(app: FastAPI):
    """Log startup state and shutdown"""
    logger.info(f"Starting {settings.PROJECT_NAME} {settings.VERSION} ({settings.ENVIRONMENT})")
    logger.info(f"Loaded routers: {routers_loaded}")
    if router_errors:
        logger.warning(f"Router errors: {router_errors}")
    yield
    logger.info(f"Shutting down {settings.PROJECT_NAME}")


# Create app
app = FastAPI(
    title=settings.PROJECT_NAME,
    version=settings.VERSION,
    description=settings.DESCRIPTION,
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.exception_handler(ComputationError)
async def computation_error_handler(request: Request, exc: ComputationError):
    return JSONResponse(
        status_code=exc.status_code,
        content={"detail": exc.detail, "error_code": exc.error_code},
    )


# Basic health check routes
@app.get("/")
async def root():
    return {
        "message": settings.PROJECT_NAME,
        "version": settings.VERSION,
        "status": "healthy",
        "docs_url": "/docs",
    }


@app.get("/health")
async def health_check():
    return {
        "status": "healthy",
        "service": settings.PROJECT_NAME,
        "version": settings.VERSION,
        "routers": routers_loaded,
    }


def safe_import_router(module_name, router_name, url_prefix, tags):
    """Import a router module and include its router"""
    try:
        module = __import__(module_name, fromlist=["router"])
        app.include_router(module.router, prefix=url_prefix, tags=tags)
        routers_loaded.append(router_name)
        return True
    except (ImportError, AttributeError) as e:
        router_errors.append(f"{router_name}: {e}")
        logger.error(f"Failed to load router {router_name}: {e}")
        return False


router_configs = [
    ("src.routers.rates", "rates", "/rates", ["Rates"]),
    ("src.routers.simulate", "simulate", "/simulate", ["Simulation"]),
    ("src.routers.lattice", "lattice", "/lattice", ["Lattice"]),
]

for module_name, router_name, url_prefix, tags in router_configs:
    safe_import_router(module_name, router_name, url_prefix, tags)


@app.get("/status")
async def status():
    """API status and loaded routers"""
    return {
        "status": "running",
        "loaded_routers": routers_loaded,
        "router_errors": router_errors,
        "total_routers": len(routers_loaded),
    }


if __name__ == "__main__":
    uvicorn.run(app, host=settings.HOST, port=settings.PORT)
