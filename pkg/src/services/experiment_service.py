# src/services/experiment_service.py - Experiment orchestration shared by the CLI and the API
import logging
import math
import sys
from functools import partial
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from schemas import ExperimentConfig, LatticeDemoResponse
from src.core.exceptions import ConfigError
from src.core.streams import MESSAGES, derive_stream
from src.services import functions
from src.services.channel import ChannelConfig, ClusterTopology, noise_stream
from src.services.lattice import codebook, construction_a, decode_ml, encode, scale_to_power
from src.services.pipeline import TrialReport, run_clustered_tdma, run_kolmogorov, run_single_cluster
from src.services.rates import B0Report, RateContext, compare_functions, compute_b0, sweep

logger = logging.getLogger(__name__)

RATE_COLUMNS = ["snr_db", "rate_lattice", "rate_separation", "rate_awgn_bound", "rate_tdma", "rate_kolmogorov"]
RATE_NAMES = [c[len("rate_"):] for c in RATE_COLUMNS[1:]]
SIMULATION_COLUMNS = ["snr_db", "trials", "sum_decode_failures", "accuracy_failures", "max_ok_error"]
FLOAT_FORMAT = "%.6g"
DEMO_CODEBOOK_LIMIT = 64


def load_config(path: Optional[str]) -> ExperimentConfig:
    """JSON experiment file, or the defaults when no path is given"""
    if path is None:
        return ExperimentConfig()
    file = Path(path)
    if not file.is_file():
        raise ConfigError(f"config file not found: {path}", "path")
    try:
        return ExperimentConfig.model_validate_json(file.read_text(encoding="utf-8"))
    except ValueError as e:
        raise ConfigError(f"invalid config {path}: {e}", "content")


def write_csv(frame: pd.DataFrame, path: Optional[str]) -> None:
    """CSV with 6 significant digits to a file, or to stdout without a path"""
    if path is None:
        frame.to_csv(sys.stdout, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return
    try:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as e:
        raise ConfigError(f"cannot write {path}: {e}", "output")
    logger.info(f"Wrote {len(frame)} rows to {path}")


class ExperimentService:
    """Turns an ExperimentConfig into rate curves, b0 reports and simulation tables"""

    def topology(self, config: ExperimentConfig) -> ClusterTopology:
        clusters = config.topology.clusters or [list(range(config.topology.N))]
        try:
            return ClusterTopology(N=config.topology.N, clusters=[tuple(c) for c in clusters])
        except ValueError as e:
            raise ConfigError(str(e), "topology")

    def function_spec(self, config: ExperimentConfig, N: Optional[int] = None) -> functions.Spec:
        N = N or config.topology.N
        if config.function.kind == "superposition":
            return functions.demo_superposition(config.function.name, N)
        return functions.builtin(config.function.name, N, config.function.params)

    def b0_report(self, config: ExperimentConfig) -> B0Report:
        return compute_b0(self.function_spec(config), config.eps)

    def resolve_b0(self, config: ExperimentConfig) -> int:
        return config.b0 or self.b0_report(config).b0

    def rates_frame(self, config: ExperimentConfig) -> pd.DataFrame:
        context = RateContext(
            N=config.topology.N, b0=self.resolve_b0(config), eps=config.eps, topology=self.topology(config)
        )
        points = sweep(config.snr_db, context)
        rows = [{"snr_db": pt.snr_db, **{f"rate_{name}": pt.rates[name] for name in RATE_NAMES}}
                for pt in points]
        return pd.DataFrame(rows, columns=RATE_COLUMNS)

    def compare_frame(self, config: ExperimentConfig) -> pd.DataFrame:
        params = {config.function.name: config.function.params} if config.function.params else {}
        return compare_functions(config.snr_db, config.topology.N, config.eps, config.compare, params)

    def simulate_reports(self, config: ExperimentConfig) -> List[Dict[str, Any]]:
        """One merged TrialReport row per SNR point"""
        if not config.snr_db:
            raise ConfigError("SNR grid must not be empty", "snr_db")
        topology = self.topology(config)
        spec = self.function_spec(config)
        b = self.resolve_b0(config)
        rows = []
        for snr_db in config.snr_db:
            sigma_z2 = 0.0 if config.noiseless else config.channel.P / 10.0 ** (snr_db / 10.0)
            channel = ChannelConfig(P=config.channel.P, sigma_z2=sigma_z2, n=config.channel.n, seed=config.seed)
            report = self._run(config, spec, topology, channel, b)
            rows.append(report.to_row(snr_db))
        return rows

    def _run(self, config, spec, topology, channel, b) -> TrialReport:
        kwargs = dict(eps=config.eps, trials=config.trials, seed=config.seed, b=b,
                      p=config.lattice.p, k=config.lattice.k)
        if config.function.kind == "superposition":
            run = run_kolmogorov(spec, topology, channel, post_sets=config.function.post_sets, **kwargs)
            reports = run.reports
        elif topology.L > 1:
            factory = partial(functions.builtin, config.function.name, params=config.function.params)
            reports = run_clustered_tdma(factory, topology, channel, **kwargs)
        else:
            return run_single_cluster(spec, channel, **kwargs)
        merged = TrialReport()
        for report in reports:
            merged = merged.merge(report)
        return merged

    def simulate_frame(self, config: ExperimentConfig) -> pd.DataFrame:
        return pd.DataFrame(self.simulate_reports(config), columns=SIMULATION_COLUMNS)

    def lattice_demo(self, p: int, k: int, n: int, snr_db: float, seed: int = 0, P: float = 1.0) -> LatticeDemoResponse:
        """Encode two random messages, superimpose them with noise and decode the sum"""
        pair = scale_to_power(construction_a(p, k, n, seed=seed), P)
        lat = pair.lattice
        words = codebook(pair).tolist() if lat.codebook_size <= DEMO_CODEBOOK_LIMIT else None
        w = derive_stream(seed, MESSAGES, 0, 0, 0).integers(0, p, (2, k))
        x = encode(pair, w)
        sigma = 0.0 if math.isinf(snr_db) else math.sqrt(P / 10.0 ** (snr_db / 10.0))
        y = x.sum(axis=0) + sigma * noise_stream(seed, 0, 0, 0).standard_normal(n)
        expected = w.sum(axis=0) % p
        decoded = decode_ml(pair, y)
        return LatticeDemoResponse(
            p=p, k=k, n=n, gamma=lat.gamma,
            generator=lat.G.tolist(),
            codebook=words,
            codebook_size=lat.codebook_size,
            messages=w.tolist(),
            transmitted=x.tolist(),
            received=y.tolist(),
            expected_sum=expected.tolist(),
            decoded_sum=np.asarray(decoded).tolist(),
            success=bool(np.array_equal(expected, decoded)),
        )


# Create singleton instance
experiment_service = ExperimentService()
