import logging
import os
from typing import Optional

from prometheus_client import CollectorRegistry, Counter, Histogram, write_to_textfile

logger = logging.getLogger(__name__)

# 실행 시간 버킷 (seconds)
RUN_BUCKETS = (0.1, 0.5, 1.0, 2.5, 5.0, 10.0, 30.0, 60.0, 120.0, 300.0, 600.0)


class RunMetrics:
    _instance: Optional['RunMetrics'] = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._build()
        return cls._instance

    def _build(self):
        self.registry = CollectorRegistry()
        self.runs = Counter(
            "workbench_runs",
            "Workbench command runs",
            ["command", "status"],
            registry=self.registry,
        )
        self.duration = Histogram(
            "workbench_run_seconds",
            "Wall time per workbench command",
            ["command"],
            buckets=RUN_BUCKETS,
            registry=self.registry,
        )
        self.synthesis_iterations = Counter(
            "workbench_synthesis_outer_iterations",
            "BCD outer iterations",
            ["problem"],
            registry=self.registry,
        )

    def observe(self, command: str, status: str, seconds: float):
        self.runs.labels(command=command, status=status).inc()
        self.duration.labels(command=command).observe(seconds)

    def write(self, output_dir: str) -> str:
        os.makedirs(output_dir, exist_ok=True)
        path = os.path.join(output_dir, "metrics.prom")
        write_to_textfile(path, self.registry)
        logger.debug(f"Wrote metrics to {path}")
        return path

    @classmethod
    def reset(cls):
        cls._instance = None
