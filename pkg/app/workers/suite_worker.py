import asyncio
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Tuple

from ..models.config_models import WorkbenchConfig
from ..services.sim_engine import Metrics, Trace, run_case_suite

logger = logging.getLogger(__name__)

CaseJob = Tuple[str, str]   # (case, controller)
CaseResult = Tuple[str, str, Trace, List[Metrics]]


def _run_job(job: CaseJob, cfg: WorkbenchConfig, dt: Optional[float], duration: Optional[float]) -> CaseResult:
    case, controller = job
    trace, metrics = run_case_suite(case, controller, cfg, dt=dt, duration=duration)
    return case, controller, trace, metrics


async def run_cases(jobs: List[CaseJob], cfg: WorkbenchConfig, dt: Optional[float] = None,
                    duration: Optional[float] = None) -> List[CaseResult]:
    """Share-nothing case runs, merged in (case, controller) order."""
    if cfg.max_workers <= 1 or len(jobs) <= 1:
        results = [_run_job(job, cfg, dt, duration) for job in jobs]
    else:
        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=cfg.max_workers) as pool:
            futures = [loop.run_in_executor(pool, _run_job, job, cfg, dt, duration) for job in jobs]
            try:
                results = list(await asyncio.gather(*futures))
            except Exception as e:
                logger.error(f"Case suite error: {str(e)}")
                raise
    return sorted(results, key=lambda r: (r[0], r[1]))


def run_cases_sync(jobs: List[CaseJob], cfg: WorkbenchConfig, dt: Optional[float] = None,
                   duration: Optional[float] = None) -> List[CaseResult]:
    logger.info(f"Running {len(jobs)} case(s) with {cfg.max_workers} worker(s)")
    return asyncio.run(run_cases(jobs, cfg, dt, duration))
