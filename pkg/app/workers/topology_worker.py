import asyncio
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import List

from ..models.synthesis_models import TopologyDesign
from ..services.cbscd import JobMapper, TopologyJob, run_topology_job, sequential_mapper

logger = logging.getLogger(__name__)


async def design_topologies(jobs: List[TopologyJob], max_workers: int) -> List[TopologyDesign]:
    """Fan jobs out over a process pool; results keep the job order."""
    loop = asyncio.get_running_loop()
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        futures = [loop.run_in_executor(pool, run_topology_job, job) for job in jobs]
        try:
            return list(await asyncio.gather(*futures))
        except Exception as e:
            logger.error(f"Topology design error: {str(e)}")
            raise


def make_mapper(max_workers: int) -> JobMapper:
    if max_workers <= 1:
        return sequential_mapper

    def mapper(jobs: List[TopologyJob]) -> List[TopologyDesign]:
        logger.info(f"Designing {len(jobs)} topologies on {max_workers} workers")
        return asyncio.run(design_topologies(jobs, max_workers))

    return mapper
