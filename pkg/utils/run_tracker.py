# utils/run_tracker.py
import logging
import threading
from typing import Dict

logger = logging.getLogger(__name__)


class RunTracker:
    """Track sampling and oracle work done during one run"""

    def __init__(self):
        self._lock = threading.Lock()
        self.paths_sampled = 0
        self.paths_discarded = 0
        self.paths_exited = 0
        self.worker_blocks = 0
        self.oracle_cases = 0
        self.cache_hits = 0
        self.cache_misses = 0

    def add_block(self, paths: int, discarded: int = 0, exited: int = 0):
        """Track one simulated block (called from worker threads)"""
        with self._lock:
            self.paths_sampled += paths
            self.paths_discarded += discarded
            self.paths_exited += exited
            self.worker_blocks += 1

    def add_oracle_case(self, count: int = 1):
        with self._lock:
            self.oracle_cases += count

    def add_cache_lookup(self, hit: bool):
        with self._lock:
            if hit:
                self.cache_hits += 1
            else:
                self.cache_misses += 1

    def get_discard_fraction(self) -> float:
        if self.paths_sampled == 0:
            return 0.0
        return self.paths_discarded / self.paths_sampled

    def get_summary(self) -> Dict:
        """Get run summary as dict"""
        return {
            'sampling': {
                'paths_sampled': self.paths_sampled,
                'paths_discarded': self.paths_discarded,
                'paths_exited': self.paths_exited,
                'worker_blocks': self.worker_blocks,
                'discard_fraction': self.get_discard_fraction()
            },
            'oracle': {
                'cases_evaluated': self.oracle_cases,
                'cache_hits': self.cache_hits,
                'cache_misses': self.cache_misses
            }
        }

    def print_summary(self):
        """Print run summary"""
        print("\n📊 RUN SUMMARY:")
        print("=" * 60)
        print("Sampling:")
        print(f"  - Paths sampled: {self.paths_sampled:,}")
        print(f"  - Paths discarded: {self.paths_discarded:,} ({self.get_discard_fraction():.2%})")
        print(f"  - Paths exited: {self.paths_exited:,}")
        print(f"  - Worker blocks: {self.worker_blocks:,}")
        print("\nOracle:")
        print(f"  - Cases evaluated: {self.oracle_cases}")
        print(f"  - Cache hits/misses: {self.cache_hits}/{self.cache_misses}")
        print("=" * 60)
