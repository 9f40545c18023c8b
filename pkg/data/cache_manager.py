import hashlib
import json
import logging
from pathlib import Path
from typing import Dict, Optional, Union

from config.settings import settings
from oracle.cases import CaseDescriptor
from oracle.labels import OracleError
from oracle.tables import CoefficientTable

logger = logging.getLogger(__name__)

CACHE_VERSION = 1  # bump when table semantics change


class CacheManager:
    """
    Stores computed oracle tables on disk so repeated runs skip evaluation
    """

    def __init__(self, cache_dir: Optional[Union[str, Path]] = None):
        """
        Initialize cache manager

        Args:
            cache_dir: directory for table files (default ORACLE_CACHE_DIR)
        """
        self.cache_dir = Path(cache_dir or settings.ORACLE_CACHE_DIR)
        logger.info(f"CacheManager initialized at {self.cache_dir}")

    @staticmethod
    def key_for(desc: CaseDescriptor) -> str:
        text = f"v{CACHE_VERSION}|{desc.word}|{desc.order}|{desc.directive}"
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:24]

    def _path(self, desc: CaseDescriptor) -> Path:
        return self.cache_dir / f"{self.key_for(desc)}.json"

    def get_table(self, desc: CaseDescriptor) -> Optional[CoefficientTable]:
        """
        Retrieve a cached table

        Args:
            desc: case descriptor

        Returns:
            CoefficientTable on a hit, None otherwise
        """
        path = self._path(desc)
        if not path.exists():
            logger.info(f"❌ Cache MISS for {desc}")
            return None
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
            if payload.get("descriptor") != [desc.word, desc.order, desc.directive]:
                logger.warning(f"⚠️ Cache entry {path.name} belongs to another descriptor, ignoring it")
                return None
            table = CoefficientTable.from_dict(payload["table"])
            logger.info(f"✅ Cache HIT for {desc} - {len(table)} entries")
            return table
        except (OSError, ValueError, KeyError, OracleError) as e:
            logger.error(f"Error reading cache entry {path}: {e}")
            return None

    def put_table(self, desc: CaseDescriptor, table: CoefficientTable) -> bool:
        """
        Store a table

        Returns:
            True if cached successfully, False otherwise
        """
        try:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            payload = {
                "descriptor": [desc.word, desc.order, desc.directive],
                "table": table.to_dict(),
            }
            self._path(desc).write_text(json.dumps(payload, indent=2), encoding="utf-8")
            logger.info(f"✅ Cached {len(table)} entries for {desc}")
            return True
        except OSError as e:
            logger.error(f"Error caching table for {desc}: {e}")
            return False

    def invalidate(self, desc: CaseDescriptor) -> bool:
        path = self._path(desc)
        if path.exists():
            path.unlink()
            logger.info(f"✅ Invalidated cache for {desc}")
            return True
        return False

    def clear(self) -> int:
        """
        Delete every cached table

        Returns:
            Number of files deleted
        """
        if not self.cache_dir.exists():
            return 0
        removed = 0
        for path in self.cache_dir.glob("*.json"):
            path.unlink()
            removed += 1
        logger.info(f"✅ Cleared {removed} cached tables")
        return removed

    def get_cache_stats(self) -> Dict:
        files = list(self.cache_dir.glob("*.json")) if self.cache_dir.exists() else []
        return {
            "directory": str(self.cache_dir),
            "entries": len(files),
            "bytes": sum(p.stat().st_size for p in files),
        }
