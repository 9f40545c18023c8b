# schemas/reports.py
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import jsonschema
from pydantic import BaseModel, Field

logger = logging.getLogger(__name__)

SCHEMA_DIR = Path(__file__).parent


class RunConfig(BaseModel):
    """Resolved run configuration (flags > config file > defaults)."""
    command: str
    manifold: Optional[str] = None
    seed: int = 7
    workers: Optional[int] = None
    steps: int = 256
    params: Dict[str, Any] = Field(default_factory=dict)


class DistanceRow(BaseModel):
    n: int
    t_n: float
    estimate: float
    stderr: Optional[float] = None
    oracle: float
    samples: int
    discarded: int = 0


class DistanceReport(BaseModel):
    manifold: str
    x: List[float]
    y: List[float]
    kappa: float
    rows: List[DistanceRow]


class TensorComparison(BaseModel):
    est: List[List[float]]
    theory: List[List[float]]
    stderr: Optional[List[List[float]]] = None
    rel_err: float


class RecoveredValue(BaseModel):
    est: Any  # float or nested list
    oracle: Any
    stderr: Any = None
    rel_err: Optional[float] = None


class CurvatureReport(BaseModel):
    manifold: str
    x: List[float]
    t_grid: List[float]
    samples_per_t: int
    fit_order: int
    theta: TensorComparison
    theta_uncontracted_max_z: float
    xi: TensorComparison
    xi_tangential: TensorComparison
    xi_normal: TensorComparison
    recovered: Dict[str, RecoveredValue]
    conditioning: Dict[str, float]
    tangent_recovery: Dict[str, Any] = Field(default_factory=dict)
    moment_relation: Dict[str, Any] = Field(default_factory=dict)
    fit_residual: float
    antisymmetry_max_z: float
    discarded: int = 0


class SignatureReport(BaseModel):
    manifold: str
    process: str
    x: List[float]
    y: Optional[List[float]] = None
    t: float
    level: int
    samples: int
    units: int
    discarded: int
    policy: str
    level_norms: List[float]
    mean: List[List[float]]
    stderr: List[List[float]]


class PDESummary(BaseModel):
    problem: str
    level: int
    eps: float
    grid: int
    steps: int
    max_level1_error: Optional[float] = None
    refinement_change: Optional[float] = None
    files: List[str] = Field(default_factory=list)


class Report(BaseModel):
    """Envelope written as report.json by every CLI run."""
    config: RunConfig
    tracker: Dict[str, Any] = Field(default_factory=dict)
    result: Dict[str, Any] = Field(default_factory=dict)


def load_schema(name: str) -> Dict:
    with open(SCHEMA_DIR / f"{name}.schema.json") as f:
        return json.load(f)


def validate_payload(payload: Dict, name: str) -> bool:
    """
    Validate a JSON payload against a shipped schema.

    Args:
        payload: decoded JSON object
        name: schema stem, e.g. "report" or "recon_distance"

    Returns:
        True when valid; raises jsonschema.ValidationError otherwise
    """
    jsonschema.validate(instance=payload, schema=load_schema(name))
    logger.info(f"✅ Payload validated against {name}.schema.json")
    return True


def write_report(report: Report, out_dir: Path, schema: Optional[str] = None) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = json.loads(report.model_dump_json())
    validate_payload(payload, "report")
    if schema:
        validate_payload(payload["result"], schema)
    path = out_dir / "report.json"
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)
    logger.info(f"✅ Report written to {path}")
    return path
