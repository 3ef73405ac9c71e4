"""
Data Service
Scenario file loading and result-table export
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import pandas as pd

from ..config.settings import BASE_COLUMNS, CSV_FLOAT_FORMAT
from ..models.errors import ScenarioFileError, ValidationError
from ..models.network import LinkStats, ScenarioConfig, db_to_linear

logger = logging.getLogger(__name__)

SORT_COLUMNS = ['x', 'M', 'alloc', 'select']


def load_scenario(file_path: Union[str, Path]) -> ScenarioConfig:
    """
    Load and validate a scenario JSON file.

    Args:
        file_path: Path to the scenario file

    Returns:
        ScenarioConfig

    Raises:
        ScenarioFileError: missing file or malformed JSON (with line and column)
        ValidationError: well-formed file with invalid content
    """
    path = Path(file_path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ScenarioFileError(path, f"cannot read scenario file ({e.strerror or e})") from e

    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioFileError(path, e.msg, e.lineno, e.colno) from e

    if not isinstance(data, dict):
        raise ScenarioFileError(path, "top level must be a JSON object", 1, 1)
    try:
        cfg = scenario_from_dict(data, default_name=path.stem)
    except ValidationError as e:
        raise ScenarioFileError(path, str(e)) from e
    logger.debug("Loaded scenario %s from %s", cfg.name, path)
    return cfg


def _number(data: Mapping[str, Any], key: str) -> float:
    if key not in data:
        raise ValidationError(f"missing field {key!r}")
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"field {key!r} must be a number, got {value!r}")
    if not math.isfinite(float(value)):
        raise ValidationError(f"field {key!r} must be finite, got {value!r}")
    return float(value)


def scenario_from_dict(data: Mapping[str, Any], default_name: str = "scenario") -> ScenarioConfig:
    """
    Build a ScenarioConfig from the scenario-file mapping.

    Primary power is given either as `P_u_dB` (absolute) or as `gamma_u_dB`
    relative to `N0_dB`. Links come as `links` (dB) or `links_linear`.
    """
    rates = data.get('rates')
    if not isinstance(rates, dict):
        raise ValidationError("missing object 'rates' with Ru, Rs, Rd")
    n0 = db_to_linear(_number(data, 'N0_dB'))
    if 'P_u_dB' in data and 'gamma_u_dB' in data:
        raise ValidationError("give either 'P_u_dB' or 'gamma_u_dB', not both")
    if 'P_u_dB' in data:
        p_u = db_to_linear(_number(data, 'P_u_dB'))
    elif 'gamma_u_dB' in data:
        p_u = n0 * db_to_linear(_number(data, 'gamma_u_dB'))
    else:
        raise ValidationError("missing primary power: 'P_u_dB' or 'gamma_u_dB'")

    if 'links' in data and 'links_linear' in data:
        raise ValidationError("give either 'links' (dB) or 'links_linear', not both")
    if 'links' in data:
        links = _link_mapping(data['links'], 'links')
        link_stats = LinkStats.from_db(links)
    elif 'links_linear' in data:
        links = _link_mapping(data['links_linear'], 'links_linear')
        link_stats = LinkStats.from_linear(links)
    else:
        raise ValidationError("missing link statistics: 'links' or 'links_linear'")

    num_relays = data.get('M')
    if isinstance(num_relays, bool) or not isinstance(num_relays, int):
        raise ValidationError(f"field 'M' must be an integer, got {num_relays!r}")

    return ScenarioConfig(
        rate_u=_number(rates, 'Ru'),
        rate_s=_number(rates, 'Rs'),
        rate_d=_number(rates, 'Rd'),
        p_u=p_u,
        n0=n0,
        p_th=_number(data, 'P_th'),
        num_relays=num_relays,
        links=link_stats,
        name=str(data.get('name', default_name)),
    )


def _link_mapping(value: Any, field_name: str) -> Dict[str, float]:
    if not isinstance(value, dict) or not value:
        raise ValidationError(f"field {field_name!r} must be a non-empty object")
    return {str(k): _number(value, k) for k in value}


# ============================================================================
# RESULT TABLES
# ============================================================================

def results_frame(rows, num_relays: int) -> pd.DataFrame:
    """
    Result rows as a DataFrame with the stable column schema.

    Args:
        rows: Iterable of dicts keyed by column name
        num_relays: Largest relay count; fixes the P_r* and alpha* columns

    Returns:
        DataFrame sorted by (x, M, alloc, select)
    """
    columns = (BASE_COLUMNS
               + [f'P_r{i + 1}' for i in range(num_relays)]
               + [f'alpha{i + 1}' for i in range(num_relays)])
    df = pd.DataFrame(list(rows), columns=columns)
    if df.empty:
        return df
    return df.sort_values(SORT_COLUMNS, kind='mergesort').reset_index(drop=True)


def export_to_csv(df: pd.DataFrame, file_path: Optional[Union[str, Path]] = None) -> str:
    """
    Serialize a result table to CSV.

    Args:
        df: DataFrame to export
        file_path: Optional destination; the CSV text is returned either way

    Returns:
        CSV string
    """
    text = df.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator='\n')
    if file_path is not None:
        Path(file_path).write_text(text, encoding='utf-8')
        logger.info("Wrote %d rows to %s", len(df), file_path)
    return text
