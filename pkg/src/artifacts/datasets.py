"""
Dataset files for voxconn.

A dataset is a manifest JSON listing region labels and CSV paths (relative
to the manifest) plus one CSV per region with header
``voxel_id,x,y,z,t1..tM`` and one row per voxel.
"""

import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import structlog

from ..core.errors import DatasetFormatError
from ..models.data import RegionData
from ..models.results import read_json, write_json

logger = structlog.get_logger(__name__)

MANIFEST_NAME = "manifest.json"
COORD_COLUMNS = ("x", "y", "z")
_LINE_PATTERN = re.compile(r"line (\d+)")

PathLike = Union[str, Path]


def region_columns(n_times: int) -> List[str]:
    return ["voxel_id", *COORD_COLUMNS, *(f"t{m}" for m in range(1, n_times + 1))]


def _check_header(path: Path, columns: Sequence[str]) -> int:
    columns = list(columns)
    if columns[:4] != ["voxel_id", *COORD_COLUMNS]:
        raise DatasetFormatError(str(path), "header must start with voxel_id,x,y,z", line=1)
    n_times = len(columns) - 4
    if n_times < 1 or columns != region_columns(n_times):
        raise DatasetFormatError(str(path), "time columns must be t1..tM in order", line=1)
    return n_times


def read_region_csv(path: PathLike, label: str) -> RegionData:
    """
    Parse one region CSV.

    Raises:
        DatasetFormatError: on a bad header, ragged or non-numeric rows or
            duplicate voxel ids; the message carries the file line number
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetFormatError(str(path), "file not found")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.ParserError as e:
        match = _LINE_PATTERN.search(str(e))
        raise DatasetFormatError(str(path), "ragged row",
                                 line=int(match.group(1)) if match else None) from None
    except pd.errors.EmptyDataError:
        raise DatasetFormatError(str(path), "empty file") from None

    _check_header(path, frame.columns)
    if frame.empty:
        raise DatasetFormatError(str(path), "no voxel rows")

    numeric = frame.apply(pd.to_numeric, errors="coerce")
    missing = frame.isna() | frame.eq("")
    bad = numeric.isna() | missing
    if bad.to_numpy().any():
        row = int(np.nonzero(bad.any(axis=1).to_numpy())[0][0])
        message = "ragged row" if missing.iloc[row].any() else "non-numeric value"
        raise DatasetFormatError(str(path), message, line=row + 2)

    voxel_ids = numeric["voxel_id"]
    duplicated = voxel_ids.duplicated()
    if duplicated.any():
        row = int(np.nonzero(duplicated.to_numpy())[0][0])
        raise DatasetFormatError(str(path), f"duplicate voxel id {frame['voxel_id'].iloc[row]}",
                                 line=row + 2)

    # full-precision parse of the numeric block
    values = np.array([[float(v) for v in row] for row in frame.to_numpy()], dtype=float)
    if not np.all(np.isfinite(values)):
        row = int(np.nonzero(~np.all(np.isfinite(values), axis=1))[0][0])
        raise DatasetFormatError(str(path), "non-finite value", line=row + 2)
    return RegionData(label=label, coords=values[:, 1:4], X=values[:, 4:])


def write_region_csv(region: RegionData, path: PathLike) -> None:
    """Write one region with shortest round-trip float formatting."""
    data = np.column_stack([region.coords, region.X])
    frame = pd.DataFrame(data, columns=region_columns(region.n_times)[1:])
    frame.insert(0, "voxel_id", np.arange(region.n_voxels))
    frame.to_csv(path, index=False, lineterminator="\n")


def _manifest_path(path: PathLike) -> Path:
    path = Path(path)
    return path / MANIFEST_NAME if path.is_dir() else path


def load_dataset(path: PathLike) -> List[RegionData]:
    """
    Load all regions listed in a manifest.

    Args:
        path: Manifest JSON, or a directory containing ``manifest.json``

    Raises:
        DatasetFormatError: on a missing or malformed manifest or region file,
            or when regions disagree on M
    """
    manifest_path = _manifest_path(path)
    if not manifest_path.is_file():
        raise DatasetFormatError(str(manifest_path), "manifest not found")
    try:
        manifest = read_json(str(manifest_path))
        entries = manifest["regions"]
    except (ValueError, KeyError, TypeError) as e:
        raise DatasetFormatError(str(manifest_path), f"invalid manifest: {e}") from None

    regions = []
    for entry in entries:
        try:
            label, relative = entry["label"], entry["path"]
        except (KeyError, TypeError):
            raise DatasetFormatError(str(manifest_path), "each region needs a label and a path") from None
        regions.append(read_region_csv(manifest_path.parent / relative, label))

    if not regions:
        raise DatasetFormatError(str(manifest_path), "manifest lists no regions")
    labels = [r.label for r in regions]
    if len(set(labels)) != len(labels):
        raise DatasetFormatError(str(manifest_path), "duplicate region labels")
    n_times = {r.n_times for r in regions}
    if len(n_times) > 1:
        raise DatasetFormatError(str(manifest_path), f"regions disagree on M: {sorted(n_times)}")

    logger.info("Dataset loaded", manifest=str(manifest_path), regions=len(regions),
                M=regions[0].n_times)
    return regions


def load_manifest(path: PathLike) -> Dict[str, Any]:
    return read_json(str(_manifest_path(path)))


def save_dataset(regions: Sequence[RegionData], directory: PathLike,
                 metadata: Optional[Dict[str, Any]] = None) -> Path:
    """
    Write per-region CSVs and the manifest into ``directory``.

    Returns:
        Path of the manifest
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for region in regions:
        filename = f"{region.label}.csv"
        write_region_csv(region, directory / filename)
        entries.append({"label": region.label, "path": filename})
    manifest_path = directory / MANIFEST_NAME
    write_json({"kind": "dataset", "regions": entries, "metadata": metadata or {}}, str(manifest_path))
    logger.info("Dataset saved", manifest=str(manifest_path), regions=len(entries))
    return manifest_path
