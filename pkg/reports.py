"""
CSV and JSON Report Writers

All run artifacts go through here. Files are written to a temporary sibling and
renamed into place, so a crashed cell never leaves a half-written CSV behind.
Floats are written with 17 significant digits so reruns are byte-identical.
"""

import csv
import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import numpy as np


def format_value(value):
    """Render one CSV cell."""
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if value is None:
        return ''
    return str(value)


def _atomic_open(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    return os.fdopen(fd, 'w', newline='', encoding='utf-8'), Path(tmp_name)


def write_csv_report(path, fieldnames: Sequence[str], rows: Iterable[Dict]) -> Path:
    """
    Write rows (dicts keyed by fieldnames) to a CSV file.

    Args:
        path: Destination file
        fieldnames: Column order, also the header
        rows: Row dicts; missing keys become empty cells

    Returns:
        The destination path
    """
    path = Path(path)
    handle, tmp_path = _atomic_open(path)
    try:
        with handle as csvfile:
            writer = csv.DictWriter(csvfile, fieldnames=list(fieldnames), lineterminator='\n')
            writer.writeheader()
            for row in rows:
                writer.writerow({key: format_value(row.get(key)) for key in fieldnames})
        os.replace(tmp_path, path)
    except BaseException:
        tmp_path.unlink(missing_ok=True)
        raise
    return path


def write_matrix_csv(path, row_axis: Sequence[float], col_axis: Sequence[float],
                     values: np.ndarray, corner: str = 'y\\x') -> Path:
    """Dense matrix with the column axis as header row and the row axis as first column."""
    path = Path(path)
    handle, tmp_path = _atomic_open(path)
    try:
        with handle as csvfile:
            writer = csv.writer(csvfile, lineterminator='\n')
            writer.writerow([corner] + [format_value(float(c)) for c in col_axis])
            for r, row in zip(row_axis, np.asarray(values)):
                writer.writerow([format_value(float(r))] + [format_value(float(v)) for v in row])
        os.replace(tmp_path, path)
    except BaseException:
        tmp_path.unlink(missing_ok=True)
        raise
    return path


def write_json(path, document) -> Path:
    path = Path(path)
    handle, tmp_path = _atomic_open(path)
    try:
        with handle as f:
            json.dump(document, f, indent=2, sort_keys=True, default=_json_default)
            f.write('\n')
        os.replace(tmp_path, path)
    except BaseException:
        tmp_path.unlink(missing_ok=True)
        raise
    return path


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def artifact_digest(path) -> str:
    """Hex SHA256 of one artifact, as listed in summary.json."""
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 16), b''):
            digest.update(block)
    return digest.hexdigest()


def artifact_manifest(paths: Iterable[Path], root: Path) -> List[Dict[str, str]]:
    """Relative path and SHA256 for each artifact, sorted by path."""
    entries = []
    for p in sorted(Path(p) for p in paths):
        entries.append({'path': p.relative_to(root).as_posix(), 'sha256': artifact_digest(p)})
    return entries
