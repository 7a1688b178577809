"""File helpers shared by the stream generator, the metrics export and the CLI."""

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Union

import pandas as pd


def load_json_object(json_path: Union[str, Path]) -> dict:
    """Load a JSON file whose root must be an object.

    Raises
    ------
    ValueError
        If the root is not an object or the file is not valid JSON.
    OSError
        If the file cannot be read.

    """
    with open(json_path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValueError(f"'{json_path}' is not valid JSON: {exc}") from exc

    if not isinstance(data, dict):
        raise ValueError(f"'{json_path}' must contain a JSON object (key-value pairs).")
    return data


def format_value(value: Any) -> str:
    """Render a header or summary value; floats use their shortest exact form."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(v) for v in value)
    if isinstance(value, dict):
        return json.dumps(value, sort_keys=True)
    return str(getattr(value, "value", value))


def write_commented_csv(path: Union[str, Path], frame: pd.DataFrame, header: dict, footer: dict):
    """Write '# key: value' header lines, the table, then '# key: value' footer lines.

    Identical inputs give byte-identical files.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        for key, value in header.items():
            f.write(f"# {key}: {format_value(value)}\n")
        frame.to_csv(f, index=False, lineterminator="\n", na_rep="")
        for key, value in footer.items():
            f.write(f"# {key}: {format_value(value)}\n")


def calculate_local_checksum(file_path: Path, algorithm: str = "sha256") -> str:
    """Calculate the checksum of a file using the given hashing algorithm.

    Args:
    ----
        file_path (Path): Path to the file.
        algorithm (str): Hashing algorithm (e.g., 'md5', 'sha1', 'sha256').

    Returns:
    -------
        str: Hex digest of the checksum.

    """
    try:
        hasher = hashlib.new(algorithm)
    except ValueError as e:
        raise ValueError(f"Unsupported hash algorithm: {algorithm}") from e

    with Path(file_path).open("rb") as f:
        for chunk in iter(lambda: f.read(8192), b""):
            hasher.update(chunk)

    return hasher.hexdigest()
