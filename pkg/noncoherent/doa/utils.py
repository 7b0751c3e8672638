"""noncoherent.doa utilities."""

import csv
import hashlib
import time
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union

import numpy as np
import orjson

from noncoherent.doa import __version__


def wrap_phase(phase: Union[float, np.ndarray]) -> np.ndarray:
    """Wrap angles (radians) to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(phase, dtype=float), 2 * np.pi)


def relative_change(new: np.ndarray, old: np.ndarray) -> float:
    """||new - old|| / ||old||, 0 when both vanish."""
    num = np.linalg.norm(new - old)
    den = np.linalg.norm(old)
    if den == 0:
        return 0.0 if num == 0 else np.inf

    return float(num / den)


def dumps(data: Any) -> bytes:
    """Serialize to JSON with sorted keys."""
    return orjson.dumps(
        data, option=orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY
    )


def config_hash(data: Dict) -> str:
    """Return the sha256 of a configuration dictionary."""
    return hashlib.sha256(dumps(data)).hexdigest()


def comment_header(**metadata: Any) -> List[str]:
    """Build the `#` comment lines every output file starts with."""
    lines = [f"# noncoherent-doa {__version__}"]
    for key in sorted(metadata):
        lines.append(f"# {key}: {metadata[key]}")

    return lines


def read_comment_header(path: Union[str, Path]) -> Dict[str, str]:
    """Parse `# key: value` header lines."""
    metadata = {}
    with open(path, "r") as f:
        for line in f:
            if not line.startswith("#"):
                break

            key, sep, value = line[1:].strip().partition(": ")
            if sep:
                metadata[key] = value

    return metadata


def write_csv(
    path: Union[str, Path],
    header: Sequence[str],
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
) -> Path:
    """Write a CSV file preceded by a comment header."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        for line in header:
            f.write(line + "\n")

        writer = csv.writer(f)
        writer.writerow(columns)
        writer.writerows(rows)

    return path


def read_csv(path: Union[str, Path]) -> List[Dict[str, str]]:
    """Read a CSV file written by `write_csv`, skipping the comment header."""
    with open(path, "r", newline="") as f:
        lines = [line for line in f if not line.startswith("#")]

    return list(csv.DictReader(lines))


class Timer(object):
    """Time a code block."""

    def __enter__(self):
        """Starts timer."""
        self.start = time.perf_counter()
        return self

    def __exit__(self, ty, val, tb):
        """Stops timer."""
        self.end = time.perf_counter()
        self.elapsed = self.end - self.start
