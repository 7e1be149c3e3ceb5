import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

from zoprolab.solvers.state import fmt

MANIFEST_NAME = "manifest.json"
METRICS_NAME = "metrics.csv"
TIMINGS_NAME = "timings.csv"
RUN_TIMINGS_NAME = "run_timings.csv"
COMPARISON_NAME = "comparison.csv"


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def write_json(path: str | Path, doc) -> None:
    Path(path).write_text(dumps(doc))


def read_json(path: str | Path):
    with open(path) as f:
        return json.load(f)


def json_digest(doc) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return fmt(v)
    return str(v)


def write_rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([cell(v) for v in row])


def read_rows(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))
