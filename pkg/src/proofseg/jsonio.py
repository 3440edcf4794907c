"""Line-delimited JSON helpers shared by file formats and wire protocols.

One record per line, UTF-8, compact separators, non-ASCII preserved.
Files may start with a single header line of the form ``{"header": {...}}``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, List, Optional, Tuple, Union


def dumps(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def loads(line: str) -> Any:
    return json.loads(line)


def write_jsonl(path: Union[str, Path], records: Iterable[Any], header: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header is not None:
            fh.write(dumps({"header": header}) + "\n")
        for record in records:
            fh.write(dumps(record) + "\n")


def read_jsonl(path: Union[str, Path]) -> Tuple[Optional[dict], List[Any]]:
    """Read records, splitting off the header line when present."""
    header: Optional[dict] = None
    records: List[Any] = []
    with open(path, encoding="utf-8") as fh:
        for index, raw in enumerate(fh):
            line = raw.strip()
            if not line:
                continue
            obj = loads(line)
            if index == 0 and isinstance(obj, dict) and set(obj) == {"header"}:
                header = obj["header"]
            else:
                records.append(obj)
    return header, records
