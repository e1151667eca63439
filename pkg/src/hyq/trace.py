from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Any


@dataclass
class HybridTrace:
    """Per-iteration record of a hybrid run.

    Each solver appends one dict per outer iteration; ``meta`` holds run-level
    facts (initial values, repair counts, stop reason).
    """

    rows: list[dict[str, Any]] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)

    def append(self, **row: Any) -> None:
        self.rows.append(row)

    def column(self, name: str) -> list[Any]:
        return [r.get(name) for r in self.rows]

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self, path=None) -> str:
        header: list[str] = []
        for r in self.rows:
            for k in r:
                if k not in header:
                    header.append(k)
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
        writer.writeheader()
        for r in self.rows:
            writer.writerow({k: _cell(v) for k, v in r.items()})
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _cell(v: Any) -> Any:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(str(x) for x in v)
    return v
