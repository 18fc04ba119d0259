"""Dataset and protocol file formats.

Dataset files are UTF-8 text. Lines starting with ``#`` are comments. The
first other line is a header ``n=<int> total_counts=<int|per-row>``; every
following line is a data row, either raw counts ``x1,x2,y,b,count`` or a
win probability ``x1,x2,y,p_win``. Probability rows need an integer
``total_counts``: they become ``round(p_win * total_counts)`` wins, with the
remaining events split as evenly as possible over the ``n - 1`` wrong
outcomes. Writers always emit raw counts so files round-trip exactly.

Protocol files are JSON objects with ``n``, a ``state`` spec (``ideal``,
``isotropic`` with ``v``, or ``explicit`` with ``real``/``imag`` matrices)
and a ``measurements`` spec (``product`` or ``explicit`` with a list of two
POVMs, each a list of ``real``/``imag`` effects).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .protocol import (
    Povm,
    StochasticProtocol,
    encoding_unitaries,
    ideal_measurements,
    isotropic_state,
)
from .stats import DatasetError, ExperimentDataset

BUNDLED_DATASETS = {"tables_s2_s3": "tables_s2_s3.csv"}

_HEADER = re.compile(r"^n=(\d+)\s+total_counts=(\d+|per-row)$")


class ParseError(DatasetError):
    """Malformed input file; the message carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


# --- datasets ----------------------------------------------------------------


def _spread_losses(n: int, winner: int, losses: int) -> np.ndarray:
    row = np.zeros(n, dtype=np.int64)
    others = [b for b in range(n) if b != winner]
    q, r = divmod(losses, len(others))
    for k, b in enumerate(others):
        row[b] = q + (1 if k < r else 0)
    return row


def parse_dataset(text: str, total_counts: int | None = None) -> ExperimentDataset:
    """Parse dataset text; ``total_counts`` overrides the header value."""
    header: tuple[int, int | None] | None = None
    counts: np.ndarray | None = None
    comments: list[str] = []
    seen: set[tuple[int, int, int]] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            comments.append(line[1:].strip())
            continue
        if header is None:
            m = _HEADER.match(line)
            if not m:
                raise ParseError(f"expected header 'n=<int> total_counts=<int|per-row>', got {line!r}", lineno)
            n = int(m.group(1))
            if n < 2:
                raise ParseError("n must be >= 2", lineno)
            total = None if m.group(2) == "per-row" else int(m.group(2))
            if total_counts is not None:
                total = total_counts
            header = (n, total)
            counts = np.zeros((n, n, 2, n), dtype=np.int64)
            continue
        n, total = header
        fields = [f.strip() for f in line.split(",")]
        if len(fields) not in (4, 5):
            raise ParseError(f"expected 4 or 5 comma-separated fields, got {len(fields)}", lineno)
        try:
            x1, x2, y = (int(f) for f in fields[:3])
        except ValueError:
            raise ParseError(f"non-integer setting index in {line!r}", lineno) from None
        if not (0 <= x1 < n and 0 <= x2 < n):
            raise ParseError(f"input ({x1}, {x2}) out of range for n={n}", lineno)
        if y not in (1, 2):
            raise ParseError(f"setting y must be 1 or 2, got {y}", lineno)
        if len(fields) == 5:
            try:
                b, c = int(fields[3]), int(fields[4])
            except ValueError:
                raise ParseError(f"non-integer outcome or count in {line!r}", lineno) from None
            if not 0 <= b < n:
                raise ParseError(f"outcome {b} out of range for n={n}", lineno)
            if c < 0:
                raise ParseError(f"negative count {c}", lineno)
            counts[x1, x2, y - 1, b] += c
        else:
            if total is None:
                raise ParseError("probability rows need an integer total_counts", lineno)
            try:
                p = float(fields[3])
            except ValueError:
                raise ParseError(f"bad probability {fields[3]!r}", lineno) from None
            if not 0.0 <= p <= 1.0:
                raise ParseError(f"probability {p} outside [0, 1]", lineno)
            if (x1, x2, y) in seen:
                raise ParseError(f"duplicate probability row for ({x1}, {x2}, {y})", lineno)
            seen.add((x1, x2, y))
            winner = x1 if y == 1 else x2
            wins = int(round(p * total))
            row = _spread_losses(n, winner, total - wins)
            row[winner] = wins
            counts[x1, x2, y - 1] += row
    if header is None:
        raise ParseError("missing header line")
    meta = {"comments": "\n".join(comments)}
    if header[1] is not None:
        meta["total_counts"] = str(header[1])
    ds = ExperimentDataset(header[0], counts, metadata=meta)
    ds.validate()
    return ds


def load_dataset(path: str | Path, total_counts: int | None = None) -> ExperimentDataset:
    """Load a dataset file, or a bundled one by name (e.g. ``tables_s2_s3``)."""
    return parse_dataset(read_dataset_text(path), total_counts)


def read_dataset_text(path: str | Path) -> str:
    name = str(path)
    if name in BUNDLED_DATASETS and not Path(name).exists():
        return resources.files("densecode.data").joinpath(BUNDLED_DATASETS[name]).read_text("utf-8")
    return Path(path).read_text(encoding="utf-8")


def format_dataset(ds: ExperimentDataset) -> str:
    lines = ["# written by densecode; raw counts x1,x2,y,b,count", f"n={ds.n} total_counts=per-row"]
    for r in ds.records:
        lines.append(f"{r.x1},{r.x2},{r.y},{r.b},{r.count}")
    return "\n".join(lines) + "\n"


def save_dataset(ds: ExperimentDataset, path: str | Path) -> None:
    Path(path).write_text(format_dataset(ds), encoding="utf-8")


# --- protocols ---------------------------------------------------------------


def _matrix_to_json(m: np.ndarray) -> dict[str, list]:
    return {"real": m.real.tolist(), "imag": m.imag.tolist()}


def _matrix_from_json(obj: Any, where: str) -> np.ndarray:
    try:
        m = np.asarray(obj["real"], dtype=float) + 1j * np.asarray(obj["imag"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{where}: expected {{'real': [[...]], 'imag': [[...]]}} ({exc})") from None
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ParseError(f"{where}: matrix must be square, got shape {m.shape}")
    return m


@dataclass
class ProtocolSpec:
    """Serializable description of a stochastic dense-coding protocol."""

    n: int
    state: dict[str, Any] = field(default_factory=lambda: {"kind": "ideal"})
    measurements: dict[str, Any] = field(default_factory=lambda: {"kind": "product"})

    def build(self) -> StochasticProtocol:
        n = self.n
        kind = self.state.get("kind")
        if kind == "ideal":
            rho = isotropic_state(n, 1.0)
        elif kind == "isotropic":
            rho = isotropic_state(n, float(self.state["v"]))
        elif kind == "explicit":
            rho = _matrix_from_json(self.state, "state")
        else:
            raise ParseError(f"unknown state kind {kind!r}")
        mkind = self.measurements.get("kind")
        if mkind == "product":
            meas = ideal_measurements(n)
        elif mkind == "explicit":
            povms = self.measurements.get("povms")
            if not isinstance(povms, list) or len(povms) != 2:
                raise ParseError("explicit measurements need a list of two POVMs")
            meas = tuple(
                Povm(np.stack([_matrix_from_json(e, f"povm {k} effect {b}") for b, e in enumerate(p)]))
                for k, p in enumerate(povms)
            )
        else:
            raise ParseError(f"unknown measurement kind {mkind!r}")
        return StochasticProtocol(n, rho, encoding_unitaries(n), meas)

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "state": self.state, "measurements": self.measurements}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> ProtocolSpec:
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from None
        if not isinstance(obj, dict) or not isinstance(obj.get("n"), int):
            raise ParseError("protocol document needs an integer 'n'")
        return cls(obj["n"], obj.get("state", {"kind": "ideal"}), obj.get("measurements", {"kind": "product"}))

    @classmethod
    def explicit(cls, protocol: StochasticProtocol) -> ProtocolSpec:
        """Spec with the state and measurements written out in full."""
        return cls(
            protocol.n,
            {"kind": "explicit", **_matrix_to_json(protocol.state)},
            {
                "kind": "explicit",
                "povms": [[_matrix_to_json(e) for e in m.effects] for m in protocol.measurements],
            },
        )


def load_protocol(path: str | Path) -> ProtocolSpec:
    return ProtocolSpec.from_json(Path(path).read_text(encoding="utf-8"))


def save_protocol(spec: ProtocolSpec, path: str | Path) -> None:
    Path(path).write_text(spec.to_json() + "\n", encoding="utf-8")
