"""Panel CSV ingestion, run configuration, and report serialization.

PanelFile schema: UTF-8, LF line endings, comma separated, `.` decimal
separator.  Header row holds asset labels (at most one tagged `#cash`);
data rows hold an ISO-8601 date followed by one positive decimal price per
asset.  Dates map onto a uniform grid in year fractions (365.25-day year).
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np
import yaml

from .catalog import CATALOG_NAMES
from .gauge import PricePanel
from .grid import TimeGrid

DAYS_PER_YEAR = 365.25
VERSION = "0.1.0"


class PanelFormatError(ValueError):
    """Malformed panel file; message carries row/column coordinates."""


def ingest(path: str | Path, normalize: bool = False) -> PricePanel:
    """Read a PanelFile CSV into a PricePanel.

    ``normalize`` rescales every column to price 1 at inception (the scaling
    freedom of the price gauge).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    if len(rows) < 3:
        raise PanelFormatError(f"{path}: need a header and at least two data rows")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2:
        raise PanelFormatError(f"{path}: header must list a date column and at least one asset")
    labels = header[1:]
    cash_cols = [l for l in labels if l.endswith("#cash")]
    if len(cash_cols) > 1:
        raise PanelFormatError(f"{path}: at most one column may carry the #cash tag")

    n_assets = len(labels)
    dates: list[date] = []
    prices = np.empty((len(rows) - 1, n_assets))
    for r, row in enumerate(rows[1:], start=1):
        if len(row) != n_assets + 1:
            raise PanelFormatError(
                f"{path}: ragged row {r}: expected {n_assets + 1} fields, got {len(row)}"
            )
        try:
            day = date.fromisoformat(row[0].strip())
        except ValueError as exc:
            raise PanelFormatError(f"{path}: row {r}: bad date {row[0]!r}: {exc}") from None
        if dates and day <= dates[-1]:
            raise PanelFormatError(
                f"{path}: row {r}: date {day.isoformat()} not after the previous row"
            )
        dates.append(day)
        for c, cell in enumerate(row[1:]):
            try:
                value = float(cell)
            except ValueError:
                raise PanelFormatError(
                    f"{path}: row {r}, column {labels[c]!r}: not a number: {cell!r}"
                ) from None
            if not np.isfinite(value) or value <= 0:
                raise PanelFormatError(
                    f"{path}: row {r}, column {labels[c]!r}: nonpositive price {cell!r}"
                )
            prices[r - 1, c] = value

    if normalize:
        prices = prices / prices[0]
    span_years = (dates[-1] - dates[0]).days / DAYS_PER_YEAR
    steps = len(dates) - 1
    grid = TimeGrid(t0=0.0, dt=span_years / steps, steps=steps)
    return PricePanel(grid=grid, prices=prices, asset_ids=tuple(labels))


def export_panel(panel: PricePanel, path: str | Path, start: date = date(2005, 7, 1)) -> None:
    """Write a PricePanel back to the PanelFile CSV schema."""
    if panel.asset_ids is None:
        raise ValueError("panel must carry asset labels to export")
    path = Path(path)
    with path.open("w", newline="\n", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["date", *panel.asset_ids])
        for k in range(panel.grid.n_points):
            day = start + timedelta(days=round(k * panel.grid.dt * DAYS_PER_YEAR))
            writer.writerow([day.isoformat(), *(repr(float(p)) for p in panel.prices[k])])


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

_DEFAULT_CONFIG: dict[str, dict[str, Any]] = {
    "simulate": {
        "n_assets": 8,
        "n_paths": 1000,
        "seed": 1,
        "horizon": 1.0,
        "dt": 1.0 / 64,
        "noise": "normal",
        "process": "constant",
        "process_params": {"mu": 0.05, "sigma": 0.2},
        "xi": 0.0,
    },
    "riskfree": {
        "weight_scheme": "equal",
        "cap_c": 4.0,
        "rebalance": "every-step",
        "sizes": [16, 64, 256, 1024],
        "n_paths": 2000,
    },
    "pde": {
        "n_s": 400,
        "n_t": 400,
        "strike": 100.0,
        "payoff": "call",
        "sigma": 0.2,
        "tau": 1.0,
        "a": 0.0,
        "b": 0.0,
    },
    "discount": {"window": 63},
    "sensitivity": {"n_assets": 64, "n_factors": 3, "cap_c": 4.0, "seed": 7},
}


@dataclass(frozen=True)
class RunConfig:
    """Validated key-value configuration with per-command sections."""

    data: dict[str, dict[str, Any]] = field(default_factory=dict)

    def section(self, name: str) -> dict[str, Any]:
        merged = dict(_DEFAULT_CONFIG.get(name, {}))
        merged.update(self.data.get(name, {}))
        return merged

    def sha256(self) -> str:
        return hashlib.sha256(
            json.dumps(self.data, sort_keys=True, default=str).encode()
        ).hexdigest()


def load_config(path: Optional[str | Path]) -> RunConfig:
    """Load and validate a YAML RunConfig; missing path means all defaults."""
    if path is None:
        return RunConfig({})
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(raw, dict):
        raise ValueError("config must be a mapping of sections")
    unknown = set(raw) - set(_DEFAULT_CONFIG)
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    config = RunConfig(raw)
    _validate(config)
    return config


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValueError(f"invalid config: {message}")


def _validate(config: RunConfig) -> None:
    sim = config.section("simulate")
    _require(sim["process"] in CATALOG_NAMES, f"unknown process {sim['process']!r}")
    _require(int(sim["n_assets"]) >= 1, "simulate.n_assets must be >= 1")
    _require(int(sim["n_paths"]) >= 1, "simulate.n_paths must be >= 1")
    _require(float(sim["horizon"]) > 0, "simulate.horizon must be positive")
    _require(float(sim["dt"]) > 0, "simulate.dt must be positive")
    _require(sim["noise"] in ("normal", "uniform", "two-point"), f"unknown noise {sim['noise']!r}")
    rf = config.section("riskfree")
    _require(float(rf["cap_c"]) >= 1.0, "riskfree.cap_c must be >= 1")
    pde = config.section("pde")
    _require(pde["payoff"] in ("call", "put"), f"unknown payoff {pde['payoff']!r}")
    _require(float(pde["strike"]) > 0, "pde.strike must be positive")
    _require(int(pde["n_s"]) >= 10 and int(pde["n_t"]) >= 2, "pde grid too coarse")
    _require(float(pde["tau"]) > 0, "pde.tau must be positive")
    _require(float(pde["sigma"]) >= 0, "pde.sigma must be nonnegative")
    disc = config.section("discount")
    _require(int(disc["window"]) >= 2, "discount.window must be >= 2")
    sens = config.section("sensitivity")
    _require(
        0 < int(sens["n_factors"]) < int(sens["n_assets"]),
        "sensitivity needs 0 < n_factors < n_assets",
    )


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------

def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, Mapping):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def write_report(
    path: str | Path,
    command: str,
    body: Mapping[str, Any],
    config: RunConfig,
    seed: Optional[int] = None,
    timestamp: bool = True,
) -> dict:
    """Serialize a report with its mandatory provenance block.

    ``timestamp=False`` selects the canonical form used for determinism
    comparisons.
    """
    provenance: dict[str, Any] = {
        "command": command,
        "config_sha256": config.sha256(),
        "seed": seed,
        "version": VERSION,
    }
    if timestamp:
        provenance["generated_at"] = datetime.now().isoformat(timespec="seconds")
    document = {"provenance": provenance, "report": _plain(body)}
    Path(path).write_text(
        yaml.safe_dump(document, sort_keys=True, default_flow_style=False),
        encoding="utf-8",
    )
    return document


def read_report(path: str | Path) -> dict:
    document = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if "provenance" not in document or "report" not in document:
        raise ValueError("report file is missing its provenance block")
    return document
