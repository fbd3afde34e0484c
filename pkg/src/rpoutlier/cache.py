"""JSON calibration cache: read-through, write-on-success.

The cache file holds an array of entries ``{"key": {...}, "value": {...}}``
keyed by (n, d, delta, alpha, h, N, seed).  Lookups may ignore the seed
component, in which case the newest matching entry wins.
"""

from __future__ import annotations

import json
import os
import time
from pathlib import Path

from .detector import DetectorConstants
from .errors import CacheError

__all__ = ["CalibrationCache", "cache_key"]

_KEY_FIELDS = ("n", "d", "delta", "alpha", "h", "N", "seed")


def cache_key(
    n: int, d: int, delta: float, alpha: float, h: float, N: int, seed: int
) -> dict:
    return {"n": n, "d": d, "delta": delta, "alpha": alpha, "h": h, "N": N, "seed": seed}


class CalibrationCache:
    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.path = self.directory / "calibrations.json"

    def _load(self) -> list[dict]:
        if not self.path.exists():
            return []
        try:
            entries = json.loads(self.path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CacheError(f"cannot read calibration cache {self.path}: {exc}") from exc
        if not isinstance(entries, list):
            raise CacheError(f"calibration cache {self.path} is not a JSON array")
        return entries

    def lookup(self, key: dict, ignore_seed: bool = False) -> DetectorConstants | None:
        fields = [f for f in _KEY_FIELDS if not (ignore_seed and f == "seed")]
        best = None
        for entry in self._load():
            entry_key = entry.get("key", {})
            if all(entry_key.get(f) == key[f] for f in fields):
                if best is None or entry["value"].get("timestamp", 0) >= best[
                    "value"
                ].get("timestamp", 0):
                    best = entry
        if best is None:
            return None
        value = best["value"]
        return DetectorConstants(
            a=float(value["a"]),
            b=float(value["b"]),
            n=int(best["key"]["n"]),
            d=int(best["key"]["d"]),
            alpha=float(best["key"]["alpha"]),
            delta=float(best["key"]["delta"]),
            h=float(best["key"]["h"]),
            provenance={
                "mc_size": best["key"]["N"],
                "seed": best["key"]["seed"],
                "estimated_level": value.get("estimated_level"),
                "mean_projections": value.get("mean_projections"),
                "cached": True,
            },
        )

    def store(
        self,
        key: dict,
        a: float,
        b: float,
        estimated_level: float,
        mean_projections: float,
    ) -> None:
        entries = self._load()
        entries = [
            e
            for e in entries
            if not all(e.get("key", {}).get(f) == key[f] for f in _KEY_FIELDS)
        ]
        entries.append(
            {
                "key": dict(key),
                "value": {
                    "a": a,
                    "b": b,
                    "estimated_level": estimated_level,
                    "mean_projections": mean_projections,
                    "timestamp": time.time(),
                },
            }
        )
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
            tmp = self.path.with_suffix(".json.tmp")
            tmp.write_text(json.dumps(entries, indent=2) + "\n", encoding="utf-8")
            os.replace(tmp, self.path)
        except OSError as exc:
            raise CacheError(f"cannot write calibration cache {self.path}: {exc}") from exc
