"""Board measurements used to rank configurations by images/s per watt.

These are post-synthesis figures for Kintex-7 XC7K160T builds (clock from
timing analysis, dynamic power at 12.5% toggle rate) together with the
accuracy each build reached.  Nothing here is computed by this package;
power and clock are inputs.  A user table in the same shape overrides them.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class HwRow:
    arch: str
    quant: str  # "WB,MB,FPd"
    accuracy: float  # fraction
    power_mw: float
    clock_mhz: float
    efficiency: float | None = None  # (img/s)/W as reported

    @property
    def key(self):
        return (self.arch, self.quant)


KINTEX7_REFERENCE = [
    HwRow("784-25-10", "4,4,4", 0.7350, 162, 188.6),
    HwRow("784-25-10", "10,10,6", 0.9619, 187, 166.6),
    HwRow("784-50-10", "4,4,4", 0.8329, 177, 188.6),
    HwRow("784-50-10", "10,10,6", 0.9716, 222, 161.2),
    HwRow("784-75-10", "4,4,4", 0.8626, 191, 185.2),
    HwRow("784-75-10", "6,9,5", 0.9754, 231, 163.9, 81712.5),
    HwRow("784-75-10", "10,10,6", 0.9786, 254, 153.8, 69692.9),
    HwRow("784-100-10", "4,4,4", 0.7353, 202, 172.4),
    HwRow("784-100-10", "6,9,5", 0.9759, 251, 156.2, 71696.4),
    HwRow("784-100-10", "10,10,4", 0.9778, 285, 151.5, 61227.4),
]


def as_lookup(rows) -> dict:
    return {r.key: r for r in rows}


def load_table(path) -> list[HwRow]:
    """Read a JSON list of row objects (same fields as :class:`HwRow`)."""
    data = json.loads(Path(path).read_text())
    return [HwRow(**d) for d in data]
