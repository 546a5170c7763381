"""
Visual memory bank: quarantined insertion of novel frames, decision
association, delayed outcome labeling and sector penalties.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json
import logging
import math
from pathlib import Path
from typing import List, Optional

import numpy as np

import perception
import vision


GOOD = "GOOD"
BAD = "BAD"
UNK = "UNK"


class MissingDecision(Exception):
    pass


@dataclass(frozen=True)
class BankParams:
    insert_period: int = 15
    delta_h: int = 10
    delta_z: float = 0.92
    t_quar: int = 60
    t_eval: int = 45
    tau_iou: float = 0.3
    lam: float = 0.5
    knn_k: int = 8
    sector_kernel_width: float = 1.0
    time_decay_halflife: float = 1800.0
    assoc_window: int = 30
    capacity: int = 512

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if not 0 < self.delta_z < 1:
            raise ValueError(f"delta_z must lie in (0, 1), got {self.delta_z}")


@dataclass
class MemoryEntry:
    id: int
    z: np.ndarray = field(repr=False)
    h: int
    t_insert: int
    t_act: int
    sigma: Optional[int] = None
    t_dec: Optional[int] = None
    o: str = UNK
    decision_box: Optional[perception.BBox] = None

    def to_dict(self):
        return {
            "id": self.id,
            "z": [float(v) for v in self.z],
            "h": vision.hash_to_hex(self.h),
            "t_insert": self.t_insert,
            "t_act": self.t_act,
            "sigma": self.sigma,
            "t_dec": self.t_dec,
            "o": self.o,
            "decision_box": self.decision_box.to_list() if self.decision_box else None,
        }

    @classmethod
    def from_dict(cls, data):
        box = data["decision_box"]
        return cls(
            id=data["id"],
            z=np.asarray(data["z"], dtype=np.float64),
            h=vision.hex_to_hash(data["h"]),
            t_insert=data["t_insert"],
            t_act=data["t_act"],
            sigma=data["sigma"],
            t_dec=data["t_dec"],
            o=data["o"],
            decision_box=perception.BBox(*box) if box else None,
        )


class MemoryBank:
    def __init__(self, params: BankParams = BankParams()):
        self.params = params
        self.quarantine: List[MemoryEntry] = []
        self.active: List[MemoryEntry] = []
        self._next_id = 0

    def __len__(self):
        return len(self.quarantine) + len(self.active)

    def entries(self):
        return self.quarantine + self.active

    def reset(self):
        self.quarantine.clear()
        self.active.clear()

    def _evict(self):
        entries = self.entries()
        unlabeled = [m for m in entries if m.o == UNK]
        pool = unlabeled if unlabeled else entries
        victim = min(pool, key=lambda m: (m.t_insert, m.id))
        if victim in self.quarantine:
            self.quarantine.remove(victim)
        else:
            self.active.remove(victim)
        logging.debug(f"Evicted memory entry {victim.id} ({victim.o})")

    def consider_insert(self, z: np.ndarray, h: int, preferred_sector: Optional[int], now: int) -> bool:
        p = self.params
        for m in self.entries():
            if vision.hamming(h, m.h) <= p.delta_h or vision.cosine(z, m.z) >= p.delta_z:
                return False
        while len(self) >= p.capacity:
            self._evict()
        entry = MemoryEntry(self._next_id, np.asarray(z, dtype=np.float64), h,
                            t_insert=now, t_act=now + p.t_quar, sigma=preferred_sector)
        self._next_id += 1
        self.quarantine.append(entry)
        return True

    def promote(self, now: int) -> int:
        ready = [m for m in self.quarantine if m.t_act <= now]
        if ready:
            self.quarantine = [m for m in self.quarantine if m.t_act > now]
            self.active.extend(ready)
        return len(ready)

    def associate_decision(self, sector: int, decision_box: perception.BBox, now: int) -> Optional[int]:
        """Attach a decision to the latest undecided quarantine entry in the window.

        An entry is associated at most once.
        """
        window = self.params.assoc_window
        eligible = [m for m in self.quarantine
                    if now - window <= m.t_insert <= now and m.t_dec is None]
        if not eligible:
            return None
        entry = max(eligible, key=lambda m: (m.t_insert, m.id))
        entry.sigma = sector
        entry.t_dec = now
        entry.decision_box = decision_box
        return entry.id

    def label_due(self, mstp: Optional[perception.MstpSelection], now: int) -> int:
        """Label every decided UNK entry whose evaluation time has come."""
        count = 0
        for m in self.entries():
            if m.o == UNK and m.t_dec is not None and now >= m.t_dec + self.params.t_eval:
                m.o = label_outcome(m, mstp, self.params.tau_iou)
                count += 1
        return count

    def knn(self, z: np.ndarray, k: Optional[int] = None):
        k = self.params.knn_k if k is None else k
        scored = [(m, vision.cosine(z, m.z)) for m in self.active]
        scored.sort(key=lambda pair: (-pair[1], pair[0].t_insert, pair[0].id))
        return scored[:k]

    def penalty(self, z: np.ndarray, sector: int, now: int) -> float:
        p = self.params
        total = 0.0
        for m, cos in self.knn(z):
            if m.o != BAD:
                continue
            distance = sector - m.sigma
            kernel = math.exp(-distance * distance / (2 * p.sector_kernel_width ** 2))
            decay = 2.0 ** (-(now - m.t_dec) / p.time_decay_halflife)
            total += max(0.0, cos) * kernel * decay
        return p.lam * total

    def dump(self, path):
        data = {
            "next_id": self._next_id,
            "quarantine": [m.to_dict() for m in self.quarantine],
            "active": [m.to_dict() for m in self.active],
        }
        with open(Path(path), "w") as f:
            json.dump(data, f, indent=2, separators=(",", ": "), sort_keys=True)

    @classmethod
    def load(cls, path, params: BankParams = BankParams()) -> "MemoryBank":
        with open(Path(path)) as f:
            data = json.load(f)
        bank = cls(params)
        bank._next_id = data["next_id"]
        bank.quarantine = [MemoryEntry.from_dict(d) for d in data["quarantine"]]
        bank.active = [MemoryEntry.from_dict(d) for d in data["active"]]
        return bank


def label_outcome(entry: MemoryEntry, mstp_at_eval: Optional[perception.MstpSelection],
                  tau_iou: float) -> str:
    if entry.t_dec is None or entry.decision_box is None:
        raise MissingDecision(f"memory entry {entry.id} has no associated decision")
    if mstp_at_eval is not None and perception.iou(entry.decision_box, mstp_at_eval.box) > tau_iou:
        return GOOD
    return BAD
