"""Survival labels from longitudinal diagnoses."""
from __future__ import annotations

import numpy as np
import pandas as pd

from .schema import POSITIVE, IngestionError, validate_visits


def build_survival_labels(table: pd.DataFrame, anchor: str = "final_run") -> list[tuple[str, int, float]]:
    """Turn visit histories into ``(subject_id, delta, time_raw)`` tuples.

    The last known diagnosis decides the event indicator. A subject whose last
    visit is negative is censored at that visit. A subject whose last visit is
    positive converts at the first visit of the uninterrupted positive run that
    ends at the last visit (``anchor="final_run"``), or at the first positive
    visit ever (``anchor="first_positive"``).
    """
    if anchor not in ("final_run", "first_positive"):
        raise ValueError(f"unknown anchor {anchor!r}")
    visits = validate_visits(table)
    out = []
    for sid, g in visits.groupby("subject_id", sort=False):
        times = g["visit_time"].to_numpy(dtype=float)
        pos = (g["diagnosis"] == POSITIVE).to_numpy()
        if times.size == 0:
            raise IngestionError(f"subject {sid} has no visits")
        if not pos[-1]:
            out.append((sid, 0, float(times[-1])))
            continue
        if anchor == "first_positive":
            k = int(np.argmax(pos))
        else:
            k = len(pos) - 1
            while k > 0 and pos[k - 1]:
                k -= 1
        out.append((sid, 1, float(times[k])))
    return out


def truncate_at_risk(records: list) -> list:
    """Drop subjects already converted at baseline (delta=1, time=0)."""
    return [r for r in records if not (_delta(r) == 1 and _time(r) == 0)]


def _delta(r):
    return r.delta if hasattr(r, "delta") else r[1]


def _time(r):
    return r.time_raw if hasattr(r, "time_raw") else r[2]
