"""Recurrent-event datasets and their empirical Fourier coefficients.

A dataset holds, for ``n`` subjects observed in ``R`` repeated observations
(trials), sorted event times on the open window ``(0, T)`` together with the
known onset time of each of the ``M`` stimuli in every observation.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

WEIGHT_MODES = ("count", "uniform")


@dataclass(frozen=True)
class EventTimes:
    """Sorted event times of one subject in one observation."""

    times: np.ndarray
    T: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        if not self.T > 0:
            raise ValueError("horizon T must be positive")

    def __len__(self):
        return self.times.size

    @property
    def count(self) -> int:
        return int(self.times.size)


@dataclass(frozen=True)
class Dataset:
    """Subjects x observations grid of event times plus stimulus onsets.

    Parameters
    ----------
    events : list of list of EventTimes
        ``events[i][r]`` are the events of subject ``i`` in observation ``r``.
    shifts : ndarray, shape (R, M)
        Known observation-specific shifts ``w*[r, m]`` in seconds.
    T : float
        Observation window length in seconds.
    """

    events: tuple
    shifts: np.ndarray
    T: float
    subject_ids: tuple = ()
    trial_ids: tuple = ()

    def __post_init__(self):
        events = tuple(
            tuple(e if isinstance(e, EventTimes) else EventTimes(e, self.T) for e in row)
            for row in self.events
        )
        object.__setattr__(self, "events", events)
        shifts = np.array(self.shifts, dtype=float, ndmin=2)
        shifts.setflags(write=False)
        object.__setattr__(self, "shifts", shifts)
        if len(events) < 1 or len(events[0]) < 1 or shifts.shape[1] < 1:
            raise ValueError("dataset needs n >= 1, R >= 1 and M >= 1")
        if any(len(row) != len(events[0]) for row in events):
            raise ValueError("every subject needs the same number of observations")
        if shifts.shape[0] != len(events[0]):
            raise ValueError(
                f"shifts has {shifts.shape[0]} rows but there are {len(events[0])} observations"
            )
        if any(e.T != self.T for row in events for e in row):
            raise ValueError("all event sequences must share the same horizon")
        if not self.subject_ids:
            object.__setattr__(self, "subject_ids", tuple(str(i) for i in range(len(events))))
        if not self.trial_ids:
            object.__setattr__(self, "trial_ids", tuple(str(r) for r in range(len(events[0]))))

    @property
    def n(self) -> int:
        return len(self.events)

    @property
    def R(self) -> int:
        return len(self.events[0])

    @property
    def M(self) -> int:
        return self.shifts.shape[1]

    def counts(self) -> np.ndarray:
        """Event counts ``N[i, r]`` as an (n, R) integer array."""
        return np.array([[e.count for e in row] for row in self.events], dtype=np.int64)

    def subset(self, subjects: Sequence[int]) -> "Dataset":
        subjects = list(subjects)
        return Dataset(
            events=tuple(self.events[i] for i in subjects),
            shifts=self.shifts,
            T=self.T,
            subject_ids=tuple(self.subject_ids[i] for i in subjects),
            trial_ids=self.trial_ids,
        )

    def nudged(self, rel: float = 1e-9) -> "Dataset":
        """Copy with events at exactly 0 or T moved inside the open window."""
        eps = rel * self.T
        moved = 0
        rows = []
        for row in self.events:
            new_row = []
            for e in row:
                t = e.times
                bad = (t <= 0.0) | (t >= self.T)
                if bad.any():
                    moved += int(bad.sum())
                    t = np.clip(t, eps, self.T - eps)
                new_row.append(EventTimes(t, self.T))
            rows.append(tuple(new_row))
        if moved:
            logger.warning("moved %d event(s) at the window boundary inside (0, T)", moved)
            return Dataset(tuple(rows), self.shifts, self.T, self.subject_ids, self.trial_ids)
        return self


@dataclass(frozen=True)
class SpectralData:
    """Empirical Fourier coefficients of every (subject, observation) pair.

    ``eta[i, r, l + ell0]`` holds the coefficient of frequency ``l`` for
    ``l = -ell0, ..., ell0``.
    """

    eta: np.ndarray
    counts: np.ndarray
    weights: np.ndarray
    shifts: np.ndarray
    T: float
    ell0: int
    empty: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.empty is None:
            object.__setattr__(self, "empty", self.counts == 0)

    @property
    def n(self) -> int:
        return self.eta.shape[0]

    @property
    def R(self) -> int:
        return self.eta.shape[1]

    @property
    def M(self) -> int:
        return self.shifts.shape[1]

    @property
    def freqs(self) -> np.ndarray:
        return np.arange(-self.ell0, self.ell0 + 1)

    @property
    def h(self) -> np.ndarray:
        """Coefficients of the empirical event-time density, ``eta / N`` (zero if N = 0)."""
        denom = np.where(self.counts > 0, self.counts, 1)[..., None]
        return np.where(self.empty[..., None], 0.0, self.eta / denom)

    def subset(self, subjects) -> "SpectralData":
        subjects = np.asarray(subjects)
        return SpectralData(
            self.eta[subjects], self.counts[subjects], self.weights[subjects],
            self.shifts, self.T, self.ell0, self.empty[subjects],
        )


def empirical_fourier(events: EventTimes | Sequence[float], ell0: int, T: float | None = None) -> np.ndarray:
    """Fourier coefficients of the empirical point measure.

    Returns ``eta_l = T^-1 sum_j exp(-j 2 pi l t_j / T)`` for
    ``l = -ell0, ..., ell0`` (index ``l + ell0``).
    """
    if ell0 < 1:
        raise ValueError("ell0 must be >= 1")
    if isinstance(events, EventTimes):
        times, T = events.times, events.T
    else:
        if T is None:
            raise ValueError("T is required when passing raw times")
        times = np.asarray(events, dtype=float)
    freqs = np.arange(1, ell0 + 1)
    pos = np.exp(-2j * np.pi * np.outer(freqs, times) / T).sum(axis=1) / T
    out = np.empty(2 * ell0 + 1, dtype=complex)
    out[ell0 + 1:] = pos
    out[:ell0] = np.conj(pos[::-1])
    out[ell0] = times.size / T
    return out


def build_spectral(dataset: Dataset, ell0: int, weight_mode: str = "count") -> SpectralData:
    """Empirical coefficients, counts and weights for every (i, r)."""
    if weight_mode not in WEIGHT_MODES:
        raise ValueError(f"weight_mode must be one of {WEIGHT_MODES}")
    eta = np.array([[empirical_fourier(e, ell0) for e in row] for row in dataset.events])
    counts = dataset.counts()
    empty = counts == 0
    if weight_mode == "count":
        weights = counts.astype(float)
    else:
        weights = np.where(empty, 0.0, 1.0)
    if empty.any():
        logger.info("%d empty observation(s) excluded from the shape loss", int(empty.sum()))
    return SpectralData(eta, counts, weights, np.asarray(dataset.shifts, float), dataset.T, ell0, empty)


@dataclass
class ValidationIssue:
    kind: str
    subject: int | None
    trial: int | None
    detail: str

    def __str__(self):
        where = []
        if self.subject is not None:
            where.append(f"subject {self.subject}")
        if self.trial is not None:
            where.append(f"trial {self.trial}")
        return f"{self.kind} ({', '.join(where)}): {self.detail}" if where else f"{self.kind}: {self.detail}"


def validate(dataset: Dataset) -> list[ValidationIssue]:
    """Structured list of problems found in ``dataset``; empty if well formed.

    Ties between an event time and a stimulus onset only produce a
    ``"tie with stimulus onset"`` warning entry.
    """
    issues = []
    T = dataset.T
    for i, row in enumerate(dataset.events):
        total = 0
        for r, e in enumerate(row):
            t = e.times
            total += t.size
            if t.size == 0:
                continue
            if np.any(~np.isfinite(t)):
                issues.append(ValidationIssue("non-finite time", i, r, "NaN or inf event time"))
            if np.any(np.diff(t) < 0):
                issues.append(ValidationIssue("unsorted", i, r, "event times decrease"))
            if np.any(t == 0):
                issues.append(ValidationIssue("time at origin", i, r, "event at t = 0"))
            if np.any(t < 0):
                issues.append(ValidationIssue("time out of range", i, r, f"min time {t.min():g} < 0"))
            if np.any(t == T):
                issues.append(ValidationIssue("time at horizon", i, r, f"event at T = {T:g}"))
            elif np.any(t > T):
                issues.append(ValidationIssue("time out of range", i, r, f"max time {t.max():g} > T"))
            ties = np.isin(t, dataset.shifts[r])
            if ties.any():
                issues.append(ValidationIssue("tie with stimulus onset", i, r,
                                              f"{int(ties.sum())} event(s) coincide with an onset"))
        if total == 0:
            issues.append(ValidationIssue("all-empty subject", i, None, "no events in any observation"))
    w = dataset.shifts
    for r, m in zip(*np.nonzero(~((w >= 0) & (w < T)))):
        issues.append(ValidationIssue("shift out of range", None, int(r),
                                      f"w*[{r},{m}] = {w[r, m]:g} not in [0, T)"))
    return issues


# ---------------------------------------------------------------------------
# file formats

def _id_key(s: str):
    try:
        return (0, float(s), s)
    except ValueError:
        return (1, 0.0, s)


def read_csv(events_path: str | Path, shifts_path: str | Path, T: float) -> Dataset:
    """Read the long-form CSV pair.

    ``events_path`` has header ``subject_id,trial_id,event_time`` and
    ``shifts_path`` has header ``trial_id,component,shift``.  Components are
    ordered by their sorted labels; subjects and trials by numeric id when
    the ids parse as numbers.
    """
    shift_rows: dict[str, dict[str, float]] = {}
    with open(shifts_path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            shift_rows.setdefault(row["trial_id"], {})[row["component"]] = float(row["shift"])
    trials = sorted(shift_rows, key=_id_key)
    components = sorted({c for d in shift_rows.values() for c in d}, key=_id_key)
    try:
        shifts = np.array([[shift_rows[tr][c] for c in components] for tr in trials])
    except KeyError as exc:
        raise ValueError(f"missing shift for component {exc}") from None

    by_subject: dict[str, dict[str, list[float]]] = {}
    with open(events_path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            subj, tr = row["subject_id"], row["trial_id"]
            if tr not in shift_rows:
                raise ValueError(f"trial {tr!r} has events but no shifts")
            by_subject.setdefault(subj, {}).setdefault(tr, []).append(float(row["event_time"]))
    subjects = sorted(by_subject, key=_id_key)
    events = tuple(
        tuple(EventTimes(np.sort(by_subject[s].get(tr, [])), T) for tr in trials) for s in subjects
    )
    return Dataset(events, shifts, float(T), tuple(subjects), tuple(trials))


def write_csv(dataset: Dataset, events_path: str | Path, shifts_path: str | Path) -> None:
    with open(events_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["subject_id", "trial_id", "event_time"])
        for sid, row in zip(dataset.subject_ids, dataset.events):
            for tid, e in zip(dataset.trial_ids, row):
                for t in e.times:
                    w.writerow([sid, tid, repr(float(t))])
    with open(shifts_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["trial_id", "component", "shift"])
        for tid, ws in zip(dataset.trial_ids, dataset.shifts):
            for m, s in enumerate(ws):
                w.writerow([tid, m + 1, repr(float(s))])


def dataset_to_json(dataset: Dataset) -> dict:
    trials = []
    for r, tid in enumerate(dataset.trial_ids):
        trials.append({
            "id": tid,
            "shifts": [float(s) for s in dataset.shifts[r]],
            "subjects": [
                {"id": sid, "events": [float(t) for t in dataset.events[i][r].times]}
                for i, sid in enumerate(dataset.subject_ids)
            ],
        })
    return {"T": dataset.T, "M": dataset.M, "trials": trials}


def dataset_from_json(doc: dict) -> Dataset:
    T = float(doc["T"])
    M = int(doc["M"])
    trials = doc["trials"]
    subject_ids: list[str] = []
    for tr in trials:
        for s in tr["subjects"]:
            if str(s["id"]) not in subject_ids:
                subject_ids.append(str(s["id"]))
    events = [[None] * len(trials) for _ in subject_ids]
    shifts = np.zeros((len(trials), M))
    for r, tr in enumerate(trials):
        if len(tr["shifts"]) != M:
            raise ValueError(f"trial {tr['id']!r} lists {len(tr['shifts'])} shifts, expected {M}")
        shifts[r] = tr["shifts"]
        seen = {str(s["id"]): s["events"] for s in tr["subjects"]}
        for i, sid in enumerate(subject_ids):
            events[i][r] = EventTimes(np.asarray(seen.get(sid, []), dtype=float), T)
    return Dataset(tuple(map(tuple, events)), shifts, T,
                   tuple(subject_ids), tuple(str(tr["id"]) for tr in trials))


def read_json(path: str | Path) -> Dataset:
    with open(path, encoding="utf-8") as f:
        return dataset_from_json(json.load(f))


def write_json(dataset: Dataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(dataset_to_json(dataset), f)


def load_dataset(path: str | Path, shifts: str | Path | None = None, T: float | None = None) -> Dataset:
    """Load a JSON dataset, or a CSV pair when ``shifts`` and ``T`` are given."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        return read_json(path)
    if shifts is None or T is None or not math.isfinite(T):
        raise ValueError("CSV datasets need a shifts file and the horizon T")
    return read_csv(path, shifts, T)
