"""Warden-side detectors over inter-packet delays of signal-type packets."""
from __future__ import annotations

import gzip
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .traffic import ArpOp, NetKind, TraceRecord

KS_TOL = 1e-10
KAPPA_WINDOW = 1000
IPD_CAP = 999999.999


class SeriesError(ValueError):
    """Too few samples for the requested statistic."""


@dataclass(frozen=True)
class IpdSeries:
    deltas: np.ndarray
    label: str = ""

    def __len__(self) -> int:
        return len(self.deltas)


@dataclass(frozen=True)
class KsResult:
    d_stat: float
    p_value: float


@dataclass(frozen=True)
class CompressWindow:
    kappa: float
    window_len: int
    index: int = 0


def is_arp_request(rec: TraceRecord) -> bool:
    return rec.net_kind is NetKind.ARP and rec.arp_op is ArpOp.REQUEST


def extract_ipds(trace: Iterable[TraceRecord],
                 signal_predicate: Callable[[TraceRecord], bool] = is_arp_request,
                 label: str = "") -> IpdSeries:
    ts = np.fromiter((r.ts for r in trace if signal_predicate(r)), dtype=float)
    if ts.size < 2:
        raise SeriesError(f"need at least 2 matching packets, found {ts.size}")
    return IpdSeries(np.diff(ts), label)


def _as_array(s: IpdSeries | Sequence[float] | np.ndarray) -> np.ndarray:
    return np.asarray(s.deltas if isinstance(s, IpdSeries) else s, dtype=float)


def kolmogorov_q(lam: float) -> float:
    """Two-sided Kolmogorov tail Q(lambda); 1.0 where the series does not settle."""
    if lam <= 0:
        return 1.0
    total, prev = 0.0, 0.0
    for j in range(1, 101):
        term = 2.0 * (-1) ** (j - 1) * math.exp(-2.0 * j * j * lam * lam)
        total += term
        if abs(term) <= KS_TOL or abs(term) <= KS_TOL * prev:
            return min(1.0, max(0.0, total))
        prev = abs(term)
    return 1.0


def ks_two_sample(a, b) -> KsResult:
    x, y = np.sort(_as_array(a)), np.sort(_as_array(b))
    na, nb = x.size, y.size
    if na < 2 or nb < 2:
        raise SeriesError("both series need at least 2 values")
    grid = np.concatenate([x, y])
    fa = np.searchsorted(x, grid, side="right") / na
    fb = np.searchsorted(y, grid, side="right") / nb
    d = float(np.max(np.abs(fa - fb)))
    ne = math.sqrt(na * nb / (na + nb))
    lam = (ne + 0.12 + 0.11 / ne) * d
    return KsResult(d, kolmogorov_q(lam))


def render_ipds(deltas: np.ndarray) -> bytes:
    """Fixed-width millisecond rendering: six integer digits, point, three decimals."""
    clipped = np.clip(np.round(deltas, 3), 0.0, IPD_CAP)
    return "".join(f"{d:010.3f}" for d in clipped).encode("ascii")


def compressed_size(data: bytes) -> int:
    return len(gzip.compress(data, compresslevel=9, mtime=0))


def compressibility_scores(s, window_len: int = KAPPA_WINDOW) -> list[CompressWindow]:
    x = _as_array(s)
    if window_len < 1:
        raise SeriesError("window_len must be >= 1")
    if x.size < window_len:
        raise SeriesError(f"series of {x.size} IPDs is shorter than one window ({window_len})")
    out = []
    for k in range(x.size // window_len):
        raw = render_ipds(x[k * window_len:(k + 1) * window_len])
        out.append(CompressWindow(len(raw) / compressed_size(raw), window_len, k))
    return out


def roc_auc(scores_pos, scores_neg) -> float:
    """Probability that a positive outranks a negative, ties counting one half."""
    p, n = np.asarray(scores_pos, dtype=float), np.asarray(scores_neg, dtype=float)
    if p.size == 0 or n.size == 0:
        raise SeriesError("both score sets must be non-empty")
    ranks = rankdata(np.concatenate([p, n]))
    u = ranks[:p.size].sum() - p.size * (p.size + 1) / 2
    return float(u / (p.size * n.size))


def roc_curve(scores_pos, scores_neg) -> tuple[np.ndarray, np.ndarray]:
    """False- and true-positive rates over every threshold, for plotting."""
    p, n = np.asarray(scores_pos, dtype=float), np.asarray(scores_neg, dtype=float)
    thr = np.unique(np.concatenate([p, n]))[::-1]
    tpr = np.array([0.0] + [(p >= t).mean() for t in thr])
    fpr = np.array([0.0] + [(n >= t).mean() for t in thr])
    return fpr, tpr
