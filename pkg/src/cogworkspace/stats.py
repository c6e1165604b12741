"""Analytics over the operation ledger: reuse, efficiency, significance, growth."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats as _st

from .oplog import COUNTED_KINDS, Arm, OpEvent, OpKind


def _select(events: Iterable[OpEvent], arm: Arm | str, through_round: int | None) -> list[OpEvent]:
    arm = Arm(arm)
    return [e for e in events if e.arm is arm and (through_round is None or e.round <= through_round)]


def reuse_rate(events: Iterable[OpEvent], arm: Arm | str = Arm.CW, through_round: int | None = None) -> float:
    """Internal reuses over (internal reuses + external retrievals); 0 when both are 0."""
    sel = _select(events, arm, through_round)
    reuse = sum(1 for e in sel if e.kind is OpKind.REUSE_INTERNAL)
    external = sum(1 for e in sel if e.kind is OpKind.RETRIEVE_EXTERNAL)
    total = reuse + external
    return reuse / total if total else 0.0


def op_count(events: Iterable[OpEvent], arm: Arm | str, round: int | None = None) -> int:
    arm = Arm(arm)
    return sum(1 for e in events if e.arm is arm and e.kind in COUNTED_KINDS and (round is None or e.round == round))


def cumulative_ops(events: Sequence[OpEvent], arm: Arm | str, rounds: int) -> list[int]:
    per_round = [op_count(events, arm, r) for r in range(1, rounds + 1)]
    return [int(x) for x in np.cumsum(per_round)]


def net_efficiency(reuse: float, op_ratio: float) -> float:
    """Reuse rate discounted by the operation overhead: ``reuse / op_ratio``."""
    if op_ratio < 1:
        raise ValueError(f"op_ratio must be >= 1, got {op_ratio}")
    return reuse / op_ratio


@dataclass(frozen=True)
class StatReport:
    t_value: float
    degrees_freedom: int
    p_value: float
    cohens_d: float
    mean_a: float
    mean_b: float
    n_a: int
    n_b: int
    infinite: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def two_sample_stats(a: Sequence[float], b: Sequence[float]) -> StatReport:
    """Pooled-variance Student's t-test with Cohen's d on the pooled SD."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n_a, n_b = len(a), len(b)
    if n_a < 2 or n_b < 2:
        raise ValueError("each sample needs at least two observations")
    df = n_a + n_b - 2
    mean_a, mean_b = float(a.mean()), float(b.mean())
    diff = mean_a - mean_b
    pooled_var = ((n_a - 1) * a.var(ddof=1) + (n_b - 1) * b.var(ddof=1)) / df
    pooled_sd = math.sqrt(pooled_var)

    if pooled_sd == 0.0:
        if diff == 0.0:
            return StatReport(0.0, df, 1.0, 0.0, mean_a, mean_b, n_a, n_b)
        inf = math.copysign(math.inf, diff)
        return StatReport(inf, df, 0.0, inf, mean_a, mean_b, n_a, n_b, infinite=True)

    t = diff / (pooled_sd * math.sqrt(1.0 / n_a + 1.0 / n_b))
    p = float(min(1.0, 2.0 * _st.t.sf(abs(t), df)))
    return StatReport(float(t), df, p, diff / pooled_sd, mean_a, mean_b, n_a, n_b)


@dataclass(frozen=True)
class GrowthFit:
    linear_r2: float
    log_r2: float
    linear_slope: float
    log_coefficient: float

    def to_dict(self) -> dict:
        return asdict(self)


def _r2(y: np.ndarray, fitted: np.ndarray) -> float:
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else -math.inf
    return 1.0 - ss_res / ss_tot


def _fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    design = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(slope), float(intercept)


def growth_fit(cumulative_ops: Sequence[float]) -> GrowthFit:
    """Least-squares ``a*n + b`` and ``a*ln(n) + b`` fits over rounds 1..N."""
    y = np.asarray(cumulative_ops, dtype=float)
    if len(y) < 3:
        raise ValueError("growth_fit needs at least 3 points")
    n = np.arange(1, len(y) + 1, dtype=float)
    lin_a, lin_b = _fit(n, y)
    log_a, log_b = _fit(np.log(n), y)
    lin_r2 = _r2(y, lin_a * n + lin_b)
    # exact integer series (e.g. 3n) should report exactly 1
    if np.all(np.diff(y) == y[1] - y[0]):
        lin_r2 = 1.0
    return GrowthFit(lin_r2, _r2(y, log_a * np.log(n) + log_b), lin_a, log_a)


_RETRIEVAL_PATH = frozenset({OpKind.REUSE_INTERNAL, OpKind.RETRIEVE_EXTERNAL, OpKind.INTERNAL_FETCH, OpKind.STORE})


def saved_and_breakeven(events: Sequence[OpEvent]) -> tuple[int, int | None]:
    """Reuse-driven savings and the first round at which they cover the overhead.

    Each internal reuse counts as one avoided external retrieval. A round's
    management overhead is the CW work outside the retrieval path (reuse,
    fetch, external retrieval and the stores they trigger) minus the RAG
    arm's work for that round. Break-even is the first round after the
    opening one at which cumulative savings reach cumulative overhead.
    """
    rounds = sorted({e.round for e in events})
    saved = overhead = 0
    breakeven = None
    for r in rounds:
        cw = [e for e in events if e.arm is Arm.CW and e.round == r]
        saved += sum(1 for e in cw if e.kind is OpKind.REUSE_INTERNAL)
        managed = sum(1 for e in cw if e.kind in COUNTED_KINDS and e.kind not in _RETRIEVAL_PATH)
        overhead += managed - op_count(events, Arm.RAG, r)
        if breakeven is None and r > rounds[0] and saved > 0 and saved >= overhead:
            breakeven = r
    return saved, breakeven
