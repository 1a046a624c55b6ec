"""Reranking layer: score tables, score-then-sort reranking, ensemble
scoring, temperature/Platt calibration, and the synthetic scorer.

A missing (user, item) score is an error, never an implicit minus
infinity; silent defaults would mask upstream scoring bugs. All transforms
here are pure and safe to run in parallel across users.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Mapping, Sequence

import numpy as np
from scipy.special import expit

from .metrics import RankedList
from .retrieval import CandidatePool

if TYPE_CHECKING:  # pragma: no cover
    from .catalog import Item, UserRecord
    from .synthgen import SyntheticWorld


class ScoringError(ValueError):
    pass


class MissingScoreError(ScoringError):
    def __init__(self, user_id: str, item_id: str):
        super().__init__(f"no score for user={user_id!r} item={item_id!r}")
        self.user_id = user_id
        self.item_id = item_id


class DegenerateLabelsError(ScoringError):
    pass


@dataclass
class EnsembleWeights:
    alpha: float = 0.3   # reranker score
    beta: float = 0.5    # log popularity
    gamma: float = 0.2   # embedding similarity

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            if not math.isfinite(getattr(self, name)):
                raise ScoringError(f"{name} must be finite")


@dataclass
class CalibrationParams:
    """Temperature and Platt parameters. ``a_capped`` reports that the
    Platt slope hit the optimizer bound (separable data)."""

    temperature: float = 1.0
    platt_a: float = 1.0
    platt_b: float = 0.0
    a_capped: bool = False

    def __post_init__(self):
        if not self.temperature > 0:
            raise ScoringError("temperature must be > 0")


class ScoreTable:
    """Finite (user, item) -> score map, immutable once loaded."""

    def __init__(self, scores: Mapping[tuple[str, str], float] | None = None):
        self._scores: dict[tuple[str, str], float] = {}
        for (user_id, item_id), value in (scores or {}).items():
            value = float(value)
            if not math.isfinite(value):
                raise ScoringError(f"non-finite score for ({user_id!r}, {item_id!r})")
            self._scores[(str(user_id), str(item_id))] = value

    def __len__(self) -> int:
        return len(self._scores)

    def __contains__(self, key: tuple[str, str]) -> bool:
        return key in self._scores

    def get(self, user_id: str, item_id: str) -> float:
        try:
            return self._scores[(user_id, item_id)]
        except KeyError:
            raise MissingScoreError(user_id, item_id) from None

    def items(self):
        return self._scores.items()

    # interchange format: JSONL, {"user_id": ..., "item_id": ..., "score": ...}
    @classmethod
    def from_jsonl(cls, path: str | Path) -> "ScoreTable":
        scores: dict[tuple[str, str], float] = {}
        with Path(path).open(encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    key = (str(record["user_id"]), str(record["item_id"]))
                    scores[key] = float(record["score"])
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise ScoringError(f"{path}:{line_no}: {exc}") from exc
        return cls(scores)

    def to_jsonl(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for (user_id, item_id), score in self._scores.items():
                fh.write(json.dumps(
                    {"user_id": user_id, "item_id": item_id, "score": score}) + "\n")


ScoreSource = ScoreTable | Callable[[str, str], float] | Mapping[str, float]


def _lookup(scores: ScoreSource, user_id: str, item_id: str) -> float:
    if isinstance(scores, ScoreTable):
        return scores.get(user_id, item_id)
    if callable(scores):
        return float(scores(user_id, item_id))
    try:
        return float(scores[item_id])
    except KeyError:
        raise MissingScoreError(user_id, item_id) from None


def rerank(pool: CandidatePool, scores: ScoreSource, k: int) -> RankedList:
    """Top-k pool items by descending score, ties by ascending item id.

    ``scores`` may be a ScoreTable, a callable(user_id, item_id), or a
    plain item->score mapping already restricted to this user. Reranking
    never emits an item outside the input pool, so candidate coverage is
    a hard ceiling on anything downstream.
    """
    if k < 1:
        raise ScoringError("k must be >= 1")
    scored = [(item_id, _lookup(scores, pool.user_id, item_id)) for item_id in pool.item_ids]
    for item_id, value in scored:
        if not math.isfinite(value):
            raise ScoringError(f"non-finite score for ({pool.user_id!r}, {item_id!r})")
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return RankedList(pool.user_id, scored[:k], k)


def ensemble_score(ce: float, popularity: float, embed_sim: float, w: EnsembleWeights) -> float:
    """alpha * ce + beta * ln(popularity + 1) + gamma * embed_sim.

    The +1 keeps zero-count items defined; inputs are otherwise used raw.
    """
    if popularity < 0:
        raise ScoringError("popularity must be >= 0")
    return w.alpha * ce + w.beta * math.log(popularity + 1.0) + w.gamma * embed_sim


def temperature_scale(score: float, temperature: float) -> float:
    """Divide by a positive temperature; rank-preserving by construction."""
    if not temperature > 0:
        raise ScoringError("temperature must be > 0")
    return score / temperature


def platt_calibrate(score: float, params: CalibrationParams) -> float:
    """sigmoid(a * score + b), strictly inside (0, 1)."""
    p = float(expit(params.platt_a * score + params.platt_b))
    tiny = np.finfo(float).tiny
    return min(max(p, tiny), 1.0 - np.finfo(float).epsneg)


_A_CAP = 50.0


def fit_platt(scores: Sequence[float], labels: Sequence[int],
              max_iter: int = 200, tol: float = 1e-8) -> CalibrationParams:
    """Maximum-likelihood logistic fit of labels on scores.

    Damped Newton iterations until the gradient norm drops below ``tol``.
    On separable data the slope diverges, so |a| is capped at 50 and the
    cap is reported via ``a_capped`` (the intercept is then re-optimized
    alone). Raises DegenerateLabelsError unless both classes are present.
    """
    x = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ScoringError("scores and labels must be equal-length 1-D sequences")
    if not set(np.unique(y)) <= {0.0, 1.0}:
        raise ScoringError("labels must be binary")
    if y.min() == y.max():
        raise DegenerateLabelsError("need at least one positive and one negative label")

    # strictly separable data has no finite MLE; report the slope cap
    lo, hi = x[y == 0.0], x[y == 1.0]
    direction = 0
    if hi.min() > lo.max():
        direction = 1
    elif hi.max() < lo.min():
        direction = -1
    if direction:
        a = direction * _A_CAP
        b = 0.0
        for _ in range(max_iter):
            p = expit(a * x + b)
            g1 = float(np.sum(y - p))
            h1 = float(np.sum(p * (1.0 - p)))
            if abs(g1) <= tol or h1 == 0.0:
                break
            b += g1 / h1
        return CalibrationParams(temperature=1.0, platt_a=a, platt_b=b, a_capped=True)

    def grad_hess(a: float, b: float):
        p = expit(a * x + b)
        resid = y - p
        g = np.array([np.dot(x, resid), resid.sum()])
        w = p * (1.0 - p)
        h = np.array([[np.dot(w, x * x), np.dot(w, x)],
                      [np.dot(w, x), w.sum()]])
        return g, h

    def loglik(a: float, b: float) -> float:
        z = a * x + b
        # log sigma(z) = -log(1 + e^-z), stable on both tails
        return float(np.sum(y * -np.logaddexp(0.0, -z) + (1.0 - y) * -np.logaddexp(0.0, z)))

    a, b = 0.0, 0.0
    capped = False
    for _ in range(max_iter):
        g, h = grad_hess(a, b)
        if np.linalg.norm(g) <= tol:
            break
        try:
            step = np.linalg.solve(h + 1e-12 * np.eye(2), g)
        except np.linalg.LinAlgError:
            step = g
        ll0 = loglik(a, b)
        damp = 1.0
        while damp > 1e-8:
            na, nb = a + damp * step[0], b + damp * step[1]
            if loglik(na, nb) >= ll0 - 1e-15:
                break
            damp /= 2.0
        a, b = a + damp * step[0], b + damp * step[1]
        if abs(a) >= _A_CAP:
            a = math.copysign(_A_CAP, a)
            capped = True
            break
    if capped:
        for _ in range(max_iter):  # 1-D Newton on the intercept
            p = expit(a * x + b)
            g1 = float(np.sum(y - p))
            h1 = float(np.sum(p * (1.0 - p)))
            if abs(g1) <= tol or h1 == 0.0:
                break
            b += g1 / h1
    return CalibrationParams(temperature=1.0, platt_a=float(a), platt_b=float(b), a_capped=capped)


def synthetic_scorer(world: "SyntheticWorld", user: "UserRecord", item: "Item") -> float:
    """Deterministic reranker-style score from a synthetic world's scorer
    model (signal, per-item bias, length bias, seeded unit noise)."""
    return world.scorer_score(user.id, item.id)
