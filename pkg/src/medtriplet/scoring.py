"""Hierarchical set-similarity score between two meta-entity structures.

For samples i and j the score is

    (delta_d / |d_i u d_j|) * sum over shared diseases q of
        (g0 + g1*JI_adj(q) + g2*JI_dir(q)) / (g0 + g1*delta_adj(q) + g2*delta_dir(q))

where JI is the Jaccard index of the per-disease descriptor sets and the
delta indicators normalize each summand into [0, 1]. Two indicator
semantics are supported:

* ``union`` (default): delta = 1 iff the union of the two descriptor
  sets is non-empty. A fully mismatched descriptor pair then lowers the
  summand instead of cancelling out of it.
* ``intersection``: delta = 1 iff the intersection is non-empty. Kept
  behind the flag for fidelity experiments; note that under it a fully
  mismatched descriptor pair scores the same as a fully matched one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Literal

from .extraction import MetaEntities

Semantics = Literal["union", "intersection"]

DEFAULT_SEMANTICS: Semantics = "union"


@dataclass(frozen=True)
class GammaWeights:
    """Disease/adjective/direction term weights; must sum to one."""

    g0: float = 0.85
    g1: float = 0.10
    g2: float = 0.05

    def __post_init__(self) -> None:
        if min(self.g0, self.g1, self.g2) < 0:
            raise ValueError("gamma weights must be nonnegative")
        if abs(self.g0 + self.g1 + self.g2 - 1.0) > 1e-12:
            raise ValueError(f"gamma weights must sum to 1, got {self.g0 + self.g1 + self.g2!r}")


@dataclass(frozen=True)
class DiseaseTermScore:
    """One shared disease's contribution to the score."""

    disease: str
    ji_adj: float
    ji_dir: float
    summand: float


@dataclass(frozen=True)
class ScoreBreakdown:
    """Score plus every intermediate, for explainability and band checks."""

    shared_diseases: tuple[DiseaseTermScore, ...]
    prefactor: float
    total: float


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    """|a & b| / |a | b|, with the empty/empty case defined as 0.

    The 0/0 convention keeps indicator and index consistent: when both
    sets are empty the descriptor term drops from numerator and
    denominator alike, preserving self-score 1.
    """
    sa, sb = set(a), set(b)
    union = sa | sb
    if not union:
        return 0.0
    return len(sa & sb) / len(union)


def _indicator(a: frozenset[str], b: frozenset[str], semantics: Semantics) -> float:
    if semantics == "union":
        return 1.0 if (a | b) else 0.0
    if semantics == "intersection":
        return 1.0 if (a & b) else 0.0
    raise ValueError(f"unknown indicator semantics {semantics!r}")


def score(
    mi: MetaEntities,
    mj: MetaEntities,
    weights: GammaWeights = GammaWeights(),
    semantics: Semantics = DEFAULT_SEMANTICS,
) -> ScoreBreakdown:
    """Score two meta-entity structures; symmetric in its arguments."""
    di = {e.disease: e for e in mi.entries}
    dj = {e.disease: e for e in mj.entries}
    shared = sorted(set(di) & set(dj))
    union_count = len(set(di) | set(dj))
    if not shared:
        return ScoreBreakdown(shared_diseases=(), prefactor=0.0, total=0.0)
    terms = []
    for disease in shared:
        ei, ej = di[disease], dj[disease]
        ji_adj = jaccard(ei.adj, ej.adj)
        ji_dir = jaccard(ei.dir, ej.dir)
        numer = weights.g0 + weights.g1 * ji_adj + weights.g2 * ji_dir
        denom = (
            weights.g0
            + weights.g1 * _indicator(ei.adj, ej.adj, semantics)
            + weights.g2 * _indicator(ei.dir, ej.dir, semantics)
        )
        # denom = 0 only when g0 = 0 and every weighted indicator is 0;
        # a shared disease with nothing to weigh counts as a full match,
        # which keeps self-score at 1 for degenerate weightings.
        summand = numer / denom if denom > 0 else 1.0
        terms.append(DiseaseTermScore(disease, ji_adj, ji_dir, summand))
    prefactor = 1.0 / union_count
    total = prefactor * sum(t.summand for t in terms)
    return ScoreBreakdown(shared_diseases=tuple(terms), prefactor=prefactor, total=total)
