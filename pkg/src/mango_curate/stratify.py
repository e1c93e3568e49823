"""Mangrove-fraction categories, composition ratios and country-disjoint splits."""

from __future__ import annotations

import enum
import hashlib
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import StratifyError
from .raster import Category

POSITIVE_STRATA = (Category.STRONG, Category.MID, Category.WEAK)


class Split(str, enum.Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


@dataclass(frozen=True)
class StratifyConfig:
    strong_min: float = 0.15
    mid_min: float = 0.05
    pos_neg_ratio: tuple[int, int] = (1, 1)
    strong_mid_weak_ratio: tuple[int, int, int] = (2, 2, 1)
    # allowed relative deviation of each positive stratum's share from its target share
    ratio_tolerance: float = 0.03
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.mid_min < self.strong_min < 1.0:
            raise ValueError("need 0 < mid_min < strong_min < 1")
        if min(self.strong_mid_weak_ratio) <= 0 or min(self.pos_neg_ratio) <= 0:
            raise ValueError("ratios must be positive")
        if self.ratio_tolerance < 0:
            raise ValueError("ratio_tolerance must be non-negative")


def categorize(f: float, cfg: StratifyConfig | None = None) -> Category:
    strong_min = 0.15 if cfg is None else cfg.strong_min
    mid_min = 0.05 if cfg is None else cfg.mid_min
    if not 0.0 <= f <= 1.0:  # also rejects NaN
        raise StratifyError(f"mangrove fraction {f} outside [0, 1]")
    if f >= strong_min:
        return Category.STRONG
    if f >= mid_min:
        return Category.MID
    if f > 0.0:
        return Category.WEAK
    return Category.NEGATIVE


def largest_remainder(total: int, weights: Sequence[float]) -> list[int]:
    """Integer apportionment of ``total`` proportional to ``weights``.

    Leftover units go to the largest fractional parts, earlier entries
    first on ties.
    """
    wsum = float(sum(weights))
    quotas = [total * w / wsum for w in weights]
    base = [math.floor(q) for q in quotas]
    left = total - sum(base)
    order = sorted(range(len(weights)), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[:left]:
        base[i] += 1
    return base


def _within(counts: Sequence[int], weights: Sequence[float], tol: float) -> bool:
    total = sum(counts)
    if total == 0:
        return True
    wsum = float(sum(weights))
    for n, w in zip(counts, weights):
        share = w / wsum
        if abs(n / total - share) > tol * share + 1e-12:
            return False
    return True


def _max_dev(counts: Sequence[int], weights: Sequence[float]) -> float:
    total = sum(counts)
    wsum = float(sum(weights))
    return max(abs(n / total - w / wsum) / (w / wsum) for n, w in zip(counts, weights))


def positive_quota(supply: Sequence[int], weights: Sequence[float], limit: int, tol: float) -> list[int]:
    """How many regions to keep per positive stratum.

    Starts from the largest exact apportionment the supply allows, then adds
    single regions while every stratum share stays within ``tol`` (relative)
    of its target share.  The total never exceeds ``limit``.
    """
    limit = min(limit, sum(supply))
    counts = [0] * len(supply)
    wsum = float(sum(weights))
    upper = min([limit] + [math.floor(s * wsum / w) + len(supply) for s, w in zip(supply, weights)])
    for total in range(upper, 0, -1):
        cand = largest_remainder(total, weights)
        if all(c <= s for c, s in zip(cand, supply)):
            counts = cand
            break
    if tol <= 0:
        return counts
    while sum(counts) < limit:
        best = None
        for i in range(len(counts)):
            if counts[i] >= supply[i]:
                continue
            trial = counts.copy()
            trial[i] += 1
            if _within(trial, weights, tol):
                dev = _max_dev(trial, weights)
                if best is None or dev < best[0]:
                    best = (dev, trial)
        if best is None:
            break
        counts = best[1]
    return counts


def _sample(items: list, n: int, seed: int, stratum: int) -> list:
    items = sorted(items, key=lambda r: r.region_id)
    if n >= len(items):
        return items
    rng = np.random.default_rng([seed, stratum])
    pick = np.sort(rng.choice(len(items), size=n, replace=False))
    return [items[i] for i in pick]


@dataclass
class RatioOutcome:
    selected: list
    supply: dict[str, int]
    counts: dict[str, int]
    targets: dict[str, int]
    shortfall: dict[str, int]

    def summary(self) -> dict:
        return {
            "supply": self.supply,
            "selected": self.counts,
            "targets": self.targets,
            "shortfall": self.shortfall,
        }


def enforce_ratios(regions: Iterable, cfg: StratifyConfig = StratifyConfig()) -> RatioOutcome:
    """Seeded subsample with positives:negatives at 1:1 and strong:mid:weak near 2:2:1.

    Any object with ``region_id`` and ``category`` attributes is accepted.
    Under-supplied strata are taken whole; the others shrink to keep the
    ratios and the gap is reported as ``shortfall``.
    """
    regions = list(regions)
    if not regions:
        raise StratifyError("cannot balance: no regions")
    ids = [r.region_id for r in regions]
    if len(set(ids)) != len(ids):
        raise StratifyError("cannot balance: duplicate region ids")
    by_cat: dict[Category, list] = {c: [] for c in Category}
    for r in regions:
        by_cat[Category(r.category)].append(r)
    supply = [len(by_cat[c]) for c in POSITIVE_STRATA]
    n_neg = len(by_cat[Category.NEGATIVE])
    if sum(supply) == 0 or n_neg == 0:
        raise StratifyError(
            f"cannot balance: {sum(supply)} positive and {n_neg} negative regions"
        )
    pw, nw = cfg.pos_neg_ratio
    limit = min(sum(supply), math.floor(n_neg * pw / nw))
    weights = cfg.strong_mid_weak_ratio
    counts = positive_quota(supply, weights, limit, cfg.ratio_tolerance)
    neg_count = min(n_neg, round(sum(counts) * nw / pw))

    selected = []
    for k, (cat, n) in enumerate(zip(POSITIVE_STRATA, counts)):
        selected += _sample(by_cat[cat], n, cfg.seed, k)
    selected += _sample(by_cat[Category.NEGATIVE], neg_count, cfg.seed, 3)
    selected.sort(key=lambda r: r.region_id)

    targets = largest_remainder(limit, weights)
    names = [c.value for c in POSITIVE_STRATA]
    return RatioOutcome(
        selected=selected,
        supply={**dict(zip(names, supply)), Category.NEGATIVE.value: n_neg},
        counts={**dict(zip(names, counts)), Category.NEGATIVE.value: neg_count},
        targets={**dict(zip(names, targets)), Category.NEGATIVE.value: round(limit * nw / pw)},
        shortfall={n: max(0, t - s) for n, t, s in zip(names, targets, supply)},
    )


# -- country-disjoint split --------------------------------------------------


@dataclass(frozen=True)
class SplitAssignment:
    region_id: str
    country_iso3: str
    split: Split


@dataclass
class SplitOutcome:
    assignments: list[SplitAssignment]
    countries: dict[str, Split]
    targets: dict[str, float]
    achieved: dict[str, float]
    degenerate: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "targets": self.targets,
            "achieved": self.achieved,
            "degenerate": self.degenerate,
            "countries_per_split": {
                s.value: sorted(c for c, v in self.countries.items() if v is s) for s in Split
            },
        }


def _tiebreak(seed: int, iso3: str) -> bytes:
    return hashlib.blake2b(f"{seed}:{iso3}".encode(), digest_size=8).digest()


def country_disjoint_split(regions: Iterable, ratios: Sequence[float] = (8, 1, 1), seed: int = 0) -> SplitOutcome:
    """Assign whole countries to train/val/test by greedy packing on region counts.

    Countries go largest first (equal sizes ordered by a seeded hash) into
    the split whose region count is furthest below its target.
    """
    regions = list(regions)
    if any(not getattr(r, "country_iso3", None) for r in regions):
        raise StratifyError("every region needs a country code")
    sizes = Counter(r.country_iso3 for r in regions)
    if len(sizes) < 3:
        raise StratifyError(f"cannot form disjoint splits from {len(sizes)} countries")
    total = sum(sizes.values())
    rsum = float(sum(ratios))
    fractions = [r / rsum for r in ratios]
    splits = list(Split)
    filled = [0] * len(splits)
    assigned: dict[str, Split] = {}
    for iso3 in sorted(sizes, key=lambda c: (-sizes[c], _tiebreak(seed, c))):
        deficits = [fractions[i] * total - filled[i] for i in range(len(splits))]
        k = max(range(len(splits)), key=lambda i: (deficits[i], -i))
        assigned[iso3] = splits[k]
        filled[k] += sizes[iso3]
    achieved = {s.value: filled[i] / total for i, s in enumerate(splits)}
    targets = {s.value: fractions[i] for i, s in enumerate(splits)}
    degenerate = [
        s.value for i, s in enumerate(splits)
        if filled[i] == 0 or abs(achieved[s.value] - fractions[i]) > 0.5 * fractions[i]
    ]
    out = [
        SplitAssignment(r.region_id, r.country_iso3, assigned[r.country_iso3])
        for r in sorted(regions, key=lambda r: r.region_id)
    ]
    return SplitOutcome(out, dict(sorted(assigned.items())), targets, achieved, degenerate)


def _zero_categories() -> dict[str, int]:
    return {c.value: 0 for c in Category}


def composition_stats(regions: Iterable, splits: Mapping[str, Split | str] | None = None) -> dict:
    """Counts per category, per split and per country.

    ``splits`` maps region id to split; when omitted a region's own
    ``split`` attribute is used if it has one.
    """
    summary = {
        "total": 0,
        "by_category": _zero_categories(),
        "by_split": {s.value: {"total": 0, "by_category": _zero_categories()} for s in Split},
        "by_country": {},
    }
    for r in regions:
        cat = Category(r.category).value
        summary["total"] += 1
        summary["by_category"][cat] += 1
        country = summary["by_country"].setdefault(
            r.country_iso3, {"total": 0, "by_category": _zero_categories()}
        )
        country["total"] += 1
        country["by_category"][cat] += 1
        split = splits.get(r.region_id) if splits is not None else getattr(r, "split", None)
        if split is not None:
            bucket = summary["by_split"][Split(split).value]
            bucket["total"] += 1
            bucket["by_category"][cat] += 1
    summary["by_country"] = dict(sorted(summary["by_country"].items()))
    return summary
