import random
from dataclasses import dataclass

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mango_curate.errors import StratifyError
from mango_curate.raster import Category
from mango_curate.stratify import (
    Split,
    StratifyConfig,
    categorize,
    composition_stats,
    country_disjoint_split,
    enforce_ratios,
    largest_remainder,
)


@dataclass(frozen=True)
class Region:
    region_id: str
    category: Category
    country_iso3: str = "IDN"


def _supply(strong, mid, weak, neg, countries=("IDN",)):
    out = []
    for cat, n in ((Category.STRONG, strong), (Category.MID, mid), (Category.WEAK, weak), (Category.NEGATIVE, neg)):
        out += [Region(f"{cat.name[:3]}{i:06d}", cat, countries[i % len(countries)]) for i in range(n)]
    return out


def _counts(selected):
    return tuple(sum(r.category is c for r in selected) for c in (Category.STRONG, Category.MID, Category.WEAK, Category.NEGATIVE))


@pytest.mark.parametrize(
    "f,cat",
    [(0.20, Category.STRONG), (0.15, Category.STRONG), (0.1499, Category.MID), (0.05, Category.MID),
     (0.0499, Category.WEAK), (1e-9, Category.WEAK), (0.0, Category.NEGATIVE), (1.0, Category.STRONG)],
)
def test_categorize_boundaries(f, cat):
    assert categorize(f) is cat


@pytest.mark.parametrize("f", [-0.01, 1.01, float("nan")])
def test_categorize_out_of_range(f):
    with pytest.raises(StratifyError):
        categorize(f)


def test_largest_remainder_basic():
    assert largest_remainder(10, (2, 2, 1)) == [4, 4, 2]
    assert largest_remainder(7, (2, 2, 1)) == [3, 3, 1]
    assert sum(largest_remainder(21418, (2, 2, 1))) == 21418


def test_published_supply_is_kept_whole():
    out = enforce_ratios(_supply(8517, 8643, 4258, 21424))
    assert _counts(out.selected) == (8517, 8643, 4258, 21418)
    pos = 8517 + 8643 + 4258
    for n, w in zip((8517, 8643, 4258), (0.4, 0.4, 0.2)):
        assert abs(n / pos - w) <= 0.03 * w


def test_exact_ratio_supply_subsamples_negatives():
    out = enforce_ratios(_supply(200, 200, 100, 1000))
    assert _counts(out.selected) == (200, 200, 100, 500)
    assert out.shortfall == {"StrongPositive": 0, "MidPositive": 0, "WeakPositive": 0}


def test_zero_negatives_cannot_balance():
    with pytest.raises(StratifyError, match="cannot balance"):
        enforce_ratios(_supply(10, 10, 5, 0))


def test_zero_positives_cannot_balance():
    with pytest.raises(StratifyError, match="cannot balance"):
        enforce_ratios(_supply(0, 0, 0, 10))


def test_underfilled_weak_stratum_scales_others():
    out = enforce_ratios(_supply(400, 400, 50, 2000), StratifyConfig(ratio_tolerance=0.0))
    assert _counts(out.selected) == (101, 101, 50, 252)  # exact apportionment of 252
    assert out.shortfall["WeakPositive"] > 0


def test_negatives_limit_positives():
    out = enforce_ratios(_supply(200, 200, 100, 50), StratifyConfig(ratio_tolerance=0.0))
    s, m, w, n = _counts(out.selected)
    assert (s, m, w, n) == (20, 20, 10, 50)


def test_subsample_is_seeded():
    regions = _supply(300, 200, 100, 1000)
    a = [r.region_id for r in enforce_ratios(regions, StratifyConfig(seed=3)).selected]
    b = [r.region_id for r in enforce_ratios(list(reversed(regions)), StratifyConfig(seed=3)).selected]
    c = [r.region_id for r in enforce_ratios(regions, StratifyConfig(seed=4)).selected]
    assert a == b and a != c


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 400), st.integers(1, 400), st.integers(1, 400), st.integers(1, 1500))
def test_exact_apportionment_invariants(s, m, w, n):
    out = enforce_ratios(_supply(s, m, w, n), StratifyConfig(ratio_tolerance=0.0))
    cs, cm, cw, cn = _counts(out.selected)
    pos = cs + cm + cw
    assert pos - cn in (0, 1) or cn == n
    if pos:
        target = largest_remainder(pos, (2, 2, 1))
        assert all(abs(a - b) <= 1 for a, b in zip((cs, cm, cw), target))
    assert cs <= s and cm <= m and cw <= w and cn <= n


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 300), st.integers(1, 300), st.integers(1, 300), st.integers(1, 1000))
def test_tolerance_band_respected(s, m, w, n):
    out = enforce_ratios(_supply(s, m, w, n))
    cs, cm, cw, _ = _counts(out.selected)
    pos = cs + cm + cw
    # small totals cannot hit the band; there the counts are the rounding target itself
    exact = list((cs, cm, cw)) == largest_remainder(pos, (2, 2, 1))
    for c, share in zip((cs, cm, cw), (0.4, 0.4, 0.2)):
        assert exact or abs(c / pos - share) <= 0.03 * share + 1e-12


# -- splits ------------------------------------------------------------------


def _countries(sizes):
    regions = []
    for k, n in enumerate(sizes):
        regions += [Region(f"C{k:02d}-{i:04d}", Category.NEGATIVE, f"C{k:02d}") for i in range(n)]
    return regions


def test_uniform_countries_split_exactly():
    out = country_disjoint_split(_countries([100] * 10))
    per = out.summary()["countries_per_split"]
    assert [len(per[s.value]) for s in Split] == [8, 1, 1]
    assert out.achieved == {"train": 0.8, "val": 0.1, "test": 0.1}
    assert out.degenerate == []


def test_dominant_country_goes_to_train_and_flags_degenerate():
    out = country_disjoint_split(_countries([950, 20, 15, 10, 5]))
    assert out.countries["C00"] is Split.TRAIN
    assert out.degenerate
    assert set(out.degenerate) <= {"val", "test"}


def test_shuffled_input_same_assignment():
    regions = _countries([37, 5, 90, 12, 12, 64, 3, 41, 12, 8])
    a = country_disjoint_split(regions, seed=7)
    shuffled = regions.copy()
    random.Random(1).shuffle(shuffled)
    b = country_disjoint_split(shuffled, seed=7)
    assert a.assignments == b.assignments and a.countries == b.countries


def test_too_few_countries():
    with pytest.raises(StratifyError, match="cannot form disjoint splits"):
        country_disjoint_split(_countries([10, 10]))


def test_missing_country_code():
    with pytest.raises(StratifyError):
        country_disjoint_split([Region("a", Category.NEGATIVE, "")] + _countries([1, 1, 1]))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 200), min_size=3, max_size=25), st.integers(0, 100))
def test_split_disjoint_and_conserving(sizes, seed):
    regions = _countries(sizes)
    out = country_disjoint_split(regions, seed=seed)
    seen = {}
    for a in out.assignments:
        assert seen.setdefault(a.country_iso3, a.split) is a.split
    assert len(out.assignments) == len(regions)
    assert sum(out.achieved.values()) == pytest.approx(1.0)


# -- composition -------------------------------------------------------------


def test_empty_composition():
    s = composition_stats([])
    assert s["total"] == 0 and set(s["by_category"].values()) == {0}
    assert all(v["total"] == 0 for v in s["by_split"].values())
    assert s["by_country"] == {}


def test_published_counts_round_trip():
    s = composition_stats(_supply(8517, 8643, 4258, 21424))
    assert s["by_category"] == {"StrongPositive": 8517, "MidPositive": 8643, "WeakPositive": 4258, "PureNegative": 21424}
    assert s["total"] == 42842


def test_per_split_counts_conserve_total():
    regions = _supply(30, 30, 15, 75, countries=("AAA", "BBB", "CCC", "DDD", "EEE"))
    out = country_disjoint_split(regions)
    s = composition_stats(regions, {a.region_id: a.split for a in out.assignments})
    assert sum(v["total"] for v in s["by_split"].values()) == s["total"] == 150
    for cat, n in s["by_category"].items():
        assert sum(v["by_category"][cat] for v in s["by_split"].values()) == n
    assert sum(v["total"] for v in s["by_country"].values()) == 150
