import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from t_oracle import paired as paired_oracle
from t_oracle import welch as welch_oracle
from seganet.errors import LandmarkError, NumericError, SliceSelectionError
from seganet.stacks import MaskStack
from seganet.volumetrics import (
    CycleLandmarks,
    VolumeCurve,
    atrial_volume_curve,
    cohort_compare,
    cyclic_smooth,
    ejection_fraction,
    ejection_fractions,
    find_landmarks,
    mask_volume,
    select_atrial_slices,
    volume_curve,
)


def _two_bump(n=30, p1=12, p2=24, a1=1.0, a2=0.4, width=2.0, base=1.0):
    p = np.arange(n)

    def bump(c):
        d = np.minimum(np.abs(p - c), n - np.abs(p - c))
        return np.exp(-(d**2) / (2 * width**2))

    return base + a1 * bump(p1) + a2 * bump(p2)


# ---- slice selection


def test_select_atrial_slices_examples():
    assert list(select_atrial_slices([True, True, True, False, False, False])) == [3, 4, 5]
    with pytest.raises(SliceSelectionError, match="no ventricular"):
        select_atrial_slices([False, False, False])
    with pytest.raises(SliceSelectionError, match="empty"):
        select_atrial_slices([True] * 6)


def test_select_uses_highest_lv_slice():
    assert list(select_atrial_slices([True, False, True, False, False])) == [3, 4]


# ---- volumes


def test_mask_volume_examples():
    assert mask_volume(np.zeros((2, 4, 4)), (1.25, 1.25, 10)) == 0.0
    m = np.zeros((10, 10, 10), bool)
    m[:] = True
    assert mask_volume(m, (1.25, 1.25, 10)) == pytest.approx(15.625)
    assert mask_volume(m, (2.5, 2.5, 10)) == pytest.approx(4 * 15.625)
    assert mask_volume(MaskStack(m, (1.25, 1.25, 10))) == pytest.approx(15.625)


@given(seed=st.integers(0, 10_000))
def test_mask_volume_additive_and_monotone(seed):
    r = np.random.default_rng(seed)
    a = r.uniform(size=(3, 6, 6)) < 0.3
    b = (r.uniform(size=(3, 6, 6)) < 0.3) & ~a
    sp = (1.25, 1.25, 2.5)
    assert mask_volume(a | b, sp) == pytest.approx(mask_volume(a, sp) + mask_volume(b, sp))
    assert mask_volume(a, sp) <= mask_volume(a | b, sp)


def test_volume_curve_examples():
    m = np.ones((2, 3, 3), bool)
    c = volume_curve([m, m, m], (1, 1, 1))
    assert c.volumes_ml == (0.018,) * 3
    single = volume_curve([m], (1, 1, 1))
    assert single.phase_count == 1
    with pytest.raises(LandmarkError):
        find_landmarks(single)
    with pytest.raises(Exception):
        volume_curve([m, np.ones((2, 3, 4), bool)], (1, 1, 1))


def test_atrial_curve_counts_only_slices_above_lv():
    m = np.ones((4, 2, 2), bool)
    c = atrial_volume_curve([m], [True, True, False, False], (1, 1, 1))
    assert c.volumes_ml == (0.008,)


# ---- landmarks


def test_landmarks_constructed_curve():
    curve = _two_bump()
    curve = curve - curve.min() + 10
    lm = find_landmarks(VolumeCurve(tuple(curve)))
    assert (lm.max_phase, lm.min_phase, lm.preA_phase) == (12, int(np.argmin(curve)), 24)
    # with the minimum forced to phase 0
    c2 = curve.copy()
    c2[0] = 1.0
    lm2 = find_landmarks(c2)
    assert (lm2.max_phase, lm2.min_phase, lm2.preA_phase) == (12, 0, 24)


def test_landmarks_sawtooth_has_no_kick():
    saw = np.concatenate([np.linspace(50, 100, 20), np.linspace(95, 55, 10)])
    with pytest.raises(LandmarkError, match="no atrial kick"):
        find_landmarks(saw)


def test_landmarks_flat_curve():
    with pytest.raises(LandmarkError):
        find_landmarks(np.full(10, 3.0))


@given(shift=st.integers(0, 29))
def test_landmarks_rotation_invariant(shift):
    curve = _two_bump()
    base = find_landmarks(curve)
    rolled = find_landmarks(np.roll(curve, shift))
    assert rolled.max_phase == (base.max_phase + shift) % 30
    assert rolled.min_phase == (base.min_phase + shift) % 30
    assert rolled.preA_phase == (base.preA_phase + shift) % 30
    assert rolled.v_preA_ml == base.v_preA_ml


def test_smoothing_picks_indices_but_reports_raw_volumes():
    curve = _two_bump()
    noisy = curve + np.where(np.arange(30) == 20, 0.05, 0.0)  # single-phase spike between the peaks
    assert find_landmarks(noisy, 1).preA_phase in (20, 24)
    lm = find_landmarks(noisy, 3)
    assert lm.preA_phase == 24
    assert lm.v_preA_ml == noisy[24]


def test_cyclic_smooth():
    np.testing.assert_allclose(cyclic_smooth([3, 0, 0, 0, 0, 6], 3), [3, 1, 0, 0, 2, 3])
    with pytest.raises(Exception):
        cyclic_smooth([1, 2, 3], 2)


def test_landmark_invariants_enforced():
    with pytest.raises(LandmarkError):
        CycleLandmarks(1, 1, 2, 3.0, 1.0, 2.0)
    with pytest.raises(LandmarkError):
        CycleLandmarks(1, 2, 3, 3.0, 1.0, 4.0)


# ---- ejection fractions


def test_ef_examples():
    assert ejection_fraction(111.0, 79.40) == pytest.approx(28.4685, abs=1e-4)
    assert ejection_fraction(35.47, 22.43) == pytest.approx(36.7635, abs=1e-4)
    flat = CycleLandmarks(0, 1, 2, 5.0, 5.0, 5.0)
    bio = ejection_fractions(flat)
    assert (bio.ef_percent, bio.aef_percent) == (0.0, 0.0)
    with pytest.raises(NumericError):
        ejection_fraction(0.0, 0.0)


@given(
    vmin=st.floats(1, 100), d1=st.floats(0, 100), d2=st.floats(0, 100), c=st.floats(1e-3, 1e3)
)
def test_ef_scale_invariant_and_bounded(vmin, d1, d2, c):
    lm = CycleLandmarks(0, 1, 2, vmin + d1 + d2, vmin, vmin + d1)
    big = CycleLandmarks(0, 1, 2, c * lm.v_max_ml, c * lm.v_min_ml, c * lm.v_preA_ml)
    a, b = ejection_fractions(lm), ejection_fractions(big)
    assert a.ef_percent == pytest.approx(b.ef_percent, abs=1e-9)
    assert a.aef_percent == pytest.approx(b.aef_percent, abs=1e-9)
    assert 0 <= a.aef_percent <= 100 and 0 <= a.ef_percent <= 100


# ---- cohort statistics

WELCH_A = [27.5, 21.0, 19.0, 23.6, 17.0, 17.9, 16.9, 20.1, 21.9, 22.6, 23.1, 19.6, 19.0, 21.7, 21.4]
WELCH_B = [27.1, 22.0, 20.8, 23.4, 23.4, 23.5, 25.8, 22.0, 24.8, 20.2, 21.9, 22.1, 22.9, 20.5, 24.4]


def test_identical_groups():
    r = cohort_compare([1, 2, 3], [1, 2, 3])
    assert (r.t, r.p) == (0.0, 1.0)
    assert cohort_compare([1, 2, 3], [1, 2, 3], paired=True).t == 0.0
    assert cohort_compare([4, 4], [4, 4]).p == 1.0


def test_welch_textbook_case():
    r = cohort_compare(WELCH_A, WELCH_B)
    t, df, p = welch_oracle(WELCH_A, WELCH_B)
    assert r.t == pytest.approx(t, rel=1e-12)
    assert r.df == pytest.approx(df, rel=1e-12)
    assert abs(r.p - p) <= 1e-6
    assert r.p == pytest.approx(0.021, abs=1e-3)


def test_paired_matches_oracle(rng):
    a = rng.normal(30, 9, 12)
    b = a + rng.normal(2, 3, 12)
    r = cohort_compare(a, b, paired=True)
    t, df, p = paired_oracle(list(a), list(b))
    assert r.t == pytest.approx(t, rel=1e-12) and r.df == df
    assert abs(r.p - p) <= 1e-6


def test_cohort_errors():
    with pytest.raises(ValueError):
        cohort_compare([1, 2, 3], [1, 2], paired=True)
    with pytest.raises(ValueError):
        cohort_compare([1], [1, 2])
    with pytest.raises(NumericError):
        cohort_compare([1, 1], [2, 2])


def test_cohort_summary_statistics():
    r = cohort_compare([1.0, 2.0, 3.0, 4.0], [2.0, 4.0])
    assert (r.mean_a, r.mean_b) == (2.5, 3.0)
    assert r.std_a == pytest.approx(np.std([1, 2, 3, 4], ddof=1))
