import numpy as np
import pytest

from seganet.errors import ConfigError
from seganet.phantom import PhantomSpec, cyclic_bump, generate_phantom, volume_program
from seganet.volumetrics import atrial_volume_curve, ejection_fractions, find_landmarks, select_atrial_slices


def test_cyclic_bump_unit_height_and_wraps():
    g = cyclic_bump(30, 1, 3.0)
    assert g[1] == 1.0
    assert g[0] == pytest.approx(g[2])
    assert g[29] == pytest.approx(g[3])


def test_volume_program_hits_targets():
    curve, lm = volume_program(PhantomSpec())
    assert (lm["max_phase"], lm["preA_phase"]) == (12, 24)
    assert curve[lm["max_phase"]] == pytest.approx(110.0, abs=1e-9)
    assert curve[lm["preA_phase"]] == pytest.approx(103.0, abs=1e-9)
    assert curve.min() == 80.0
    assert int(np.argmax(curve)) == 12


@pytest.mark.parametrize(
    "kw",
    [
        {"v_min": 105.0},
        {"phases": 6},
        {"peak_phases": (12, 12)},
        {"spacing": (1.25, 0.0, 2.5)},
        {"group": "control"},
    ],
)
def test_spec_validation(kw):
    with pytest.raises(ConfigError):
        PhantomSpec(**kw)


def test_preA_too_close_to_max_rejected():
    with pytest.raises(ConfigError):
        volume_program(PhantomSpec(peak_phases=(12, 14)))


def test_ellipsoid_must_fit():
    with pytest.raises(ConfigError):
        generate_phantom(PhantomSpec(grid=(32, 32, 44)))


def test_voxelized_volumes_within_two_percent(phantom):
    curve = atrial_volume_curve(phantom.masks, phantom.lv_flags, phantom.spacing)
    err = np.abs(curve.as_array() - phantom.volumes_ml) / phantom.volumes_ml
    assert err.max() <= 0.02


def test_phantom_landmarks_and_lv_routing(phantom):
    atrial = select_atrial_slices(phantom.lv_flags)
    assert atrial.start == phantom.spec.lv_slices
    # no atrial voxel lives below the selected range
    for m in phantom.masks:
        assert not m[: atrial.start].any()
    lm = find_landmarks(atrial_volume_curve(phantom.masks, phantom.lv_flags, phantom.spacing))
    assert (lm.max_phase, lm.preA_phase, lm.min_phase) == (12, 24, phantom.landmarks["min_phase"])


def test_phantom_deterministic():
    a, b = generate_phantom(), generate_phantom()
    for x, y in zip(a.images, b.images):
        np.testing.assert_array_equal(x, y)
    noisy = PhantomSpec(noise=0.02, seed=3)
    np.testing.assert_array_equal(generate_phantom(noisy).images[5], generate_phantom(noisy).images[5])


def test_images_normalized(phantom):
    for img in phantom.images[:3]:
        assert img.dtype == np.float32 and img.min() >= 0 and img.max() <= 1


def test_coarse_mode_ten_mm():
    ph = generate_phantom(PhantomSpec.coarse())
    assert ph.spacing[2] == 10.0
    lm = find_landmarks(atrial_volume_curve(ph.masks, ph.lv_flags, ph.spacing))
    bio = ejection_fractions(lm)
    assert abs(bio.ef_percent - 300 / 11) <= 2.0
