import numpy as np
import pytest

from docisim.errors import OverlappingRegions, SpacingBelowNyquist
from docisim.phantom import (
    DEFAULT_SEPARATING_WINDOWS,
    LABEL_CANCER,
    LABEL_CARTILAGE,
    LABEL_CORKBOARD,
    LABEL_FIBROUS,
    ClassSpec,
    IlluminationSpec,
    Region,
    build_phantom,
    make_dye_drop_phantom,
    make_tissue_phantom,
    make_usaf_phantom,
    tissue_classes,
)


class TestUsafPhantom:
    def test_bar_width_arithmetic_70um_at_512px(self):
        # 20 mm over 512 px is 39.0625 um/px, so 70 um bars round up to 2 px.
        phantom = make_usaf_phantom(512, 512, fov_mm=20.0, finest_bar_um=70.0)
        finest = phantom.meta["bar_groups"][-1]
        assert finest["spacing_um"] == 70.0
        assert finest["bar_px"] == 2

    def test_spacings_halve(self):
        phantom = make_usaf_phantom(finest_bar_um=70.0, n_groups=4)
        spacings = [g["spacing_um"] for g in phantom.meta["bar_groups"]]
        assert spacings == [560.0, 280.0, 140.0, 70.0]

    def test_zero_amplitude_outside_bars(self):
        phantom = make_usaf_phantom()
        assert np.all(phantom.amplitude_map[phantom.label_map == 0] == 0.0)
        assert np.all(phantom.amplitude_map[phantom.label_map == 1] > 0.0)

    def test_single_lifetime_on_bars(self):
        phantom = make_usaf_phantom(bar_lifetime_ns=3.0)
        on_bars = phantom.lifetime_maps_ns[:, phantom.label_map == 1]
        assert np.all(on_bars == 3.0)

    def test_sub_nyquist_spacing_rejected(self):
        with pytest.raises(SpacingBelowNyquist):
            make_usaf_phantom(512, 512, fov_mm=20.0, finest_bar_um=30.0)

    def test_groups_do_not_overlap(self):
        phantom = make_usaf_phantom()
        groups = phantom.meta["bar_groups"]
        for a, b in zip(groups, groups[1:]):
            assert a["x1"] < b["x0"]


class TestTissuePhantom:
    def test_default_has_all_four_classes(self):
        phantom = make_tissue_phantom(128, 128)
        present = set(np.unique(phantom.label_map))
        assert present == {LABEL_CORKBOARD, LABEL_CARTILAGE, LABEL_FIBROUS, LABEL_CANCER}

    def test_cancer_disk_in_fibrous_background_two_classes(self):
        classes = tissue_classes()
        regions = [
            Region("ellipse", LABEL_FIBROUS, center_mm=(10, 10), radii_mm=(8, 7)),
            Region("disk", LABEL_CANCER, layer="lesion", center_mm=(10, 10), radius_mm=2.0),
        ]
        phantom = build_phantom(128, 128, classes, regions)
        nonzero = set(np.unique(phantom.label_map)) - {LABEL_CORKBOARD}
        assert nonzero == {LABEL_FIBROUS, LABEL_CANCER}

    def test_separating_channel_delta_matches_spec(self):
        delta = 0.8
        phantom = make_tissue_phantom(64, 64, cancer_delta_ns=delta)
        cancer = phantom.label_map == LABEL_CANCER
        fibrous = phantom.label_map == LABEL_FIBROUS
        for window in DEFAULT_SEPARATING_WINDOWS:
            ch = window - 2
            diff = phantom.lifetime_maps_ns[ch][cancer].mean() - phantom.lifetime_maps_ns[ch][fibrous].mean()
            assert diff == pytest.approx(delta, rel=1e-12)
        nonsep = [w for w in range(2, 11) if w not in DEFAULT_SEPARATING_WINDOWS]
        for window in nonsep:
            ch = window - 2
            diff = phantom.lifetime_maps_ns[ch][cancer].mean() - phantom.lifetime_maps_ns[ch][fibrous].mean()
            assert diff == pytest.approx(0.0, abs=1e-12)

    def test_cancer_over_benign_lesion_rejected(self):
        classes = tissue_classes()
        regions = [
            Region("ellipse", LABEL_FIBROUS, center_mm=(10, 10), radii_mm=(8, 7)),
            Region("disk", LABEL_CARTILAGE, layer="lesion", center_mm=(9, 9), radius_mm=2.0),
            Region("disk", LABEL_CANCER, layer="lesion", center_mm=(10, 10), radius_mm=2.0),
        ]
        with pytest.raises(OverlappingRegions):
            build_phantom(128, 128, classes, regions)

    def test_benign_lesion_over_cancer_rejected(self):
        classes = tissue_classes()
        regions = [
            Region("ellipse", LABEL_FIBROUS, center_mm=(10, 10), radii_mm=(8, 7)),
            Region("disk", LABEL_CANCER, layer="lesion", center_mm=(10, 10), radius_mm=2.0),
            Region("disk", LABEL_CARTILAGE, layer="lesion", center_mm=(9, 9), radius_mm=2.0),
        ]
        with pytest.raises(OverlappingRegions):
            build_phantom(128, 128, classes, regions)

    def test_tissue_mask_excludes_corkboard(self):
        phantom = make_tissue_phantom(64, 64)
        mask = phantom.tissue_mask()
        assert np.array_equal(mask, phantom.label_map != LABEL_CORKBOARD)
        assert 0 < mask.sum() < mask.size


class TestDyeDropPhantom:
    def test_six_drops_and_rois(self):
        phantom = make_dye_drop_phantom()
        assert len(phantom.meta["drops"]) == 6
        assert len(phantom.meta["roi_rects"]) == 6

    def test_roi_rects_inside_drops(self):
        phantom = make_dye_drop_phantom()
        for (x, y, w, h), drop in zip(phantom.meta["roi_rects"], phantom.meta["drops"]):
            label = drop["label"]
            assert np.all(phantom.label_map[y : y + h, x : x + w] == label)

    def test_amplitudes_span_requested_ratio(self):
        phantom = make_dye_drop_phantom(amplitudes=(0.4, 4.0))
        amps = sorted({d["amplitude"] for d in phantom.meta["drops"]})
        assert amps[1] / amps[0] == pytest.approx(10.0)


class TestPhantomValidation:
    def test_rasters_immutable(self):
        phantom = make_tissue_phantom(32, 32)
        with pytest.raises(ValueError):
            phantom.amplitude_map[0, 0] = 1.0

    def test_lifetime_bounds_enforced(self):
        classes = [ClassSpec(0, "bg", lifetime_ns=25.0, amplitude=0.0)]
        with pytest.raises(ValueError):
            build_phantom(8, 8, classes, [])

    def test_radial_illumination_falloff(self):
        spec = IlluminationSpec("radial", falloff=3.0)
        r = spec.raster(101, 101)
        assert r[50, 50] == pytest.approx(1.0)
        assert r[0, 0] == pytest.approx(1.0 / 3.0)

    def test_polygon_region(self):
        classes = tissue_classes()
        regions = [
            Region("polygon", LABEL_FIBROUS, points_mm=((2, 2), (18, 2), (18, 18), (2, 18))),
        ]
        phantom = build_phantom(64, 64, classes, regions)
        assert (phantom.label_map == LABEL_FIBROUS).sum() > 0.5 * 64 * 64
