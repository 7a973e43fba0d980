"""
Tests des métriques de segmentation (Dice, HD95) et de morphométrie, contre des
oracles par force brute.
"""

import math

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from segfair.exception.exceptions import GeometryError
from segfair.metrics.morphometry import (
    FLAG_ELONGATION_UNDEFINED,
    FLAG_EMPTY,
    case_metrics,
    elongation,
    measure_shape,
    sphericity,
    surface_area,
    tumor_volume,
)
from segfair.metrics.segmentation import (
    FLAG_BOTH_EMPTY,
    FLAG_HD95_UNDEFINED,
    dice,
    hausdorff,
    hd95,
    measure_pair,
)
from segfair.model.models import VoxelMask

NEIGHBOURS = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]


def _brute_surface(data: np.ndarray) -> np.ndarray:
    """Voxels occupés dont un des six voisins (bord compris) est vide."""
    padded = np.pad(data, 1, constant_values=False)
    core = (slice(1, -1),) * 3
    exposed = np.zeros(data.shape, dtype=bool)
    for d in NEIGHBOURS:
        shifted = tuple(slice(1 + o, padded.shape[i] - 1 + o) for i, o in enumerate(d))
        exposed |= ~padded[shifted]
    return np.argwhere(padded[core] & exposed)


def _brute_hd95(a: VoxelMask, b: VoxelMask) -> float:
    sp = np.asarray(a.spacing)
    dist = cdist(_brute_surface(a.data) * sp, _brute_surface(b.data) * sp)
    return max(
        float(np.percentile(dist.min(axis=1), 95, method="linear")),
        float(np.percentile(dist.min(axis=0), 95, method="linear")),
    )


def _random_pair(rng, max_side=16):
    dims = tuple(int(v) for v in rng.integers(2, max_side + 1, size=3))
    spacing = tuple(float(v) for v in rng.choice([0.5, 1.0, 1.5], size=3))
    a = rng.random(dims) < rng.uniform(0.1, 0.6)
    b = rng.random(dims) < rng.uniform(0.1, 0.6)
    a.flat[0] = True
    b.flat[-1] = True
    return VoxelMask(dims, spacing, a), VoxelMask(dims, spacing, b)


class TestDice:
    """Coefficient de Dice."""

    def test_matches_pair_count(self):
        """500 paires jusqu'à 16³ : intersection des indices occupés."""
        rng = np.random.default_rng(11)
        for _ in range(500):
            a, b = _random_pair(rng)
            inter = np.intersect1d(np.flatnonzero(a.data), np.flatnonzero(b.data)).size
            expected = 2 * inter / (a.occupied_count + b.occupied_count)
            assert dice(a, b) == pytest.approx(expected, abs=1e-12)

    def test_identical_masks(self):
        m = VoxelMask.from_coords((3, 3, 3), (1, 1, 1), [(0, 0, 0), (1, 1, 1)])
        assert dice(m, m) == 1.0

    def test_half_overlap(self):
        a = VoxelMask.from_coords((3, 3, 3), (1, 1, 1), [(0, 0, 0), (1, 0, 0)])
        b = VoxelMask.from_coords((3, 3, 3), (1, 1, 1), [(1, 0, 0), (2, 0, 0)])
        assert dice(a, b) == 0.5
        assert dice(b, a) == 0.5

    def test_both_empty_is_one(self):
        e = VoxelMask.empty((2, 2, 2))
        assert dice(e, e) == 1.0

    def test_one_empty_is_zero(self):
        e = VoxelMask.empty((2, 2, 2))
        m = VoxelMask.from_coords((2, 2, 2), (1, 1, 1), [(0, 0, 0)])
        assert dice(m, e) == 0.0

    def test_grid_mismatch(self):
        a = VoxelMask.empty((2, 2, 2))
        b = VoxelMask.empty((2, 2, 3))
        with pytest.raises(GeometryError):
            dice(a, b)


class TestHd95:
    """HD95 symétrique en mm."""

    def test_matches_brute_force(self):
        rng = np.random.default_rng(5)
        for _ in range(500):
            a, b = _random_pair(rng)
            assert hd95(a, b) == pytest.approx(_brute_hd95(a, b), abs=1e-9)

    def test_identical_masks_zero(self):
        m = VoxelMask.from_coords((4, 4, 4), (1, 1, 1), [(1, 1, 1), (2, 2, 2)])
        assert hd95(m, m) == 0.0

    def test_translated_single_voxels(self):
        a = VoxelMask.from_coords((5, 5, 5), (1.0, 2.0, 1.0), [(0, 0, 0)])
        b = VoxelMask.from_coords((5, 5, 5), (1.0, 2.0, 1.0), [(0, 3, 0)])
        assert hd95(a, b) == pytest.approx(6.0)
        assert hausdorff(a, b) == pytest.approx(6.0)

    def test_symmetric_and_bounded_by_hausdorff(self):
        rng = np.random.default_rng(9)
        for _ in range(40):
            a, b = _random_pair(rng)
            assert hd95(a, b) == hd95(b, a)
            assert hd95(a, b) <= hausdorff(a, b) + 1e-12

    def test_empty_undefined(self):
        e = VoxelMask.empty((3, 3, 3))
        m = VoxelMask.from_coords((3, 3, 3), (1, 1, 1), [(1, 1, 1)])
        assert hd95(m, e) is None
        assert hd95(e, e) is None

    def test_measure_pair_flags(self):
        e = VoxelMask.empty((3, 3, 3))
        m = VoxelMask.from_coords((3, 3, 3), (1, 1, 1), [(1, 1, 1)])

        both = measure_pair(e, e)
        assert both.dice == 1.0
        assert both.hd95_mm is None
        assert both.flags == [FLAG_BOTH_EMPTY, FLAG_HD95_UNDEFINED]

        one = measure_pair(m, e)
        assert one.dice == 0.0
        assert one.flags == [FLAG_HD95_UNDEFINED]


class TestMorphometry:
    """Volume, surface, sphéricité, élongation."""

    def test_single_voxel(self):
        m = VoxelMask.from_coords((3, 3, 3), (1, 1, 1), [(1, 1, 1)])
        assert tumor_volume(m) == 1.0
        assert surface_area(m) == 6.0
        assert sphericity(m) == pytest.approx((math.pi / 6.0) ** (1.0 / 3.0))
        assert elongation(m) is None

    def test_anisotropic_block(self):
        """Bloc 2×1×1 d'espacement (2, 1, 3) : 12 mm³, faces comptées par axe."""
        m = VoxelMask.from_coords((4, 3, 3), (2.0, 1.0, 3.0), [(1, 1, 1), (2, 1, 1)])
        assert tumor_volume(m) == 12.0
        # 2 faces yz (3 mm²), 4 faces xz (6 mm²), 4 faces xy (2 mm²)
        assert surface_area(m) == pytest.approx(2 * 3 + 4 * 6 + 4 * 2)

    def test_volume_scaling(self):
        coords = [(0, 0, 0), (1, 0, 0), (2, 0, 0), (0, 1, 0), (0, 0, 1)]
        assert tumor_volume(VoxelMask.from_coords((4, 4, 4), (1, 1, 1), coords)) == 5.0
        assert tumor_volume(VoxelMask.from_coords((4, 4, 4), (2, 1, 1), coords)) == 10.0
        assert tumor_volume(VoxelMask.empty((2, 2, 2))) == 0.0

    def test_bar_and_anisotropic_voxel_faces(self):
        bar = VoxelMask.from_coords((3, 3, 3), (1, 1, 1), [(1, 1, 0), (1, 1, 1)])
        assert surface_area(bar) == 10.0
        single = VoxelMask.from_coords((3, 3, 3), (2, 1, 1), [(1, 1, 1)])
        assert surface_area(single) == pytest.approx(2 * 1 + 4 * 2)

    def test_cube_sphericity_scale_invariant(self):
        data = np.zeros((4, 4, 4), dtype=bool)
        data[1:3, 1:3, 1:3] = True
        cube = VoxelMask((4, 4, 4), (1, 1, 1), data)
        expected = math.pi ** (1 / 3) * 48 ** (2 / 3) / 24
        assert sphericity(cube) == pytest.approx(expected)
        assert sphericity(cube) == pytest.approx(0.8060, abs=1e-4)

    def test_uniform_spacing_scaling(self):
        rng = np.random.default_rng(12)
        data = rng.random((6, 6, 6)) < 0.4
        data[2, 2, 2] = data[3, 2, 2] = data[2, 3, 2] = True
        m1 = VoxelMask((6, 6, 6), (1, 1, 1), data)
        m3 = VoxelMask((6, 6, 6), (3, 3, 3), data)
        assert tumor_volume(m3) == pytest.approx(27 * tumor_volume(m1))
        assert surface_area(m3) == pytest.approx(9 * surface_area(m1))
        assert sphericity(m3) == pytest.approx(sphericity(m1))
        assert elongation(m3) == pytest.approx(elongation(m1))

    def test_cross_is_isotropic_in_plane(self):
        coords = [(2, 2, 0), (1, 2, 0), (3, 2, 0), (2, 1, 0), (2, 3, 0)]
        m = VoxelMask.from_coords((5, 5, 1), (1, 1, 1), coords)
        assert elongation(m) == pytest.approx(1.0)

    def test_elongation_matches_eigen_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(30):
            spacing = tuple(float(v) for v in rng.uniform(0.5, 2.0, size=3))
            data = rng.random((6, 7, 5)) < 0.3
            data[0, 0, 0] = data[5, 6, 4] = True
            m = VoxelMask((6, 7, 5), spacing, data)
            pts = np.argwhere(data) * np.asarray(spacing)
            lam = np.sort(np.linalg.eigvalsh(np.cov(pts.T, bias=True)))[::-1]
            assert elongation(m) == pytest.approx(math.sqrt(lam[1] / lam[0]), abs=1e-9)

    def test_grid_border_faces_counted(self):
        m = VoxelMask((2, 2, 2), (1, 1, 1), np.ones((2, 2, 2)))
        assert surface_area(m) == 24.0

    def test_cube_is_isotropic(self):
        data = np.zeros((5, 5, 5), dtype=bool)
        data[1:4, 1:4, 1:4] = True
        m = VoxelMask((5, 5, 5), (1, 1, 1), data)
        assert elongation(m) == pytest.approx(1.0)
        assert surface_area(m) == 54.0

    def test_line_has_zero_elongation(self):
        m = VoxelMask.from_coords(
            (5, 3, 3), (1, 1, 1), [(0, 1, 1), (1, 1, 1), (2, 1, 1)]
        )
        assert elongation(m) == pytest.approx(0.0)

    def test_sphericity_below_one_for_voxelised_ball(self):
        idx = np.indices((21, 21, 21)) - 10
        m = VoxelMask((21, 21, 21), (1, 1, 1), (idx**2).sum(axis=0) <= 81)
        s = sphericity(m)
        assert 0.5 < s < 1.0

    def test_empty_shape_flagged(self):
        shape = measure_shape(VoxelMask.empty((2, 2, 2)))
        assert shape.volume_mm3 == 0.0
        assert shape.sphericity is None
        assert shape.flags == [FLAG_EMPTY]

    def test_single_voxel_flag(self):
        m = VoxelMask.from_coords((3, 3, 3), (1, 1, 1), [(1, 1, 1)])
        assert measure_shape(m).flags == [FLAG_ELONGATION_UNDEFINED]

    def test_case_metrics_combines(self):
        ref = VoxelMask.from_coords((4, 4, 4), (1, 1, 1), [(1, 1, 1), (2, 1, 1)])
        pred = VoxelMask.from_coords((4, 4, 4), (1, 1, 1), [(1, 1, 1)])
        cm = case_metrics(pred, ref)
        assert cm.dice == pytest.approx(2 / 3)
        # distances ref -> pred : [0, 1], 95e percentile linéaire = 0.95
        assert cm.hd95_mm == pytest.approx(0.95)
        assert cm.volume_mm3 == 2.0
        assert cm.flags == []
