"""
Tests du générateur de cohortes synthétiques : géométrie, perturbations,
notes d'experts et biais injectés connus.
"""

import itertools
import json

import numpy as np
import pytest
from pydantic import ValidationError

from segfair.api import AuditRunConfig, cmd_morph
from segfair.exception.exceptions import GeometryError, PerturbationError
from segfair.fairness.fairness import audit_groups, fairness_gap
from segfair.metrics.morphometry import elongation
from segfair.metrics.segmentation import dice
from segfair.model.models import Rating, Tier, VoxelMask
from segfair.parser.metadata import load_metadata
from segfair.synth.generator import (
    SynthConfig,
    ellipsoid_mask,
    gen_cohort,
    perturb_mask,
    synthetic_ratings,
    write_cohort,
)
from segfair.volume.io import load_mask


def _small(**kw) -> SynthConfig:
    base = dict(n_per_group=3, grid=(32, 32, 32), seed=11)
    base.update(kw)
    return SynthConfig(**base)


def _group_means(groups, values):
    by_group = {}
    for g, v in zip(groups, values):
        by_group.setdefault(g, []).append(v)
    return [(g, float(np.mean(v))) for g, v in by_group.items()]


def _cube(dims, lo, hi) -> VoxelMask:
    data = np.zeros(dims, dtype=bool)
    data[lo:hi, lo:hi, lo:hi] = True
    return VoxelMask(dims, (1.0, 1.0, 1.0), data)


class TestEllipsoid:
    def test_matches_lattice_count(self):
        spacing = (1.0, 0.5, 2.0)
        center, radii = (5.0, 4.0, 9.0), (3.0, 2.5, 4.0)
        m = ellipsoid_mask(center, radii, (12, 16, 10), spacing)
        expected = sum(
            1
            for idx in itertools.product(range(12), range(16), range(10))
            if sum(((i * s - c) / r) ** 2 for i, s, c, r in zip(idx, spacing, center, radii))
            <= 1.0
        )
        assert m.occupied_count == expected
        assert m.spacing == spacing

    def test_outside_grid(self):
        with pytest.raises(GeometryError):
            ellipsoid_mask((100.0, 100.0, 100.0), (1.0, 1.0, 1.0), (8, 8, 8))

    def test_non_positive_radius(self):
        with pytest.raises(GeometryError):
            ellipsoid_mask((4.0, 4.0, 4.0), (1.0, 0.0, 1.0), (8, 8, 8))

    def test_ball_is_isotropic(self):
        m = ellipsoid_mask((16.0, 16.0, 16.0), (3.0, 3.0, 3.0), (32, 32, 32))
        assert elongation(m) > 0.9

    def test_two_to_one_axes(self):
        m = ellipsoid_mask((16.0, 16.0, 16.0), (6.0, 3.0, 3.0), (32, 32, 32))
        assert elongation(m) == pytest.approx(0.5, abs=0.1)

    def test_half_spacing_radius_is_single_voxel(self):
        m = ellipsoid_mask((4.0, 4.0, 4.0), (0.5, 0.5, 0.5), (8, 8, 8))
        assert m.occupied_count == 1
        assert m.data[4, 4, 4]


class TestPerturbation:
    """Érosions, dilatations, couche fractionnaire et bascules de surface."""

    def test_identity(self):
        m = _cube((7, 7, 7), 2, 5)
        assert perturb_mask(m, 0.0) is m

    def test_one_layer_erosion(self):
        m = _cube((9, 9, 9), 2, 7)
        eroded = perturb_mask(m, 1.0)
        assert eroded.same_as(_cube((9, 9, 9), 3, 6))

    def test_one_layer_dilation(self):
        m = _cube((9, 9, 9), 3, 6)
        grown = perturb_mask(m, -1.0)
        # cube 3³ + une face de 9 voxels sur chacune des six directions
        assert grown.occupied_count == 27 + 6 * 9
        assert grown.data[3:6, 3:6, 3:6].all()
        assert not grown.data[2, 2, 2]

    def test_fractional_layer_between_bounds(self):
        m = _cube((11, 11, 11), 2, 9)
        half = perturb_mask(m, 0.5, seed=1, label="a")
        assert 5**3 < half.occupied_count < 7**3
        assert half.same_as(perturb_mask(m, 0.5, seed=1, label="a"))
        assert not half.same_as(perturb_mask(m, 0.5, seed=1, label="b"))

    def test_full_flip_band(self):
        m = _cube((7, 7, 7), 2, 5)
        flipped = perturb_mask(m, 0.0, flip_rate=1.0)
        # centre conservé, 26 voxels de bord retirés, 54 voisins ajoutés
        assert flipped.occupied_count == 1 + 54
        assert flipped.data[3, 3, 3]
        assert not flipped.data[2, 2, 2]

    def test_dice_decreases_with_layers(self):
        gold = ellipsoid_mask((12.0, 12.0, 12.0), (8.0, 7.0, 6.0), (24, 24, 24))
        scores = [
            dice(perturb_mask(gold, layers, seed=2, label="sweep"), gold)
            for layers in (0.0, 0.5, 1.0, 2.0, 3.0)
        ]
        assert scores[0] == 1.0
        assert all(a > b for a, b in zip(scores, scores[1:]))

    def test_same_seed_same_output(self):
        m = _cube((11, 11, 11), 2, 9)
        a = perturb_mask(m, 1.5, flip_rate=0.2, seed=3, label="x")
        assert a.same_as(perturb_mask(m, 1.5, flip_rate=0.2, seed=3, label="x"))

    def test_erosion_emptying_mask(self):
        m = VoxelMask.from_coords((3, 3, 3), (1, 1, 1), [(1, 1, 1)])
        with pytest.raises(PerturbationError):
            perturb_mask(m, 1.0)

    def test_empty_input(self):
        with pytest.raises(PerturbationError):
            perturb_mask(VoxelMask.empty((3, 3, 3)), 1.0)


class TestRatings:
    @pytest.mark.parametrize(
        "dice_value, hd, expected",
        [
            (0.95, 2.0, ("Good", "Good")),
            (0.76, 3.0, ("Good", "Acceptable")),
            (0.60, 5.0, ("Acceptable", "Acceptable")),
            (0.505, 5.0, ("Acceptable", "Poor")),
            (0.30, 9.0, ("Poor", "Poor")),
            (0.05, 20.0, ("Missed", "Missed")),
            (0.0, None, ("Missed", "Missed")),
        ],
    )
    def test_bands(self, dice_value, hd, expected):
        assert synthetic_ratings(dice_value, hd) == tuple(Rating(r) for r in expected)


class TestSynthConfig:
    def test_negative_bias_rejected(self):
        with pytest.raises(ValidationError):
            _small(label_bias={"Young": -1.0, "Middle": 0.0, "Older": 0.0})

    def test_grid_too_small(self):
        with pytest.raises(ValidationError):
            SynthConfig(grid=(16, 16, 16))

    def test_unknown_group(self):
        with pytest.raises(ValidationError):
            _small(pred_bias={"Teen": 1.0})


class TestCohort:
    """Biais injectés connus et lois de volume."""

    def test_zero_bias_parity(self):
        cases = gen_cohort(_small())
        assert len(cases) == 9
        for c in cases:
            assert c.silver.same_as(c.gold)
            assert c.pred.same_as(c.gold)
            assert c.record.tier == Tier.T1
        groups = [str(c.record.age_group) for c in cases]
        true = _group_means(groups, [dice(c.pred, c.gold) for c in cases])
        assert fairness_gap(true) == 0.0

    def test_young_label_bias_inflates_observed_gap(self):
        cfg = _small(label_bias={"Young": 1.0, "Middle": 0.0, "Older": 0.0})
        cases = gen_cohort(cfg)
        groups = [str(c.record.age_group) for c in cases]
        true = [dice(c.pred, c.gold) for c in cases]
        observed = [dice(c.pred, c.silver) for c in cases]

        assert fairness_gap(_group_means(groups, observed)) > fairness_gap(
            _group_means(groups, true)
        )
        young = [o for g, o in zip(groups, observed) if g == "Young"]
        assert max(young) < 1.0

    def test_ages_inside_group_ranges(self):
        for c in gen_cohort(_small()):
            lo, hi = {"Young": (25, 40), "Middle": (41, 54), "Older": (55, 80)}[
                str(c.record.age_group)
            ]
            assert lo <= c.record.age <= hi

    def test_deterministic(self):
        a, b = gen_cohort(_small()), gen_cohort(_small())
        assert [c.record for c in a] == [c.record for c in b]
        assert all(x.gold.same_as(y.gold) for x, y in zip(a, b))

    def test_write_cohort(self, tmp_path):
        cfg = _small(pred_bias={"Young": 0.0, "Middle": 0.0, "Older": 1.0})
        cases = gen_cohort(cfg)
        metadata = write_cohort(cases, cfg, tmp_path)

        records = load_metadata(metadata)
        assert [r.case_id for r in records] == sorted(c.record.case_id for c in cases)
        assert all(r.tier is not None for r in records)
        first = cases[0]
        assert load_mask(tmp_path / first.record.pred_path).same_as(first.pred)

        truth = json.loads((tmp_path / "truth.json").read_text())
        assert truth["pred_bias"]["Older"] == 1.0
        assert truth["seed"] == 11


SEEDS = [0, 1, 2, 3, 4]


def _reports(cases, relabel=None):
    """Rapports vrai (pred/gold) et observé (pred/silver) d'une cohorte."""
    relabel = relabel or {}
    groups = [relabel.get(str(c.record.age_group), str(c.record.age_group)) for c in cases]
    true = audit_groups(
        [(g, dice(c.pred, c.gold)) for g, c in zip(groups, cases)], label="true"
    )
    observed = audit_groups(
        [(g, dice(c.pred, c.silver)) for g, c in zip(groups, cases)], label="observed"
    )
    return true, observed


def _means(report):
    return {o.group: o.mean_dice for o in report.groups}


@pytest.mark.parametrize("seed", SEEDS)
class TestInjectedBiases:
    """Biais connus retrouvés par l'audit, graine par graine."""

    def test_zero_bias_null(self, seed):
        """Défauts (60 cas par groupe, grille 48³) : parité exacte."""
        for report in _reports(gen_cohort(SynthConfig(seed=seed))):
            assert abs(report.fairness_gap) < 0.005
            assert report.dpd < 0.01
            assert report.dir > 0.98
            assert not report.adverse_impact

    def test_label_bias_monotone_inflation(self, seed):
        true_gaps, observed_gaps = [], []
        for magnitude in (0.5, 1.0, 2.0):
            cfg = SynthConfig(
                n_per_group=10,
                seed=seed,
                label_bias={"Young": magnitude, "Middle": 0.0, "Older": 0.0},
            )
            true, observed = _reports(gen_cohort(cfg))
            true_gaps.append(true.fairness_gap)
            observed_gaps.append(observed.fairness_gap)
            assert observed.worst_group == "Young"
            assert observed.fairness_gap > true.fairness_gap

        assert true_gaps == [0.0, 0.0, 0.0]
        assert observed_gaps[0] < observed_gaps[1] < observed_gaps[2]

    def test_uniform_pred_bias_keeps_inflation(self, seed):
        cfg = SynthConfig(
            n_per_group=10,
            seed=seed,
            label_bias={"Young": 1.0, "Middle": 0.0, "Older": 0.0},
            pred_bias={"Young": 1.0, "Middle": 1.0, "Older": 1.0},
        )
        true, observed = _reports(gen_cohort(cfg))
        assert true.fairness_gap > 0.0
        assert observed.fairness_gap > true.fairness_gap

    def test_young_as_worst_group(self, seed):
        cfg = SynthConfig(
            n_per_group=10,
            seed=seed,
            pred_bias={"Young": 1.5, "Middle": 0.5, "Older": 0.5},
        )
        true, _ = _reports(gen_cohort(cfg))
        means = _means(true)
        assert true.fairness_gap > 0.0
        assert true.worst_group == "Young"
        assert means["Young"] == min(means.values())

    def test_mirrored_groups(self, seed):
        """Échanger les étiquettes Young/Older échange pire et meilleur groupe."""
        cfg = SynthConfig(
            n_per_group=10,
            seed=seed,
            radius_mean={"Young": 7.124, "Older": 6.0},
            radius_std={"Young": 0.463, "Older": 0.5},
            label_bias={"Young": 1.0, "Older": 0.0},
            pred_bias={"Young": 0.0, "Older": 0.5},
        )
        cases = gen_cohort(cfg)
        straight = _reports(cases)
        mirrored = _reports(cases, relabel={"Young": "Older", "Older": "Young"})
        for a, b in zip(straight, mirrored):
            assert b.fairness_gap == pytest.approx(a.fairness_gap)
            assert b.dpd == pytest.approx(a.dpd)
            assert b.dir == pytest.approx(a.dir)
            assert b.adverse_impact == a.adverse_impact
            assert (b.worst_group, b.best_group) == (a.best_group, a.worst_group)


def _two_group_config(n, seed, young=(7.124, 0.463), older=(6.0, 0.5)) -> SynthConfig:
    return SynthConfig(
        n_per_group=n,
        grid=(32, 32, 32),
        radius_mean={"Young": young[0], "Older": older[0]},
        radius_std={"Young": young[1], "Older": older[1]},
        label_bias={"Young": 0.0, "Older": 0.0},
        pred_bias={"Young": 0.0, "Older": 0.0},
        seed=seed,
    )


def _morph(cfg: SynthConfig, root):
    metadata = write_cohort(gen_cohort(cfg), cfg, root / "data")
    return cmd_morph(AuditRunConfig(metadata=metadata, out=root / "morph", jobs=1))


def _volume_test(report):
    (pair,) = [t for t in report.tests if t.metric == "volume_mm3"]
    assert (pair.group_a, pair.group_b) == ("Young", "Older")
    return pair.test


class TestVolumeLaws:
    """Lois de volume par groupe vues à travers la morphométrie."""

    def test_default_laws_ratio_and_welch(self, tmp_path):
        report = _morph(_two_group_config(100, seed=2), tmp_path)
        assert report.volume_ratio_young_older == pytest.approx(1.66, rel=0.10)
        assert _volume_test(report).p < 0.01
        assert (tmp_path / "morph" / "morphometry.json").exists()

    def test_identical_laws_rarely_significant(self, tmp_path):
        """Lois identiques : au plus 10 % des graines significatives à 5 %."""
        seeds = range(50)
        significant = 0
        for seed in seeds:
            cfg = _two_group_config(8, seed, young=(6.0, 0.5), older=(6.0, 0.5))
            report = _morph(cfg, tmp_path / f"s{seed}")
            significant += _volume_test(report).p < 0.05
        assert significant <= 0.10 * len(seeds)
