"""
Tests de bout en bout de la ligne de commande sur une petite cohorte
synthétique : synth, stratify, split, audit, morph, embed, compare.
"""

import gzip
import json

import numpy as np
import pandas as pd
import pytest

from segfair.api import read_mask
from segfair.cli import main
from segfair.model.models import VoxelMask
from segfair.volume.io import save_mask

SYNTH_CONFIG = "synth.grid=32\nsynth.label_bias=Young:1\nsynth.pred_bias=Older:0.5\n"


@pytest.fixture(scope="module")
def cohort(tmp_path_factory):
    """18 cas (6 par groupe) : silver Young érodé, prédictions Older dégradées."""
    root = tmp_path_factory.mktemp("cohort")
    cfg = root / "synth.cfg"
    cfg.write_text(SYNTH_CONFIG)
    assert main(["synth", "--config", str(cfg), "--n-per-group", "6", "--seed", "4",
                 "--out", str(root / "data")]) == 0
    return root / "data" / "metadata.csv"


def _cohort_args(metadata, out):
    return ["--metadata", str(metadata), "--out", str(out), "--jobs", "1"]


def _write_features(metadata, path):
    ids = pd.read_csv(metadata)["case_id"]
    X = np.random.default_rng(0).normal(size=(len(ids), 4))
    frame = pd.DataFrame(X, columns=[f"f{i}" for i in range(4)])
    frame.insert(0, "case_id", ids)
    frame.to_csv(path, index=False)
    return path


def _tree(root):
    """Contenu de chaque fichier produit, par chemin relatif."""
    files = sorted(p for p in root.rglob("*") if p.is_file())
    return {str(p.relative_to(root)): p.read_bytes() for p in files}


class TestSynth:
    def test_cohort_written(self, cohort):
        frame = pd.read_csv(cohort)
        assert len(frame) == 18
        assert frame["case_id"].is_unique
        truth = json.loads((cohort.parent / "truth.json").read_text())
        assert truth["label_bias"]["Young"] == 1.0
        assert truth["pred_bias"]["Older"] == 0.5


class TestAudit:
    """Rapports d'équité pour les trois comparaisons."""

    def test_bundle(self, cohort, tmp_path, capsys):
        assert main(["audit", *_cohort_args(cohort, tmp_path)]) == 0
        assert "18 cas audités" in capsys.readouterr().out

        bundle = json.loads((tmp_path / "bundle.json").read_text())
        assert bundle["n_cases"] == 18
        assert set(bundle["reports"]) == {"true", "observed", "label"}
        assert bundle["files"] == sorted(bundle["files"])
        for name in (
            "metrics.csv",
            "fairness_true.json",
            "groups_observed.csv",
            "ols_true_dice.svg",
            "ols_label_hd95.svg",
            "bundle.json",
        ):
            assert name in bundle["files"]
            assert (tmp_path / name).exists()
        assert bundle["comparisons"][0]["label"] == "observed_vs_true"
        assert len(bundle["provenance"]["config_hash"]) == 64

    def test_injected_biases_visible(self, cohort, tmp_path):
        main(["audit", *_cohort_args(cohort, tmp_path)])
        true = json.loads((tmp_path / "fairness_true.json").read_text())
        label = json.loads((tmp_path / "fairness_label.json").read_text())
        means = {g["group"]: g["mean_dice"] for g in true["groups"]}
        assert means["Young"] == 1.0
        assert means["Older"] < 1.0
        assert true["worst_group"] == "Older"
        assert label["worst_group"] == "Young"

    def test_native_spacing_matches_1mm_resampling(self, cohort, tmp_path):
        """Les masques synthétiques sont déjà à 1 mm isotrope."""
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["audit", *_cohort_args(cohort, a)]) == 0
        assert main(["audit", *_cohort_args(cohort, b), "--native"]) == 0
        assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()

    def test_hd95_gap_metric(self, cohort, tmp_path):
        assert main(["audit", *_cohort_args(cohort, tmp_path), "--gap-metric", "hd95"]) == 0
        report = json.loads((tmp_path / "fairness_true.json").read_text())
        assert report["metric"] == "hd95"

    def test_bad_csv_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("case_id,age\nA,30\n")
        assert main(["audit", *_cohort_args(bad, tmp_path / "out")]) == 2
        assert "Colonnes manquantes" in capsys.readouterr().err

    def test_missing_masks_excluded_then_rejected(self, cohort, tmp_path):
        frame = pd.read_csv(cohort, dtype=str, keep_default_na=False)
        frame.loc[:4, "pred_path"] = "pred/absent.sfm"
        meta = cohort.parent / "metadata_missing.csv"
        frame.to_csv(meta, index=False)
        assert main(["audit", *_cohort_args(meta, tmp_path)]) == 2


RERUN_ARGS = {
    "audit": [],
    "stratify": [],
    "split": ["--design", "baseline"],
    "morph": [],
    "embed": ["--iters", "300", "--perplexity", "2", "--folds", "--k", "2"],
}


class TestReruns:
    """Deux exécutions de même graine produisent les mêmes octets."""

    @pytest.mark.parametrize("command", sorted(RERUN_ARGS))
    def test_cohort_command(self, cohort, tmp_path, command):
        extra = list(RERUN_ARGS[command])
        if command == "embed":
            extra += ["--features", str(_write_features(cohort, tmp_path / "features.csv"))]
        a, b = tmp_path / "a", tmp_path / "b"
        assert main([command, *_cohort_args(cohort, a), *extra]) == 0
        assert main([command, *_cohort_args(cohort, b), "--jobs", "2", *extra]) == 0

        first, second = _tree(a), _tree(b)
        assert first
        assert sorted(first) == sorted(second)
        for name in first:
            assert first[name] == second[name], name

    def test_synth(self, tmp_path):
        cfg = tmp_path / "synth.cfg"
        cfg.write_text(SYNTH_CONFIG)
        trees = []
        for name in ("a", "b"):
            out = tmp_path / name
            args = ["synth", "--config", str(cfg), "--n-per-group", "2", "--seed", "9",
                    "--out", str(out)]
            assert main(args) == 0
            trees.append(_tree(out))
        assert "metadata.csv" in trees[0]
        assert "truth.json" in trees[0]
        assert any(name.startswith("pred") for name in trees[0])
        assert trees[0] == trees[1]

    def test_split_folds_stratified_by_group(self, cohort, tmp_path):
        """5 plis sur 6 cas par groupe : 1 ou 2 cas de validation par groupe et pli."""
        args = ["split", *_cohort_args(cohort, tmp_path), "--design", "baseline", "--k", "5"]
        assert main(args) == 0
        manifest = json.loads((tmp_path / "manifest_baseline.json").read_text())
        groups = pd.read_csv(cohort).set_index("case_id")["age_group"].to_dict()

        val = [e for e in manifest["entries"] if e["role"] == "val"]
        assert sorted(e["case_id"] for e in val) == sorted(groups)
        counts = pd.crosstab(
            pd.Series([groups[e["case_id"]] for e in val], name="group"),
            pd.Series([e["fold"] for e in val], name="fold"),
        )
        assert counts.shape == (3, 5)
        for _, row in counts.iterrows():
            assert row.max() - row.min() <= 1
            assert row.sum() == 6


class TestStratifyAndSplit:
    def test_stratify(self, cohort, tmp_path):
        assert main(["stratify", *_cohort_args(cohort, tmp_path)]) == 0
        table = pd.read_csv(tmp_path / "tier_table.csv")
        assert list(table["age_group"]) == ["Young", "Middle", "Older"]
        assert (table["Total"] == 6).all()
        assert (tmp_path / "metadata_stratified.csv").exists()

    @pytest.mark.parametrize("design", ["baseline", "swap-older", "biased-input"])
    def test_split(self, cohort, tmp_path, design):
        args = ["split", *_cohort_args(cohort, tmp_path), "--design", design, "--k", "3"]
        assert main(args) == 0
        manifest = json.loads((tmp_path / f"manifest_{design}.json").read_text())
        assert manifest["k"] == 3
        assert len(manifest["entries"]) == 18 * 3

    def test_diff_bal_infeasible_exit_code(self, cohort, tmp_path, capsys):
        args = ["split", *_cohort_args(cohort, tmp_path), "--design", "diff-bal"]
        assert main(args) == 3
        assert "Strates insuffisantes" in capsys.readouterr().err

    def test_unknown_design_rejected_by_parser(self, cohort, tmp_path):
        with pytest.raises(SystemExit):
            main(["split", *_cohort_args(cohort, tmp_path), "--design", "nope"])


class TestMorph:
    def test_morphometry(self, cohort, tmp_path):
        assert main(["morph", *_cohort_args(cohort, tmp_path)]) == 0
        report = json.loads((tmp_path / "morphometry.json").read_text())
        assert report["volume_ratio_young_older"] > 1.0
        assert {s["group"] for s in report["summaries"]["volume_mm3"]} == {
            "Young",
            "Middle",
            "Older",
        }
        # 3 paires × 3 métriques
        assert len(report["tests"]) == 9
        assert (tmp_path / "morph_sphericity.svg").exists()


class TestEmbed:
    @pytest.fixture
    def features(self, cohort, tmp_path):
        return _write_features(cohort, tmp_path / "features.csv")

    def test_embed(self, cohort, features, tmp_path):
        out = tmp_path / "emb"
        args = ["embed", *_cohort_args(cohort, out), "--features", str(features), "--iters", "300"]
        assert main(args) == 0
        report = json.loads((out / "cluster_eval.json").read_text())
        assert report["n"] == 18
        assert report["perplexity"] == 5.0
        emb = pd.read_csv(out / "embedding.csv")
        assert list(emb.columns) == ["case_id", "t1", "t2", "age_group"]
        assert (out / "density.svg").exists()

    def test_density_tables(self, cohort, features, tmp_path):
        """Histogramme et KDE tracés dans density.svg, exportés en CSV."""
        out = tmp_path / "emb"
        args = ["embed", *_cohort_args(cohort, out), "--features", str(features),
                "--iters", "300", "--bins", "4"]
        assert main(args) == 0
        hist = pd.read_csv(out / "density.csv")
        kde = pd.read_csv(out / "density_kde.csv")
        assert list(hist.columns) == ["age_group", "left", "right", "density"]
        assert list(kde.columns) == ["age_group", "x", "density"]
        assert hist.groupby("age_group").size().to_dict() == {"Middle": 4, "Older": 4, "Young": 4}
        for _, rows in hist.groupby("age_group"):
            area = ((rows["right"] - rows["left"]) * rows["density"]).sum()
            assert area == pytest.approx(1.0, abs=1e-6)
        assert set(kde["age_group"]) == {"Young", "Middle", "Older"}
        assert (kde["density"] > 0).all()
        files = json.loads((out / "cluster_eval.json").read_text())["files"]
        assert {"density.csv", "density_kde.csv", "density.svg"} <= set(files)

    def test_folds(self, cohort, features, tmp_path):
        """k=2 : 9 cas de validation par pli, 3 par groupe."""
        out = tmp_path / "emb"
        args = ["embed", *_cohort_args(cohort, out), "--features", str(features),
                "--iters", "300", "--perplexity", "2", "--folds", "--k", "2"]
        assert main(args) == 0
        summary = json.loads((out / "folds.json").read_text())
        assert len(summary["folds"]) == 2
        assert 0.0 <= summary["mean"]["purity"] <= 1.0
        assert "folds.json" in json.loads((out / "cluster_eval.json").read_text())["files"]

    def test_infeasible_perplexity(self, cohort, features, tmp_path):
        args = ["embed", *_cohort_args(cohort, tmp_path), "--features", str(features),
                "--perplexity", "30"]
        assert main(args) == 2

    def test_orphan_features(self, cohort, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("case_id,f0\nNOPE,1.0\n")
        args = ["embed", *_cohort_args(cohort, tmp_path), "--features", str(path)]
        assert main(args) == 2


class TestCompare:
    def test_compare_table(self, cohort, tmp_path):
        audit = tmp_path / "audit"
        main(["audit", *_cohort_args(cohort, audit)])
        reports = [str(audit / f"fairness_{label}.json") for label in ("true", "observed")]
        assert main(["compare", *reports, "--out", str(tmp_path / "cmp")]) == 0

        table = pd.read_csv(tmp_path / "cmp" / "compare.csv")
        assert list(table["label"]) == ["true", "observed"]
        assert table.loc[0, "relative_change"] == 0.0
        for col in ("Young_mean", "Average_mean", "fairness_gap", "dpd", "dir"):
            assert col in table.columns

    def test_unknown_reference(self, cohort, tmp_path):
        audit = tmp_path / "audit"
        main(["audit", *_cohort_args(cohort, audit)])
        report = str(audit / "fairness_true.json")
        args = ["compare", report, "--reference", "nope", "--out", str(tmp_path / "cmp")]
        assert main(args) == 2


class TestGzipMasks:
    def test_gz_decompressed_before_decoding(self, tmp_path):
        m = VoxelMask.from_coords((4, 4, 4), (1.0, 1.0, 2.0), [(1, 1, 1), (2, 1, 1)])
        plain = tmp_path / "m.sfm"
        save_mask(m, plain)
        packed = tmp_path / "m.sfm.gz"
        packed.write_bytes(gzip.compress(plain.read_bytes()))

        assert read_mask(packed, None).same_as(m)
        resampled = read_mask(packed, (1.0, 1.0, 1.0))
        assert resampled.dims == (4, 4, 8)


class TestParser:
    def test_version(self, capsys):
        with pytest.raises(SystemExit) as err:
            main(["--version"])
        assert err.value.code == 0
        assert "segfair" in capsys.readouterr().out
