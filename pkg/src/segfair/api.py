from __future__ import annotations

import dataclasses
import gzip
import itertools
import logging
from pathlib import Path
from typing import Dict, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field

from segfair.cohort.grouping import tier_table
from segfair.cohort.manifest import build_manifest, resolve_design, validate_manifest
from segfair.cohort.records import CaseRecord
from segfair.cohort.sampling import stratified_kfold
from segfair.embedding.cluster import (
    Density,
    density_1d,
    evaluate_embedding,
    evaluate_folds,
)
from segfair.embedding.tsne import TsneParams, tsne
from segfair.exception.exceptions import (
    CohortInputError,
    GeometryError,
    MaskFormatError,
    StatisticsError,
)
from segfair.fairness.fairness import DEFAULT_PAIR, audit_groups, relative_change
from segfair.metrics.morphometry import measure_shape
from segfair.metrics.segmentation import measure_pair
from segfair.model.models import VoxelMask, group_sort_key
from segfair.model.reports import (
    ClusterEval,
    DesignParams,
    FairnessReport,
    FoldClusterSummary,
    SplitManifest,
)
from segfair.parser.config import RunConfig
from segfair.parser.metadata import (
    join_features,
    load_features,
    load_metadata,
    resolve_mask_path,
    write_metadata,
)
from segfair.report import figures
from segfair.report.bundle import (
    AuditBundle,
    ComparisonStats,
    ExcludedCase,
    GroupSummary,
    MorphReport,
    PairTest,
    Provenance,
    provenance,
    write_csv,
    write_json,
)
from segfair.stats.engine import anova_oneway, describe, ols_fit, welch_ttest
from segfair.synth.generator import SynthConfig, gen_cohort, truth_summary, write_cohort
from segfair.volume.geometry import resample_nearest
from segfair.volume.io import decode_mask, detect_format

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MAX_EXCLUDED_FRACTION = 0.20

# Comparaisons d'audit : (masque évalué, référence)
COMPARISONS: Dict[str, Tuple[str, str]] = {
    "true": ("pred", "gold"),
    "observed": ("pred", "silver"),
    "label": ("silver", "gold"),
}
MORPH_METRICS = ("volume_mm3", "sphericity", "elongation")


class AuditRunConfig(BaseModel):
    """Paramètres résolus d'une exécution audit / morph / stratify."""

    model_config = ConfigDict(frozen=True)

    metadata: Path
    out: Path
    gold_dir: Optional[Path] = None
    silver_dir: Optional[Path] = None
    pred_dir: Optional[Path] = None
    threshold: float = Field(default=0.8, gt=0.0, lt=1.0)
    resample: Optional[Tuple[float, float, float]] = (1.0, 1.0, 1.0)
    pair: Tuple[str, str] = DEFAULT_PAIR
    gap_metric: Literal["dice", "hd95"] = "dice"
    seed: int = 0
    jobs: Optional[int] = None
    deterministic: bool = True
    config_hash: str = ""

    @classmethod
    def from_run_config(cls, rc: RunConfig, **paths) -> "AuditRunConfig":
        return cls(
            threshold=rc.get("threshold"),
            resample=None if rc.get("native") else rc.get("resample"),
            pair=rc.get("pair"),
            gap_metric=rc.get("gap_metric"),
            seed=rc.get("seed"),
            jobs=rc.get("jobs"),
            config_hash=rc.config_hash,
            **paths,
        )

    def mask_dirs(self) -> Dict[str, Optional[Path]]:
        return {"gold": self.gold_dir, "silver": self.silver_dir, "pred": self.pred_dir}


# -----------------------------
# Ingestion
def read_mask(path: Path, target: Optional[Tuple[float, float, float]]) -> VoxelMask:
    """Lit un masque (décompression gzip ici, jamais dans le lecteur)."""
    buf = path.read_bytes()
    if path.name.lower().endswith(".gz"):
        buf = gzip.decompress(buf)
    mask = decode_mask(buf, detect_format(path))
    return resample_nearest(mask, target) if target is not None else mask


def _mask_paths(
    record: CaseRecord, cfg: AuditRunConfig, roles: Sequence[str]
) -> Dict[str, Optional[Path]]:
    csv_dir = cfg.metadata.parent
    dirs = cfg.mask_dirs()
    refs = {"gold": record.gold_path, "silver": record.silver_path, "pred": record.pred_path}
    return {r: resolve_mask_path(refs[r], dirs[r], csv_dir) for r in roles}


def _load_masks(
    paths: Dict[str, Optional[Path]], target
) -> Dict[str, Optional[VoxelMask]]:
    masks: Dict[str, Optional[VoxelMask]] = {}
    for role, p in paths.items():
        masks[role] = read_mask(p, target) if p is not None and p.exists() else None
    return masks


def _case_row(
    record: CaseRecord, paths: Dict[str, Optional[Path]], target
) -> Tuple[Optional[dict], Optional[str]]:
    """Une ligne de métriques par cas, ou la raison de l'exclusion."""
    try:
        masks = _load_masks(paths, target)
        if masks.get("pred") is None:
            return None, "masque de prédiction manquant"
        if masks.get("gold") is None and masks.get("silver") is None:
            return None, "aucune référence (gold ni silver)"
        row: dict = {
            "case_id": record.case_id,
            "age": record.age,
            "age_group": str(record.age_group),
            "tier": str(record.tier) if record.tier else "",
        }
        for label, (a, b) in COMPARISONS.items():
            if masks.get(a) is None or masks.get(b) is None:
                continue
            m = measure_pair(masks[a], masks[b])
            row[f"{label}_dice"] = m.dice
            row[f"{label}_hd95"] = m.hd95_mm
            row[f"{label}_flags"] = ";".join(m.flags)
        if masks.get("gold") is not None:
            shape = measure_shape(masks["gold"])
            row.update(
                volume_mm3=shape.volume_mm3,
                sphericity=shape.sphericity,
                elongation=shape.elongation,
            )
        return row, None
    except (MaskFormatError, GeometryError, OSError) as e:
        return None, f"{type(e).__name__}: {e}"


def _parallel(jobs: Optional[int]) -> Parallel:
    return Parallel(n_jobs=jobs if jobs else -1)


def _measure_cohort(
    records: Sequence[CaseRecord], cfg: AuditRunConfig, roles: Sequence[str]
) -> Tuple[pd.DataFrame, List[ExcludedCase]]:
    if not records:
        raise CohortInputError("Cohorte vide")
    results = _parallel(cfg.jobs)(
        delayed(_case_row)(r, _mask_paths(r, cfg, roles), cfg.resample) for r in records
    )
    rows, excluded = [], []
    for record, (row, reason) in zip(records, results):
        if row is None:
            logger.warning("Cas exclu %s: %s", record.case_id, reason)
            excluded.append(ExcludedCase(case_id=record.case_id, reason=reason))
        else:
            rows.append(row)
    if len(excluded) > MAX_EXCLUDED_FRACTION * len(records):
        raise CohortInputError(
            f"{len(excluded)}/{len(records)} cas exclus (> 20 %): "
            + ", ".join(e.case_id for e in excluded[:10])
        )
    frame = pd.DataFrame(rows).sort_values("case_id", kind="stable").reset_index(drop=True)
    return frame, excluded


def _column(frame: pd.DataFrame, name: str) -> pd.DataFrame:
    if name not in frame.columns:
        return frame.iloc[0:0]
    return frame[frame[name].notna()]


def _try_ols(x, y, what: str):
    try:
        return ols_fit(list(x), list(y))
    except StatisticsError as e:
        logger.warning("OLS %s impossible: %s", what, e)
        return None


def _try_anova(frame: pd.DataFrame, col: str):
    groups = [
        list(frame.loc[frame["age_group"] == g, col])
        for g in sorted(frame["age_group"].unique(), key=group_sort_key)
    ]
    try:
        return anova_oneway(groups)
    except StatisticsError as e:
        logger.warning("ANOVA %s impossible: %s", col, e)
        return None


# -----------------------------
# Commandes
def cmd_audit(cfg: AuditRunConfig) -> AuditBundle:
    """Dice/HD95 par cas pour chaque comparaison disponible, rapports d'équité,
    OLS (Dice~Âge, HD95~Âge), ANOVA et nuages de points."""
    records = load_metadata(cfg.metadata)
    frame, excluded = _measure_cohort(records, cfg, ("gold", "silver", "pred"))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    files = [write_csv(frame, out / "metrics.csv").name]

    reports: Dict[str, FairnessReport] = {}
    stats: Dict[str, ComparisonStats] = {}
    for label in COMPARISONS:
        dice_col, hd_col = f"{label}_dice", f"{label}_hd95"
        sub = _column(frame, dice_col)
        if sub.empty:
            continue
        hd = _column(sub, hd_col)
        gap_values = list(zip(hd["age_group"], hd[hd_col])) if cfg.gap_metric == "hd95" else None

        ols_dice = _try_ols(sub["age"], sub[dice_col], f"{label} Dice")
        ols_hd = _try_ols(hd["age"], hd[hd_col], f"{label} HD95") if len(hd) else None
        report = audit_groups(
            list(zip(sub["age_group"], sub[dice_col])),
            cfg.threshold,
            cfg.pair,
            label=label,
            gap_values=gap_values,
            gap_metric=cfg.gap_metric,
            ols=ols_dice,
        )
        reports[label] = report
        stats[label] = ComparisonStats(
            label=label,
            ols_dice=ols_dice,
            ols_hd95=ols_hd,
            anova_dice=_try_anova(sub, dice_col),
            anova_hd95=_try_anova(hd, hd_col) if len(hd) else None,
        )
        files.append(write_json(report, out / f"fairness_{label}.json").name)
        groups = pd.DataFrame([g.model_dump() for g in report.groups])
        files.append(write_csv(groups, out / f"groups_{label}.csv").name)

        if ols_dice is not None:
            name = f"ols_{label}_dice.svg"
            figures.ols_scatter(
                sub["age"], sub[dice_col], sub["age_group"], ols_dice, out / name,
                ylabel="Dice", deterministic=cfg.deterministic,
            )
            files.append(name)
        if ols_hd is not None:
            name = f"ols_{label}_hd95.svg"
            figures.ols_scatter(
                hd["age"], hd[hd_col], hd["age_group"], ols_hd, out / name,
                ylabel="HD95 (mm)", deterministic=cfg.deterministic,
            )
            files.append(name)

    comparisons = []
    if "true" in reports and "observed" in reports:
        comparisons.append(
            relative_change(
                reports["observed"].fairness_gap,
                reports["true"].fairness_gap,
                label="observed_vs_true",
            )
        )

    bundle = AuditBundle(
        provenance=provenance(cfg.seed, cfg.config_hash, {"metadata": cfg.metadata}),
        n_cases=len(frame),
        excluded=excluded,
        reports=reports,
        stats=stats,
        comparisons=comparisons,
        files=sorted(files + ["bundle.json"]),
    )
    write_json(bundle, out / "bundle.json")
    return bundle


def cmd_morph(cfg: AuditRunConfig) -> MorphReport:
    """Volume, sphéricité, élongation des masques gold par groupe, tests de
    Welch pour toutes les paires et boîtes à moustaches."""
    records = load_metadata(cfg.metadata)
    results = _parallel(cfg.jobs)(
        delayed(_shape_row)(r, _mask_paths(r, cfg, ("gold",)), cfg.resample)
        for r in records
    )
    rows, excluded = [], []
    for record, (row, reason) in zip(records, results):
        if row is None:
            logger.warning("Cas exclu %s: %s", record.case_id, reason)
            excluded.append(record.case_id)
        else:
            rows.append(row)
    if not records or len(excluded) > MAX_EXCLUDED_FRACTION * len(records):
        raise CohortInputError(f"{len(excluded)}/{len(records)} cas exclus (> 20 %)")

    frame = pd.DataFrame(rows).sort_values("case_id", kind="stable").reset_index(drop=True)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    files = [write_csv(frame, out / "morphometry.csv").name]

    order = sorted(frame["age_group"].unique(), key=group_sort_key)
    flags: List[str] = []
    if len(order) < 2:
        logger.warning("Un seul groupe (%s): pas de test", ", ".join(order))
        flags.append("single_group")

    summaries: Dict[str, List[GroupSummary]] = {}
    tests: List[PairTest] = []
    for metric in MORPH_METRICS:
        values = {
            g: frame.loc[(frame["age_group"] == g) & frame[metric].notna(), metric].tolist()
            for g in order
        }
        values = {g: v for g, v in values.items() if v}
        summaries[metric] = [
            GroupSummary(group=g, **dataclasses.asdict(describe(vals)))
            for g, vals in values.items()
        ]
        for a, b in itertools.combinations(list(values), 2):
            if len(values[a]) >= 2 and len(values[b]) >= 2:
                tests.append(
                    PairTest(metric=metric, group_a=a, group_b=b, test=welch_ttest(values[a], values[b]))
                )
        if values:
            name = f"morph_{metric}.svg"
            figures.box_plots(values, out / name, metric, deterministic=cfg.deterministic)
            files.append(name)

    volumes = {s.group: s.mean for s in summaries.get("volume_mm3", [])}
    ratio = None
    if volumes.get("Young") and volumes.get("Older"):
        ratio = volumes["Young"] / volumes["Older"]

    report = MorphReport(
        provenance=provenance(cfg.seed, cfg.config_hash, {"metadata": cfg.metadata}),
        summaries=summaries,
        tests=tests,
        volume_ratio_young_older=ratio,
        flags=flags,
        files=sorted(files + ["morphometry.json"]),
    )
    write_json(report, out / "morphometry.json")
    return report


def _shape_row(record: CaseRecord, paths, target) -> Tuple[Optional[dict], Optional[str]]:
    try:
        gold = _load_masks(paths, target)["gold"]
        if gold is None:
            return None, "masque gold manquant"
        shape = measure_shape(gold)
    except (MaskFormatError, GeometryError, OSError) as e:
        return None, f"{type(e).__name__}: {e}"
    return {
        "case_id": record.case_id,
        "age": record.age,
        "age_group": str(record.age_group),
        "volume_mm3": shape.volume_mm3,
        "surface_area_mm2": shape.surface_area_mm2,
        "sphericity": shape.sphericity,
        "elongation": shape.elongation,
    }, None


def _silver_row(record: CaseRecord, paths, target) -> Tuple[Optional[tuple], Optional[str]]:
    try:
        masks = _load_masks(paths, target)
        if masks["gold"] is None or masks["silver"] is None:
            return None, "masques gold/silver manquants"
        m = measure_pair(masks["silver"], masks["gold"])
    except (MaskFormatError, GeometryError, OSError) as e:
        return None, f"{type(e).__name__}: {e}"
    return (m.dice, m.hd95_mm), None


def ensure_tiers(records: Sequence[CaseRecord], cfg: AuditRunConfig) -> List[CaseRecord]:
    """Calcule Dice/HD95 silver vs gold (donc tier et difficulté) quand le CSV
    ne les fournit pas."""
    todo = [r for r in records if r.silver_dice is None]
    if not todo:
        return list(records)
    results = _parallel(cfg.jobs)(
        delayed(_silver_row)(r, _mask_paths(r, cfg, ("gold", "silver")), cfg.resample)
        for r in todo
    )
    computed: Dict[str, CaseRecord] = {}
    failures = []
    for record, (metrics, reason) in zip(todo, results):
        if metrics is None:
            failures.append(f"{record.case_id} ({reason})")
        else:
            computed[record.case_id] = record.with_silver_metrics(*metrics)
    if failures:
        raise CohortInputError("Tier incalculable: " + ", ".join(failures[:10]))
    return [computed.get(r.case_id, r) for r in records]


def cmd_stratify(cfg: AuditRunConfig) -> Tuple[List[CaseRecord], pd.DataFrame]:
    """Tiers et difficulté de chaque cas, table groupe × tier."""
    records = ensure_tiers(load_metadata(cfg.metadata), cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_metadata(records, out / "metadata_stratified.csv")
    table = tier_table(records)
    write_csv(table.reset_index(), out / "tier_table.csv")
    return records, table


def cmd_split(
    design: str,
    cfg: AuditRunConfig,
    params: Optional[DesignParams] = None,
) -> SplitManifest:
    records = load_metadata(cfg.metadata)
    if resolve_design(design).needs_tiers:
        records = ensure_tiers(records, cfg)
    manifest = build_manifest(design, records, cfg.seed, params)
    validate_manifest(manifest, records)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(manifest, out / f"manifest_{manifest.design}.json")
    return manifest


class EmbedReport(BaseModel):
    schema_version: str = "1.0"
    provenance: Provenance
    n: int
    perplexity: float
    kl_initial: float
    kl_final: float
    evaluation: ClusterEval
    folds: Optional[FoldClusterSummary] = None
    files: List[str] = Field(default_factory=list)


def _density_frame(densities: Mapping[str, Density]) -> pd.DataFrame:
    """Classes d'histogramme par groupe : bornes et densité."""
    return pd.DataFrame(
        [
            {"age_group": g, "left": lo, "right": hi, "density": v}
            for g, d in densities.items()
            for lo, hi, v in zip(d.edges[:-1], d.edges[1:], d.density)
        ],
        columns=["age_group", "left", "right", "density"],
    )


def _kde_frame(densities: Mapping[str, Density]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {"age_group": g, "x": x, "density": v}
            for g, d in densities.items()
            if d.kde is not None
            for x, v in zip(d.kde_grid, d.kde)
        ],
        columns=["age_group", "x", "density"],
    )


def cmd_embed(
    features: PathLike,
    cfg: AuditRunConfig,
    params: Optional[TsneParams] = None,
    folds: bool = False,
    k: int = 5,
    bins: int = 30,
) -> EmbedReport:
    """t-SNE des caractéristiques, silhouette vs âge, pureté/ARI/NMI vs k-means."""
    params = params or TsneParams(seed=cfg.seed)
    ids, values = load_features(features)
    records, X = join_features(ids, values, load_metadata(cfg.metadata))
    labels = np.array([str(r.age_group) for r in records])

    result = tsne(X, params)
    Y = result.embedding
    evaluation = evaluate_embedding(Y, labels, params.seed)

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        {
            "case_id": [r.case_id for r in records],
            "t1": Y[:, 0],
            "t2": Y[:, 1],
            "age_group": labels,
        }
    )
    files = [write_csv(frame, out / "embedding.csv").name]
    figures.embedding_scatter(Y, labels, out / "embedding.svg", cfg.deterministic)
    order = sorted(set(labels.tolist()), key=group_sort_key)
    first_dim = {g: Y[labels == g, 0] for g in order}
    densities = {g: density_1d(v, bins) for g, v in first_dim.items()}
    files.append(write_csv(_density_frame(densities), out / "density.csv").name)
    files.append(write_csv(_kde_frame(densities), out / "density_kde.csv").name)
    figures.density_plot(densities, out / "density.svg", cfg.deterministic)
    files += ["embedding.svg", "density.svg"]

    fold_summary = None
    if folds:
        assignment = stratified_kfold(records, k, params.seed)
        fold_summary = evaluate_folds(
            X, labels, [assignment[r.case_id] for r in records], params
        )
        files.append(write_json(fold_summary, out / "folds.json").name)

    report = EmbedReport(
        provenance=provenance(
            params.seed, cfg.config_hash, {"features": features, "metadata": cfg.metadata}
        ),
        n=len(records),
        perplexity=result.perplexity,
        kl_initial=result.kl_trace[0][1],
        kl_final=result.kl_trace[-1][1],
        evaluation=evaluation,
        folds=fold_summary,
        files=sorted(files + ["cluster_eval.json"]),
    )
    write_json(report, out / "cluster_eval.json")
    return report


def synth_config_from_run(rc: RunConfig) -> SynthConfig:
    return SynthConfig(
        n_per_group=rc.get("synth.n_per_group"),
        grid=rc.get("synth.grid"),
        spacing=rc.get("synth.spacing"),
        radius_mean=rc.get("synth.radius_mean"),
        radius_std=rc.get("synth.radius_std"),
        label_bias=rc.get("synth.label_bias"),
        pred_bias=rc.get("synth.pred_bias"),
        flip_rate=rc.get("synth.flip_rate"),
        seed=rc.get("seed"),
    )


def cmd_synth(cfg: SynthConfig, out: PathLike) -> Dict[str, object]:
    """Écrit une cohorte synthétique complète ; retourne le résumé des biais."""
    cases = gen_cohort(cfg)
    metadata = write_cohort(cases, cfg, out)
    summary = truth_summary(cfg)
    summary["metadata"] = str(metadata)
    summary["n_cases"] = len(cases)
    return summary


def cmd_compare(
    report_paths: Sequence[PathLike], out: PathLike, reference: Optional[str] = None
) -> pd.DataFrame:
    """Tableau multi-expériences : moyennes par groupe, écart, p ANOVA, DPD,
    DIR et variation relative de l'écart par rapport à la référence."""
    if not report_paths:
        raise CohortInputError("Aucun rapport à comparer")
    loaded: List[Tuple[str, FairnessReport]] = []
    for p in report_paths:
        try:
            report = FairnessReport.model_validate_json(Path(p).read_text(encoding="utf-8"))
        except ValueError as e:
            raise CohortInputError(f"Rapport invalide {p}: {e}") from e
        loaded.append((Path(p).stem, report))
    labels = [r.label for _, r in loaded]
    if len(set(labels)) != len(labels):
        labels = [stem for stem, _ in loaded]

    ref_label = reference or labels[0]
    if ref_label not in labels:
        raise CohortInputError(f"Référence inconnue: {ref_label} (disponibles: {labels})")
    ref = loaded[labels.index(ref_label)][1]

    rows = []
    for label, (_, report) in zip(labels, loaded):
        row: Dict[str, object] = {"label": label}
        for g in report.groups:
            row[f"{g.group}_mean"] = g.mean_dice
            row[f"{g.group}_std"] = g.std_dice
        if report.overall is not None:
            row["Average_mean"] = report.overall.mean_dice
            row["Average_std"] = report.overall.std_dice
        row["fairness_gap"] = report.fairness_gap
        row["anova_p"] = report.anova.p if report.anova else None
        row["dpd"] = report.dpd
        row["dir"] = report.dir
        row["adverse_impact"] = report.adverse_impact
        row["relative_change"] = relative_change(
            report.fairness_gap, ref.fairness_gap, label=label
        ).relative_change
        rows.append(row)
    table = pd.DataFrame(rows)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(table, out / "compare.csv")
    return table
