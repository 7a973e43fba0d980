from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from pydantic import ValidationError

from segfair import __version__
from segfair.api import (
    AuditRunConfig,
    cmd_audit,
    cmd_compare,
    cmd_embed,
    cmd_morph,
    cmd_split,
    cmd_stratify,
    cmd_synth,
    synth_config_from_run,
)
from segfair.cohort.manifest import available_designs
from segfair.embedding.tsne import TsneParams
from segfair.exception.exceptions import SegFairError
from segfair.model.reports import DesignParams
from segfair.parser.config import RunConfig, load_config

logger = logging.getLogger("segfair")

LOG_ENV = "SEGFAIR_LOG"
LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"

# option argparse -> clé de configuration
_OVERRIDES = {
    "threshold": "threshold",
    "pair": "pair",
    "resample": "resample",
    "native": "native",
    "gap_metric": "gap_metric",
    "seed": "seed",
    "jobs": "jobs",
    "design": "design",
    "k": "k",
    "n_per_group": "n_per_group",
    "n_easy": "n_easy",
    "n_hard": "n_hard",
    "perplexity": "perplexity",
    "learning_rate": "learning_rate",
    "iters": "iters",
    "bins": "bins",
    "folds": "folds",
}


def setup_logging(verbose: bool = False) -> None:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    if verbose:
        level = "DEBUG"
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR"):
        level = "WARNING"
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def _run_config(args: argparse.Namespace) -> RunConfig:
    overrides: Dict[str, Any] = {
        key: getattr(args, attr)
        for attr, key in _OVERRIDES.items()
        if getattr(args, attr, None) is not None
    }
    return load_config(args.config, overrides)


def _audit_config(args: argparse.Namespace, rc: RunConfig) -> AuditRunConfig:
    return AuditRunConfig.from_run_config(
        rc,
        metadata=Path(args.metadata),
        out=Path(args.out),
        gold_dir=args.gold_dir,
        silver_dir=args.silver_dir,
        pred_dir=args.pred_dir,
        deterministic=args.deterministic,
    )


# -----------------------------
# Sous-commandes
def _audit(args: argparse.Namespace) -> int:
    bundle = cmd_audit(_audit_config(args, _run_config(args)))
    print(f"{bundle.n_cases} cas audités, {len(bundle.excluded)} exclus")
    for label, report in bundle.reports.items():
        print(
            f"  {label:<9} gap={report.fairness_gap:.4f} DPD={report.dpd:.4f} "
            f"DIR={report.dir:.4f} pire={report.worst_group}"
        )
    for comp in bundle.comparisons:
        change = "indéfini" if comp.undefined else f"{comp.relative_change:+.3f}"
        print(f"  {comp.label}: {change}")
    return 0


def _morph(args: argparse.Namespace) -> int:
    report = cmd_morph(_audit_config(args, _run_config(args)))
    if report.volume_ratio_young_older is not None:
        print(f"Volume Young/Older: {report.volume_ratio_young_older:.3f}")
    for test in report.tests:
        print(f"  {test.metric} {test.group_a}-{test.group_b}: p={test.test.p:.4g}")
    return 0


def _stratify(args: argparse.Namespace) -> int:
    _, table = cmd_stratify(_audit_config(args, _run_config(args)))
    print(table.to_string())
    return 0


def _split(args: argparse.Namespace) -> int:
    rc = _run_config(args)
    params = DesignParams(
        n_per_group=rc.get("n_per_group"),
        n_easy=rc.get("n_easy"),
        n_hard=rc.get("n_hard"),
        k=rc.get("k"),
        seed=rc.get("seed"),
    )
    manifest = cmd_split(rc.get("design"), _audit_config(args, rc), params)
    sources = manifest.sources()
    silver = sum(1 for s in sources.values() if s == "silver")
    print(
        f"{manifest.design_name}: {len(sources)} cas, {silver} silver, "
        f"{manifest.k} plis"
    )
    return 0


def _embed(args: argparse.Namespace) -> int:
    rc = _run_config(args)
    params = TsneParams(
        perplexity=rc.get("perplexity"),
        learning_rate=rc.get("learning_rate"),
        iters=rc.get("iters"),
        early_exaggeration=rc.get("early_exaggeration"),
        exaggeration_iters=rc.get("exaggeration_iters"),
        seed=rc.get("seed"),
    )
    report = cmd_embed(
        args.features,
        _audit_config(args, rc),
        params,
        folds=rc.get("folds"),
        k=rc.get("k"),
        bins=rc.get("bins"),
    )
    ev = report.evaluation
    print(
        f"n={report.n} perplexité={report.perplexity:g} KL={report.kl_final:.4f} "
        f"silhouette={ev.silhouette:.3f} ARI={ev.ari:.3f} NMI={ev.nmi:.3f}"
    )
    return 0


def _synth(args: argparse.Namespace) -> int:
    rc = _run_config(args)
    if args.n_per_group is not None:
        rc = RunConfig({**rc.values, "synth.n_per_group": args.n_per_group})
    summary = cmd_synth(synth_config_from_run(rc), args.out)
    print(f"{summary['n_cases']} cas écrits: {summary['metadata']}")
    print(f"  biais silver: {summary['label_bias']}")
    print(f"  biais pred:   {summary['pred_bias']}")
    return 0


def _compare(args: argparse.Namespace) -> int:
    table = cmd_compare(args.reports, args.out, args.reference)
    print(table.to_string(index=False))
    return 0


# -----------------------------
# Analyse des arguments
def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="Fichier clé=valeur")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="Répertoire de sortie")
    p.add_argument("--verbose", action="store_true")


def _cohort(p: argparse.ArgumentParser) -> None:
    p.add_argument("--metadata", required=True, help="CSV des métadonnées")
    p.add_argument("--gold-dir", type=Path)
    p.add_argument("--silver-dir", type=Path)
    p.add_argument("--pred-dir", type=Path)
    p.add_argument("--resample", help="Espacement cible (mm), '1' ou '1,1,1'")
    p.add_argument("--native", action="store_true", default=None)
    p.add_argument("--jobs", type=int)
    p.add_argument(
        "--deterministic",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="SVG sans horodatage",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segfair", description="Audit d'équité démographique en segmentation"
    )
    parser.add_argument("--version", action="version", version=f"segfair {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("audit", help="Métriques par cas et rapports d'équité")
    _common(p)
    _cohort(p)
    p.add_argument("--threshold")
    p.add_argument("--pair", help="ex. Young/Older")
    p.add_argument("--gap-metric", choices=("dice", "hd95"))
    p.set_defaults(func=_audit)

    p = sub.add_parser("morph", help="Morphométrie des masques gold par groupe")
    _common(p)
    _cohort(p)
    p.set_defaults(func=_morph)

    p = sub.add_parser("stratify", help="Tiers de qualité silver et difficulté")
    _common(p)
    _cohort(p)
    p.set_defaults(func=_stratify)

    p = sub.add_parser("split", help="Manifeste d'un plan d'expérience")
    _common(p)
    _cohort(p)
    p.add_argument("--design", choices=available_designs())
    p.add_argument("--k", type=int)
    p.add_argument("--n-per-group", type=int)
    p.add_argument("--n-easy", type=int)
    p.add_argument("--n-hard", type=int)
    p.set_defaults(func=_split)

    p = sub.add_parser("embed", help="Plongement t-SNE et évaluation des clusters")
    _common(p)
    _cohort(p)
    p.add_argument("--features", required=True, help="CSV case_id + caractéristiques")
    p.add_argument("--perplexity", type=float)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--bins", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--folds", action="store_true", default=None)
    p.set_defaults(func=_embed)

    p = sub.add_parser("synth", help="Cohorte synthétique à biais connus")
    _common(p)
    p.add_argument("--n-per-group", type=int)
    p.set_defaults(func=_synth)

    p = sub.add_parser("compare", help="Tableau comparatif de rapports d'équité")
    p.add_argument("reports", nargs="+", help="Fichiers fairness_<label>.json")
    p.add_argument("--reference", help="Libellé de référence (défaut: premier)")
    p.add_argument("--out", required=True)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=_compare)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        return args.func(args)
    except SegFairError as e:
        logger.error("%s", e)
        print(f"erreur: {e}", file=sys.stderr)
        return e.exit_code
    except ValidationError as e:
        print(f"erreur de configuration: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"erreur d'entrée/sortie: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
