import dataclasses
from typing import Optional


@dataclasses.dataclass
class ConfigKey:
    identifier: str
    kind: str  # int | float | bool | str | triple | dims | pair | group_map
    default: Optional[str]
    label: str


CONFIG_SPEC: list[ConfigKey] = [
    # Audit
    ConfigKey("threshold", "float", "0.8", "Seuil du résultat bénéfique (Dice > seuil)"),
    ConfigKey("pair", "pair", "Young/Older", "Paire de groupes comparée (DPD, DIR)"),
    ConfigKey("resample", "triple", "1", "Espacement isotrope cible (mm)"),
    ConfigKey("native", "bool", "false", "Comparer à l'espacement natif"),
    ConfigKey("gap_metric", "str", "dice", "Métrique de l'écart d'équité (dice|hd95)"),
    ConfigKey("seed", "int", "0", "Graine unique de l'exécution"),
    ConfigKey("jobs", "int", None, "Taille du pool de workers (défaut: cœurs logiques)"),
    # Plans d'expérience
    ConfigKey("design", "str", "baseline", "Plan d'expérience"),
    ConfigKey("k", "int", "5", "Nombre de plis"),
    ConfigKey("n_per_group", "int", None, "Effectif par groupe (défaut: plus petit)"),
    ConfigKey("n_easy", "int", "143", "Cas faciles par groupe (diff-bal)"),
    ConfigKey("n_hard", "int", "206", "Cas difficiles par groupe (diff-bal)"),
    # Plongement
    ConfigKey("perplexity", "float", None, "Perplexité t-SNE (défaut: n/10 borné)"),
    ConfigKey("learning_rate", "float", "200", "Pas d'apprentissage t-SNE"),
    ConfigKey("iters", "int", "1500", "Itérations t-SNE"),
    ConfigKey("early_exaggeration", "float", "12", "Exagération initiale"),
    ConfigKey("exaggeration_iters", "int", "250", "Itérations d'exagération"),
    ConfigKey("bins", "int", "30", "Classes de l'histogramme de densité"),
    ConfigKey("folds", "bool", "false", "Évaluer le plongement pli par pli"),
    # Cohorte synthétique
    ConfigKey("synth.n_per_group", "int", "60", "Cas synthétiques par groupe"),
    ConfigKey("synth.grid", "dims", "48", "Dimensions de la grille"),
    ConfigKey("synth.spacing", "triple", "1", "Espacement de la grille (mm)"),
    ConfigKey(
        "synth.radius_mean",
        "group_map",
        "Young:7.124,Middle:6.6,Older:6.0",
        "Rayon équivalent moyen par groupe (mm)",
    ),
    ConfigKey(
        "synth.radius_std",
        "group_map",
        "Young:0.463,Middle:0.48,Older:0.5",
        "Écart-type du rayon équivalent (mm)",
    ),
    ConfigKey(
        "synth.label_bias",
        "group_map",
        "Young:0,Middle:0,Older:0",
        "Couches de perturbation des étiquettes silver",
    ),
    ConfigKey(
        "synth.pred_bias",
        "group_map",
        "Young:0,Middle:0,Older:0",
        "Couches de dégradation des prédictions",
    ),
    ConfigKey("synth.flip_rate", "float", "0", "Probabilité de bascule en surface"),
]

CONFIG_KEYS: dict[str, ConfigKey] = {k.identifier: k for k in CONFIG_SPEC}
