"""Config-driven execution of dataset-chain pipelines.

A pipeline is a JSON document: an input dataset (CSV path or synthetic spec),
a master seed, and an ordered stage list. Stage order is validated against
the chain's legal moves before anything runs, every stage draws its
randomness from the stream (master_seed, stage_index), and the whole run is a
pure function of (input, config).
"""

import dataclasses
import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import synthetic
from .data_model import (
    FeaturePartition,
    GroundTruthDataset,
    ObservedHardDataset,
    ObservedSoftDataset,
    PartialGroundTruthDataset,
    one_hot,
    read_dataset,
    transform_record,
    validate,
    write_dataset,
)
from .errors import ConfigError, DataError
from .metrics import UncertaintyReport, disagreement_rate, entropy_rows, mean_entropy, mean_tvd, tvd_rows
from .noise import (
    apply_nnar,
    apply_to_hard,
    apply_to_soft,
    compute_instance_profile,
    ncar_matrix,
    nar_random_matrix,
)
from .samplers import fit_sampler
from .streams import derive_rng, derive_seed
from .transforms import (
    FeatureHidingConfig,
    discretize,
    feature_hide,
    identity_to_os,
    identity_to_pg,
    perturb_features,
    reconstruct_ground_truth,
)
from .truth_functions import (
    AnnotatorSpec,
    DecisionRule,
    ForestParams,
    TreeParams,
    annotate,
    feature_importances,
    fit_random_forest,
    fit_decision_tree,
)

# state -> state moves each stage kind may take
_LEGAL_MOVES = {
    "reconstruct": {"OH": "G"},
    "feature_hide": {"G": "PG"},
    "identity": {"G": "PG", "PG": "OS"},
    "noise_soft": {"PG": "OS", "OS": "OS"},
    "noise_hard": {"OH": "OH"},
    "nnar": {"PG": "OS", "OS": "OS", "OH": "OH"},
    "discretize": {"OS": "OH"},
    "perturb_features": {"PG": "OS", "OS": "OS", "OH": "OH"},
    "annotate": {"G": "OS", "PG": "OS", "OS": "OS"},
    "measure": {"G": "G", "PG": "PG", "OS": "OS", "OH": "OH"},
}


def _schema():
    with resources.files("labelforge.schemas").joinpath("pipeline.schema.json").open() as fh:
        return json.load(fh)


@dataclasses.dataclass
class PipelineConfig:
    """Validated pipeline description; see schemas/pipeline.schema.json."""

    stages: list
    input: object = None
    input_kind: str | None = None
    master_seed: int = 0
    out_dir: str | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        try:
            jsonschema.validate(raw, _schema())
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"config does not match schema: {exc.message}") from exc
        cfg = cls(
            stages=list(raw["stages"]),
            input=raw.get("input"),
            input_kind=raw.get("input_kind"),
            master_seed=int(raw.get("master_seed", 0)),
            out_dir=raw.get("out_dir"),
        )
        cfg.check_stage_order()
        return cfg

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def initial_state(self) -> str:
        if isinstance(self.input, dict):
            return self.input_kind or "OH"
        return self.input_kind or "OH"

    def check_stage_order(self):
        """Reject illegal chains before any execution."""
        state = self.initial_state()
        if state not in ("G", "PG", "OS", "OH"):
            raise ConfigError(f"unknown input kind {state!r}")
        for index, stage in enumerate(self.stages):
            kind = stage.get("kind")
            moves = _LEGAL_MOVES.get(kind)
            if moves is None:
                raise ConfigError(f"stage {index}: unknown stage kind {kind!r}")
            if state not in moves:
                raise ConfigError(
                    f"stage {index}: {kind} cannot follow a {state} dataset "
                    f"(legal from: {', '.join(sorted(moves))})"
                )
            state = moves[state]


@dataclasses.dataclass
class PipelineResult:
    final: object
    reports: list
    ground_truth: GroundTruthDataset | None
    partial_ground_truth: PartialGroundTruthDataset | None
    config: PipelineConfig


def _load_input(cfg: PipelineConfig):
    if cfg.input is None:
        raise ConfigError("pipeline has no input dataset")
    if isinstance(cfg.input, dict):
        return synthetic.from_spec(cfg.input["synthetic"])
    dataset = read_dataset(cfg.input, kind=cfg.input_kind)
    return dataset


def _learner_from_params(params: dict | None):
    params = params or {"forest": {}}
    if "forest" in params and "tree" in params:
        raise ConfigError("learner must name either a forest or a tree, not both")
    try:
        if "tree" in params:
            return TreeParams(**params["tree"])
        return ForestParams(**params.get("forest", {}))
    except TypeError as exc:
        raise ConfigError(f"bad learner parameters: {exc}") from exc


def _hidden_partition(gt: GroundTruthDataset, stage: dict) -> FeaturePartition:
    d = gt.features.column_count
    if "hidden" in stage:
        hidden = []
        for item in stage["hidden"]:
            hidden.append(gt.features.column_index(item) if isinstance(item, str) else int(item))
        hidden = sorted(set(hidden))
    else:
        count = int(stage.get("hidden_count", 0))
        if count < 0 or count > d:
            raise ConfigError(f"hidden_count {count} outside [0, {d}]")
        importances = feature_importances(gt.truth_fn)
        order = np.argsort(importances, kind="stable")
        hidden = sorted(int(i) for i in order[:count])
    kept = [i for i in range(d) if i not in set(hidden)]
    return FeaturePartition(tuple(kept), tuple(hidden))


def _transition_matrix(stage: dict, class_count: int, seed: int):
    kind = stage.get("matrix", "ncar")
    rate = float(stage.get("rate", 0.0))
    if kind == "ncar":
        return ncar_matrix(class_count, rate)
    if kind == "nar":
        return nar_random_matrix(class_count, rate, derive_rng(seed, 0))
    raise ConfigError(f"unknown matrix kind {kind!r}")


def _soft_view(dataset) -> np.ndarray:
    return dataset.soft_labels


def _measure(dataset, stage, context) -> UncertaintyReport:
    reference = stage.get("reference", "G")
    per_instance = {}
    report = UncertaintyReport(per_instance=per_instance)
    is_soft = isinstance(dataset, (PartialGroundTruthDataset, ObservedSoftDataset))
    if is_soft:
        report.mean_entropy = mean_entropy(_soft_view(dataset))
        per_instance["entropy"] = entropy_rows(_soft_view(dataset))
    if reference == "none":
        return report
    if reference == "G":
        gt = context.get("G")
        if gt is None:
            raise ConfigError("measure reference 'G' needs an upstream ground truth")
        ref_soft = one_hot(gt.labels, gt.schema)
        ref_hard = gt.labels
    elif reference == "PG":
        pg = context.get("PG")
        if pg is None:
            raise ConfigError("measure reference 'PG' needs an upstream partial ground truth")
        ref_soft = pg.soft_labels
        ref_hard = np.argmax(pg.soft_labels, axis=1)
    else:
        raise ConfigError(f"unknown measure reference {reference!r}")
    if is_soft:
        rows = tvd_rows(ref_soft, _soft_view(dataset))
        report.mean_tvd = float(rows.mean())
        per_instance["tvd"] = rows
    else:
        report.disagreement_rate = disagreement_rate(ref_hard, dataset.labels)
    if not stage.get("per_instance", False):
        report.per_instance = None
    return report


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """Execute the stages in order; pure function of (input, config)."""
    config.check_stage_order()
    current = _load_input(config)
    context = {"G": None, "PG": None}
    if isinstance(current, GroundTruthDataset):
        context["G"] = current
    if isinstance(current, PartialGroundTruthDataset):
        context["PG"] = current
    reports = []

    for index, stage in enumerate(config.stages):
        kind = stage["kind"]
        seed = derive_seed(config.master_seed, index)
        if kind == "reconstruct":
            current = reconstruct_ground_truth(current, _learner_from_params(stage.get("learner")), seed)
            context["G"] = current
        elif kind == "feature_hide":
            partition = _hidden_partition(current, stage)
            sampler = fit_sampler(
                stage.get("sampler", "gaussian_kde"),
                current.features.values, partition, y=current.labels,
                seed=seed, class_count=current.schema.class_count,
                **stage.get("sampler_options", {}),
            )
            cfg = FeatureHidingConfig(partition, sampler, int(stage.get("samples", 100)), seed)
            current = feature_hide(current, cfg)
            context["PG"] = current
        elif kind == "identity":
            if isinstance(current, GroundTruthDataset):
                current = identity_to_pg(current)
                context["PG"] = current
            else:
                current = identity_to_os(current)
        elif kind == "noise_soft":
            T = _transition_matrix(stage, current.schema.class_count, seed)
            soft = apply_to_soft(_soft_view(current), T)
            record = transform_record("noise_soft", seed=seed, matrix=stage.get("matrix", "ncar"),
                                      rate=T.noise_rate, transition_matrix=T.matrix.tolist())
            features = current.kept_features if isinstance(current, PartialGroundTruthDataset) \
                else current.features
            current = ObservedSoftDataset(features, soft, current.provenance + (record,), current.schema)
        elif kind == "noise_hard":
            T = _transition_matrix(stage, current.schema.class_count, seed)
            labels = apply_to_hard(current.labels, T, derive_rng(seed, 1))
            record = transform_record("noise_hard", seed=seed, matrix=stage.get("matrix", "ncar"),
                                      rate=T.noise_rate, transition_matrix=T.matrix.tolist())
            current = ObservedHardDataset(current.features, labels,
                                          current.provenance + (record,), current.schema)
        elif kind == "nnar":
            T = _transition_matrix(stage, current.schema.class_count, seed)
            if isinstance(current, ObservedHardDataset):
                profile = compute_instance_profile(current.features.values, current.labels,
                                                   float(stage.get("boosted_fraction", 0.5)))
                labels = apply_nnar(current.labels, profile, T, derive_rng(seed, 1))
                record = transform_record("nnar", seed=seed, rate=T.noise_rate,
                                          boosted_fraction=float(stage.get("boosted_fraction", 0.5)))
                current = ObservedHardDataset(current.features, labels,
                                              current.provenance + (record,), current.schema)
            else:
                gt = context.get("G")
                if gt is None:
                    raise ConfigError("soft nnar needs an upstream ground truth for the distance profile")
                profile = compute_instance_profile(gt.features.values, gt.labels,
                                                   float(stage.get("boosted_fraction", 0.5)))
                soft = apply_nnar(_soft_view(current), profile, T)
                record = transform_record("nnar", seed=seed, rate=T.noise_rate,
                                          boosted_fraction=float(stage.get("boosted_fraction", 0.5)))
                features = current.kept_features if isinstance(current, PartialGroundTruthDataset) \
                    else current.features
                current = ObservedSoftDataset(features, soft, current.provenance + (record,),
                                              current.schema)
        elif kind == "discretize":
            rule = DecisionRule(stage.get("rule", "argmax"))
            current = discretize(current, rule, derive_rng(seed, 1))
        elif kind == "perturb_features":
            sigma = stage.get("sigma", {})
            if not isinstance(sigma, dict) or not sigma:
                raise ConfigError("perturb_features needs a nonempty {column: sigma} map")
            if isinstance(current, PartialGroundTruthDataset):
                features = perturb_features(current.kept_features, sigma, derive_rng(seed, 1))
                record = transform_record("perturb_features", seed=seed, sigma=sigma)
                current = ObservedSoftDataset(features, current.soft_labels,
                                              current.provenance + (record,), current.schema)
            elif isinstance(current, ObservedSoftDataset):
                features = perturb_features(current.features, sigma, derive_rng(seed, 1))
                record = transform_record("perturb_features", seed=seed, sigma=sigma)
                current = ObservedSoftDataset(features, current.soft_labels,
                                              current.provenance + (record,), current.schema)
            else:
                features = perturb_features(current.features, sigma, derive_rng(seed, 1))
                record = transform_record("perturb_features", seed=seed, sigma=sigma)
                current = ObservedHardDataset(features, current.labels,
                                              current.provenance + (record,), current.schema)
        elif kind == "annotate":
            current = _stage_annotate(current, stage, context, seed)
        elif kind == "measure":
            reports.append((index, _measure(current, stage, context)))
        else:
            raise ConfigError(f"unknown stage kind {kind!r}")

    return PipelineResult(current, reports, context.get("G"), context.get("PG"), config)


def _stage_annotate(current, stage: dict, context: dict, seed: int):
    gt = context.get("G")
    if gt is None:
        raise ConfigError("annotate needs an upstream ground truth for the full feature matrix")
    X_full = gt.features.values
    if "visible" in stage:
        visible = tuple(
            gt.features.column_index(v) if isinstance(v, str) else int(v)
            for v in stage["visible"]
        )
    else:
        visible = tuple(range(gt.features.column_count))
    model_spec = stage.get("model", "truth")
    if model_spec == "truth":
        model = gt.truth_fn
        if model.input_arity != len(visible):
            raise ConfigError(
                "the truth-function annotator needs the full feature set visible; "
                "fit a dedicated model for restricted views"
            )
    elif isinstance(model_spec, dict):
        learner = _learner_from_params(model_spec)
        X_proj = X_full[:, list(visible)]
        if isinstance(learner, ForestParams):
            model = fit_random_forest(X_proj, gt.labels, dataclasses.replace(learner, seed=seed),
                                      class_count=gt.schema.class_count)
        else:
            model = fit_decision_tree(X_proj, gt.labels, learner, seed=seed,
                                      class_count=gt.schema.class_count)
    else:
        raise ConfigError("annotate model must be 'truth' or learner parameters")
    spec = AnnotatorSpec(model, visible, stage.get("confidence_noise"))
    soft = annotate(spec, X_full, derive_rng(seed, 1))
    record = transform_record("annotate", seed=seed, visible=list(visible),
                              model="truth" if model_spec == "truth" else "fitted",
                              confidence_noise=stage.get("confidence_noise"))
    features = current.kept_features if isinstance(current, PartialGroundTruthDataset) \
        else current.features
    return ObservedSoftDataset(features, soft, current.provenance + (record,), current.schema)


def write_pipeline_outputs(result: PipelineResult, out_dir) -> list[Path]:
    """Write the final dataset, measure reports and run metadata; returns paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    final_path = out_dir / "final.csv"
    write_dataset(result.final, final_path, master_seed=result.config.master_seed)
    written += [final_path, final_path.with_suffix(".meta.json")]
    for index, report in result.reports:
        path = report.write_json(out_dir / f"measure_{index:02d}.json", include_per_instance=False)
        written.append(path)
        if report.per_instance:
            written.append(report.write_per_instance_csv(out_dir / f"measure_{index:02d}.csv"))
    run_meta = {
        "master_seed": result.config.master_seed,
        "stages": result.config.stages,
        "input": result.config.input,
        "input_kind": result.config.input_kind,
        "final_kind": result.final.kind,
        "validation": str(validate(result.final)),
    }
    meta_path = out_dir / "run.meta.json"
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(run_meta, fh, sort_keys=True, indent=2)
        fh.write("\n")
    written.append(meta_path)
    return written
