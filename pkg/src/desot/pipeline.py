"""End-to-end experiment: data prep, member training, calibration, evaluation,
OOD detection and severity sweeps.

Every command reads a :class:`RunConfig` and works inside ``config.out_dir``:

    data/        train.dset, val.dset, test.dseq, ood.dseq, splits.json
    models/      seed_<s>/member_<m>.mlpw, seed_<s>/mcdropout.mlpw
    manifest.json, metrics.csv, ood.csv, entropy_hist_<mode>.csv, sweep.csv

All reductions run in sample order, so a fixed config reproduces the CSV
files byte for byte.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import fit_temperature
from .data import (KINDS, MAX_SEVERITY, FrameDataset, Jitter, SequenceDataset, filter_classes,
                   generate_glyph_dataset, holdout_ood_classes, load_dataset, load_sequences,
                   save_dataset, save_sequences, severity_sweep, stratified_split,
                   synthesize_sequences)
from .data.io import frame_features
from .data.synth import GlyphStyle
from .fusion import (CostCounter, de_probs, desot_probs, mc_dropout_masks, mc_dropout_probs,
                     round_robin_schedule, sm_probs)
from .metrics import EvalReport, entropy, entropy_histogram, evaluate
from .nn import TrainConfig, init_model, load_model, predict_logits, save_model, train
from .ood import OodSplit, evaluate_detection, fit_threshold, split_halves

LOG = logging.getLogger(__name__)

STRATEGIES = ("sm_single_frame", "sm", "de", "desot", "mcdropout")
SEQUENCE_STRATEGIES = ("sm", "de", "desot", "mcdropout")
OOD_GROUP_OFFSET = 1_000_000

METRIC_COLUMNS = ["provenance_digest", "strategy", "members", "seed", "dataset", "temp_scaled",
                  "accuracy", "macro_f1", "ece", "brier_score", "brier_reliability",
                  "mean_entropy", "forward_passes", "n_samples"]
OOD_COLUMNS = ["provenance_digest", "strategy", "temp_scaled", "seed", "threshold", "accuracy",
               "precision", "recall", "f1", "fit_f1", "mean_entropy_in", "mean_entropy_ood",
               "n_eval", "flags"]
HIST_COLUMNS = ["seed", "temp_scaled", "bin_left", "bin_right", "count_in", "count_ood"]
SWEEP_COLUMNS = ["provenance_digest", "strategy", "temp_scaled", "seed", "kind", "severity",
                 "accuracy", "brier_reliability", "mean_entropy"]
PERCENT_FIELDS = ("accuracy", "macro_f1", "ece")


class ConfigError(ValueError):
    """Invalid configuration or missing inputs (CLI exit code 1)."""


class SplitOverlapError(ConfigError):
    pass


@dataclass
class GeneratorConfig:
    classes: int = 23
    tail_exponent: float = 0.8
    seed: int = 0
    max_per_class: int = 4000
    min_per_class: int = 20
    size: int = 16
    class_names: list[str] | None = None


@dataclass
class RunConfig:
    data_path: str = "glyphs.dset"
    out_dir: str = "run"
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    members: int = 5
    seq_len: int = 11
    seeds: list[int] = field(default_factory=lambda: [0, 100, 200, 300, 400])
    strategies: list[str] = field(default_factory=lambda: list(STRATEGIES))
    hidden: list[int] = field(default_factory=lambda: [128, 64])
    epochs: int = 30
    batch_size: int = 256
    learning_rate: float = 5e-4
    weight_decay: float = 0.01
    mc_dropout_rate: float = 0.2
    calibration: bool = True
    temp_scaled: bool | None = None     # None: report both where temperatures exist
    min_crop_size: int = 0
    ood_classes: list[str] = field(default_factory=list)
    min_count: int = 10
    minority_max_count: int | None = None
    split_fractions: list[float] = field(default_factory=lambda: [0.6, 0.1, 0.3])
    split_seed: int = 0
    sequence_seed: int = 0
    jitter: dict = field(default_factory=lambda: dataclasses.asdict(Jitter()))
    schedule_offset: int = 0
    ece_bins: int = 15
    brier_bins: int = 10
    hist_bins: int = 20
    sweep_kinds: list[str] = field(default_factory=lambda: list(KINDS))
    sweep_severities: list[int] = field(default_factory=lambda: list(range(MAX_SEVERITY + 1)))
    max_severity: int = MAX_SEVERITY
    sweep_seed: int = 0
    sweep_strategies: list[str] = field(default_factory=lambda: list(SEQUENCE_STRATEGIES))
    sweep_max_sequences: int | None = None
    n_jobs: int = 1

    def __post_init__(self):
        if isinstance(self.generator, dict):
            self.generator = GeneratorConfig(**self.generator)
        self.validate()

    def validate(self):
        if self.members < 1:
            raise ConfigError("members must be >= 1")
        if self.seq_len < 1:
            raise ConfigError("seq_len must be >= 1")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        unknown = set(self.strategies) - set(STRATEGIES)
        if unknown:
            raise ConfigError(f"unknown strategies {sorted(unknown)}; choose from {STRATEGIES}")
        unknown = set(self.sweep_strategies) - set(STRATEGIES)
        if unknown:
            raise ConfigError(f"unknown sweep strategies {sorted(unknown)}")
        if self.sweep_max_sequences is not None and self.sweep_max_sequences < 1:
            raise ConfigError("sweep_max_sequences must be >= 1 or null")
        if not 0 <= self.schedule_offset < self.members:
            raise ConfigError("schedule_offset must be in [0, members)")
        member_seeds = [s + m for s in self.seeds for m in range(self.members + 1)]
        if len(set(member_seeds)) != len(member_seeds):
            LOG.warning("run seeds are closer than members + 1; runs will share models")

    @classmethod
    def from_dict(cls, values: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path, **overrides) -> "RunConfig":
        try:
            values = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(values)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def train_config(self, seed: int, dropout_rate: float = 0.0) -> TrainConfig:
        return TrainConfig(self.epochs, self.batch_size, self.learning_rate, self.weight_decay,
                           seed, dropout_rate)

    @property
    def out(self) -> Path:
        return Path(self.out_dir)

    @property
    def data_file(self) -> Path:
        """``data_path``; relative paths live inside ``out_dir``."""
        path = Path(self.data_path)
        return path if path.is_absolute() else self.out / path


# -- small helpers ------------------------------------------------------------

def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "on" if value else "off"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, columns, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class Manifest:
    def __init__(self, path):
        self.path = Path(path)
        self.data = json.loads(self.path.read_text()) if self.path.exists() else {}

    def __getitem__(self, key):
        return self.data[key]

    def get(self, key, default=None):
        return self.data.get(key, default)

    def __setitem__(self, key, value):
        self.data[key] = value

    def save(self):
        self.data["tool_version"] = __version__
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")

    def provenance_digest(self) -> str:
        """Hash of everything that determines results; paths excluded."""
        config = dict(self.data.get("config", {}))
        config.pop("out_dir", None)
        config.pop("data_path", None)
        config.pop("n_jobs", None)
        payload = {
            "config": config,
            "data": self.data.get("data", {}),
            "models": self.data.get("models", {}),
            "temperatures": self.data.get("temperatures", {}),
            "tool_version": __version__,
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _manifest(cfg: RunConfig) -> Manifest:
    cfg.out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(cfg.out / "manifest.json")
    manifest["config"] = cfg.to_dict()
    return manifest


# -- data -----------------------------------------------------------------------

def cmd_gen_data(out_path, classes=23, tail_exponent=0.8, seed=0, max_per_class=4000,
                 min_per_class=20, size=16, class_names=None) -> FrameDataset:
    if class_names is not None and classes is None:
        classes = len(class_names)
    try:
        ds = generate_glyph_dataset(classes, tail_exponent, seed, max_per_class, min_per_class,
                                    GlyphStyle(size=size), class_names)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, out_path)
    return ds


def prepare_data(cfg: RunConfig, manifest: Manifest) -> None:
    path = cfg.data_file
    if not path.exists():
        raise ConfigError(f"training data not found: {path}")
    full = load_dataset(path)
    if min(full.height, full.width) < cfg.min_crop_size:
        # frames share one size, so the crop filter keeps all or nothing
        raise ConfigError(f"frames are {full.height}x{full.width}, below min_crop_size "
                          f"{cfg.min_crop_size}")
    in_dist, ood = holdout_ood_classes(full, cfg.ood_classes)
    in_dist, kept = filter_classes(in_dist, cfg.min_count)
    parts = stratified_split(in_dist.labels, cfg.split_fractions, cfg.split_seed)
    train_ds, val_ds, test_ds = (in_dist.subset(p) for p in parts)
    jitter = Jitter(**cfg.jitter)
    test_seq = synthesize_sequences(test_ds, cfg.seq_len, jitter, cfg.sequence_seed)
    data_dir = cfg.out / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    save_dataset(train_ds, data_dir / "train.dset")
    save_dataset(val_ds, data_dir / "val.dset")
    save_sequences(test_seq, data_dir / "test.dseq")
    files = ["train.dset", "val.dset", "test.dseq"]
    if ood.n:
        ood_seq = synthesize_sequences(ood, cfg.seq_len, jitter, cfg.sequence_seed + 1,
                                       group_id_offset=OOD_GROUP_OFFSET)
        save_sequences(ood_seq, data_dir / "ood.dseq")
        files.append("ood.dseq")
    train_counts = train_ds.class_counts()
    minority = []
    if cfg.minority_max_count is not None:
        minority = [int(c) for c in np.flatnonzero(train_counts <= cfg.minority_max_count)]
    splits = {name: [int(i) for i in p] for name, p in zip(("train", "val", "test"), parts)}
    (data_dir / "splits.json").write_text(json.dumps(splits) + "\n")
    manifest["data"] = {
        "source_sha256": sha256_file(path),
        "files": {f: sha256_file(data_dir / f) for f in files},
        "class_names": in_dist.class_names,
        "kept_classes": {str(k): v for k, v in kept.items()},
        "ood_classes": list(cfg.ood_classes),
        "train_class_counts": [int(c) for c in train_counts],
        "minority_classes": minority,
        "split_sizes": {k: len(v) for k, v in splits.items()},
    }


def _load_split(cfg, name) -> FrameDataset:
    path = cfg.out / "data" / name
    if not path.exists():
        raise ConfigError(f"missing {path}; run `desot train` first")
    return load_dataset(path)


def _load_seq(cfg, name) -> SequenceDataset | None:
    path = cfg.out / "data" / name
    return load_sequences(path) if path.exists() else None


# -- training -------------------------------------------------------------------

def _model_dir(cfg, seed) -> Path:
    return cfg.out / "models" / f"seed_{seed}"


def _train_one(dims, cfg: RunConfig, seed, dropout_rate, X, y, path):
    model = init_model(dims, dropout_rate, seed)
    model, losses = train(model, X, y, cfg.train_config(seed, dropout_rate))
    save_model(model, path)
    return losses


def cmd_train(cfg: RunConfig) -> Manifest:
    """Prepare splits, then train M members (+ one MC-dropout model) per run seed.

    Member m of run seed s uses seed s + m; the MC-dropout model uses s + M.
    """
    manifest = _manifest(cfg)
    prepare_data(cfg, manifest)
    train_ds = _load_split(cfg, "train.dset")
    X, y = train_ds.features(), train_ds.labels
    dims = [train_ds.frame_size, *cfg.hidden, train_ds.n_classes]

    jobs = []
    for seed in cfg.seeds:
        model_dir = _model_dir(cfg, seed)
        model_dir.mkdir(parents=True, exist_ok=True)
        for m in range(cfg.members):
            jobs.append((seed, seed + m, 0.0, model_dir / f"member_{m}.mlpw"))
        if "mcdropout" in cfg.strategies:
            jobs.append((seed, seed + cfg.members, cfg.mc_dropout_rate, model_dir / "mcdropout.mlpw"))

    if cfg.n_jobs == 1:
        losses = [_train_one(dims, cfg, s, p, X, y, path) for _, s, p, path in jobs]
    else:
        from joblib import Parallel, delayed
        losses = Parallel(n_jobs=cfg.n_jobs)(
            delayed(_train_one)(dims, cfg, s, p, X, y, path) for _, s, p, path in jobs)

    models, loss_log = {}, {}
    for (run_seed, _, _, path), log in zip(jobs, losses):
        models.setdefault(str(run_seed), {})[path.name] = sha256_file(path)
        loss_log.setdefault(str(run_seed), {})[path.name] = [float(v) for v in log]
    manifest["models"] = models
    manifest["train_loss"] = loss_log
    manifest.data.pop("temperatures", None)
    manifest.save()
    return manifest


@dataclass
class RunModels:
    seed: int
    members: list
    mc: object | None
    temperatures: dict
    mask_cache: dict = field(default_factory=dict, repr=False)

    def mc_masks(self, keys, T):
        """Dropout masks for these sequence keys, generated once per key set."""
        cache_key = (tuple(keys), T)
        if cache_key not in self.mask_cache:
            self.mask_cache[cache_key] = mc_dropout_masks(self.mc, keys, T)
        return self.mask_cache[cache_key]


def load_run(cfg: RunConfig, seed: int, manifest: Manifest | None = None) -> RunModels:
    model_dir = _model_dir(cfg, seed)
    files = sorted(model_dir.glob("member_*.mlpw"), key=lambda p: int(p.stem.split("_")[1]))
    if len(files) != cfg.members:
        raise ConfigError(f"expected {cfg.members} member files in {model_dir}, found {len(files)}")
    recorded = (manifest.get("models", {}) if manifest else {}).get(str(seed), {})
    for path in [*files, model_dir / "mcdropout.mlpw"]:
        if path.name in recorded and sha256_file(path) != recorded[path.name]:
            raise ConfigError(f"{path} does not match the digest recorded in the manifest")
    members = [load_model(p) for p in files]
    mc_path = model_dir / "mcdropout.mlpw"
    mc = load_model(mc_path) if mc_path.exists() else None
    temps = (manifest.get("temperatures", {}) if manifest else {}).get(str(seed), {})
    return RunModels(seed, members, mc, {k: v["value"] for k, v in temps.items()})


# -- calibration ------------------------------------------------------------------

TEMPERATURE_KEY = {"sm_single_frame": "sm", "sm": "sm", "de": "ensemble", "desot": "ensemble",
                   "mcdropout": "mcdropout"}


def check_disjoint_splits(cfg: RunConfig) -> None:
    path = cfg.out / "data" / "splits.json"
    if not path.exists():
        raise ConfigError(f"missing {path}; split provenance is required for calibration")
    splits = json.loads(path.read_text())
    overlap = set(splits["train"]) & set(splits["val"])
    if overlap:
        raise SplitOverlapError(f"validation split shares {len(overlap)} samples with training")


def cmd_calibrate(cfg: RunConfig) -> Manifest:
    """Fit one temperature per strategy family and seed on single validation frames.

    DE and DESOT share the joint ensemble temperature; MC-dropout is fitted on
    its deterministic logits.
    """
    manifest = _manifest(cfg)
    check_disjoint_splits(cfg)
    val = _load_split(cfg, "val.dset")
    X, y = val.features(), val.labels
    temperatures = {}
    for seed in cfg.seeds:
        run = load_run(cfg, seed, manifest)
        member_logits = np.stack([predict_logits(m, X) for m in run.members])
        fits = {
            "sm": fit_temperature(member_logits[0], y, "single"),
            "ensemble": fit_temperature(member_logits, y, "joint_ensemble"),
        }
        if run.mc is not None:
            fits["mcdropout"] = fit_temperature(predict_logits(run.mc, X), y, "single")
        temperatures[str(seed)] = {
            name: {"value": t.value, "nll": t.nll, "nll_at_one": t.nll_at_one,
                   "bounds": list(t.bounds), "clamped": t.clamped, "n_val": len(y)}
            for name, t in fits.items()
        }
    manifest["temperatures"] = temperatures
    manifest.save()
    return manifest


# -- strategies ---------------------------------------------------------------------

def strategy_probs(strategy, run: RunModels, seq: SequenceDataset, cfg: RunConfig,
                   temp_scaled: bool, frames=None):
    """Fused class distributions for every sequence, plus the forward-pass count."""
    frames = seq.features() if frames is None else frames
    temperature = 1.0
    if temp_scaled:
        key = TEMPERATURE_KEY[strategy]
        if key not in run.temperatures:
            raise ConfigError(f"no fitted temperature for {strategy}; run `desot calibrate`")
        temperature = run.temperatures[key]
    counter = CostCounter(len(run.members))
    n, T, _ = frames.shape
    if strategy == "sm_single_frame":
        pick = np.random.default_rng([run.seed, 1]).integers(0, T, size=n)
        probs = sm_probs(run.members[0], frames[np.arange(n), pick][:, None], counter, temperature)
    elif strategy == "sm":
        probs = sm_probs(run.members[0], frames, counter, temperature)
    elif strategy == "de":
        probs = de_probs(run.members, frames, counter, temperature)
    elif strategy == "desot":
        schedule = round_robin_schedule(T, len(run.members), cfg.schedule_offset)
        probs = desot_probs(run.members, frames, schedule, counter, temperature)
    elif strategy == "mcdropout":
        if run.mc is None:
            raise ConfigError("no MC-dropout model trained for this run")
        keys = [(run.seed, int(g)) for g in seq.group_ids]
        masks = run.mc_masks(keys, T) if run.mc.dropout_rate > 0 else None
        probs = mc_dropout_probs(run.mc, frames, keys, counter, temperature, masks)
    else:
        raise ConfigError(f"unknown strategy {strategy!r}")
    return probs, counter.forward_passes


def _members_for(strategy, cfg):
    return cfg.members if strategy in ("de", "desot") else 1


def _report_row(digest, strategy, cfg, seed, dataset, temp_scaled, report: EvalReport):
    row = {"provenance_digest": digest, "strategy": strategy, "members": _members_for(strategy, cfg),
           "seed": seed, "dataset": dataset, "temp_scaled": temp_scaled}
    for name in EvalReport.FIELDS:
        value = getattr(report, name)
        row[name] = value * 100 if name in PERCENT_FIELDS else value
    return row


def aggregate_rows(rows):
    """Mean and population std over seeds for each (strategy, dataset, temp_scaled)."""
    groups = {}
    for row in rows:
        groups.setdefault((row["strategy"], row["dataset"], row["temp_scaled"]), []).append(row)
    out = []
    for (strategy, dataset, temp_scaled), members in groups.items():
        for stat in ("mean", "std"):
            agg = {k: members[0][k] for k in ("provenance_digest", "strategy", "members",
                                               "dataset", "temp_scaled")}
            agg["seed"] = stat
            for name in EvalReport.FIELDS:
                values = np.array([float(r[name]) for r in members])
                agg[name] = float(values.mean() if stat == "mean" else values.std())
            out.append(agg)
    return out


# -- evaluation ---------------------------------------------------------------------

def _scalings(cfg: RunConfig, manifest: Manifest) -> list[bool]:
    fitted = bool(manifest.get("temperatures"))
    if cfg.temp_scaled is None:
        return [False, True] if fitted else [False]
    if cfg.temp_scaled and not fitted:
        raise ConfigError("temperature scaling requested but no temperatures fitted; "
                          "run `desot calibrate`")
    return [cfg.temp_scaled]


def cmd_eval(cfg: RunConfig, strategies=None) -> list[dict]:
    manifest = _manifest(cfg)
    strategies = list(strategies or cfg.strategies)
    scalings = _scalings(cfg, manifest)
    test = _load_seq(cfg, "test.dseq")
    if test is None:
        raise ConfigError("missing test sequences; run `desot train` first")
    minority = manifest["data"].get("minority_classes", [])
    minority_idx = np.flatnonzero(np.isin(test.labels, minority))
    digest = manifest.provenance_digest()

    rows = []
    frames = test.features()
    for seed in cfg.seeds:
        run = load_run(cfg, seed, manifest)
        for strategy, temp_scaled in itertools.product(strategies, scalings):
            probs, passes = strategy_probs(strategy, run, test, cfg, temp_scaled, frames)
            report = evaluate(probs, test.labels, passes, cfg.ece_bins, cfg.brier_bins)
            rows.append(_report_row(digest, strategy, cfg, seed, "test", temp_scaled, report))
            if minority_idx.size:
                # forward passes prorated exactly: every sequence costs the same
                sub_passes = passes // test.n * minority_idx.size
                report = evaluate(probs[minority_idx], test.labels[minority_idx], sub_passes,
                                  cfg.ece_bins, cfg.brier_bins, f1_classes=minority)
                rows.append(_report_row(digest, strategy, cfg, seed, "test_minority",
                                        temp_scaled, report))
    rows.sort(key=lambda r: (r["dataset"], r["temp_scaled"], STRATEGIES.index(r["strategy"]),
                             r["seed"]))
    all_rows = rows + aggregate_rows(rows)
    write_csv(cfg.out / "metrics.csv", METRIC_COLUMNS, all_rows)
    manifest["metrics_summary"] = {
        f"{r['dataset']}/{r['strategy']}{'+T' if r['temp_scaled'] else ''}/{r['seed']}":
            {k: r[k] for k in EvalReport.FIELDS}
        for r in all_rows if r["seed"] in ("mean", "std")
    }
    manifest["provenance_digest"] = digest
    manifest.save()
    return all_rows


# -- OOD --------------------------------------------------------------------------

def cmd_ood(cfg: RunConfig, strategies=None) -> list[dict]:
    manifest = _manifest(cfg)
    strategies = list(strategies or cfg.strategies)
    test = _load_seq(cfg, "test.dseq")
    ood = _load_seq(cfg, "ood.dseq")
    if ood is None or ood.n == 0:
        raise ConfigError("OOD set is empty; list held-out classes in ood_classes")
    scalings = _scalings(cfg, manifest)
    digest = manifest.provenance_digest()
    n_classes = test.n_classes
    group_ids = np.concatenate([test.group_ids, ood.group_ids])
    is_ood = np.concatenate([np.zeros(test.n, bool), np.ones(ood.n, bool)])

    rows, hist_rows, summary = [], {s: [] for s in strategies}, {}
    test_frames, ood_frames = test.features(), ood.features()
    for seed in cfg.seeds:
        run = load_run(cfg, seed, manifest)
        for strategy in strategies:
            for temp_scaled in scalings:
                h_in = entropy(strategy_probs(strategy, run, test, cfg, temp_scaled, test_frames)[0])
                h_ood = entropy(strategy_probs(strategy, run, ood, cfg, temp_scaled, ood_frames)[0])
                records = OodSplit(np.concatenate([h_in, h_ood]), is_ood, group_ids)
                fit, held_out = split_halves(records, seed)
                fitted = fit_threshold(fit)
                report = evaluate_detection(held_out, fitted.threshold)
                flags = report.flags + (["degenerate_threshold"] if fitted.degenerate else [])
                rows.append({
                    "provenance_digest": digest, "strategy": strategy, "temp_scaled": temp_scaled,
                    "seed": seed, "threshold": report.threshold, "accuracy": report.accuracy,
                    "precision": report.precision, "recall": report.recall, "f1": report.f1,
                    "fit_f1": fitted.f1, "mean_entropy_in": float(h_in.mean()),
                    "mean_entropy_ood": float(h_ood.mean()), "n_eval": report.n_samples,
                    "flags": ";".join(flags),
                })
                c_in, edges, _ = entropy_histogram(h_in, cfg.hist_bins, n_classes=n_classes)
                c_ood, _, _ = entropy_histogram(h_ood, cfg.hist_bins, n_classes=n_classes)
                for b in range(cfg.hist_bins):
                    hist_rows[strategy].append({
                        "seed": seed, "temp_scaled": temp_scaled, "bin_left": float(edges[b]),
                        "bin_right": float(edges[b + 1]), "count_in": int(c_in[b]),
                        "count_ood": int(c_ood[b]),
                    })
    write_csv(cfg.out / "ood.csv", OOD_COLUMNS, rows)
    for strategy, hrows in hist_rows.items():
        write_csv(cfg.out / f"entropy_hist_{strategy}.csv", HIST_COLUMNS, hrows)
    for strategy in strategies:
        for temp_scaled in scalings:
            sel = [r for r in rows if r["strategy"] == strategy and r["temp_scaled"] == temp_scaled]
            key = f"{strategy}{'+T' if temp_scaled else ''}"
            summary[key] = {k: float(np.mean([r[k] for r in sel]))
                            for k in ("threshold", "accuracy", "precision", "recall", "f1",
                                      "mean_entropy_in", "mean_entropy_ood")}
    manifest["ood_summary"] = summary
    manifest["ood_protocol"] = {"objective": "max F1 on fit half, OOD iff entropy > threshold",
                                "split": "stratified halves by seeded group-id shuffle"}
    manifest.save()
    return rows


# -- sweep ----------------------------------------------------------------------

def cmd_sweep(cfg: RunConfig, strategies=None, seed=None) -> list[dict]:
    """Augmentation severity sweep for one run seed (the first by default)."""
    manifest = _manifest(cfg)
    strategies = list(strategies or cfg.sweep_strategies)
    seed = cfg.seeds[0] if seed is None else seed
    temp_scaled = _scalings(cfg, manifest)[-1]
    test = _load_seq(cfg, "test.dseq")
    if test is None:
        raise ConfigError("missing test sequences; run `desot train` first")
    if cfg.sweep_max_sequences is not None and cfg.sweep_max_sequences < test.n:
        pick = np.random.default_rng([cfg.sweep_seed, 2]).permutation(test.n)
        test = test.subset(np.sort(pick[:cfg.sweep_max_sequences]))
    run = load_run(cfg, seed, manifest)
    digest = manifest.provenance_digest()

    def evaluate_all(pixels):
        frames = frame_features(pixels)
        out = {}
        for strategy in strategies:
            probs, passes = strategy_probs(strategy, run, test, cfg, temp_scaled, frames)
            out[strategy] = evaluate(probs, test.labels, passes, cfg.ece_bins, cfg.brier_bins)
        return out

    cells = severity_sweep(evaluate_all, test, cfg.sweep_kinds, cfg.sweep_severities,
                           cfg.sweep_seed, cfg.max_severity)
    rows = []
    for cell in cells:
        for strategy, report in cell.reports.items():
            rows.append({
                "provenance_digest": digest, "strategy": strategy, "temp_scaled": temp_scaled,
                "seed": seed, "kind": cell.kind, "severity": cell.severity,
                "accuracy": report.accuracy * 100, "brier_reliability": report.brier_reliability,
                "mean_entropy": report.mean_entropy,
            })
    rows.sort(key=lambda r: (STRATEGIES.index(r["strategy"]), KINDS.index(r["kind"]), r["severity"]))
    write_csv(cfg.out / "sweep.csv", SWEEP_COLUMNS, rows)
    manifest["sweep"] = {"seed": seed, "temp_scaled": temp_scaled, "kinds": list(cfg.sweep_kinds),
                         "severities": list(cfg.sweep_severities),
                         "max_severity": cfg.max_severity, "n_sequences": test.n,
                         "assumed_kinds": ["brightness", "occlusion"]}
    manifest.save()
    return rows


def run_all(cfg: RunConfig, generate=True) -> Manifest:
    """gen-data -> train -> calibrate -> eval -> ood -> sweep."""
    if generate:
        g = cfg.generator
        cmd_gen_data(cfg.data_file, g.classes, g.tail_exponent, g.seed, g.max_per_class,
                     g.min_per_class, g.size, g.class_names)
    cmd_train(cfg)
    if cfg.calibration:
        cmd_calibrate(cfg)
    cmd_eval(cfg)
    if cfg.ood_classes:
        cmd_ood(cfg)
    if cfg.sweep_kinds:
        cmd_sweep(cfg)
    return Manifest(cfg.out / "manifest.json")
