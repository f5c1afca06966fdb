"""Experiment orchestration: config files, metrics, artifacts, reruns.

A run is described by a flat ``key = value`` config (``#`` starts a comment
line; keys are namespaced like ``noise.type`` or ``selfmix.tau``). The
harness injects label noise into a clean corpus, trains the plain
cross-entropy arm and/or the adaptive arm on identical seeds, and writes a
self-contained artifact directory:

    config_echo.txt            canonicalized config
    corrupted_train.csv        training data with the oracle column
    noise_manifest.csv         what was flipped (sidecar format)
    <arm>/report.json          headline metrics + per-epoch rows
    <arm>/epochs.csv           the same rows, flat
    <arm>/steps.csv            accuracy every K optimizer steps
    <arm>/model.smx            final model checkpoint
    hist/<arm>_epoch<e>.csv    loss histograms split clean/noisy
    summary.json               cross-arm roll-up

Outputs embed the config echo and contain no timestamps or absolute paths
derived from the environment, so rerunning the same config over the same
inputs reproduces every artifact byte for byte. Config mistakes surface
before anything is written; failures mid-run leave a partial summary
recording the failed stage.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .common import subseed
from .core import (
    DataSplit,
    ModelConfig,
    SelfMixConfig,
    TrainReport,
    per_sample_losses,
    selection_prf,
    train_baseline,
    train_selfmix,
)
from .data import Dataset, load_csv, save_csv, validate
from .encoder import save_checkpoint
from .noise import (
    NOISE_TYPE_ALIASES,
    NOISE_TYPES,
    CorruptionManifest,
    TransitionMap,
    canonical_noise_type,
    inject,
    save_manifest,
)


def _parse_bool(raw: str) -> bool:
    if raw.lower() == "true":
        return True
    if raw.lower() == "false":
        return False
    raise ValueError(f"expected true or false, got {raw!r}")


def _parse_opt(parse: Callable[[str], object]) -> Callable[[str], object]:
    def inner(raw: str):
        return None if raw.lower() == "none" else parse(raw)

    return inner


def _parse_noise_type(raw: str) -> str:
    if raw == "none":
        return raw
    try:
        return canonical_noise_type(raw)
    except ValueError:
        choices = ("none",) + NOISE_TYPES + tuple(NOISE_TYPE_ALIASES)
        raise ValueError(
            f"noise.type must be one of {', '.join(choices)}; got {raw!r}"
        ) from None


def _parse_norm(raw: str) -> str:
    if raw not in ("mean", "sum"):
        raise ValueError(f"term_normalization must be mean or sum, got {raw!r}")
    return raw


@dataclass(frozen=True)
class ExperimentConfig:
    """Typed view of a flat config file; attribute names mirror the keys."""

    train_path: str | None = None
    test_path: str | None = None
    num_classes: int | None = None
    noise_type: str = "none"
    noise_ratio: float = 0.0
    noise_seed: int | None = None
    transition_path: str | None = None
    aux_subset_fraction: float = 0.1
    tau: float = 0.5
    lambda_p: float = 0.2
    lambda_r: float = 0.3
    alpha: float = 0.75
    temperature: float = 0.5
    warmup_epochs: int | None = None
    warmup_samples: int | None = None
    total_epochs: int = 6
    batch_size: int = 32
    class_regularize: bool = False
    term_normalization: str = "mean"
    buckets: int = 2**18
    hidden: int = 64
    dropout: float = 0.3
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    output_dir: str | None = None
    eval_every: int = 50
    histogram_bins: int = 20

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "ExperimentConfig":
        overrides: dict[str, object] = {}
        seen: set[str] = set()
        for lineno, raw_line in enumerate(text.splitlines(), start=1):
            line = raw_line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{source}: line {lineno}: expected 'key = value'")
            key, _, raw_value = line.partition("=")
            key = key.strip()
            value = raw_value.strip()
            if key not in _CONFIG_KEYS:
                raise ValueError(f"{source}: line {lineno}: unknown key {key!r}")
            if key in seen:
                raise ValueError(f"{source}: line {lineno}: duplicate key {key!r}")
            seen.add(key)
            attr, parse = _CONFIG_KEYS[key]
            try:
                overrides[attr] = parse(value)
            except ValueError as exc:
                raise ValueError(f"{source}: line {lineno}: {key}: {exc}") from None
        return cls(**overrides)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_text(path.read_text(encoding="utf-8"), source=str(path))

    def echo_lines(self) -> list[str]:
        """The canonical ``key = value`` rendering, sorted by key."""
        by_attr = {attr: key for key, (attr, _) in _CONFIG_KEYS.items()}
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            lines.append(f"{by_attr[f.name]} = {_format_value(value)}")
        return sorted(lines)

    def echo_dict(self) -> dict[str, object]:
        by_attr = {attr: key for key, (attr, _) in _CONFIG_KEYS.items()}
        return {by_attr[f.name]: getattr(self, f.name) for f in fields(self)}

    def selfmix_config(self) -> SelfMixConfig:
        warmup_epochs = self.warmup_epochs
        if warmup_epochs is None and self.warmup_samples is None:
            warmup_epochs = 2
        return SelfMixConfig(
            tau=self.tau,
            lambda_p=self.lambda_p,
            lambda_r=self.lambda_r,
            alpha=self.alpha,
            temperature=self.temperature,
            warmup_epochs=warmup_epochs,
            warmup_samples=self.warmup_samples,
            total_epochs=self.total_epochs,
            batch_size=self.batch_size,
            class_regularize=self.class_regularize,
            term_normalization=self.term_normalization,
            seed=self.seed,
        )

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            num_buckets=self.buckets,
            hidden=self.hidden,
            dropout_rate=self.dropout,
            learning_rate=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
        )

    def effective_noise_seed(self) -> int:
        return self.noise_seed if self.noise_seed is not None else subseed(self.seed, "noise")


_CONFIG_KEYS: dict[str, tuple[str, Callable[[str], object]]] = {
    "data.train": ("train_path", str),
    "data.test": ("test_path", str),
    "data.num_classes": ("num_classes", _parse_opt(int)),
    "noise.type": ("noise_type", _parse_noise_type),
    "noise.ratio": ("noise_ratio", float),
    "noise.seed": ("noise_seed", _parse_opt(int)),
    "noise.transition": ("transition_path", _parse_opt(str)),
    "noise.aux_subset_fraction": ("aux_subset_fraction", float),
    "selfmix.tau": ("tau", float),
    "selfmix.lambda_p": ("lambda_p", float),
    "selfmix.lambda_r": ("lambda_r", float),
    "selfmix.alpha": ("alpha", float),
    "selfmix.temperature": ("temperature", float),
    "selfmix.warmup_epochs": ("warmup_epochs", _parse_opt(int)),
    "selfmix.warmup_samples": ("warmup_samples", _parse_opt(int)),
    "selfmix.total_epochs": ("total_epochs", int),
    "selfmix.batch_size": ("batch_size", int),
    "selfmix.class_regularize": ("class_regularize", _parse_bool),
    "selfmix.term_normalization": ("term_normalization", _parse_norm),
    "encoder.buckets": ("buckets", int),
    "encoder.hidden": ("hidden", int),
    "encoder.dropout": ("dropout", float),
    "optimizer.lr": ("lr", float),
    "optimizer.beta1": ("beta1", float),
    "optimizer.beta2": ("beta2", float),
    "optimizer.epsilon": ("epsilon", float),
    "run.seed": ("seed", int),
    "run.output_dir": ("output_dir", str),
    "run.eval_every": ("eval_every", int),
    "run.histogram_bins": ("histogram_bins", int),
}


def _format_value(value: object) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def load_transition(path: str | Path, num_classes: int) -> TransitionMap:
    """Read a transition map: one ``class,target`` line per class."""
    targets: dict[int, int] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ValueError(f"{path}: line {lineno}: expected 'class,target'")
        c, t = int(parts[0]), int(parts[1])
        if c in targets:
            raise ValueError(f"{path}: line {lineno}: duplicate class {c}")
        targets[c] = t
    if sorted(targets) != list(range(num_classes)):
        raise ValueError(f"{path}: transition map must cover classes 0..{num_classes - 1}")
    return TransitionMap(tuple(targets[c] for c in range(num_classes)))


@dataclass(frozen=True)
class SelectionMetrics:
    """How well a selection round isolated the corrupted samples.

    An example sent to the unlabeled set counts as a positive "this label is
    noisy" call; the corruption manifest supplies the ground truth.
    """

    precision: float
    recall: float
    f1: float


def selection_metrics(
    split: DataSplit, manifest: CorruptionManifest
) -> SelectionMetrics:
    """Score a split's unlabeled set against a noise manifest.

    The split and manifest must describe the same dataset: every flipped id
    has to appear in the split.
    """
    universe = set(split.labeled_ids) | set(split.unlabeled_ids)
    stray = manifest.flipped_ids - universe
    if stray:
        raise ValueError(
            f"manifest references ids outside the split: {sorted(stray)[:5]}"
        )
    precision, recall, f1 = selection_prf(split.unlabeled_ids, manifest.flipped_ids)
    return SelectionMetrics(precision=precision, recall=recall, f1=f1)


def emit_loss_histogram(
    losses: np.ndarray,
    manifest: CorruptionManifest | np.ndarray | None,
    bins: int,
    path: str | Path,
    header_lines: Iterable[str] = (),
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Histogram losses into uniform bins, split clean/noisy.

    ``manifest`` decides which positions are noisy: a CorruptionManifest
    marks positions whose id is in ``flipped_ids`` (losses are assumed to be
    ordered by id), a boolean array is used directly, and None means all
    clean. Bins cover [min, max] of all losses (a unit-wide range when the
    losses are constant); every bin is left-closed and the last is closed on
    both sides. The CSV has columns bin_left,bin_right,clean_count,
    noisy_count, preceded by ``#``-prefixed header lines. Returns
    (edges, clean_counts, noisy_counts).
    """
    losses = np.asarray(losses, dtype=np.float64)
    if isinstance(manifest, CorruptionManifest):
        noisy_mask = np.array(
            [i in manifest.flipped_ids for i in range(losses.size)], dtype=bool
        )
    elif manifest is None:
        noisy_mask = np.zeros(losses.shape, dtype=bool)
    else:
        noisy_mask = np.asarray(manifest, dtype=bool)
    if losses.shape != noisy_mask.shape:
        raise ValueError("losses and the noisy mask must have the same shape")
    if bins < 1:
        raise ValueError("bins must be positive")
    if losses.size == 0:
        raise ValueError("cannot histogram an empty loss array")
    lo, hi = float(losses.min()), float(losses.max())
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    clean_counts, _ = np.histogram(losses[~noisy_mask], bins=edges)
    noisy_counts, _ = np.histogram(losses[noisy_mask], bins=edges)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("bin_left,bin_right,clean_count,noisy_count\n")
        for b in range(bins):
            fh.write(
                f"{float(edges[b])!r},{float(edges[b + 1])!r},"
                f"{int(clean_counts[b])},{int(noisy_counts[b])}\n"
            )
    return edges, clean_counts, noisy_counts


# ---------------------------------------------------------------------------
# Full experiment
# ---------------------------------------------------------------------------

ARMS = ("baseline", "selfmix")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv_with_echo(path: Path, echo: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in echo:
            fh.write(f"# {line}\n")
        for row in rows:
            fh.write(",".join(_format_value(v) for v in row) + "\n")


def _load_startup(cfg: ExperimentConfig) -> tuple[Dataset, Dataset, TransitionMap | None]:
    """Everything that must succeed before any output is created."""
    if not cfg.train_path:
        raise ValueError("data.train is required")
    if not cfg.test_path:
        raise ValueError("data.test is required")
    if not cfg.output_dir:
        raise ValueError("run.output_dir is required")
    for label, path in (("data.train", cfg.train_path), ("data.test", cfg.test_path)):
        if not Path(path).is_file():
            raise ValueError(f"{label}: no such file: {path}")
    train = load_csv(cfg.train_path, num_classes=cfg.num_classes)
    test = load_csv(cfg.test_path, num_classes=cfg.num_classes or train.num_classes)
    if train.num_classes != test.num_classes:
        test = Dataset(test.examples, train.num_classes, test.name)
    for name, ds in (("train", train), ("test", test)):
        report = validate(ds)
        if not report.ok:
            raise ValueError(f"{name} data failed validation: {'; '.join(report.findings)}")
    transition = None
    if cfg.transition_path is not None:
        transition = load_transition(cfg.transition_path, train.num_classes)
    if cfg.noise_type != "none" and any(ex.true_label is not None for ex in train):
        raise ValueError("data.train already carries an oracle column; refusing to re-inject")
    return train, test, transition


def run_experiment(cfg: ExperimentConfig, arms: tuple[str, ...] = ARMS) -> dict:
    """Inject noise, train the requested arms, write all artifacts.

    Returns the summary dict (also written to summary.json). Raises on
    failure after recording the failed stage in a partial summary.
    """
    for arm in arms:
        if arm not in ARMS:
            raise ValueError(f"unknown arm {arm!r}")
    train, test, transition = _load_startup(cfg)

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    echo = cfg.echo_lines()
    (out / "config_echo.txt").write_text("\n".join(echo) + "\n", encoding="utf-8")

    summary: dict = {"config": cfg.echo_dict(), "arms": list(arms)}
    stage = "inject"
    try:
        if cfg.noise_type != "none":
            noise_seed = cfg.effective_noise_seed()
            corrupted, manifest = inject(
                train,
                cfg.noise_type,
                cfg.noise_ratio,
                noise_seed,
                transition=transition,
                aux_subset_fraction=cfg.aux_subset_fraction,
            )
            save_csv(corrupted, out / "corrupted_train.csv")
            save_manifest(manifest, out / "noise_manifest.csv")
            summary["noise"] = {
                "type": manifest.noise_type,
                "ratio": manifest.ratio,
                "seed": manifest.seed,
                "num_flipped": len(manifest.flipped_ids),
            }
        else:
            corrupted = train
            summary["noise"] = {
                "type": "none",
                "ratio": 0.0,
                "seed": None,
                "num_flipped": len(train.flipped_ids()),
            }

        flipped = corrupted.flipped_ids()
        noisy_mask = np.array([ex.id in flipped for ex in corrupted], dtype=bool)
        (out / "hist").mkdir(exist_ok=True)

        reports: dict[str, TrainReport] = {}
        trainers = {"baseline": train_baseline, "selfmix": train_selfmix}
        for arm in arms:
            stage = arm
            report = trainers[arm](
                corrupted,
                test,
                cfg.model_config(),
                cfg.selfmix_config(),
                eval_every=cfg.eval_every,
                record_losses=True,
            )
            reports[arm] = report
            arm_dir = out / arm
            arm_dir.mkdir(exist_ok=True)
            _write_json(
                arm_dir / "report.json",
                {"config": cfg.echo_dict(), **report.as_dict(), "warnings": report.warnings},
            )
            _write_csv_with_echo(arm_dir / "epochs.csv", echo, report.csv_rows())
            _write_csv_with_echo(
                arm_dir / "steps.csv",
                echo,
                [["step", "test_acc"]] + [[s, a] for s, a in report.step_acc],
            )
            assert report.final_params is not None
            save_checkpoint(report.final_params, arm_dir / "model.smx")
            for e, losses in enumerate(report.per_epoch_losses or []):
                emit_loss_histogram(
                    losses,
                    noisy_mask,
                    cfg.histogram_bins,
                    out / "hist" / f"{arm}_epoch{e}.csv",
                    header_lines=echo,
                )
            summary[arm] = {
                "best_acc": report.best_acc,
                "last_acc": report.last_acc,
                "warnings": report.warnings,
            }

        stage = "summary"
        if "selfmix" in reports:
            summary["final_sel_f1"] = reports["selfmix"].per_epoch[-1].sel_f1
        if len(arms) == 2:
            summary["acc_gap_last"] = (
                reports["selfmix"].last_acc - reports["baseline"].last_acc
            )
        _write_json(out / "summary.json", summary)
    except Exception as exc:
        summary["error"] = {"stage": stage, "message": str(exc)}
        _write_json(out / "summary.json", summary)
        raise
    return summary


def analyze_losses(
    model_path: str | Path,
    data_path: str | Path,
    out_path: str | Path,
    bins: int = 20,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Histogram a trained model's per-sample losses over a corpus."""
    from .encoder import load_checkpoint

    params = load_checkpoint(model_path)
    dataset = load_csv(data_path, num_classes=params.num_classes)
    losses = per_sample_losses(params, dataset)
    flipped = dataset.flipped_ids()
    noisy_mask = np.array([ex.id in flipped for ex in dataset], dtype=bool)
    header = [
        f"model = {Path(model_path).name}",
        f"data = {Path(data_path).name}",
        f"bins = {bins}",
    ]
    return emit_loss_histogram(
        losses, noisy_mask, bins, out_path, header_lines=header
    )


def format_report(out_dir: str | Path) -> str:
    """Human-readable rendering of a finished run directory."""
    out = Path(out_dir)
    summary_path = out / "summary.json"
    if not summary_path.is_file():
        raise ValueError(f"{out}: no summary.json (is this a run directory?)")
    summary = json.loads(summary_path.read_text(encoding="utf-8"))
    lines = [f"run directory: {out}"]
    noise = summary.get("noise", {})
    lines.append(
        "noise: type={type} ratio={ratio} flipped={num_flipped}".format(
            type=noise.get("type"), ratio=noise.get("ratio"), num_flipped=noise.get("num_flipped")
        )
    )
    for arm in summary.get("arms", []):
        info = summary.get(arm)
        if not info:
            continue
        lines.append(
            f"{arm}: best_acc={info['best_acc']:.4f} last_acc={info['last_acc']:.4f}"
        )
        report_path = out / arm / "report.json"
        if report_path.is_file():
            report = json.loads(report_path.read_text(encoding="utf-8"))
            lines.append(
                "  epoch  test_acc  sel_f1   l_mix    l_p      l_r      labeled"
            )
            for e, row in enumerate(report["per_epoch"]):
                lines.append(
                    f"  {e:>5}  {row['test_acc']:.4f}    {row['sel_f1']:.4f}"
                    f"   {row['l_mix']:.4f}   {row['l_p']:.4f}   {row['l_r']:.4f}"
                    f"   {row['labeled_count']}"
                )
    if "acc_gap_last" in summary:
        lines.append(f"last-epoch accuracy gap (selfmix - baseline): {summary['acc_gap_last']:+.4f}")
    if "error" in summary:
        lines.append(
            f"RUN FAILED at stage {summary['error']['stage']}: {summary['error']['message']}"
        )
    return "\n".join(lines)
