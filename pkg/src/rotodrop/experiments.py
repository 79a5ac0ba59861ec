"""Desk-scale verification studies and mask-statistics analyses.

The overfit study trains the same network under three arms -- no dropout,
RNG+comparator dropout, rotation dropout -- over several seeded trials and
summarizes the final-epoch generalization gap per arm.  The r sweep trains
the rotation arm once per constant rotate amount.  Mask statistics probe
the generators directly, without any training.

All randomness flows from ExperimentSpec.seed through fixed derivation
tags, so re-running a study with an identical spec object reproduces
identical results.
"""

from __future__ import annotations

import csv
import io
import os
import statistics
from dataclasses import dataclass, field, replace

import numpy as np

from . import data as dataio
from . import hwcost
from .generators import (GeneratorConfig, GeneratorKind, RotationSchedule,
                         ScheduleMode, make_generator)
from .nn import EpochMetrics, Mlp, TrainConfig, train

ARMS = ("none", "general", "proposed")

# seed-derivation tags (kept stable so trajectories are reproducible)
_TAG_MODEL, _TAG_SHUFFLE, _TAG_MASKS, _TAG_SCHEDULE, _TAG_DATA = range(5)


def derive_seed(*parts) -> int:
    """Stable child seed from integer parts."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


class DatasetMissing(FileNotFoundError):
    """Requested file-backed dataset is not present locally."""


@dataclass(frozen=True)
class DataSpec:
    kind: str = "mnist"          # mnist | blobs | xor
    data_dir: str | None = None  # mnist root; default $ROTODROP_DATA_DIR or ./data
    train_size: int = 1000
    test_size: int | None = None  # None: full mnist test split / 2000 synthetic
    dim: int = 256                # blobs feature count
    classes: int = 10
    center_scale: float = 6.0
    noise: float = 1.0
    label_noise: float = 0.3      # train-split label corruption, blobs only


@dataclass(frozen=True)
class ExperimentSpec:
    name: str = "overfit-study"
    data: DataSpec = field(default_factory=DataSpec)
    hidden: tuple = (300, 100)
    arms: tuple = ARMS
    trials: int = 5
    epochs: int = 30
    batch_size: int = 100
    learning_rate: float = 0.1
    keep_p: float = 0.5
    schedule_mode: str = "constant"
    schedule_values: tuple = (1,)
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not self.arms:
            raise ValueError("arms must be nonempty")
        for arm in self.arms:
            if arm not in ARMS:
                raise ValueError(f"unknown arm {arm!r}; expected subset of {ARMS}")
        if self.schedule_mode not in ("constant", "sequence", "random"):
            raise ValueError(f"unknown schedule mode {self.schedule_mode!r}")


def desk_protocol(data_dir=None, prefer_mnist: bool = True) -> ExperimentSpec:
    """The standard desk-scale overfit protocol.

    MNIST variant (used whenever the IDX files are present): 1,000-sample
    stratified training subset, full test split, 784-300-100-10 net,
    30 epochs, batch 100, lr 0.1, keep p 0.5, 5 trials.

    Synthetic fallback (no files needed): same subset size, batch, keep p
    and trial count on high-dimensional gaussian blobs with 30% training
    label corruption, where memorizing the flipped labels is exactly the
    overfitting that dropout suppresses.  50 epochs at lr 0.07 reads out
    where the bare arm has memorized a large share of the corrupted
    labels while both dropout arms still sit on their clean plateau, the
    regime in which their equivalence is meaningful.  Hidden widths are
    odd so every power-of-two rotate amount is coprime to the mask
    length and the rotation orbit never collapses to a few masks.
    """
    if prefer_mnist and dataio.mnist_available(dataio.mnist_root(data_dir)):
        return ExperimentSpec(
            name="overfit-study",
            data=DataSpec(kind="mnist", data_dir=data_dir),
        )
    return ExperimentSpec(
        name="overfit-study-synthetic",
        data=DataSpec(kind="blobs", train_size=1000, test_size=2000),
        hidden=(513, 257),
        epochs=50,
        learning_rate=0.07,
    )


def desk_sweep_protocol(data_dir=None, prefer_mnist: bool = True) -> ExperimentSpec:
    """Rotate-amount sweep variant of the desk protocol.

    Shorter and with fewer trials than the overfit study: the sweep reads
    the stable plateau of the rotation arm, which is reached well before
    the memorization phase that the overfit study needs.
    """
    spec = desk_protocol(data_dir, prefer_mnist)
    if spec.data.kind == "blobs":
        spec = replace(spec, epochs=40)
    return replace(spec, name="r-sweep", arms=("proposed",), trials=3)


def load_study_data(spec: ExperimentSpec):
    """(train, test) datasets for a spec; deterministic in spec.seed."""
    d = spec.data
    seed = derive_seed(spec.seed, _TAG_DATA)
    if d.kind == "mnist":
        root = dataio.mnist_root(d.data_dir)
        if not dataio.mnist_available(root):
            raise DatasetMissing(dataio.FETCH_INSTRUCTIONS.format(
                root=root, env=dataio.DATA_DIR_ENV))
        train_full = dataio.load_mnist_split(root, "train")
        test = dataio.load_mnist_split(root, "test")
        train_set = dataio.subset(train_full, d.train_size, seed)
        if d.test_size is not None:
            test = dataio.subset(test, d.test_size, derive_seed(seed, 1))
        return train_set, test
    if d.kind == "xor":
        train_set = dataio.make_synthetic("xor", d.train_size, seed)
        test = dataio.make_synthetic("xor", d.test_size or 4, seed, split="test")
        return train_set, test
    if d.kind != "blobs":
        raise ValueError(f"unknown dataset kind {d.kind!r}")
    test_size = d.test_size if d.test_size is not None else 2000
    total = dataio.make_synthetic(
        "blobs", d.train_size + test_size, seed, dim=d.dim, classes=d.classes,
        center_scale=d.center_scale, noise=d.noise, label_noise=0.0)
    train_imgs, test_imgs = np.split(total.images, [d.train_size])
    train_labels, test_labels = np.split(total.labels, [d.train_size])
    if d.label_noise > 0.0:
        # corrupt only the training labels; the clean test split is what
        # exposes memorization of the flips
        rng = np.random.default_rng(derive_seed(seed, 2))
        flip = rng.random(d.train_size) < d.label_noise
        shift = rng.integers(1, d.classes, size=d.train_size)
        train_labels = np.where(flip, (train_labels + shift) % d.classes, train_labels)
    train_set = dataio.Dataset(train_imgs, train_labels, "train", d.classes)
    test = dataio.Dataset(test_imgs, test_labels, "test", d.classes)
    return train_set, test


def _schedule_for(spec: ExperimentSpec, trial: int) -> RotationSchedule:
    if spec.schedule_mode == "constant":
        return RotationSchedule.constant(spec.schedule_values[0])
    if spec.schedule_mode == "sequence":
        return RotationSchedule.sequence(spec.schedule_values)
    return RotationSchedule.random(derive_seed(spec.seed, _TAG_SCHEDULE, trial))


def build_mask_sources(arm: str, widths, spec: ExperimentSpec, trial: int):
    """Per-hidden-site generators for one arm/trial, or None for the bare arm."""
    if arm == "none":
        return None
    sources = []
    for site, width in enumerate(widths):
        gen_seed = derive_seed(spec.seed, _TAG_MASKS, trial, site)
        if arm == "general":
            cfg = GeneratorConfig(kind=GeneratorKind.GENERAL_SERIAL, n=width,
                                  p=spec.keep_p, seed=gen_seed)
        else:
            cfg = GeneratorConfig(kind=GeneratorKind.PROPOSED, n=width,
                                  p=spec.keep_p, seed=gen_seed,
                                  schedule=_schedule_for(spec, trial))
        sources.append(make_generator(cfg))
    return sources


@dataclass
class TrialResult:
    arm: str
    trial: int
    history: list  # EpochMetrics per epoch

    @property
    def final(self) -> EpochMetrics:
        return self.history[-1]


@dataclass
class ArmSummary:
    arm: str
    final_train_acc: float
    final_test_acc: float
    gap: float                  # mean(final train acc - final test acc)
    final_train_acc_sd: float
    final_test_acc_sd: float
    gap_sd: float


def _mean_sd(values) -> tuple:
    vals = list(values)
    mean = statistics.fmean(vals)
    sd = statistics.stdev(vals) if len(vals) > 1 else 0.0
    return mean, sd


def summarize_arm(arm: str, results) -> ArmSummary:
    finals = [r.final for r in results]
    train_mean, train_sd = _mean_sd(m.train_accuracy for m in finals)
    test_mean, test_sd = _mean_sd(m.test_accuracy for m in finals)
    gap_mean, gap_sd = _mean_sd(m.train_accuracy - m.test_accuracy for m in finals)
    return ArmSummary(arm, train_mean, test_mean, gap_mean, train_sd, test_sd, gap_sd)


@dataclass
class OverfitStudyResult:
    spec: ExperimentSpec
    trials: list            # TrialResult, ordered by (arm, trial)
    summaries: dict         # arm -> ArmSummary
    widths: tuple           # hidden widths (the dropout-site mask lengths)


def _run_one(spec: ExperimentSpec, arm: str, trial: int, train_set, test_set,
             dims) -> TrialResult:
    mlp = Mlp.create(dims, seed=derive_seed(spec.seed, _TAG_MODEL, trial))
    sources = build_mask_sources(arm, mlp.hidden_widths, spec, trial)
    config = TrainConfig(batch_size=spec.batch_size,
                         learning_rate=spec.learning_rate,
                         epochs=spec.epochs,
                         seed=derive_seed(spec.seed, _TAG_SHUFFLE, trial),
                         keep_p=spec.keep_p)
    try:
        history = train(mlp, train_set, test_set, config, sources)
    except Exception as exc:
        raise RuntimeError(f"training failed in arm={arm} trial={trial}: {exc}") from exc
    return TrialResult(arm, trial, history)


def run_overfit_study(spec: ExperimentSpec) -> OverfitStudyResult:
    """Train every arm for spec.trials seeds and summarize final-epoch gaps."""
    train_set, test_set = load_study_data(spec)
    dims = (train_set.dim, *spec.hidden, train_set.num_classes)
    results = []
    for arm in spec.arms:
        for trial in range(spec.trials):
            results.append(_run_one(spec, arm, trial, train_set, test_set, dims))
    summaries = {arm: summarize_arm(arm, [r for r in results if r.arm == arm])
                 for arm in spec.arms}
    return OverfitStudyResult(spec, results, summaries, spec.hidden)


@dataclass
class RSweepResult:
    spec: ExperimentSpec
    r_values: tuple
    trials: dict        # r -> list[TrialResult]
    summary: list       # (r, test_acc_mean, test_acc_sd, degenerate) rows


def run_r_sweep(spec: ExperimentSpec, r_values) -> RSweepResult:
    """Train the rotation arm once per constant rotate amount."""
    r_values = tuple(int(r) for r in r_values)
    min_width = min(spec.hidden)
    for r in r_values:
        if r >= min_width:
            raise ValueError(
                f"rotate amount {r} >= narrowest dropout site width {min_width}; "
                f"it would act as r mod n = {r % min_width}")
    train_set, test_set = load_study_data(spec)
    dims = (train_set.dim, *spec.hidden, train_set.num_classes)
    trials = {}
    summary = []
    for r in r_values:
        r_spec = replace(spec, arms=("proposed",), schedule_mode="constant",
                         schedule_values=(r,))
        runs = [_run_one(r_spec, "proposed", trial, train_set, test_set, dims)
                for trial in range(spec.trials)]
        trials[r] = runs
        mean, sd = _mean_sd(run.final.test_accuracy for run in runs)
        summary.append((r, mean, sd, r == 0))
    return RSweepResult(spec, r_values, trials, summary)


@dataclass
class MaskStatsReport:
    config: GeneratorConfig
    sample_count: int
    per_position_keep: np.ndarray  # (n,) empirical keep frequency
    overall_keep: float
    co_keep: np.ndarray            # (n, n) symmetric pairwise keep frequency
    orbit_period: int | None       # proposed + non-random schedules only


def orbit_period(config: GeneratorConfig, limit: int | None = None) -> int | None:
    """Emission period of the rotation generator, by cycle detection.

    Recurrences are only accepted at schedule-aligned steps, so the value
    is exact for constant schedules and a multiple of the observable
    period for sequence schedules.  Random schedules have no fixed period.
    """
    if config.kind is not GeneratorKind.PROPOSED:
        return None
    if config.schedule.mode is ScheduleMode.RANDOM:
        return None
    stride = 1 if config.schedule.mode is ScheduleMode.CONSTANT else len(config.schedule.values)
    if limit is None:
        limit = config.n * stride
    gen = make_generator(config)
    first = gen.next_mask()
    for step in range(1, limit + 1):
        if gen.next_mask() == first and step % stride == 0:
            return step
    return None


def mask_statistics(config: GeneratorConfig, count: int) -> MaskStatsReport:
    """Empirical keep statistics over ``count`` masks from a fresh generator."""
    if count < config.n:
        raise ValueError(f"need at least n={config.n} samples, got {count}")
    masks = make_generator(config).next_masks(count).astype(np.float64)
    per_position = masks.mean(axis=0)
    co_keep = (masks.T @ masks) / count
    return MaskStatsReport(
        config=config,
        sample_count=count,
        per_position_keep=per_position,
        overall_keep=float(masks.mean()),
        co_keep=co_keep,
        orbit_period=orbit_period(config),
    )


# -- report writing ------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def _write(path, text: str) -> None:
    with open(path, "w", newline="") as f:
        f.write(text)


def study_metrics_csv(result: OverfitStudyResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["arm", "trial", "epoch", "split", "accuracy", "loss"])
    for run in result.trials:
        for m in run.history:
            w.writerow([run.arm, run.trial, m.epoch, "train",
                        _fmt(m.train_accuracy), _fmt(m.train_loss)])
            w.writerow([run.arm, run.trial, m.epoch, "test",
                        _fmt(m.test_accuracy), _fmt(m.test_loss)])
    return buf.getvalue()


def study_summary_csv(result: OverfitStudyResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["arm", "final_train_acc", "final_train_acc_sd",
                "final_test_acc", "final_test_acc_sd", "gap", "gap_sd"])
    for arm, s in result.summaries.items():
        w.writerow([arm, _fmt(s.final_train_acc), _fmt(s.final_train_acc_sd),
                    _fmt(s.final_test_acc), _fmt(s.final_test_acc_sd),
                    _fmt(s.gap), _fmt(s.gap_sd)])
    return buf.getvalue()


def sweep_metrics_csv(result: RSweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", "trial", "epoch", "split", "accuracy"])
    for r in result.r_values:
        for run in result.trials[r]:
            for m in run.history:
                w.writerow([r, run.trial, m.epoch, "train", _fmt(m.train_accuracy)])
                w.writerow([r, run.trial, m.epoch, "test", _fmt(m.test_accuracy)])
    return buf.getvalue()


def sweep_summary_csv(result: RSweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", "final_test_acc", "final_test_acc_sd", "degenerate"])
    for r, mean, sd, degenerate in result.summary:
        w.writerow([r, _fmt(mean), _fmt(sd), int(degenerate)])
    return buf.getvalue()


def mask_stats_positions_csv(report: MaskStatsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["position", "keep_freq"])
    for i, freq in enumerate(report.per_position_keep):
        w.writerow([i, _fmt(freq)])
    return buf.getvalue()


def mask_stats_cokeep_csv(report: MaskStatsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in report.co_keep:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _hw_cost_section(widths) -> str:
    parts = []
    for n in sorted(set(widths)):
        parts.append(hwcost.format_comparison(hwcost.compare_costs(n)))
        parts.append("")
    parts.append(hwcost.format_strategy_summary())
    return "\n".join(parts)


def study_summary_text(result: OverfitStudyResult) -> str:
    lines = [f"Overfit study: {result.spec.name}",
             f"dataset={result.spec.data.kind} train_size={result.spec.data.train_size} "
             f"trials={result.spec.trials} epochs={result.spec.epochs} "
             f"keep_p={result.spec.keep_p} seed={result.spec.seed}", ""]
    lines.append(f"{'arm':<10}{'train acc':>12}{'test acc':>12}{'gap':>12}{'gap sd':>10}")
    for arm, s in result.summaries.items():
        lines.append(f"{arm:<10}{s.final_train_acc:>12.4f}{s.final_test_acc:>12.4f}"
                     f"{s.gap:>12.4f}{s.gap_sd:>10.4f}")
    lines.append("")
    lines.append("Mask-generation hardware cost at the dropout-site widths:")
    lines.append(_hw_cost_section(result.widths))
    return "\n".join(lines) + "\n"


def sweep_summary_text(result: RSweepResult) -> str:
    lines = [f"Rotate-amount sweep: {result.spec.name}",
             f"r values: {list(result.r_values)}  trials={result.spec.trials}", ""]
    lines.append(f"{'r':>4}{'test acc':>12}{'sd':>10}  notes")
    for r, mean, sd, degenerate in result.summary:
        note = "degenerate: mask frozen" if degenerate else ""
        lines.append(f"{r:>4}{mean:>12.4f}{sd:>10.4f}  {note}")
    lines.append("")
    lines.append("Mask-generation hardware cost at the dropout-site widths:")
    lines.append(_hw_cost_section(result.spec.hidden))
    return "\n".join(lines) + "\n"


def mask_stats_summary_text(report: MaskStatsReport) -> str:
    cfg = report.config
    lines = [f"Mask statistics: kind={cfg.kind.value} n={cfg.n} p={cfg.p} "
             f"seed={cfg.seed} samples={report.sample_count}",
             f"overall keep rate: {report.overall_keep:.6f}",
             f"per-position keep range: [{report.per_position_keep.min():.6f}, "
             f"{report.per_position_keep.max():.6f}]"]
    if report.orbit_period is not None:
        lines.append(f"orbit period: {report.orbit_period}")
    return "\n".join(lines) + "\n"


def emit_report(result, outdir) -> list:
    """Write the CSV tables and plain-text summary for a result; returns paths."""
    os.makedirs(outdir, exist_ok=True)
    written = []

    def emit(name, text):
        path = os.path.join(outdir, name)
        _write(path, text)
        written.append(path)

    if isinstance(result, OverfitStudyResult):
        emit("metrics.csv", study_metrics_csv(result))
        emit("summary.csv", study_summary_csv(result))
        emit("summary.txt", study_summary_text(result))
    elif isinstance(result, RSweepResult):
        emit("sweep.csv", sweep_metrics_csv(result))
        emit("summary.csv", sweep_summary_csv(result))
        emit("summary.txt", sweep_summary_text(result))
    elif isinstance(result, MaskStatsReport):
        emit("positions.csv", mask_stats_positions_csv(result))
        emit("cokeep.csv", mask_stats_cokeep_csv(result))
        emit("summary.txt", mask_stats_summary_text(result))
    else:
        raise TypeError(f"cannot report on {type(result).__name__}")
    return written
