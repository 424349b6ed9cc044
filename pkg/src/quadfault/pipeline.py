"""Training, evaluation and the three-suite experiment orchestration.

Each optimization step minimizes cross-entropy on a source mini-batch; with
domain adaptation enabled it adds lambda times the linear MMD between dense1
features of a source-healthy mini-batch and a target-healthy mini-batch drawn
from separate RNG streams. Target-healthy windows never enter the
cross-entropy term. Early stopping halts when the epoch-mean total loss has
not improved on the best-so-far by at least 1e-6 for `patience` consecutive
epochs, and the parameters returned are those of the best epoch.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from . import nn
from .dataset import Dataset, healthy_subset
from .errors import ConfigError, InputDomainError, TrainingError
from .features import VARIANT_CHANNELS, WindowNormalizer
from .nn import AdamState, ModelParams, ModelSpec, adam_step, init_params

log = logging.getLogger("quadfault")

N_CLASSES = 5
SUITES = {
    # suite name: (feature variant, domain adaptation enabled)
    "CF": ("cf", False),
    "NIF": ("nif", False),
    "NIF+DA": ("nif", True),
}


MMD_ESTIMATORS = ("unbiased", "biased", "rbf")


@dataclass
class TrainConfig:
    batch_size: int = 128
    lr: float = 5e-4
    max_epochs: int = 50
    patience: int = 10
    dropout: float = 0.1
    lambda_mmd: float = 1e4
    da_enabled: bool = False
    mmd_batch: int = 64
    mmd_estimator: str = "unbiased"
    seed: int = 0

    def __post_init__(self):
        if min(self.batch_size, self.max_epochs, self.patience, self.mmd_batch) < 1:
            raise ConfigError("batch sizes, epochs and patience must be positive")
        if self.lr <= 0 or self.lambda_mmd < 0:
            raise ConfigError("learning rate must be positive and lambda_mmd non-negative")
        if self.patience > self.max_epochs:
            raise ConfigError("patience cannot exceed max_epochs")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError("dropout must lie in [0, 1)")
        if self.mmd_estimator not in MMD_ESTIMATORS:
            raise ConfigError(f"mmd_estimator must be one of {MMD_ESTIMATORS}")


def _mmd_fn(name: str):
    return {"unbiased": nn.mmd_linear_unbiased, "biased": nn.mmd_linear,
            "rbf": nn.mmd_rbf}[name]


@dataclass
class RunReport:
    """Everything observed during one training run."""

    seed: int
    epochs_run: int = 0
    best_epoch: int = 0
    ce_per_epoch: list[float] = field(default_factory=list)
    mmd_per_epoch: list[float] = field(default_factory=list)
    total_per_epoch: list[float] = field(default_factory=list)
    healthy_dist_per_epoch: list[float] = field(default_factory=list)
    ce_samples: int = 0
    source_accuracy: float | None = None
    target_accuracy: float | None = None
    confusion: list[list[int]] | None = None
    wall_time: float = 0.0

    def summary_dict(self, include_wall_time: bool = False) -> dict:
        out = {
            "seed": self.seed,
            "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch,
            "ce_per_epoch": self.ce_per_epoch,
            "mmd_per_epoch": self.mmd_per_epoch,
            "total_per_epoch": self.total_per_epoch,
            "healthy_dist_per_epoch": self.healthy_dist_per_epoch,
            "source_accuracy": self.source_accuracy,
            "target_accuracy": self.target_accuracy,
            "confusion": self.confusion,
        }
        if include_wall_time:  # kept out of persisted summaries so files stay reproducible
            out["wall_time"] = self.wall_time
        return out


def check_window_array(X: np.ndarray, channels: int | None = None,
                       window_len: int | None = None) -> np.ndarray:
    """Validate a (n_windows, channels, window_len) float array."""
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 3:
        raise InputDomainError(f"expected 3-d window array, got shape {X.shape}")
    if channels is not None and X.shape[1] != channels:
        raise InputDomainError(f"expected {channels} channels, got {X.shape[1]}")
    if window_len is not None and X.shape[2] != window_len:
        raise InputDomainError(f"expected window length {window_len}, got {X.shape[2]}")
    if not np.all(np.isfinite(X)):
        raise InputDomainError("window array contains non-finite values")
    return X


def check_labels(y: np.ndarray, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.int32).ravel()
    if len(y) != n:
        raise InputDomainError(f"{n} windows but {len(y)} labels")
    if y.min() < 1 or y.max() > N_CLASSES:
        raise InputDomainError("labels must lie in 1..5")
    return y


def _feature_mean_distance(params: ModelParams, a: np.ndarray, b: np.ndarray) -> float:
    fa, _ = nn.forward_features(params, a)
    fb, _ = nn.forward_features(params, b)
    diff = fa.mean(axis=0, dtype=np.float64) - fb.mean(axis=0, dtype=np.float64)
    return float(np.sqrt(diff @ diff))


class FaultClassifier(ClassifierMixin, BaseEstimator):
    """Five-way propeller-fault classifier over window arrays.

    Scikit-learn style: hyperparameters in __init__, state learned by fit with
    trailing underscores. X is (n_windows, channels, window_len) float32 with
    labels in 1..5; `target_healthy` passes the label-1 target windows used by
    the MMD term when domain adaptation is on. Normalization statistics are
    fitted on the (source) training windows and reused everywhere.
    """

    def __init__(self, variant: str = "nif", window_len: int = 80, batch_size: int = 128,
                 lr: float = 5e-4, max_epochs: int = 50, patience: int = 10,
                 dropout: float = 0.1, lambda_mmd: float = 1e4, da_enabled: bool = False,
                 mmd_batch: int = 64, mmd_estimator: str = "unbiased", seed: int = 0):
        self.variant = variant
        self.window_len = window_len
        self.batch_size = batch_size
        self.lr = lr
        self.max_epochs = max_epochs
        self.patience = patience
        self.dropout = dropout
        self.lambda_mmd = lambda_mmd
        self.da_enabled = da_enabled
        self.mmd_batch = mmd_batch
        self.mmd_estimator = mmd_estimator
        self.seed = seed

    # -- fitting ------------------------------------------------------------

    def fit(self, X, y, target_healthy=None, params_init: ModelParams | None = None):
        cfg = TrainConfig(batch_size=self.batch_size, lr=self.lr, max_epochs=self.max_epochs,
                          patience=self.patience, dropout=self.dropout,
                          lambda_mmd=self.lambda_mmd, da_enabled=self.da_enabled,
                          mmd_batch=self.mmd_batch, mmd_estimator=self.mmd_estimator,
                          seed=self.seed)
        channels = VARIANT_CHANNELS[self.variant]
        X = check_window_array(X, channels, self.window_len)
        y = check_labels(y, len(X))
        if cfg.da_enabled:
            if target_healthy is None or len(target_healthy) == 0:
                raise ConfigError("domain adaptation requires non-empty target-healthy windows")
            target_healthy = check_window_array(target_healthy, channels, self.window_len)
        elif target_healthy is not None and len(target_healthy):
            target_healthy = check_window_array(target_healthy, channels, self.window_len)

        self.normalizer_ = WindowNormalizer().fit(X)
        Xn = self.normalizer_.transform(X)
        tgt_n = self.normalizer_.transform(target_healthy) if target_healthy is not None else None

        spec = ModelSpec(in_channels=channels, window_len=self.window_len)
        self.params_, self.adam_, self.report_ = _train_loop(Xn, y, tgt_n, cfg, spec, params_init)
        self.classes_ = np.arange(1, N_CLASSES + 1)
        return self

    # -- inference ----------------------------------------------------------

    def _forward_eval(self, X: np.ndarray, batch: int = 512):
        if not hasattr(self, "params_"):
            raise TrainingError("classifier is not fitted")
        X = check_window_array(X, self.params_.spec.in_channels, self.params_.spec.window_len)
        Xn = self.normalizer_.transform(X)
        logits = np.empty((len(Xn), N_CLASSES), dtype=np.float32)
        feats = np.empty((len(Xn), self.params_.spec.dense_units), dtype=np.float32)
        for start in range(0, len(Xn), batch):
            sl = slice(start, start + batch)
            lg, ft, _ = nn.model_forward(self.params_, Xn[sl], train=False)
            logits[sl] = lg
            feats[sl] = ft
        return logits, feats

    def predict_proba(self, X) -> np.ndarray:
        logits, _ = self._forward_eval(X)
        return nn.softmax(logits)

    def predict(self, X) -> np.ndarray:
        logits, _ = self._forward_eval(X)
        return logits.argmax(axis=1).astype(np.int32) + 1

    def transform_features(self, X) -> np.ndarray:
        """Post-relu dense1 activations, the transfer representation."""
        _, feats = self._forward_eval(X)
        return feats

    def score(self, X, y) -> float:
        y = check_labels(y, len(X))
        return float((self.predict(X) == y).mean())


def _train_loop(X: np.ndarray, y: np.ndarray, target_healthy: np.ndarray | None,
                cfg: TrainConfig, spec: ModelSpec, params_init: ModelParams | None):
    """Core seeded training loop; returns (best params, adam state, report)."""
    t_start = time.perf_counter()
    init_ss, shuffle_ss, drop_ss, da_ss = np.random.SeedSequence(cfg.seed).spawn(4)
    params = params_init.copy() if params_init is not None else init_params(
        spec, int(init_ss.generate_state(1)[0]))
    adam = AdamState.for_params(params)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    drop_rng = np.random.default_rng(drop_ss)
    da_rng = np.random.default_rng(da_ss)

    labels0 = y - 1  # internal 0-based classes
    use_da = cfg.da_enabled
    mmd_fn = _mmd_fn(cfg.mmd_estimator)
    src_healthy = X[y == 1]
    if use_da and len(src_healthy) == 0:
        raise ConfigError("domain adaptation requires source-healthy windows")
    probe_n = 512  # fixed eval subsets for the per-epoch alignment diagnostic
    probe_src = src_healthy[:probe_n] if len(src_healthy) else None
    probe_tgt = target_healthy[:probe_n] if target_healthy is not None else None

    report = RunReport(seed=cfg.seed)
    best_loss = np.inf
    best_params = params.copy()
    best_epoch = 0
    bad_epochs = 0

    for epoch in range(1, cfg.max_epochs + 1):
        perm = shuffle_rng.permutation(len(X))
        ce_sum = 0.0
        mmd_sum = 0.0
        n_batches = 0
        for start in range(0, len(X), cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            xb, yb = X[idx], labels0[idx]
            logits, _, cache = nn.model_forward(params, xb, train=True,
                                                dropout_rate=cfg.dropout, rng=drop_rng)
            ce, dlogits = nn.softmax_cross_entropy(logits, yb)
            grads = nn.model_backward(params, dlogits, cache)
            if use_da:
                si = da_rng.choice(len(src_healthy), size=min(cfg.mmd_batch, len(src_healthy)),
                                   replace=False)
                ti = da_rng.choice(len(target_healthy), size=min(cfg.mmd_batch,
                                                                 len(target_healthy)),
                                   replace=False)
                fs, cache_s = nn.forward_features(params, src_healthy[si])
                ft, cache_t = nn.forward_features(params, target_healthy[ti])
                mmd, ds, dt = mmd_fn(fs, ft)
                mmd_sum += mmd
                if cfg.lambda_mmd > 0:  # exact zero keeps the no-DA trajectory bit-identical
                    for name, g in nn.backward_features(params, cfg.lambda_mmd * ds,
                                                        cache_s).items():
                        grads[name] = grads[name] + g
                    for name, g in nn.backward_features(params, cfg.lambda_mmd * dt,
                                                        cache_t).items():
                        grads[name] = grads[name] + g
            adam_step(params, grads, adam, cfg.lr)
            ce_sum += ce
            report.ce_samples += len(idx)
            n_batches += 1

        epoch_ce = ce_sum / n_batches
        epoch_mmd = mmd_sum / n_batches if use_da else 0.0
        epoch_total = epoch_ce + cfg.lambda_mmd * epoch_mmd if use_da else epoch_ce
        report.ce_per_epoch.append(epoch_ce)
        report.mmd_per_epoch.append(epoch_mmd)
        report.total_per_epoch.append(epoch_total)
        report.epochs_run = epoch
        if use_da and probe_src is not None and probe_tgt is not None:
            report.healthy_dist_per_epoch.append(
                _feature_mean_distance(params, probe_src, probe_tgt))

        if best_loss - epoch_total >= 1e-6:
            best_loss = epoch_total
            best_params = params.copy()
            best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
        log.debug("epoch %d: ce=%.4f mmd=%.3e total=%.4f", epoch, epoch_ce, epoch_mmd,
                  epoch_total)
        if bad_epochs >= cfg.patience:
            break

    report.best_epoch = best_epoch
    report.wall_time = time.perf_counter() - t_start
    return best_params, adam, report


# ---------------------------------------------------------------------------
# spec-facing functional surface
# ---------------------------------------------------------------------------

def train(source: Dataset, target_healthy: Dataset | None, cfg: TrainConfig,
          params_init: ModelParams | None = None):
    """Train on a source dataset (plus target-healthy windows when DA is on).

    Returns (classifier, report); classifier.params_ holds the best-epoch
    ModelParams and classifier.normalizer_ the source-fitted statistics.
    """
    X, y = source.arrays()
    tgt = None
    if target_healthy is not None and len(target_healthy):
        bad = [w.label for w in target_healthy.windows if w.label != 1]
        if cfg.da_enabled and bad:
            raise ConfigError(f"target-healthy dataset contains non-healthy labels {set(bad)}")
        tgt, _ = target_healthy.arrays()
    clf = FaultClassifier(variant=source.variant, window_len=X.shape[2],
                          batch_size=cfg.batch_size, lr=cfg.lr, max_epochs=cfg.max_epochs,
                          patience=cfg.patience, dropout=cfg.dropout,
                          lambda_mmd=cfg.lambda_mmd, da_enabled=cfg.da_enabled,
                          mmd_batch=cfg.mmd_batch, mmd_estimator=cfg.mmd_estimator,
                          seed=cfg.seed)
    clf.fit(X, y, target_healthy=tgt, params_init=params_init)
    return clf, clf.report_


def evaluate(clf: FaultClassifier, dataset: Dataset) -> tuple[float, np.ndarray]:
    """Accuracy and 5x5 confusion matrix (rows true, columns predicted)."""
    X, y = dataset.arrays()
    pred = clf.predict(X)
    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for truth, guess in zip(y, pred):
        confusion[truth - 1, guess - 1] += 1
    accuracy = float(np.trace(confusion) / len(y))
    return accuracy, confusion


def run_experiment(datasets: dict[tuple[str, str], Dataset], cfg: TrainConfig,
                   n_runs: int = 10, base_seed: int = 0,
                   suites: dict[str, tuple[str, bool]] = SUITES) -> dict:
    """Train each suite n_runs times and aggregate source/target accuracies.

    `datasets` maps (variant, domain) to the dataset, e.g. ("nif", "source").
    Returns a summary dict with one record per suite x run plus aggregates.
    """
    records = []
    aggregates = {}
    run_seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(base_seed).spawn(n_runs)]
    for suite, (variant, da) in suites.items():
        source = datasets[(variant, "source")]
        target = datasets[(variant, "target")]
        tgt_healthy = healthy_subset(target)
        accs = {"source": [], "target": []}
        for run, seed in enumerate(run_seeds):
            run_cfg = TrainConfig(batch_size=cfg.batch_size, lr=cfg.lr,
                                  max_epochs=cfg.max_epochs, patience=cfg.patience,
                                  dropout=cfg.dropout, lambda_mmd=cfg.lambda_mmd,
                                  da_enabled=da, mmd_batch=cfg.mmd_batch,
                                  mmd_estimator=cfg.mmd_estimator, seed=seed)
            try:
                clf, report = train(source, tgt_healthy if da else None, run_cfg)
            except TrainingError as exc:
                raise TrainingError(f"suite {suite} run {run} (seed {seed}): {exc}") from exc
            src_acc, _ = evaluate(clf, source)
            tgt_acc, confusion = evaluate(clf, target)
            report.source_accuracy = src_acc
            report.target_accuracy = tgt_acc
            report.confusion = confusion.tolist()
            records.append({"suite": suite, "run": run, **report.summary_dict()})
            log.info("suite %-7s run %d: source %.4f target %.4f (%d epochs, best %d)",
                     suite, run, src_acc, tgt_acc, report.epochs_run, report.best_epoch)
            accs["source"].append(src_acc)
            accs["target"].append(tgt_acc)
        aggregates[suite] = {
            domain: {"mean": float(np.mean(v)), "std": float(np.std(v)), "runs": v}
            for domain, v in accs.items()
        }
    return {"aggregates": aggregates, "records": records, "n_runs": n_runs,
            "base_seed": base_seed, "run_seeds": run_seeds}


def save_checkpoint(clf: FaultClassifier, path) -> None:
    """Persist a fitted classifier: weights, Adam moments, normalizer, report."""
    if not hasattr(clf, "params_"):
        raise TrainingError("cannot checkpoint an unfitted classifier")
    extras = dict(clf.normalizer_.to_arrays())
    extras.update(clf.adam_.tensors())
    meta = {
        "variant": clf.variant,
        "adam": {"step": clf.adam_.step, "beta1": clf.adam_.beta1, "beta2": clf.adam_.beta2,
                 "eps": clf.adam_.eps},
        "train_config": {
            "batch_size": clf.batch_size, "lr": clf.lr, "max_epochs": clf.max_epochs,
            "patience": clf.patience, "dropout": clf.dropout, "lambda_mmd": clf.lambda_mmd,
            "da_enabled": clf.da_enabled, "mmd_batch": clf.mmd_batch,
            "mmd_estimator": clf.mmd_estimator, "seed": clf.seed,
        },
        "report": clf.report_.summary_dict(),
    }
    nn.save_params(clf.params_, path, extra_tensors=extras, meta=meta)


def load_checkpoint(path) -> FaultClassifier:
    """Rebuild a fitted classifier from a checkpoint container."""
    params, extras, meta = nn.load_params(path)
    tc = meta["train_config"]
    clf = FaultClassifier(variant=meta["variant"], window_len=params.spec.window_len,
                          batch_size=tc["batch_size"], lr=tc["lr"], max_epochs=tc["max_epochs"],
                          patience=tc["patience"], dropout=tc["dropout"],
                          lambda_mmd=tc["lambda_mmd"], da_enabled=tc["da_enabled"],
                          mmd_batch=tc["mmd_batch"],
                          mmd_estimator=tc.get("mmd_estimator", "unbiased"), seed=tc["seed"])
    clf.params_ = params
    clf.normalizer_ = WindowNormalizer.from_arrays(
        {k: extras[k] for k in ("norm_mean", "norm_std")})
    adam = AdamState(step=meta["adam"]["step"], beta1=meta["adam"]["beta1"],
                     beta2=meta["adam"]["beta2"], eps=meta["adam"]["eps"])
    for name in params.tensors:
        adam.m[name] = extras[f"adam_m_{name}"]
        adam.v[name] = extras[f"adam_v_{name}"]
    clf.adam_ = adam
    rep = meta["report"]
    clf.report_ = RunReport(seed=rep["seed"], epochs_run=rep["epochs_run"],
                            best_epoch=rep["best_epoch"], ce_per_epoch=rep["ce_per_epoch"],
                            mmd_per_epoch=rep["mmd_per_epoch"],
                            total_per_epoch=rep["total_per_epoch"],
                            healthy_dist_per_epoch=rep["healthy_dist_per_epoch"],
                            source_accuracy=rep["source_accuracy"],
                            target_accuracy=rep["target_accuracy"],
                            confusion=rep["confusion"])
    clf.classes_ = np.arange(1, N_CLASSES + 1)
    return clf


def _experiment_worker(args):
    """One (suite, run) training; module-level so process pools can pickle it."""
    from .dataset import load as load_dataset

    suite, run, seed, da, cfg_kwargs, source_path, target_path = args
    source = load_dataset(source_path)
    target = load_dataset(target_path)
    cfg = TrainConfig(da_enabled=da, seed=seed, **cfg_kwargs)
    clf, report = train(source, healthy_subset(target) if da else None, cfg)
    src_acc, _ = evaluate(clf, source)
    tgt_acc, confusion = evaluate(clf, target)
    report.source_accuracy = src_acc
    report.target_accuracy = tgt_acc
    report.confusion = confusion.tolist()
    return {"suite": suite, "run": run, **report.summary_dict()}


def run_experiment_from_paths(dataset_paths: dict[tuple[str, str], str], cfg: TrainConfig,
                              n_runs: int = 10, base_seed: int = 0, jobs: int = 1,
                              suites: dict[str, tuple[str, bool]] = SUITES) -> dict:
    """run_experiment against on-disk datasets, optionally across processes.

    Results are aggregated in (suite, run) order, so the summary is identical
    whatever the completion order or the jobs count.
    """
    run_seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(base_seed).spawn(n_runs)]
    cfg_kwargs = {"batch_size": cfg.batch_size, "lr": cfg.lr, "max_epochs": cfg.max_epochs,
                  "patience": cfg.patience, "dropout": cfg.dropout,
                  "lambda_mmd": cfg.lambda_mmd, "mmd_batch": cfg.mmd_batch,
                  "mmd_estimator": cfg.mmd_estimator}
    tasks = []
    for suite, (variant, da) in suites.items():
        for run, seed in enumerate(run_seeds):
            tasks.append((suite, run, seed, da, cfg_kwargs,
                          str(dataset_paths[(variant, "source")]),
                          str(dataset_paths[(variant, "target")])))
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_experiment_worker, tasks))
    else:
        records = []
        for task in tasks:
            rec = _experiment_worker(task)
            log.info("suite %-7s run %d: source %.4f target %.4f", rec["suite"], rec["run"],
                     rec["source_accuracy"], rec["target_accuracy"])
            records.append(rec)
    records.sort(key=lambda r: (list(suites).index(r["suite"]), r["run"]))
    aggregates = {}
    for suite in suites:
        rows = [r for r in records if r["suite"] == suite]
        aggregates[suite] = {
            domain: {"mean": float(np.mean([r[f"{domain}_accuracy"] for r in rows])),
                     "std": float(np.std([r[f"{domain}_accuracy"] for r in rows])),
                     "runs": [r[f"{domain}_accuracy"] for r in rows]}
            for domain in ("source", "target")
        }
    return {"aggregates": aggregates, "records": records, "n_runs": n_runs,
            "base_seed": base_seed, "run_seeds": run_seeds}


def export_features(clf: FaultClassifier, datasets: list[Dataset], path) -> None:
    """Write dense1 features with labels and domain tags in container format."""
    from .container import save_container

    feats, labels, domains = [], [], []
    counts = {}
    for ds in datasets:
        X, y = ds.arrays()
        feats.append(clf.transform_features(X))
        labels.append(y)
        domains.append(np.full(len(y), 0 if ds.domain == "source" else 1, dtype=np.int32))
        counts[ds.domain] = counts.get(ds.domain, 0) + len(y)
    meta = {"feature_dim": int(feats[0].shape[1]), "counts": counts,
            "domain_codes": {"source": 0, "target": 1}}
    save_container(path, "features", {
        "features": np.concatenate(feats).astype(np.float32),
        "labels": np.concatenate(labels).astype(np.int32),
        "domains": np.concatenate(domains).astype(np.int32),
    }, meta)
