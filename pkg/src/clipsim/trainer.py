"""Experiment orchestration: training stages, baselines, corruption sweep.

Stage 1 fits a linear embedding head on stored clip features; stage 2 fits
the aggregation scorer on frozen features. The top-t projection baseline
shares the same batching and optimizer so comparisons isolate the estimator.
"""

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .aggregation import (
    ProjectionLayer,
    aggregate_learned,
    aggregate_learned_train_backward,
    aggregate_learned_train_forward,
    learned_similarity_matrix,
    mean_similarity_matrix,
    top_t_batch_backward,
    top_t_batch_forward,
    top_t_similarity_matrix,
)
from .errors import (
    ClipSimError,
    ConfigError,
    DataError,
    DivergenceError,
    InvalidArgumentError,
)
from .losses import OptimizerState, amsgrad_step, lr_schedule, softmax_ce_loss, triplet_hard_loss
from .metrics import EvaluationReport, evaluate
from .sampling import sample_pk_batch
from .scoring import ScoringNet, kaiming_uniform
from .store import FeatureStore, read_store, select_split
from .synthgen import SynthConfig, corrupt_sequence, generate

# stream tags: every consumer of the experiment seed gets its own child stream
_INIT, _BATCH, _DROPOUT, _CORRUPT, _CLIP = 1, 2, 3, 4, 5

TOP_T_VARIANTS = ("eval-only", "train-eval")
EVAL_METHODS = ("learned", "mean", "topt")


@dataclass(frozen=True)
class ExperimentConfig:
    """Knobs shared by all training runs and the sweep harness.

    Margins, dropout, weight decay, and the optimizer constants keep their
    published values; learning rates and epoch counts are sized for the
    synthetic stores this package trains on.
    """

    p: int = 8
    k: int = 4
    epochs: int = 12
    lr: float = 1e-3
    lr_decay_epochs: tuple = ()
    lr_decay_factor: float = 10.0
    margin: float = 1.0
    head_margin: float = 0.3
    head_lr: float = 1e-2
    hidden: int = 128
    dropout: float = 0.5
    weight_decay: float = 5e-4
    seed: int = 0
    max_corrupt_clips: int = 0
    corruption_gamma: float = 0.85
    reroll_corruption: bool = True
    mc_levels: tuple = (0, 4, 7)
    t_values: tuple = (20.0, 50.0, 100.0)
    synth: SynthConfig | None = None
    store_path: str | None = None

    def __post_init__(self):
        if self.p < 1 or self.k < 1:
            raise ConfigError("p and k must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.lr <= 0 or self.head_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.hidden < 1:
            raise ConfigError("hidden width must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout={self.dropout} outside [0, 1)")
        if self.margin < 0 or self.head_margin < 0:
            raise ConfigError("margins must be >= 0")
        if self.max_corrupt_clips < 0:
            raise ConfigError("max_corrupt_clips must be >= 0")
        if any(m < 0 for m in self.mc_levels):
            raise ConfigError("corruption levels must be >= 0")
        if any(not 0.0 < t <= 100.0 for t in self.t_values):
            raise ConfigError("t values must lie in (0, 100]")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lr_decay_epochs"] = list(self.lr_decay_epochs)
        out["mc_levels"] = list(self.mc_levels)
        out["t_values"] = list(self.t_values)
        out["synth"] = self.synth.to_dict() if self.synth is not None else None
        return out


@dataclass
class TrainResult:
    model: object
    logs: list
    kind: str
    checkpoint_path: str | None = None
    log_path: str | None = None
    extra: dict = field(default_factory=dict)

    def epoch_losses(self) -> list:
        totals = {}
        for rec in self.logs:
            totals.setdefault(rec["epoch"], []).append(rec["loss"])
        return [float(np.mean(totals[e])) for e in sorted(totals)]


@dataclass
class SweepResult:
    rows: list
    headline: dict
    csv_path: str | None = None
    json_path: str | None = None
    models: dict = field(default_factory=dict)
    stores: dict = field(default_factory=dict)


def derived_seed(*parts) -> int:
    """Deterministic child seed from integer coordinates."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0])


def _stream(*parts) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(parts)))


def _resolve_store(store) -> FeatureStore:
    if isinstance(store, FeatureStore):
        return store
    return read_store(store)


def _normalized_feats(tracklet) -> np.ndarray:
    f = np.asarray(tracklet.clip_features, dtype=np.float64)
    norms = np.linalg.norm(f, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise DataError(f"tracklet {tracklet.tracklet_id} has a zero-norm clip")
    return f / norms


def _train_split(store: FeatureStore) -> list:
    train = select_split(store, "train")
    if not train:
        raise DataError("store has no train tracklets")
    counts = {t.num_clips for t in train}
    if len(counts) != 1:
        raise DataError(f"train tracklets disagree on clip count: {sorted(counts)}")
    return train


def _train_pool(train, cfg: ExperimentConfig, epoch: int) -> list:
    """Per-epoch working copy of the train split, corrupted if configured."""
    if cfg.max_corrupt_clips == 0:
        return train
    rng = _stream(cfg.seed, _CORRUPT, epoch if cfg.reroll_corruption else 0)
    return [
        corrupt_sequence(t, cfg.max_corrupt_clips, cfg.corruption_gamma, rng) for t in train
    ]


def _ordered_pairs(n: int):
    ii, jj = np.where(~np.eye(n, dtype=bool))  # row-major, diagonal removed
    return ii, jj


def _write_logs(logs: list, path: Path) -> None:
    with open(path, "w") as fh:
        for rec in logs:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _abort_divergent(out_dir, payload, message):
    if out_dir is not None:
        dump = Path(out_dir) / "divergence.json"
        with open(dump, "w") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
        message = f"{message} (state dumped to {dump})"
    raise DivergenceError(message)


def _check_frozen(store, checksum):
    if store.feature_checksum != checksum:
        raise ClipSimError("stored features changed during training; they must stay frozen")


def train_aggregation(store, cfg: ExperimentConfig, out_dir=None) -> TrainResult:
    """Fit the scoring net on frozen clip features with batch-hard triplets.

    Each iteration draws a PK batch, forms every ordered pair of distinct
    tracklets in it, aggregates learned similarities in one step-locked
    batch, and treats negated similarities as distances for the triplet
    loss. Only scoring-net parameters receive updates.
    """
    store = _resolve_store(store)
    train = _train_split(store)
    checksum = store.feature_checksum

    net = ScoringNet(
        in_dim=store.feature_dim,
        hidden=cfg.hidden,
        dropout_p=cfg.dropout,
        rng=_stream(cfg.seed, _INIT, 0),
    )
    state = OptimizerState(net.params, weight_decay=cfg.weight_decay)
    bs = cfg.p * cfg.k
    n_batches = max(1, len(train) // bs)
    ii, jj = _ordered_pairs(bs)
    logs = []

    net.train()
    for epoch in range(cfg.epochs):
        lr = lr_schedule(epoch, cfg.lr, cfg.lr_decay_epochs, cfg.lr_decay_factor)
        pool = _train_pool(train, cfg, epoch)
        for step in range(n_batches):
            bseed = derived_seed(cfg.seed, _BATCH, epoch, step)
            batch = sample_pk_batch(pool, cfg.p, cfg.k, np.random.default_rng(bseed))
            feats = np.stack([_normalized_feats(t) for t in batch.tracklets])

            sims, tape = aggregate_learned_train_forward(
                feats[ii], feats[jj], net, derived_seed(cfg.seed, _DROPOUT, epoch, step)
            )
            dists = np.zeros((bs, bs))
            dists[ii, jj] = -sims
            loss, dloss = triplet_hard_loss(dists, batch.labels, cfg.margin)
            if not np.isfinite(loss):
                _abort_divergent(
                    out_dir,
                    {
                        "stage": "aggregation",
                        "epoch": epoch,
                        "step": step,
                        "loss": repr(float(loss)),
                        "lr": lr,
                        "param_norms": {k: float(np.linalg.norm(v)) for k, v in net.params.items()},
                    },
                    f"training loss non-finite at epoch {epoch} step {step}",
                )
            grads = aggregate_learned_train_backward(net, tape, -dloss[ii, jj])
            del tape
            amsgrad_step(net.params, grads, state, lr)
            logs.append(
                {"epoch": epoch, "step": step, "loss": float(loss), "lr": float(lr), "batch_seed": bseed}
            )
    net.eval()
    _check_frozen(store, checksum)

    ckpt_path = log_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        ckpt_path = str(out_dir / "scoring_net.csn")
        log_path = str(out_dir / "train_aggregation.jsonl")
        net.save(ckpt_path, extra={"stage": "aggregation", "seed": cfg.seed})
        _write_logs(logs, log_path)
    return TrainResult(model=net, logs=logs, kind="aggregation",
                       checkpoint_path=ckpt_path, log_path=log_path)


def train_top_t(store, cfg: ExperimentConfig, variant="eval-only", t_percent=100.0,
                out_dir=None) -> TrainResult:
    """Fit the projection baseline under the same harness as the scorer.

    The eval-only variant trains against the all-pairs mean similarity and
    leaves top-t selection to evaluation time; train-eval applies the same
    selection during training, so gradients flow only through chosen pairs.
    """
    if variant not in TOP_T_VARIANTS:
        raise InvalidArgumentError(f"variant {variant!r} not one of {TOP_T_VARIANTS}")
    store = _resolve_store(store)
    train = _train_split(store)
    checksum = store.feature_checksum
    t_train = 100.0 if variant == "eval-only" else float(t_percent)
    if not 0.0 < t_train <= 100.0:
        raise InvalidArgumentError(f"t_percent={t_percent} outside (0, 100]")

    proj = ProjectionLayer(store.feature_dim)
    state = OptimizerState(proj.params, weight_decay=cfg.weight_decay)
    bs = cfg.p * cfg.k
    n_batches = max(1, len(train) // bs)
    ii, jj = _ordered_pairs(bs)
    pair_list = list(zip(ii.tolist(), jj.tolist()))
    logs = []

    for epoch in range(cfg.epochs):
        lr = lr_schedule(epoch, cfg.lr, cfg.lr_decay_epochs, cfg.lr_decay_factor)
        pool = _train_pool(train, cfg, epoch)
        for step in range(n_batches):
            bseed = derived_seed(cfg.seed, _BATCH, epoch, step)
            batch = sample_pk_batch(pool, cfg.p, cfg.k, np.random.default_rng(bseed))
            feats = np.stack([_normalized_feats(t) for t in batch.tracklets])

            sims, tape = top_t_batch_forward(feats, proj, pair_list, t_train)
            dists = np.zeros((bs, bs))
            dists[ii, jj] = -sims
            loss, dloss = triplet_hard_loss(dists, batch.labels, cfg.margin)
            if not np.isfinite(loss):
                _abort_divergent(
                    out_dir,
                    {
                        "stage": "top-t",
                        "variant": variant,
                        "epoch": epoch,
                        "step": step,
                        "loss": repr(float(loss)),
                        "lr": lr,
                        "param_norms": {k: float(np.linalg.norm(v)) for k, v in proj.params.items()},
                    },
                    f"training loss non-finite at epoch {epoch} step {step}",
                )
            grads = top_t_batch_backward(proj, tape, -dloss[ii, jj])
            amsgrad_step(proj.params, grads, state, lr)
            logs.append(
                {"epoch": epoch, "step": step, "loss": float(loss), "lr": float(lr),
                 "batch_seed": bseed, "variant": variant, "t_percent": t_train}
            )
    _check_frozen(store, checksum)

    ckpt_path = log_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        ckpt_path = str(out_dir / "projection.csn")
        log_path = str(out_dir / "train_top_t.jsonl")
        proj.save(ckpt_path, extra={"variant": variant, "t_percent": t_train, "seed": cfg.seed})
        _write_logs(logs, log_path)
    return TrainResult(model=proj, logs=logs, kind="top-t",
                       checkpoint_path=ckpt_path, log_path=log_path,
                       extra={"variant": variant, "t_percent": t_train})


def train_embedding_head(store, cfg: ExperimentConfig, use_triplet=True, use_ce=True,
                         out_dir=None) -> TrainResult:
    """Fit an affine head plus classifier on stored clip features.

    Joint objective: batch-hard triplet on euclidean embedding distances
    and softmax cross-entropy over train identities; either term can be
    switched off. Batches are one random clip from each tracklet of a PK
    draw.
    """
    if not use_triplet and not use_ce:
        raise ConfigError("at least one of the loss terms must stay enabled")
    store = _resolve_store(store)
    train = _train_split(store)
    checksum = store.feature_checksum
    pids = sorted({t.person_id for t in train})
    if len(pids) < 2:
        raise DataError(f"need at least 2 identities to train a classifier, found {len(pids)}")
    label_index = {pid: i for i, pid in enumerate(pids)}
    d, n_classes = store.feature_dim, len(pids)

    params = {
        "w": np.eye(d),
        "b": np.zeros(d),
        "wc": kaiming_uniform(d, (d, n_classes), _stream(cfg.seed, _INIT, 2)),
        "bc": np.zeros(n_classes),
    }
    state = OptimizerState(params, weight_decay=cfg.weight_decay)
    bs = cfg.p * cfg.k
    n_batches = max(1, len(train) // bs)
    logs = []

    for epoch in range(cfg.epochs):
        lr = lr_schedule(epoch, cfg.head_lr, cfg.lr_decay_epochs, cfg.lr_decay_factor)
        pool = _train_pool(train, cfg, epoch)
        for step in range(n_batches):
            bseed = derived_seed(cfg.seed, _BATCH, epoch, step)
            batch = sample_pk_batch(pool, cfg.p, cfg.k, np.random.default_rng(bseed))
            crng = _stream(cfg.seed, _CLIP, epoch, step)
            f = np.stack([
                _normalized_feats(t)[int(crng.integers(t.num_clips))] for t in batch.tracklets
            ])
            e = f @ params["w"] + params["b"]

            de = np.zeros_like(e)
            grads = {k: np.zeros_like(v) for k, v in params.items()}
            loss_t = loss_c = 0.0
            if use_triplet:
                diff = e[:, None, :] - e[None, :, :]
                dmat = np.linalg.norm(diff, axis=2)
                loss_t, g = triplet_hard_loss(dmat, batch.labels, cfg.head_margin)
                gsym = g + g.T
                unit = np.divide(diff, dmat[:, :, None],
                                 out=np.zeros_like(diff), where=dmat[:, :, None] > 1e-12)
                de += (gsym[:, :, None] * unit).sum(axis=1)
            if use_ce:
                logits = e @ params["wc"] + params["bc"]
                targets = np.array([label_index[p] for p in batch.labels], dtype=np.int64)
                loss_c, dlogits = softmax_ce_loss(logits, targets)
                grads["wc"] = e.T @ dlogits
                grads["bc"] = dlogits.sum(axis=0)
                de += dlogits @ params["wc"].T
            loss = loss_t + loss_c
            if not np.isfinite(loss):
                _abort_divergent(
                    out_dir,
                    {
                        "stage": "embedding-head",
                        "epoch": epoch,
                        "step": step,
                        "loss": repr(float(loss)),
                        "lr": lr,
                        "param_norms": {k: float(np.linalg.norm(v)) for k, v in params.items()},
                    },
                    f"training loss non-finite at epoch {epoch} step {step}",
                )
            grads["w"] = f.T @ de
            grads["b"] = de.sum(axis=0)
            amsgrad_step(params, grads, state, lr)
            logs.append(
                {"epoch": epoch, "step": step, "loss": float(loss),
                 "triplet": float(loss_t), "ce": float(loss_c),
                 "lr": float(lr), "batch_seed": bseed}
            )
    _check_frozen(store, checksum)

    accuracy = None
    if use_ce:
        hits = total = 0
        for t in train:
            e = _normalized_feats(t) @ params["w"] + params["b"]
            pred = np.argmax(e @ params["wc"] + params["bc"], axis=1)
            hits += int(np.sum(pred == label_index[t.person_id]))
            total += t.num_clips
        accuracy = hits / total

    ckpt_path = log_path = None
    if out_dir is not None:
        from . import checkpoint

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        ckpt_path = str(out_dir / "embedding_head.csn")
        log_path = str(out_dir / "train_embedding_head.jsonl")
        checkpoint.write_tensors(
            ckpt_path, params,
            {"kind": "embedding_head", "dim": d, "classes": [int(p) for p in pids],
             "seed": cfg.seed},
        )
        _write_logs(logs, log_path)
    return TrainResult(model=params, logs=logs, kind="embedding-head",
                       checkpoint_path=ckpt_path, log_path=log_path,
                       extra={"train_accuracy": accuracy, "classes": pids,
                              "use_triplet": use_triplet, "use_ce": use_ce})


# ---------------------------------------------------------------------------
# evaluation over a store


def _similarity_rows(method, q_feats, g_feats, net, projection, t_percent, normalize):
    if method == "learned":
        return learned_similarity_matrix(q_feats, g_feats, net)
    if method == "mean":
        return mean_similarity_matrix(q_feats, g_feats, normalize=normalize)
    if method == "topt":
        return top_t_similarity_matrix(q_feats, g_feats, projection, t_percent)
    raise InvalidArgumentError(f"method {method!r} not one of {EVAL_METHODS}")


def _chunk_worker(args):
    return _similarity_rows(*args)


def evaluate_store(store, method, net=None, projection=None, t_percent=100.0,
                   normalize=True, ranks=(1, 5, 20), jobs=1) -> EvaluationReport:
    """Retrieval evaluation of one estimator over a store's query/gallery.

    jobs > 1 splits the query side into contiguous chunks scored in worker
    processes; rows are concatenated in query order, so the result is
    identical to a single-process run.
    """
    store = _resolve_store(store)
    queries = select_split(store, "query")
    galleries = select_split(store, "gallery")
    if not queries or not galleries:
        raise DataError("store needs both query and gallery splits for evaluation")
    if method == "learned" and net is None:
        raise InvalidArgumentError("learned evaluation needs a scoring net")
    if method == "topt" and projection is None:
        projection = ProjectionLayer(store.feature_dim)

    if method == "mean":
        q_feats = [np.asarray(t.clip_features, dtype=np.float64) for t in queries]
        g_feats = [np.asarray(t.clip_features, dtype=np.float64) for t in galleries]
    else:
        q_feats = [_normalized_feats(t) for t in queries]
        g_feats = [_normalized_feats(t) for t in galleries]

    if jobs <= 1 or len(q_feats) < 2:
        sims = _similarity_rows(method, q_feats, g_feats, net, projection, t_percent, normalize)
    else:
        bounds = np.linspace(0, len(q_feats), min(jobs, len(q_feats)) + 1).astype(int)
        tasks = [
            (method, q_feats[a:b], g_feats, net, projection, t_percent, normalize)
            for a, b in zip(bounds[:-1], bounds[1:])
            if b > a
        ]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            sims = np.vstack(list(pool.map(_chunk_worker, tasks)))

    config = {"method": method, "exclude_same_camera": True}
    if method == "topt":
        config["t_percent"] = float(t_percent)
    if method == "mean":
        config["normalize"] = bool(normalize)
    return evaluate(
        sims,
        [t.person_id for t in queries],
        [t.camera_id for t in queries],
        [t.person_id for t in galleries],
        [t.camera_id for t in galleries],
        ranks=ranks,
        config=config,
    )


# ---------------------------------------------------------------------------
# experiments


def corruption_sweep(cfg: ExperimentConfig, out_dir=None, methods=("learned", "topt-e"),
                     train_in_place=True, checkpoint_dir=None, jobs=1) -> SweepResult:
    """Train and evaluate every (method, t, corruption level) cell.

    Each corruption level gets its own synthetic store (eval splits
    corrupted at generation, train split corrupted per epoch). Failed or
    missing cells are recorded as absent and the sweep continues. The
    headline compares learned against the best baseline cell at the
    heaviest corruption level.
    """
    if cfg.synth is None:
        raise ConfigError("corruption_sweep needs cfg.synth as the store template")
    for m in methods:
        if m not in ("learned", "topt-e", "topt-te"):
            raise InvalidArgumentError(f"unknown sweep method {m!r}")
    if not train_in_place and checkpoint_dir is None:
        raise ConfigError("checkpoint_dir is required when train_in_place is off")

    rows, models, stores = [], {}, {}
    for mc in cfg.mc_levels:
        synth = replace(cfg.synth, max_corrupt_clips=mc)
        store = generate(synth)
        stores[mc] = store
        run_cfg = replace(cfg, max_corrupt_clips=mc, synth=synth)

        if "learned" in methods:
            try:
                if train_in_place:
                    net = train_aggregation(store, run_cfg).model
                else:
                    net = ScoringNet.load(Path(checkpoint_dir) / f"learned_mc{mc}.csn")
                report = evaluate_store(store, "learned", net=net, jobs=jobs)
                models[("learned", mc)] = net
                rows.append({"method": "learned", "t": None, "max_corrupt": mc,
                             "mAP": report.mean_ap, "cmc1": report.cmc[1], "status": "ok"})
            except (ClipSimError, OSError) as exc:
                rows.append({"method": "learned", "t": None, "max_corrupt": mc,
                             "mAP": None, "cmc1": None, "status": "absent",
                             "error": str(exc)})

        for method in methods:
            if method == "learned":
                continue
            variant = "eval-only" if method == "topt-e" else "train-eval"
            try:
                # eval-only trains one projection per level; train-eval needs one per t
                projections = {}
                if not train_in_place:
                    loaded = ProjectionLayer.load(Path(checkpoint_dir) / f"{method}_mc{mc}.csn")
                    projections = {t: loaded for t in cfg.t_values}
                elif variant == "eval-only":
                    shared = train_top_t(store, run_cfg, variant).model
                    projections = {t: shared for t in cfg.t_values}
                else:
                    projections = {t: train_top_t(store, run_cfg, variant, t_percent=t).model
                                   for t in cfg.t_values}
            except (ClipSimError, OSError) as exc:
                for t in cfg.t_values:
                    rows.append({"method": method, "t": t, "max_corrupt": mc,
                                 "mAP": None, "cmc1": None, "status": "absent",
                                 "error": str(exc)})
                continue
            for t in cfg.t_values:
                try:
                    proj = projections[t]
                    report = evaluate_store(store, "topt", projection=proj, t_percent=t,
                                            jobs=jobs)
                    models[(method, mc, t)] = proj
                    rows.append({"method": method, "t": t, "max_corrupt": mc,
                                 "mAP": report.mean_ap, "cmc1": report.cmc[1], "status": "ok"})
                except (ClipSimError, OSError) as exc:
                    rows.append({"method": method, "t": t, "max_corrupt": mc,
                                 "mAP": None, "cmc1": None, "status": "absent",
                                 "error": str(exc)})

    headline = _sweep_headline(rows, max(cfg.mc_levels) if cfg.mc_levels else None)
    csv_path = json_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = str(out_dir / "sweep.csv")
        json_path = str(out_dir / "sweep.json")
        _write_sweep_csv(rows, csv_path)
        with open(json_path, "w") as fh:
            json.dump({"rows": rows, "headline": headline, "config": cfg.to_dict()},
                      fh, sort_keys=True, indent=2)
            fh.write("\n")
    return SweepResult(rows=rows, headline=headline, csv_path=csv_path,
                       json_path=json_path, models=models, stores=stores)


def _sweep_headline(rows, mc_max):
    """Learned-vs-best-baseline mAP gap at the heaviest corruption level."""
    headline = {"max_corrupt": mc_max, "learned_mAP": None,
                "best_baseline_mAP": None, "best_baseline_t": None, "gap": None}
    if mc_max is None:
        return headline
    for row in rows:
        if row["max_corrupt"] != mc_max or row["status"] != "ok":
            continue
        if row["method"] == "learned":
            headline["learned_mAP"] = row["mAP"]
        elif headline["best_baseline_mAP"] is None or row["mAP"] > headline["best_baseline_mAP"]:
            headline["best_baseline_mAP"] = row["mAP"]
            headline["best_baseline_t"] = row["t"]
    if headline["learned_mAP"] is not None and headline["best_baseline_mAP"] is not None:
        headline["gap"] = headline["learned_mAP"] - headline["best_baseline_mAP"]
    return headline


def _write_sweep_csv(rows, path):
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["method", "t", "max_corrupt", "mAP", "cmc1", "status", "error"]
        )
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in writer.fieldnames})


def multiclip_trend(synth_cfg: SynthConfig, m_values=(1, 2, 4, 8), ranks=(1, 5, 20)) -> list:
    """Mean-pool retrieval quality as the clip count per tracklet grows."""
    if any(m < 1 for m in m_values):
        raise InvalidArgumentError("clip counts must be >= 1")
    rows = []
    for m in m_values:
        store = generate(replace(synth_cfg, clips_per_tracklet=m))
        for normalize in (True, False):
            report = evaluate_store(store, "mean", normalize=normalize, ranks=ranks)
            rows.append({"m": int(m), "normalized": bool(normalize),
                         "mAP": report.mean_ap, "cmc1": report.cmc[1]})
    return rows


# ---------------------------------------------------------------------------
# importance inspection


def _split_masks(tracklets):
    masks = []
    for t in tracklets:
        if t.corrupted_mask is None:
            masks.append(np.zeros(t.num_clips, dtype=bool))
        else:
            masks.append(np.asarray(t.corrupted_mask, dtype=bool))
    return np.stack(masks)


def importance_summary(net: ScoringNet, store) -> dict:
    """Mean importance split by whether a clip pair touches a corrupted clip.

    Runs the trained scorer over every query x gallery sequence pair and
    groups the per-step weights by the stored corruption masks. Besides the
    grouping over all sequence pairs, the ``matched_*`` fields restrict it to
    same-identity pairs, where downweighting an unreliable clip pair is what
    moves the aggregate; mismatched pairs carry no such incentive and dilute
    the contrast.
    """
    store = _resolve_store(store)
    queries = select_split(store, "query")
    galleries = select_split(store, "gallery")
    if not queries or not galleries:
        raise DataError("importance summary needs query and gallery splits")
    q_feats = [_normalized_feats(t) for t in queries]
    g_feats = [_normalized_feats(t) for t in galleries]
    _, alphas = learned_similarity_matrix(q_feats, g_feats, net, return_alphas=True)

    qm = _split_masks(queries)  # (nq, mq)
    gm = _split_masks(galleries)  # (ng, mg)
    # clip-pair flag grid matches the canonical row-major pair order
    flags = np.logical_or(qm[:, None, :, None], gm[None, :, None, :])
    flags = flags.reshape(alphas.shape)
    q_pids = np.array([t.person_id for t in queries])
    g_pids = np.array([t.person_id for t in galleries])
    matched = np.broadcast_to((q_pids[:, None] == g_pids[None, :])[:, :, None],
                              alphas.shape)

    def grouped(scope, prefix):
        corrupted = alphas[scope & flags]
        clean = alphas[scope & ~flags]
        stats = {
            f"{prefix}corrupted_pairs": int(corrupted.size),
            f"{prefix}clean_pairs": int(clean.size),
            f"{prefix}mean_alpha_corrupted": float(corrupted.mean()) if corrupted.size else None,
            f"{prefix}mean_alpha_clean": float(clean.mean()) if clean.size else None,
            f"{prefix}ratio": None,
        }
        if corrupted.size and clean.size and stats[f"{prefix}mean_alpha_corrupted"] > 0:
            stats[f"{prefix}ratio"] = (stats[f"{prefix}mean_alpha_clean"]
                                       / stats[f"{prefix}mean_alpha_corrupted"])
        return stats

    out = {
        "sequence_pairs": int(alphas.shape[0] * alphas.shape[1]),
        "clip_pairs": int(alphas.size),
    }
    out.update(grouped(np.ones_like(matched), ""))
    out.update(grouped(matched, "matched_"))
    return out


def pair_importance(net: ScoringNet, store, query_id: str, gallery_id: str) -> list:
    """Per clip-pair importance records for one sequence pair, best first."""
    store = _resolve_store(store)
    by_id = {t.tracklet_id: t for t in store.tracklets}
    if query_id not in by_id:
        raise DataError(f"tracklet {query_id!r} not in store")
    if gallery_id not in by_id:
        raise DataError(f"tracklet {gallery_id!r} not in store")
    q, g = by_id[query_id], by_id[gallery_id]
    net.eval()
    trace = aggregate_learned(_normalized_feats(q), _normalized_feats(g), net)

    qmask = _split_masks([q])[0]
    gmask = _split_masks([g])[0]
    records = []
    for t, (a, b) in enumerate(trace.pair_order):
        records.append({
            "query_tracklet": query_id,
            "gallery_tracklet": gallery_id,
            "query_clip": int(a),
            "gallery_clip": int(b),
            "alpha": float(trace.alphas[t]),
            "cosine": float(trace.cosines[t]),
            "query_clip_corrupted": bool(qmask[a]),
            "gallery_clip_corrupted": bool(gmask[b]),
        })
    records.sort(key=lambda r: -r["alpha"])
    for rank, rec in enumerate(records, start=1):
        rec["rank"] = rank
    return records
