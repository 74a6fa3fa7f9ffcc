"""Dataset-level learning tasks.

Two tasks drive meta-feature learning: deciding whether two patches come from
the same source dataset (Siamese setup, both patches through one model), and
deciding which of two k-NN hyper-parameter configurations performs better on
a patch (model + small ranking head on top of the meta-features). A frozen
extractor can also feed a small regressor predicting the accuracy itself.

All sampling is seeded and training loops are single-threaded, so identical
configs reproduce identical metric histories.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import nets
from .autodiff import Tensor, concat
from .data import LabeledDataset, normalize_features, sample_patch, split_seed
from .errors import ContractError, DomainError
from .metafeatures import extract_handcrafted

log = logging.getLogger("dida")

KNN_MAX_NEIGHBORS = 100


@dataclass(frozen=True)
class HyperConfigKnn:
    n_neighbors: int
    p: int
    weights: str

    def __post_init__(self):
        if not 1 <= self.n_neighbors <= KNN_MAX_NEIGHBORS:
            raise DomainError("n_neighbors must lie in [1, 100]")
        if self.p not in (1, 2):
            raise DomainError("p must be 1 or 2")
        if self.weights not in ("uniform", "distance"):
            raise DomainError("weights must be uniform or distance")

    @classmethod
    def sample(cls, rng):
        # n_neighbors is log-uniform on [1, 100]
        k = int(round(math.exp(rng.uniform(0.0, math.log(KNN_MAX_NEIGHBORS)))))
        return cls(
            n_neighbors=min(max(k, 1), KNN_MAX_NEIGHBORS),
            p=int(rng.integers(1, 3)),
            weights=("uniform", "distance")[int(rng.integers(2))],
        )

    def encode(self):
        return np.array(
            [
                math.log(self.n_neighbors) / math.log(KNN_MAX_NEIGHBORS),
                float(self.p - 1),
                1.0 if self.weights == "distance" else 0.0,
            ]
        )


THETA_DIM = 3


def _knn_predict(train_x, train_y, test_x, n_classes, theta):
    k = min(theta.n_neighbors, train_x.shape[0])
    if k < theta.n_neighbors:
        log.warning("k clamped from %d to %d training points", theta.n_neighbors, k)
    diff = np.abs(test_x[:, None, :] - train_x[None, :, :])
    dist = (diff**theta.p).sum(axis=2) ** (1.0 / theta.p)
    idx = np.argsort(dist, axis=1, kind="stable")[:, :k]
    if theta.weights == "distance":
        w = 1.0 / (np.take_along_axis(dist, idx, axis=1) + 1e-12)
    else:
        w = np.ones(idx.shape)
    scores = np.zeros((test_x.shape[0], n_classes))
    rows = np.repeat(np.arange(test_x.shape[0]), k)
    np.add.at(scores, (rows, train_y[idx].reshape(-1)), w.reshape(-1))
    return scores.argmax(axis=1)  # ties fall to the smallest class id


def knn_accuracy(train: LabeledDataset, test: LabeledDataset, theta: HyperConfigKnn) -> float:
    if train.dx != test.dx:
        raise ContractError("train/test feature dimensions differ")
    n_classes = max(train.n_classes, test.n_classes)
    pred = _knn_predict(train.features, train.labels, test.features, n_classes, theta)
    return float((pred == test.labels).mean())


def knn_performance_oracle(patch: LabeledDataset, theta: HyperConfigKnn, seed) -> float:
    """Accuracy of theta on a deterministic 50/50 stratified split of the patch."""
    if patch.n < 20:
        raise DomainError("the performance oracle needs patches of at least 20 rows")
    rng = np.random.default_rng(seed)
    counts = patch.class_counts()
    train_idx, test_idx = [], []
    if counts.min() < 2:
        log.warning("class with fewer than 2 samples; falling back to a plain split")
        order = rng.permutation(patch.n)
        train_idx, test_idx = order[: patch.n // 2], order[patch.n // 2 :]
    else:
        for c in range(patch.n_classes):
            members = rng.permutation(np.flatnonzero(patch.labels == c))
            train_idx.extend(members[: members.size // 2])
            test_idx.extend(members[members.size // 2 :])
        train_idx, test_idx = np.asarray(train_idx), np.asarray(test_idx)
    pred = _knn_predict(
        patch.features[train_idx],
        patch.labels[train_idx],
        patch.features[test_idx],
        patch.n_classes,
        theta,
    )
    return float((pred == patch.labels[test_idx]).mean())


# ---------------------------------------------------------------------------
# Patch identification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PatchPair:
    patch_a: LabeledDataset
    patch_b: LabeledDataset
    label: int

    def __post_init__(self):
        if self.patch_a.n != self.patch_b.n:
            raise ContractError("paired patches must share the row count")


def _draw_patch(z, n_rows, feats_range, rng):
    n_feats = int(rng.integers(feats_range[0], feats_range[1] + 1))
    patch, _ = sample_patch(z, n_rows, min(n_feats, z.dx), seed=int(rng.integers(2**63)))
    return normalize_features(patch)


def build_patch_pairs(datasets, count, rows_range, feats_range, seed):
    """Balanced pair list: half same-source, half cross-source."""
    if len(datasets) < 2:
        raise ContractError("pair building needs at least 2 datasets")
    min_n = min(z.n for z in datasets)
    if rows_range[1] > min_n:
        raise DomainError(f"rows_range {rows_range} exceeds the smallest dataset ({min_n} rows)")
    if feats_range[0] > min(z.dx for z in datasets):
        raise DomainError("feats_range exceeds available feature counts")
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(count):
        positive = i < count // 2
        n_rows = int(rng.integers(rows_range[0], rows_range[1] + 1))
        if positive:
            z = datasets[int(rng.integers(len(datasets)))]
            pairs.append(PatchPair(_draw_patch(z, n_rows, feats_range, rng),
                                   _draw_patch(z, n_rows, feats_range, rng), 1))
        else:
            ia, ib = rng.choice(len(datasets), size=2, replace=False)
            pairs.append(PatchPair(_draw_patch(datasets[ia], n_rows, feats_range, rng),
                                   _draw_patch(datasets[ib], n_rows, feats_range, rng), 0))
    rng.shuffle(pairs)
    return pairs


CLAMP = 1e-7


def patch_id_loss(f_a: Tensor, f_b: Tensor, label) -> Tensor:
    """Cross-entropy of exp(-||f_a - f_b||_2) against the pair label."""
    if f_a.shape != f_b.shape:
        raise ContractError("meta-feature dimensions differ")
    diff = f_a - f_b
    lhat = (-((diff * diff).sum().sqrt())).exp().clamp(CLAMP, 1.0 - CLAMP)
    if label:
        return -(lhat.log())
    return -((1.0 - lhat).log())


def pair_similarity(f_a, f_b) -> float:
    gap = np.linalg.norm(f_a.data - f_b.data)
    return float(np.exp(-gap))


# ---------------------------------------------------------------------------
# Hyper-parameter ranking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RankTriplet:
    patch: LabeledDataset
    theta1: HyperConfigKnn
    theta2: HyperConfigKnn
    label: int
    perf1: float
    perf2: float

    def __post_init__(self):
        if self.perf1 == self.perf2:
            raise ContractError("tied performances must be resampled, not stored")
        if self.label != int(self.perf2 > self.perf1):
            raise ContractError("label must state whether theta2 wins")


def build_rank_triplets(
    datasets,
    count,
    seed,
    rows_range=(700, 900),
    feats_range=(3, 10),
    triplets_per_patch=4,
):
    """Oracle-labeled (patch, theta1, theta2) triplets; ties are resampled.

    Requested patch sizes are clamped to what the sources support (the scale
    factor is logged); both configurations are scored on the same split.
    """
    if not datasets:
        raise DomainError("no source datasets")
    min_n, min_d = min(z.n for z in datasets), min(z.dx for z in datasets)
    eff_rows = (min(rows_range[0], min_n), min(rows_range[1], min_n))
    eff_feats = (min(feats_range[0], min_d), min(feats_range[1], min_d))
    if eff_rows != tuple(rows_range) or eff_feats != tuple(feats_range):
        log.info(
            "rank patches scaled to rows %s feats %s (sources support n>=%d, d>=%d)",
            eff_rows, eff_feats, min_n, min_d,
        )
    if eff_rows[0] < 20:
        raise DomainError("sources too small for the performance oracle (20-row patches)")
    rng = np.random.default_rng(seed)
    triplets = []
    counter = 0
    while len(triplets) < count:
        z = datasets[int(rng.integers(len(datasets)))]
        n_rows = int(rng.integers(eff_rows[0], eff_rows[1] + 1))
        patch = _draw_patch(z, n_rows, eff_feats, rng)
        made = 0
        for _ in range(triplets_per_patch):
            if len(triplets) >= count:
                break
            for _ in range(100):
                t1, t2 = HyperConfigKnn.sample(rng), HyperConfigKnn.sample(rng)
                oracle_seed = split_seed(seed, counter)
                counter += 1
                p1 = knn_performance_oracle(patch, t1, oracle_seed)
                p2 = knn_performance_oracle(patch, t2, oracle_seed)
                if p1 != p2:
                    triplets.append(RankTriplet(patch, t1, t2, int(p2 > p1), p1, p2))
                    made += 1
                    break
        if made == 0 and triplets_per_patch > 0:
            log.warning("patch %s produced only ties; drawing a fresh patch", patch.id)
    return triplets


@dataclass
class RankerHead:
    layers: list  # two affine layers onto a single logit

    def __call__(self, meta: Tensor, theta1: HyperConfigKnn, theta2: HyperConfigKnn) -> Tensor:
        v = concat([meta, Tensor(theta1.encode()), Tensor(theta2.encode())], axis=0)
        for layer in self.layers:
            v = layer(v)
        return v.reshape(())

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def named_parameters(self):
        named = {}
        for i, layer in enumerate(self.layers):
            named[f"rank.{i}.w"] = layer.w
            named[f"rank.{i}.b"] = layer.b
        return named


def init_ranker_head(meta_dim, seed, hidden=16, activation="relu"):
    rng = np.random.default_rng(seed)
    in_dim = meta_dim + 2 * THETA_DIM
    return RankerHead(
        layers=[
            nets.AffineLayer(nets._glorot(rng, hidden, in_dim), nets._bias(hidden), activation),
            nets.AffineLayer(nets._glorot(rng, 1, hidden), nets._bias(1), "identity"),
        ]
    )


def ranking_loss(logit: Tensor, label, class_weights) -> Tensor:
    """Sigmoid cross-entropy scaled by the label's class weight."""
    w0, w1 = class_weights
    if w0 <= 0 or w1 <= 0:
        raise ContractError("class weights must be positive")
    p = logit.sigmoid().clamp(CLAMP, 1.0 - CLAMP)
    if label:
        return -(p.log()) * w1
    return -((1.0 - p).log()) * w0


def stream_class_weights(labels):
    """Inverse-frequency weights, normalized so a balanced stream gives (1, 1)."""
    labels = np.asarray(labels)
    freq1 = labels.mean() if labels.size else 0.5
    if freq1 in (0.0, 1.0):
        return (1.0, 1.0)
    return (0.5 / (1.0 - freq1), 0.5 / freq1)


# ---------------------------------------------------------------------------
# Extractors
# ---------------------------------------------------------------------------

HANDCRAFTED = "handcrafted"


@dataclass
class HandcraftedExtractor:
    """Frozen hand-crafted meta-features, z-scored with reference statistics."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, patches):
        vecs = np.stack([extract_handcrafted(z).values for z in patches])
        scale = vecs.std(axis=0)
        return cls(mean=vecs.mean(axis=0), scale=np.where(scale > 0, scale, 1.0))

    def __call__(self, z):
        return Tensor((extract_handcrafted(z).values - self.mean) / self.scale)

    @property
    def meta_dim(self):
        return self.mean.size


def make_extractor(model_or_name, reference_patches=None):
    """A callable z -> Tensor of meta-features, plus its trainable params."""
    if model_or_name == HANDCRAFTED:
        if reference_patches is None:
            raise ContractError("handcrafted extraction needs reference patches for scaling")
        extractor = HandcraftedExtractor.fit(reference_patches)
        return extractor, []
    model = model_or_name
    return (lambda z: nets.forward(z, model)), model.parameters()


# ---------------------------------------------------------------------------
# Training loops
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PatchIdConfig:
    epochs: int = 6
    batch_size: int = 16
    pairs_per_epoch: int = 256
    eval_pairs: int = 256
    rows_range: tuple = (100, 300)
    feats_range: tuple = (1, 2)
    learning_rate: float = 1e-3
    seed: int = 0
    test_fraction: float = 0.3


@dataclass(frozen=True)
class RankerConfig:
    epochs: int = 6
    batch_size: int = 32
    triplets_per_epoch: int = 192
    eval_triplets: int = 256
    triplets_per_patch: int = 4
    rows_range: tuple = (700, 900)
    feats_range: tuple = (3, 10)
    learning_rate: float = 1e-3
    seed: int = 0
    test_fraction: float = 0.3


def split_sources(datasets, test_fraction, seed):
    """Dataset-level train/test split (held-out sources, not rows)."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(datasets))
    n_test = max(1, int(round(len(datasets) * test_fraction)))
    test = [datasets[i] for i in order[:n_test]]
    train = [datasets[i] for i in order[n_test:]]
    return train, test


def _metric(epoch, split, loss, accuracy):
    return {"epoch": epoch, "split": split, "loss": float(loss), "accuracy": float(accuracy)}


def eval_patch_id(model, pairs):
    losses, hits = [], 0
    for pair in pairs:
        fa = nets.forward(pair.patch_a, model)
        fb = nets.forward(pair.patch_b, model)
        losses.append(float(patch_id_loss(fa, fb, pair.label).data))
        hits += int((pair_similarity(fa, fb) > 0.5) == bool(pair.label))
    return float(np.mean(losses)), hits / len(pairs)


def train_patch_id(model, datasets, config: PatchIdConfig, on_epoch=None):
    """Siamese training: both patches share the model; best-test checkpoint wins."""
    train_sets, test_sets = split_sources(datasets, config.test_fraction, config.seed)
    params = model.parameters()
    state = ad.AdamState.init(params, learning_rate=config.learning_rate)
    test_pairs = build_patch_pairs(
        test_sets, config.eval_pairs, config.rows_range, config.feats_range,
        seed=split_seed(config.seed, 2**20),
    )
    history, best = [], None
    for epoch in range(config.epochs):
        pairs = build_patch_pairs(
            train_sets, config.pairs_per_epoch, config.rows_range, config.feats_range,
            seed=split_seed(config.seed, epoch),
        )
        epoch_losses, hits = [], 0
        for start in range(0, len(pairs), config.batch_size):
            batch = pairs[start : start + config.batch_size]
            ad.zero_grads(params)
            total = None
            for pair in batch:
                fa = nets.forward(pair.patch_a, model)
                fb = nets.forward(pair.patch_b, model)
                hits += int((pair_similarity(fa, fb) > 0.5) == bool(pair.label))
                loss = patch_id_loss(fa, fb, pair.label)
                total = loss if total is None else total + loss
            total = total * (1.0 / len(batch))
            epoch_losses.append(float(total.data))
            ad.backward(total)
            ad.adam_step(params, state)
        test_loss, test_acc = eval_patch_id(model, test_pairs)
        history.append(_metric(epoch, "train", np.mean(epoch_losses), hits / len(pairs)))
        history.append(_metric(epoch, "test", test_loss, test_acc))
        if best is None or test_acc > best[0]:
            best = (test_acc, nets.checkpoint_payload(model))
        if on_epoch is not None:
            on_epoch(best[1], history)
    return best[1], history


def eval_ranker(extract, head, triplets):
    losses, hits = [], 0
    weights = stream_class_weights([t.label for t in triplets])
    by_patch = {}
    for t in triplets:
        by_patch.setdefault(id(t.patch), (t.patch, []))[1].append(t)
    for patch, group in by_patch.values():
        meta = extract(patch)
        for t in group:
            logit = head(meta, t.theta1, t.theta2)
            losses.append(float(ranking_loss(logit, t.label, weights).data))
            hits += int((float(logit.data) > 0) == bool(t.label))
    return float(np.mean(losses)), hits / len(triplets)


def train_ranker(extractor_spec, head, datasets, config: RankerConfig, reference_patches=None, on_epoch=None):
    """Joint extractor+head training on oracle-labeled triplets.

    `extractor_spec` is a model (trained jointly) or the string "handcrafted"
    (frozen features, head-only training)."""
    train_sets, test_sets = split_sources(datasets, config.test_fraction, config.seed)
    if extractor_spec == HANDCRAFTED and reference_patches is None:
        probe = build_rank_triplets(
            train_sets, min(config.triplets_per_epoch, 64), split_seed(config.seed, 2**21),
            config.rows_range, config.feats_range, config.triplets_per_patch,
        )
        reference_patches = [t.patch for t in probe]
    extract, model_params = make_extractor(extractor_spec, reference_patches)
    params = model_params + head.params()
    state = ad.AdamState.init(params, learning_rate=config.learning_rate)
    test_triplets = build_rank_triplets(
        test_sets, config.eval_triplets, split_seed(config.seed, 2**22),
        config.rows_range, config.feats_range, config.triplets_per_patch,
    )
    history, best = [], None
    for epoch in range(config.epochs):
        triplets = build_rank_triplets(
            train_sets, config.triplets_per_epoch, split_seed(config.seed, epoch),
            config.rows_range, config.feats_range, config.triplets_per_patch,
        )
        weights = stream_class_weights([t.label for t in triplets])
        groups, seen = [], {}
        for t in triplets:
            key = id(t.patch)
            if key not in seen:
                seen[key] = (t.patch, [])
                groups.append(seen[key])
            seen[key][1].append(t)
        epoch_losses, hits, pending = [], 0, 0
        ad.zero_grads(params)
        batch_total, batch_count = None, 0
        for patch, group in groups:
            meta = extract(patch)
            for t in group:
                logit = head(meta, t.theta1, t.theta2)
                hits += int((float(logit.data) > 0) == bool(t.label))
                loss = ranking_loss(logit, t.label, weights)
                batch_total = loss if batch_total is None else batch_total + loss
                batch_count += 1
            if batch_count >= config.batch_size:
                total = batch_total * (1.0 / batch_count)
                epoch_losses.append(float(total.data))
                ad.backward(total)
                ad.adam_step(params, state)
                ad.zero_grads(params)
                batch_total, batch_count = None, 0
        if batch_count:
            total = batch_total * (1.0 / batch_count)
            epoch_losses.append(float(total.data))
            ad.backward(total)
            ad.adam_step(params, state)
        test_loss, test_acc = eval_ranker(extract, head, test_triplets)
        history.append(_metric(epoch, "train", np.mean(epoch_losses), hits / len(triplets)))
        history.append(_metric(epoch, "test", test_loss, test_acc))
        if best is None or test_acc > best[0]:
            best = (test_acc, ranker_payload(extractor_spec, head, extract))
        if on_epoch is not None:
            on_epoch(best[1], history)
    return best[1], history


def ranker_payload(extractor_spec, head, extract):
    head_tensors = {
        name: {"shape": list(p.data.shape), "values": [format(v, ".17e") for v in p.data.reshape(-1)]}
        for name, p in head.named_parameters().items()
    }
    payload = {"format_version": nets.CHECKPOINT_VERSION, "head": head_tensors}
    if extractor_spec == HANDCRAFTED:
        payload["extractor"] = HANDCRAFTED
        payload["hc_mean"] = [format(v, ".17e") for v in extract.mean]
        payload["hc_scale"] = [format(v, ".17e") for v in extract.scale]
    else:
        payload["extractor"] = "model"
        payload["model"] = nets.checkpoint_payload(extractor_spec)
    return payload


def ranker_from_payload(payload):
    """Rebuild (extract_fn, head) from a ranker checkpoint payload."""
    from .errors import FormatError

    if payload.get("format_version") != nets.CHECKPOINT_VERSION:
        raise FormatError(
            f"ranker checkpoint format {payload.get('format_version')!r} unsupported"
        )
    if payload["extractor"] == HANDCRAFTED:
        extractor = HandcraftedExtractor(
            mean=np.array([float(v) for v in payload["hc_mean"]]),
            scale=np.array([float(v) for v in payload["hc_scale"]]),
        )
        extract = extractor
        meta_dim = extractor.meta_dim
    else:
        model = nets.model_from_payload(payload["model"])
        extract = lambda z: nets.forward(z, model)
        meta_dim = model.meta_dim
    stored = payload["head"]
    hidden = stored["rank.0.w"]["shape"][0]
    head = init_ranker_head(meta_dim, seed=0, hidden=hidden)
    named = head.named_parameters()
    if set(named) != set(stored):
        raise FormatError("ranker head tensors do not match")
    for name, p in named.items():
        vals = np.array([float(v) for v in stored[name]["values"]])
        p.data = vals.reshape(stored[name]["shape"])
    return extract, head


def write_scatter_csv(path, rows):
    """rows: iterable of (true_perf, pred_perf, extractor_name)."""
    import csv as _csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["true_perf", "pred_perf", "extractor_name"])
        for true, pred, name in rows:
            writer.writerow([repr(float(true)), repr(float(pred)), name])


# ---------------------------------------------------------------------------
# Performance regression on frozen extractors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegressorConfig:
    epochs: int = 60
    hidden: int = 16
    learning_rate: float = 1e-3
    seed: int = 0
    test_fraction: float = 0.3
    batch_size: int = 64


def triplet_regression_samples(extract, triplets):
    """(features, target) rows: one per (patch, theta) occurrence."""
    xs, ys = [], []
    cache = {}
    for t in triplets:
        key = id(t.patch)
        if key not in cache:
            cache[key] = extract(t.patch).data
        meta = cache[key]
        for theta, perf in ((t.theta1, t.perf1), (t.theta2, t.perf2)):
            xs.append(np.concatenate([meta, theta.encode()]))
            ys.append(perf)
    return np.stack(xs), np.asarray(ys)


def train_regressor(extract, triplets, config: RegressorConfig):
    """2-layer FC regressor on frozen meta-features; reports held-out MSE."""
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(triplets))
    n_test = max(1, int(round(len(triplets) * config.test_fraction)))
    test_triplets = [triplets[i] for i in order[:n_test]]
    train_triplets = [triplets[i] for i in order[n_test:]]
    x_train, y_train = triplet_regression_samples(extract, train_triplets)
    x_test, y_test = triplet_regression_samples(extract, test_triplets)

    w1 = nets._glorot(rng, config.hidden, x_train.shape[1])
    b1 = nets._bias(config.hidden)
    w2 = nets._glorot(rng, 1, config.hidden)
    b2 = nets._bias(1)
    # start at the train-mean predictor so the mean baseline is the floor
    m = float(np.clip(y_train.mean(), 1e-3, 1 - 1e-3))
    b2.data[:] = math.log(m / (1.0 - m))
    params = [w1, b1, w2, b2]
    state = ad.AdamState.init(params, learning_rate=config.learning_rate)

    def predict_tensor(x):
        h = ad.activation("relu", ad.affine(w1, b1, Tensor(x)))
        return ad.affine(w2, b2, h).sigmoid().reshape(-1)

    idx = np.arange(x_train.shape[0])
    for epoch in range(config.epochs):
        epoch_rng = np.random.default_rng(split_seed(config.seed, epoch))
        epoch_rng.shuffle(idx)
        for start in range(0, idx.size, config.batch_size):
            rows = idx[start : start + config.batch_size]
            ad.zero_grads(params)
            pred = predict_tensor(x_train[rows])
            diff = pred - Tensor(y_train[rows])
            ad.backward((diff * diff).mean())
            ad.adam_step(params, state)

    pred_train = predict_tensor(x_train).data
    pred_test = predict_tensor(x_test).data
    return {
        "mse_train": float(((pred_train - y_train) ** 2).mean()),
        "mse_test": float(((pred_test - y_test) ** 2).mean()),
        "baseline_mse_train": float(((y_train - y_train.mean()) ** 2).mean()),
        "baseline_mse_test": float(((y_test - y_train.mean()) ** 2).mean()),
        "scatter": list(zip(y_test.tolist(), pred_test.tolist())),
    }
