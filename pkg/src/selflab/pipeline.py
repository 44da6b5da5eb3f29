"""Online self-labeling loop over a corpus of features and soft pseudo labels.

Per image, per epoch: balanced-sample M pixels, augment them with the memory
bank, solve the entropic transport assignment over the augmented batch with
the aligned class marginal, train the head on the current batch's slice of
the plan, track the momentum head, rectify that image's pseudo labels with
the momentum head's assignment map, and fold the rectified class histogram
into the running distribution estimate.

The loop is single-threaded and sequential by contract: the bank, the
distribution estimate, and the head are serial state. SELFLAB_THREADS caps
the worker count (the shipped loop uses one worker regardless).
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import distribution, head, ot, rectification, sampling, tensor_io
from ._kernels import BACKEND


@dataclass
class PipelineConfig:
    epsilon: float = 0.05
    tau: float = 0.08
    lambda1: float = 0.1
    lambda2: float = 0.0   # consistency branch not computed in this loop
    m_per_image: int = 512
    bank_capacity: int = 65536
    head_momentum: float = 0.999
    delta_alpha: float = 0.99
    marginal_floor: float = 1e-4
    epochs: int = 5
    seed: int = 0
    learning_rate: float = 5e-4
    lr_decay_power: float = 0.9
    weight_decay: float = 2e-4
    sgd_momentum: float = 0.9
    sinkhorn_max_iters: int = 1000
    sinkhorn_tol: float = 1e-6
    sinkhorn_failure_budget: int = 10
    equal_partition: bool = False
    loss_reduction: str = "mean"
    sample_hints: str = "rectified"  # or "classifier"
    workers: int = 1
    data: str | None = None
    out: str | None = None

    def __post_init__(self):
        if self.epsilon <= 0.0 or self.tau <= 0.0:
            raise ValueError("epsilon and tau must be positive")
        if self.m_per_image > self.bank_capacity:
            raise ValueError("m_per_image must not exceed bank_capacity")
        if self.sample_hints not in ("rectified", "classifier"):
            raise ValueError("sample_hints must be 'rectified' or 'classifier'")
        cap = os.environ.get("SELFLAB_THREADS")
        if cap is not None:
            self.workers = max(1, min(self.workers, int(cap)))

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            raw = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)


@dataclass
class IterationReport:
    epoch: int
    image: int
    l_sl: float
    sinkhorn_iterations: int
    marginal_error: float
    converged: bool
    l_seg_t: float
    l_total: float
    rectified_accuracy: float | None
    delta_pseudo: list

    def to_json(self) -> str:
        return json.dumps(asdict(self))


@dataclass
class Corpus:
    features: list          # per image (H, W, D) float32/float64
    classifier_probs: list  # per image (H, W, C)
    truth: list | None      # per image (H, W) or None
    num_classes: int
    feature_dim: int
    paths: dict = field(default_factory=dict)  # logical name -> source path


@dataclass
class PipelineResult:
    labels: list                 # final rectified (H, W) uint16 per image
    head_weights: head.HeadWeights
    momentum_weights: head.HeadWeights
    reports: list                # IterationReport stream
    delta_pseudo: np.ndarray     # final estimate
    delta_init: np.ndarray
    delta_by_epoch: list         # snapshot after each epoch
    bank: sampling.FeatureBank
    zero_feature_rows: int


def load_corpus(data_dir) -> Corpus:
    """Read a generated data directory (manifest.json + SLT1/SLL1 files)."""
    manifest_path = os.path.join(data_dir, "manifest.json")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    num_classes = int(manifest["num_classes"])
    feature_dim = int(manifest["feature_dim"])
    features, probs, truth, paths = [], [], [], {}
    any_truth = False
    for i, entry in enumerate(manifest["images"]):
        fpath = os.path.join(data_dir, entry["features"])
        ppath = os.path.join(data_dir, entry["pst"])
        z = tensor_io.load_tensor(fpath)
        p = tensor_io.load_tensor(ppath)
        if z.ndim != 3 or z.shape[-1] != feature_dim:
            raise ValueError(f"{fpath}: expected (H, W, {feature_dim}) features, got {z.shape}")
        if p.shape != z.shape[:2] + (num_classes,):
            raise ValueError(
                f"{ppath}: probability map {p.shape} does not match features {z.shape[:2]} x {num_classes}"
            )
        features.append(z)
        probs.append(p)
        paths[f"features/{i}"] = fpath
        paths[f"pst/{i}"] = ppath
        if entry.get("truth"):
            tpath = os.path.join(data_dir, entry["truth"])
            truth.append(tensor_io.load_labels(tpath, num_classes))
            paths[f"truth/{i}"] = tpath
            any_truth = True
        else:
            truth.append(None)
    if any_truth and any(t is None for t in truth):
        raise ValueError("corpus mixes images with and without ground truth")
    return Corpus(
        features=features,
        classifier_probs=probs,
        truth=truth if any_truth else None,
        num_classes=num_classes,
        feature_dim=feature_dim,
        paths=paths,
    )


def corpus_from_world(world) -> Corpus:
    return Corpus(
        features=world.features,
        classifier_probs=world.classifier_probs,
        truth=world.truth,
        num_classes=world.spec.num_classes,
        feature_dim=world.spec.feature_dim,
    )


def run_pipeline(cfg: PipelineConfig, corpus: Corpus) -> PipelineResult:
    """Execute the full self-labeling loop; deterministic per seed."""
    n_images = len(corpus.features)
    if n_images == 0:
        raise ValueError("corpus is empty")
    c, d = corpus.num_classes, corpus.feature_dim
    for i, (z, p) in enumerate(zip(corpus.features, corpus.classifier_probs)):
        z, p = np.asarray(z), np.asarray(p)
        if z.shape[-1] != d or p.shape[-1] != c or z.shape[:-1] != p.shape[:-1]:
            raise ValueError(
                f"image {i}: features {z.shape} and probabilities {p.shape} "
                f"inconsistent with D={d}, C={c}"
            )

    # normalize once; pixel features are reused across epochs
    flat_features = []
    zero_rows = 0
    for z in corpus.features:
        zn, nz = tensor_io.normalize_rows(np.asarray(z, dtype=np.float64).reshape(-1, d))
        flat_features.append(zn)
        zero_rows += nz
    flat_probs = [
        np.asarray(p, dtype=np.float64).reshape(-1, c) for p in corpus.classifier_probs
    ]
    shapes = [np.asarray(z).shape[:2] for z in corpus.features]
    classifier_hard = [np.argmax(p, axis=1).astype(np.uint16) for p in flat_probs]

    delta_init = distribution.init_from_corpus(classifier_hard, c)
    delta = delta_init.copy()
    weights = head.init_from_prototypes(flat_features, classifier_hard, c)
    momentum_head = weights.copy()

    train_cfg = head.TrainConfig(
        tau=cfg.tau,
        learning_rate=cfg.learning_rate,
        lr_decay_power=cfg.lr_decay_power,
        weight_decay=cfg.weight_decay,
        momentum=cfg.sgd_momentum,
        total_steps=max(1, cfg.epochs * n_images),
    )
    bank = sampling.FeatureBank(cfg.bank_capacity, d)
    rng = np.random.default_rng(cfg.seed)
    uniform_r = np.full(c, 1.0 / c)

    current_labels: list = [None] * n_images
    reports: list = []
    delta_by_epoch: list = []
    momentum_buffer = None
    step = 0
    failures = 0

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n_images)
        for img in order:
            z = flat_features[img]
            if cfg.sample_hints == "classifier" or current_labels[img] is None:
                sample_labels = classifier_hard[img]
            else:
                sample_labels = current_labels[img]

            batch = sampling.balanced_sample(
                z, sample_labels, c, cfg.m_per_image, rng, image_id=int(img)
            )
            z_aug, span = sampling.augment(batch, bank)

            _, scores = head.forward(weights, z_aug, cfg.tau)
            r = uniform_r if cfg.equal_partition else distribution.as_marginal(
                delta, cfg.marginal_floor
            )
            marg = ot.Marginals(r, np.full(z_aug.shape[0], 1.0 / z_aug.shape[0]))
            plan = ot.sinkhorn(
                scores,
                marg,
                epsilon=cfg.epsilon,
                max_iters=cfg.sinkhorn_max_iters,
                tol=cfg.sinkhorn_tol,
            )
            if not plan.converged:
                failures += 1
                if failures > cfg.sinkhorn_failure_budget:
                    raise RuntimeError(
                        f"sinkhorn failed to converge {failures} times "
                        f"(last marginal error {plan.marginal_error:.3e}) at "
                        f"epoch {epoch}, image {img}"
                    )

            targets, _ = ot.soft_assignment_from_plan(
                ot.TransportPlan(
                    plan.matrix[:, span],
                    plan.converged,
                    plan.iterations_used,
                    plan.marginal_error,
                )
            )
            l_sl, grad = head.sl_loss_and_grad(weights, batch.features, targets, cfg.tau)
            weights, momentum_buffer = head.sgd_step(
                weights, grad, train_cfg, step, momentum_buffer
            )
            step += 1
            momentum_head = head.ema_update(momentum_head, weights, cfg.head_momentum)

            assign_probs, _ = head.forward(momentum_head, z, cfg.tau)
            labels, _ = rectification.rectify(
                assign_probs.T.reshape(-1, c), flat_probs[img]
            )
            current_labels[img] = labels

            delta_obs = sampling.class_distribution(labels, c)
            delta = distribution.ema_update(delta, delta_obs, cfg.delta_alpha)
            sampling.push_batch(bank, batch)

            # no backbone here: the classifier map stands in for the prediction
            # map, so the segmentation term is logged for curve visibility only
            l_seg_t = rectification.cross_entropy(
                flat_probs[img], labels, c, reduction=cfg.loss_reduction
            )
            l_total = rectification.total_loss(
                l_seg_t, 0.0, l_sl, 0.0, cfg.lambda1, cfg.lambda2
            )
            acc = None
            if corpus.truth is not None:
                t = np.asarray(corpus.truth[img]).reshape(-1)
                keep = t < c
                acc = float((labels[keep] == t[keep]).mean())
            reports.append(
                IterationReport(
                    epoch=epoch,
                    image=int(img),
                    l_sl=l_sl,
                    sinkhorn_iterations=plan.iterations_used,
                    marginal_error=plan.marginal_error,
                    converged=plan.converged,
                    l_seg_t=l_seg_t,
                    l_total=l_total,
                    rectified_accuracy=acc,
                    delta_pseudo=delta.tolist(),
                )
            )
        delta_by_epoch.append(delta.copy())

    final_labels = [
        lab.reshape(shape) for lab, shape in zip(current_labels, shapes)
    ]
    return PipelineResult(
        labels=final_labels,
        head_weights=weights,
        momentum_weights=momentum_head,
        reports=reports,
        delta_pseudo=delta,
        delta_init=delta_init,
        delta_by_epoch=delta_by_epoch,
        bank=bank,
        zero_feature_rows=zero_rows,
    )


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_outputs(out_dir, cfg: PipelineConfig, corpus: Corpus, result: PipelineResult) -> None:
    """Write the output directory layout.

    labels/NNNN.sll1, weights.slt1 + weights.json, bank.slt1 + bank.json,
    report.jsonl, delta_pseudo.json, manifest.json.
    """
    os.makedirs(os.path.join(out_dir, "labels"), exist_ok=True)
    for i, lab in enumerate(result.labels):
        tensor_io.save_labels(os.path.join(out_dir, "labels", f"{i:04d}.sll1"), lab)
    head.save_weights(
        os.path.join(out_dir, "weights.slt1"),
        os.path.join(out_dir, "weights.json"),
        result.head_weights,
        cfg.tau,
    )
    result.bank.save(
        os.path.join(out_dir, "bank.slt1"), os.path.join(out_dir, "bank.json")
    )
    with open(os.path.join(out_dir, "report.jsonl"), "w") as fh:
        for rep in result.reports:
            fh.write(rep.to_json())
            fh.write("\n")
    with open(os.path.join(out_dir, "delta_pseudo.json"), "w") as fh:
        json.dump(
            {
                "init": result.delta_init.tolist(),
                "epochs": [d.tolist() for d in result.delta_by_epoch],
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    config_echo = asdict(cfg)
    config_echo.pop("out")  # run location, not part of the computation
    manifest = {
        "config": config_echo,
        "seed": cfg.seed,
        "kernel_backend": BACKEND,
        "inputs": {name: _sha256(p) for name, p in sorted(corpus.paths.items())},
        "zero_feature_rows": result.zero_feature_rows,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
