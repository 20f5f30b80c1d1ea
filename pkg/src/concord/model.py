"""A small trainable point-completion network with manual backprop.

The encoder applies shared per-point affine+ReLU layers and max-pools
coordinate-wise into a latent code (so the output is invariant to input
point order); the decoder maps the code through affine+ReLU layers to a
fixed number of predicted missing points. Training pairs the analytic loss
gradient with exact backprop through the network, a decoupled-weight-decay
optimizer, and a cosine learning-rate schedule.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError
from .geometry import MetricBundle, PointCloud, as_cloud, metric_bundle
from .losses import CompletionSample, LossWeights, loss_and_gradient
from .views import normalize_cloud, resample, sample_view_set

CHECKPOINT_MAGIC = b"CONCORD1"
_CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Full training recipe; defaults follow the reference schedule."""

    epochs: int = 40
    batch_size: int = 16
    n_views: int = 3
    missing_ratio: float = 0.75
    lr_max: float = 1e-4
    lr_min: float = 5e-5
    weight_decay: float = 1e-4
    alpha: float = 0.1
    beta: float = 1.0
    delta: float = 0.0
    seed: int = 0
    input_size: int = 32
    output_size: int = 64
    encoder_widths: tuple[int, ...] = (64, 128)
    decoder_widths: tuple[int, ...] = (128,)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    eval_fraction: float = 0.2
    f1_tau: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "encoder_widths", tuple(int(w) for w in self.encoder_widths))
        object.__setattr__(self, "decoder_widths", tuple(int(w) for w in self.decoder_widths))
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.n_views < 1:
            raise ValueError("n_views must be >= 1")
        if self.alpha > 0 and self.n_views < 2:
            raise ValueError("insufficient views: alpha > 0 requires n_views >= 2")
        if not (0.0 < self.missing_ratio < 1.0):
            raise ValueError("missing_ratio must be strictly inside (0, 1)")
        if self.lr_min > self.lr_max:
            raise ValueError("lr_min must not exceed lr_max")
        if min(self.alpha, self.beta, self.delta) < 0:
            raise ValueError("loss weights must be >= 0")
        if self.input_size < 1 or self.output_size < 1:
            raise ValueError("input_size and output_size must be >= 1")
        if len(self.encoder_widths) < 1 or any(w < 1 for w in self.encoder_widths):
            raise ValueError("encoder_widths must be nonempty positive ints")
        if any(w < 1 for w in self.decoder_widths):
            raise ValueError("decoder_widths must be positive ints")
        if not (0.0 <= self.eval_fraction < 1.0):
            raise ValueError("eval_fraction must be in [0, 1)")

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.alpha, self.beta, self.delta)


@dataclass
class ModelParams:
    """Affine layers of the encoder and decoder; gradients share this shape."""

    input_size: int
    output_size: int
    encoder: list[tuple[np.ndarray, np.ndarray]]
    decoder: list[tuple[np.ndarray, np.ndarray]]

    @property
    def latent_dim(self) -> int:
        return self.encoder[-1][0].shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.input_size,
            self.output_size,
            [(w.copy(), b.copy()) for w, b in self.encoder],
            [(w.copy(), b.copy()) for w, b in self.decoder],
        )

    def layers(self):
        yield from self.encoder
        yield from self.decoder


def init_params(input_size: int, output_size: int, encoder_widths, decoder_widths, seed: int) -> ModelParams:
    """Symmetric uniform fan-in initialization from a seeded generator."""
    rng = np.random.default_rng([int(seed), 0x1A17])

    def layer(fan_in, fan_out):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = rng.uniform(-bound, bound, size=fan_out)
        return w, b

    encoder = []
    prev = 3
    for width in encoder_widths:
        encoder.append(layer(prev, width))
        prev = width
    decoder = []
    latent = prev
    for width in decoder_widths:
        decoder.append(layer(prev, width))
        prev = width
    decoder.append(layer(prev, output_size * 3))
    params = ModelParams(int(input_size), int(output_size), encoder, decoder)
    assert params.latent_dim == latent
    return params


def params_from_config(config: TrainConfig) -> ModelParams:
    return init_params(config.input_size, config.output_size,
                       config.encoder_widths, config.decoder_widths, config.seed)


def _forward_cached(params: ModelParams, x: np.ndarray):
    """Forward pass keeping the per-layer activations needed for backprop."""
    enc_inputs = []
    enc_pre = []
    h = x
    for w, b in params.encoder:
        enc_inputs.append(h)
        z = h @ w + b
        enc_pre.append(z)
        h = np.maximum(z, 0.0)
    pooled = h.max(axis=0)
    argmax = h.argmax(axis=0)
    dec_inputs = []
    dec_pre = []
    z = pooled
    for li, (w, b) in enumerate(params.decoder):
        dec_inputs.append(z)
        zz = z @ w + b
        dec_pre.append(zz)
        z = zz if li == len(params.decoder) - 1 else np.maximum(zz, 0.0)
    pred = z.reshape(params.output_size, 3)
    cache = (enc_inputs, enc_pre, argmax, dec_inputs, dec_pre, h.shape)
    return pred, cache


def _coerce_input(params: ModelParams, incomplete) -> np.ndarray:
    c = as_cloud(incomplete)
    if len(c) != params.input_size:
        raise ValueError(f"shape mismatch: expected {params.input_size} input points, got {len(c)}")
    return c.points


def forward(params: ModelParams, incomplete) -> PointCloud:
    """Predict the missing points for one fixed-size incomplete cloud."""
    x = _coerce_input(params, incomplete)
    pred, _ = _forward_cached(params, x)
    return PointCloud(pred)


def _backprop_view(params: ModelParams, cache, dpred: np.ndarray, grads: ModelParams) -> None:
    enc_inputs, enc_pre, argmax, dec_inputs, dec_pre, h_shape = cache
    g = dpred.reshape(-1)
    for li in range(len(params.decoder) - 1, -1, -1):
        w, _ = params.decoder[li]
        if li != len(params.decoder) - 1:
            g = g * (dec_pre[li] > 0.0)
        gw, gb = grads.decoder[li]
        gw += np.outer(dec_inputs[li], g)
        gb += g
        g = g @ w.T
    dh = np.zeros(h_shape)
    dh[argmax, np.arange(h_shape[1])] = g
    g = dh
    for li in range(len(params.encoder) - 1, -1, -1):
        w, _ = params.encoder[li]
        g = g * (enc_pre[li] > 0.0)
        gw, gb = grads.encoder[li]
        gw += enc_inputs[li].T @ g
        gb += g.sum(axis=0)
        g = g @ w.T


def zeros_like_params(params: ModelParams) -> ModelParams:
    return ModelParams(
        params.input_size,
        params.output_size,
        [(np.zeros_like(w), np.zeros_like(b)) for w, b in params.encoder],
        [(np.zeros_like(w), np.zeros_like(b)) for w, b in params.decoder],
    )


def network_inputs(params: ModelParams, sample: CompletionSample) -> list[np.ndarray]:
    """Each view's incomplete cloud resampled to the network input size."""
    return [resample(inc, params.input_size).points for inc, _ in sample.views]


def backward(params: ModelParams, sample: CompletionSample, w: LossWeights) -> tuple[ModelParams, float]:
    """Loss and exact weight gradients for one sample.

    Predictions are recomputed here with ``params`` so the cached
    activations match; nearest-neighbor assignments are frozen at their
    argmin for the backward pass.
    """
    inputs = network_inputs(params, sample)
    preds = []
    caches = []
    for x in inputs:
        pred, cache = _forward_cached(params, x)
        preds.append(pred)
        caches.append(cache)
    loss, dpreds = loss_and_gradient(sample.with_predictions(preds), w)
    grads = zeros_like_params(params)
    for cache, dpred in zip(caches, dpreds):
        _backprop_view(params, cache, dpred, grads)
    return grads, loss


@dataclass
class OptimizerState:
    """Decoupled-weight-decay moment accumulators and hyperparameters."""

    m: ModelParams
    v: ModelParams
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4


def init_optimizer(params: ModelParams, beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8, weight_decay: float = 1e-4) -> OptimizerState:
    return OptimizerState(zeros_like_params(params), zeros_like_params(params),
                          0, beta1, beta2, eps, weight_decay)


def adamw_step(state: OptimizerState, params: ModelParams, grads: ModelParams,
               lr: float) -> tuple[ModelParams, OptimizerState]:
    """One decoupled update; returns fresh params and state."""
    new_params = params.copy()
    new_state = OptimizerState(state.m.copy(), state.v.copy(), state.step + 1,
                               state.beta1, state.beta2, state.eps, state.weight_decay)
    t = new_state.step
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for group in ("encoder", "decoder"):
        p_list = getattr(new_params, group)
        g_list = getattr(grads, group)
        m_list = getattr(new_state.m, group)
        v_list = getattr(new_state.v, group)
        if len(p_list) != len(g_list):
            raise ValueError("shape mismatch between params and grads")
        for (pw, pb), (gw, gb), (mw, mb), (vw, vb) in zip(p_list, g_list, m_list, v_list):
            if pw.shape != gw.shape or pb.shape != gb.shape:
                raise ValueError("shape mismatch between params and grads")
            for p, g, m, v in ((pw, gw, mw, vw), (pb, gb, mb, vb)):
                m *= b1
                m += (1.0 - b1) * g
                v *= b2
                v += (1.0 - b2) * g * g
                p -= lr * ((m / bc1) / (np.sqrt(v / bc2) + state.eps))
                p -= lr * state.weight_decay * p
    return new_params, new_state


def cosine_lr(t: int, total: int, lr_max: float, lr_min: float) -> float:
    """Cosine annealing from lr_max at t=0 to lr_min at t=total (clamped beyond)."""
    if total < 1:
        raise ValueError("total steps must be >= 1")
    if t < 0:
        raise ValueError("step must be >= 0")
    t = min(t, total)
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + np.cos(np.pi * t / total))


@dataclass(frozen=True)
class EpochRecord:
    """Per-epoch training log entry."""

    epoch: int
    train_loss: float
    train_metrics: MetricBundle
    eval_metrics: MetricBundle
    ms_per_step: float


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(tuple(int(p) for p in parts)).generate_state(1)[0])


def draw_sample(cloud: PointCloud, n_views: int, ratio: float, seed: int) -> CompletionSample:
    """Build a training sample by drawing n seeded views of one object."""
    views = sample_view_set(cloud, n_views, ratio, seed)
    return CompletionSample(gt_complete=cloud, views=tuple(views))


def per_object_metrics(params: ModelParams, objects, ratio: float, seed: int,
                       tau: float = 0.01) -> list[MetricBundle]:
    """Completed-vs-complete metrics per object under fixed seeded views."""
    rows = []
    for i, obj in enumerate(objects):
        view_seed = _derived_seed(seed, 3, i)
        inc, _ = sample_view_set(obj, 1, ratio, view_seed)[0]
        pred = forward(params, resample(inc, params.input_size))
        completed = np.vstack([pred.points, inc.points])
        rows.append(metric_bundle(completed, obj, tau))
    return rows


def mean_metrics(rows) -> MetricBundle:
    return MetricBundle(
        cd_l2=float(np.mean([r.cd_l2 for r in rows])),
        cd_l1=float(np.mean([r.cd_l1 for r in rows])),
        da_cd=float(np.mean([r.da_cd for r in rows])),
        f1=float(np.mean([r.f1 for r in rows])),
    )


def evaluate_objects(params: ModelParams, objects, ratio: float, seed: int,
                     tau: float = 0.01) -> MetricBundle:
    """Mean completed-vs-complete metrics over objects under fixed seeded views."""
    return mean_metrics(per_object_metrics(params, objects, ratio, seed, tau))


def split_train_eval(count: int, eval_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic train/eval index split; eval falls back to train when empty."""
    order = np.random.default_rng([int(seed), 0x5EED]).permutation(count)
    n_eval = int(round(count * eval_fraction))
    if n_eval == 0:
        return order, order
    return order[n_eval:], order[:n_eval]


def train(config: TrainConfig, dataset) -> tuple[ModelParams, list[EpochRecord]]:
    """Train the completion network; deterministic in (config, dataset).

    Views are redrawn each epoch from epoch-dependent seeds. History holds
    one record per epoch with the mean train loss and held-out metrics. A
    non-finite loss aborts with DivergenceError.
    """
    objects = [normalize_cloud(c) for c in dataset]
    if not objects:
        raise ValueError("empty dataset")
    train_ids, eval_ids = split_train_eval(len(objects), config.eval_fraction, config.seed)
    if len(train_ids) == 0:
        raise ValueError("empty dataset: all objects assigned to eval")
    train_objs = [objects[i] for i in train_ids]
    eval_objs = [objects[i] for i in eval_ids]

    params = params_from_config(config)
    state = init_optimizer(params, config.beta1, config.beta2, config.eps, config.weight_decay)
    weights = config.weights

    steps_per_epoch = int(np.ceil(len(train_objs) / config.batch_size))
    total_steps = config.epochs * steps_per_epoch
    history: list[EpochRecord] = []
    step = 0

    for epoch in range(1, config.epochs + 1):
        order = np.random.default_rng([config.seed, 1, epoch]).permutation(len(train_objs))
        epoch_losses = []
        t0 = time.perf_counter()
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            grads = zeros_like_params(params)
            batch_loss = 0.0
            for oi in batch:
                sample = draw_sample(train_objs[oi], config.n_views, config.missing_ratio,
                                     _derived_seed(config.seed, 2, epoch, int(oi)))
                try:
                    g, loss = backward(params, sample, weights)
                except ValueError as exc:
                    if "invalid coordinate" in str(exc):  # non-finite prediction
                        raise DivergenceError(
                            f"divergence at epoch {epoch}, step {step}: non-finite prediction"
                        ) from exc
                    raise
                batch_loss += loss
                for (aw, ab), (gw, gb) in zip(list(grads.layers()), list(g.layers())):
                    aw += gw
                    ab += gb
            scale = 1.0 / len(batch)
            for aw, ab in grads.layers():
                aw *= scale
                ab *= scale
            batch_loss *= scale
            if not np.isfinite(batch_loss):
                raise DivergenceError(f"divergence at epoch {epoch}, step {step}: loss={batch_loss}")
            lr = cosine_lr(step, total_steps, config.lr_max, config.lr_min)
            params, state = adamw_step(state, params, grads, lr)
            if not all(np.isfinite(w).all() and np.isfinite(b).all() for w, b in params.layers()):
                raise DivergenceError(f"divergence at epoch {epoch}, step {step}: non-finite weights")
            epoch_losses.append(batch_loss)
            step += 1
        elapsed_ms = (time.perf_counter() - t0) * 1e3 / max(1, len(epoch_losses))
        # Train-split metrics are probed on a fixed subset no larger than the
        # eval split so per-epoch bookkeeping stays cheap.
        probe = train_objs[: max(1, len(eval_objs))]
        train_metrics = evaluate_objects(params, probe, config.missing_ratio,
                                         config.seed, config.f1_tau)
        eval_metrics = evaluate_objects(params, eval_objs, config.missing_ratio,
                                        config.seed, config.f1_tau)
        history.append(EpochRecord(epoch, float(np.mean(epoch_losses)),
                                   train_metrics, eval_metrics, elapsed_ms))
    return params, history


# --- checkpoint I/O --------------------------------------------------------


def save_checkpoint(path, params: ModelParams) -> None:
    """Write magic, versioned header, then float64 LE weights in order."""
    enc_widths = [w.shape[1] for w, _ in params.encoder]
    dec_widths = [w.shape[1] for w, _ in params.decoder[:-1]]
    header = struct.pack(
        "<IIIII", _CHECKPOINT_VERSION, params.input_size, params.output_size,
        params.latent_dim, len(enc_widths),
    )
    header += struct.pack(f"<{len(enc_widths)}I", *enc_widths)
    header += struct.pack("<I", len(dec_widths))
    if dec_widths:
        header += struct.pack(f"<{len(dec_widths)}I", *dec_widths)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(header)
        for w, b in params.layers():
            fh.write(w.astype("<f8").tobytes())
            fh.write(b.astype("<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file: bad magic {magic!r}")
        version, input_size, output_size, latent, n_enc = struct.unpack("<IIIII", fh.read(20))
        if version != _CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        enc_widths = list(struct.unpack(f"<{n_enc}I", fh.read(4 * n_enc)))
        (n_dec,) = struct.unpack("<I", fh.read(4))
        dec_widths = list(struct.unpack(f"<{n_dec}I", fh.read(4 * n_dec))) if n_dec else []
        if enc_widths[-1] != latent:
            raise ValueError("corrupt checkpoint: latent dim disagrees with encoder widths")

        def read_layer(fan_in, fan_out):
            w = np.frombuffer(fh.read(8 * fan_in * fan_out), dtype="<f8").reshape(fan_in, fan_out).copy()
            b = np.frombuffer(fh.read(8 * fan_out), dtype="<f8").copy()
            return w, b

        encoder = []
        prev = 3
        for width in enc_widths:
            encoder.append(read_layer(prev, width))
            prev = width
        decoder = []
        for width in dec_widths:
            decoder.append(read_layer(prev, width))
            prev = width
        decoder.append(read_layer(prev, output_size * 3))
        trailing = fh.read(1)
        if trailing:
            raise ValueError("corrupt checkpoint: trailing bytes")
    return ModelParams(input_size, output_size, encoder, decoder)
