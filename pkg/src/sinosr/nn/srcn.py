"""The 7-layer residual CNN: construction, training on patch pairs,
fully-convolutional inference on whole sinograms, and checkpoints.

Layer stack: Conv(1->64)+ReLU, then five Conv(64->64)+ReLU+BN blocks, then
Conv(64->1). The output is the predicted residual map; restoration
subtracts it from the input. Construction refuses any stack whose
parameter counts differ from 186,497 trainable / 640 non-trainable.
"""

from __future__ import annotations

import struct
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, FileFormatError, TrainingError, ValidationError
from ..grids import Sinogram
from ..sinogram_ops import apply_restoration, mix_seed
from .kernels import (
    AdamState,
    BatchNormLayer,
    ConvLayer,
    adam_step,
    check_tensor4,
    init_weights,
    mse_loss,
    relu,
    relu_backward,
)

CHECKPOINT_MAGIC = b"SRCN"
CHECKPOINT_VERSION = 1

EXPECTED_TRAINABLE = 186_497
EXPECTED_NON_TRAINABLE = 640

N_FILTERS = 64
N_LAYERS = 7
RECEPTIVE_FIELD = 2 * N_LAYERS + 1  # 15x15 for seven stacked 3x3 kernels


@dataclass
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 100
    epochs: int = 1
    seed: int = 0
    snr_mix: tuple[float, ...] = (20.0, 40.0, 60.0)
    val_fraction: float = 0.13
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")


class SrcnModel:
    """Ordered conv/BN stack with train|infer forward modes."""

    def __init__(self, convs: list[ConvLayer], bns: list[BatchNormLayer]):
        if len(convs) != N_LAYERS or len(bns) != N_LAYERS - 2:
            raise ValidationError(
                f"architecture drift: expected {N_LAYERS} conv and "
                f"{N_LAYERS - 2} batch-norm layers"
            )
        self.convs = convs
        self.bns = bns  # attached to convs[1..5]
        self.mode = "infer"
        self.trained = False
        self._cache = None
        trainable = self.trainable_parameter_count
        non_trainable = self.non_trainable_parameter_count
        if (trainable, non_trainable) != (EXPECTED_TRAINABLE, EXPECTED_NON_TRAINABLE):
            raise ValidationError(
                f"architecture drift: parameter counts ({trainable}, "
                f"{non_trainable}) != ({EXPECTED_TRAINABLE}, {EXPECTED_NON_TRAINABLE})"
            )

    @property
    def trainable_parameter_count(self) -> int:
        count = sum(c.weights.size + c.bias.size for c in self.convs)
        count += sum(b.gamma.size + b.beta.size for b in self.bns)
        return count

    @property
    def non_trainable_parameter_count(self) -> int:
        return sum(b.running_mean.size + b.running_var.size for b in self.bns)

    def parameters(self) -> list[np.ndarray]:
        """Trainable arrays in a fixed order (mutated in place by Adam)."""
        params = []
        for i, c in enumerate(self.convs):
            params.append(c.weights)
            params.append(c.bias)
            if 1 <= i <= N_LAYERS - 2:
                bn = self.bns[i - 1]
                params.append(bn.gamma)
                params.append(bn.beta)
        return params

    def forward(self, x, mode: str | None = None):
        mode = mode or self.mode
        x = check_tensor4(x, 1)
        cache = mode == "train"
        pre_acts = []
        h = x
        for i, conv in enumerate(self.convs):
            h = conv.forward(h, cache=cache)
            if i < N_LAYERS - 1:
                z = h
                if cache:
                    pre_acts.append(z)
                h = relu(z)
                if 1 <= i <= N_LAYERS - 2:
                    h = self.bns[i - 1].forward(h, mode)
        if cache:
            self._cache = pre_acts
        return h

    def backward(self, grad_out) -> list[np.ndarray]:
        """Gradients for :meth:`parameters`, matching its order."""
        if self._cache is None:
            raise ValidationError("backward called before a train-mode forward")
        pre_acts = self._cache
        grads_rev = []
        g = grad_out
        for i in range(N_LAYERS - 1, -1, -1):
            if i < N_LAYERS - 1:
                if 1 <= i <= N_LAYERS - 2:
                    g, g_gamma, g_beta = self.bns[i - 1].backward(g)
                    grads_rev.append(g_beta)
                    grads_rev.append(g_gamma)
                g = relu_backward(g, pre_acts[i])
            g, g_w, g_b = self.convs[i].backward(g)
            grads_rev.append(g_b)
            grads_rev.append(g_w)
        return grads_rev[::-1]


def build_srcn(seed: int, bn_momentum: float = 0.99) -> SrcnModel:
    """Construct the network with Normal(0, 0.001^2) kernels and zero biases.

    ``bn_momentum`` controls how fast batch-norm running statistics adapt;
    short desk-scale runs (a few hundred batches) want a smaller value than
    the 0.99 default so the running statistics converge before inference.
    """
    convs = []
    for i in range(N_LAYERS):
        cin = 1 if i == 0 else N_FILTERS
        cout = 1 if i == N_LAYERS - 1 else N_FILTERS
        w = init_weights((3, 3, cin, cout), mix_seed(seed, i))
        convs.append(ConvLayer(w, np.zeros(cout)))
    bns = [BatchNormLayer(N_FILTERS, momentum=bn_momentum)
           for _ in range(N_LAYERS - 2)]
    return SrcnModel(convs, bns)


@dataclass
class TrainLog:
    rows: list[tuple[int, float, float, float]] = field(default_factory=list)

    def add(self, epoch, train_loss, val_loss, wall_time):
        self.rows.append((int(epoch), float(train_loss), float(val_loss),
                          float(wall_time)))

    @property
    def final_train_loss(self) -> float:
        return self.rows[-1][1]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("epoch,train_loss,val_loss,wall_time\n")
            for e, tr, va, wt in self.rows:
                fh.write(f"{e},{tr!r},{va!r},{wt:.3f}\n")


def _as_batch(patches) -> np.ndarray:
    arr = np.asarray(patches, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[..., None]
    return check_tensor4(arr, 1)


def _infer_loss(model, x, y, batch_size):
    total = 0.0
    for start in range(0, x.shape[0], batch_size):
        xb = x[start:start + batch_size]
        yb = y[start:start + batch_size]
        out = model.forward(xb, "infer")
        total += float(np.sum((out - yb) ** 2))
    return total / x.shape[0]


def train_srcn(model: SrcnModel, inputs, targets, cfg: TrainConfig,
               opt_state: AdamState | None = None) -> TrainLog:
    """Train on patch pairs (inputs: degraded patches, targets: residuals).

    Shuffled seeded minibatches, MSE loss, Adam; logs per-epoch training and
    validation loss. Aborts on a non-finite loss.
    """
    x = _as_batch(inputs)
    y = _as_batch(targets)
    if x.shape != y.shape:
        raise DimensionError(f"input/target shapes differ: {x.shape} vs {y.shape}")
    n = x.shape[0]
    if n < 1:
        raise ValidationError("empty training set")

    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(n)
    n_val = int(round(cfg.val_fraction * n)) if n > 1 else 0
    val_idx = order[:n_val]
    train_idx = order[n_val:]
    if train_idx.size == 0:
        raise ValidationError("validation split leaves no training samples")

    params = model.parameters()
    if opt_state is None:
        opt_state = AdamState.for_params(params, cfg.lr, cfg.beta1, cfg.beta2)

    log = TrainLog()
    for epoch in range(1, cfg.epochs + 1):
        tic = time.perf_counter()
        epoch_order = train_idx[rng.permutation(train_idx.size)]
        running = 0.0
        for bi, start in enumerate(range(0, epoch_order.size, cfg.batch_size)):
            idx = epoch_order[start:start + cfg.batch_size]
            out = model.forward(x[idx], "train")
            loss, grad = mse_loss(out, y[idx])
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {bi}"
                )
            grads = model.backward(grad)
            adam_step(params, grads, opt_state)
            running += loss * idx.size
        train_loss = running / epoch_order.size
        val_loss = (_infer_loss(model, x[val_idx], y[val_idx], cfg.batch_size)
                    if n_val else float("nan"))
        log.add(epoch, train_loss, val_loss, time.perf_counter() - tic)
        if (cfg.checkpoint_every and cfg.checkpoint_dir
                and epoch % cfg.checkpoint_every == 0):
            save_checkpoint(model, opt_state,
                            f"{cfg.checkpoint_dir}/epoch_{epoch:04d}.ckpt")
    model.trained = True
    model.mode = "infer"
    return log


def infer_sinogram(model: SrcnModel, t_in: Sinogram) -> tuple[Sinogram, Sinogram]:
    """Whole-sinogram fully-convolutional inference.

    Returns (predicted residual, restored sinogram); the restored sinogram
    is input minus residual.
    """
    if not model.trained:
        warnings.warn("inference on an untrained model", stacklevel=2)
    x = t_in.data[None, :, :, None]
    residual = model.forward(x, "infer")[0, :, :, 0]
    t_r = Sinogram(residual, t_in.dt, t_in.t0)
    return t_r, apply_restoration(t_in, t_r)


# ---------------------------------------------------------------------------
# checkpoints: magic, version, flags, layer table, f32 parameters, optional
# f64 Adam state


def save_checkpoint(model: SrcnModel, opt_state: AdamState | None, path) -> None:
    parts = [CHECKPOINT_MAGIC,
             struct.pack("<IBB", CHECKPOINT_VERSION, int(model.trained),
                         int(opt_state is not None)),
             struct.pack("<I", len(model.convs) + len(model.bns))]
    for i, conv in enumerate(model.convs):
        kh, kw, cin, cout = conv.weights.shape
        parts.append(struct.pack("<BIIII", 1, kh, kw, cin, cout))
        if 1 <= i <= N_LAYERS - 2:
            parts.append(struct.pack("<BI", 2, model.bns[i - 1].channels))
    for i, conv in enumerate(model.convs):
        parts.append(conv.weights.astype("<f4").tobytes())
        parts.append(conv.bias.astype("<f4").tobytes())
        if 1 <= i <= N_LAYERS - 2:
            bn = model.bns[i - 1]
            for arr in (bn.gamma, bn.beta, bn.running_mean, bn.running_var):
                parts.append(arr.astype("<f4").tobytes())
    if opt_state is not None:
        parts.append(struct.pack("<Qdddd", opt_state.t, opt_state.lr,
                                 opt_state.beta1, opt_state.beta2,
                                 opt_state.epsilon))
        for m, v in zip(opt_state.m, opt_state.v):
            parts.append(np.ascontiguousarray(m, dtype="<f8").tobytes())
            parts.append(np.ascontiguousarray(v, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, path):
        with open(path, "rb") as fh:
            self.buf = fh.read()
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise FileFormatError(f"truncated checkpoint while reading {what}",
                                  len(self.buf))
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def array(self, count, dtype, what):
        itemsize = np.dtype(dtype).itemsize
        raw = self.take(count * itemsize, what)
        return np.frombuffer(raw, dtype=dtype).astype(np.float64)


_EXPECTED_TABLE = []
for _i in range(N_LAYERS):
    _cin = 1 if _i == 0 else N_FILTERS
    _cout = 1 if _i == N_LAYERS - 1 else N_FILTERS
    _EXPECTED_TABLE.append((1, (3, 3, _cin, _cout)))
    if 1 <= _i <= N_LAYERS - 2:
        _EXPECTED_TABLE.append((2, (N_FILTERS,)))


def load_checkpoint(path) -> tuple[SrcnModel, AdamState | None]:
    r = _Reader(path)
    magic = r.take(4, "magic")
    if magic != CHECKPOINT_MAGIC:
        raise FileFormatError(f"bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}", 0)
    version, trained, has_adam = r.unpack("<IBB", "header")
    if version != CHECKPOINT_VERSION:
        raise FileFormatError(f"unsupported checkpoint version {version}", 4)
    n_entries, = r.unpack("<I", "layer count")
    table = []
    for _ in range(n_entries):
        tag, = r.unpack("<B", "layer tag")
        if tag == 1:
            table.append((1, tuple(r.unpack("<IIII", "conv dims"))))
        elif tag == 2:
            table.append((2, tuple(r.unpack("<I", "bn dims"))))
        else:
            raise FileFormatError(f"unknown layer tag {tag}", r.pos - 1)
    if table != _EXPECTED_TABLE:
        raise FileFormatError("layer table does not match the SRCN architecture")

    convs = []
    bns = []
    for tag, dims in table:
        if tag == 1:
            w = r.array(int(np.prod(dims)), "<f4", "conv weights").reshape(dims)
            b = r.array(dims[3], "<f4", "conv bias")
            convs.append(ConvLayer(w, b))
        else:
            bn = BatchNormLayer(dims[0])
            bn.gamma = r.array(dims[0], "<f4", "bn gamma")
            bn.beta = r.array(dims[0], "<f4", "bn beta")
            bn.running_mean = r.array(dims[0], "<f4", "bn running mean")
            bn.running_var = r.array(dims[0], "<f4", "bn running var")
            bns.append(bn)
    model = SrcnModel(convs, bns)
    model.trained = bool(trained)

    opt_state = None
    if has_adam:
        t, lr, b1, b2, eps = r.unpack("<Qdddd", "adam header")
        params = model.parameters()
        m = []
        v = []
        for p in params:
            m.append(r.array(p.size, "<f8", "adam m").reshape(p.shape))
            v.append(r.array(p.size, "<f8", "adam v").reshape(p.shape))
        opt_state = AdamState(lr=lr, beta1=b1, beta2=b2, epsilon=eps, t=int(t),
                              m=m, v=v)
    return model, opt_state
