"""DRCP network, LR/MLP baselines, training loop and checkpoints."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from roadcast import engine as E
from roadcast.engine.init import glorot_uniform, ones, zeros

log = logging.getLogger(__name__)

SEQ_LEN = 10
FEATURE_DIM = 59
POOLED_SIDE = 16
BASELINE_INPUT = SEQ_LEN * FEATURE_DIM + POOLED_SIDE * POOLED_SIDE


@dataclass(frozen=True)
class DrcpConfig:
    tile_size: int = 256
    conv_block_channels: tuple[int, ...] = (4, 32, 8)
    batchnorm_in_conv_blocks: tuple[bool, ...] = (True, True, False)
    decoder_channels: tuple[int, ...] = (8, 8, 8, 16, 16, 16)
    post_flatten_dense: int = 128
    lstm_units: tuple[int, ...] = (59, 45)
    lstm_activation: str = "sigmoid"
    rnn_dense: int = 40
    fc_sizes: tuple[int, ...] = (64, 16, 1)
    concat_width: int = 168
    seq_len: int = SEQ_LEN
    feature_dim: int = FEATURE_DIM

    def __post_init__(self):
        if self.post_flatten_dense + self.rnn_dense != self.concat_width:
            raise ValueError(
                f"branch widths {self.post_flatten_dense} + {self.rnn_dense} != concat width {self.concat_width}"
            )
        if len(self.conv_block_channels) != len(self.batchnorm_in_conv_blocks):
            raise ValueError("one batchnorm flag per conv block")
        if self.fc_sizes[-1] != 1:
            raise ValueError("the head must end in a single unit")
        if self.tile_size % (2 ** len(self.decoder_channels)):
            raise ValueError(f"tile size {self.tile_size} cannot be halved {len(self.decoder_channels)} times")

    @property
    def flatten_width(self) -> int:
        side = self.tile_size // 2 ** len(self.decoder_channels)
        return side * side * self.decoder_channels[-1]

    @classmethod
    def from_dict(cls, d: dict) -> "DrcpConfig":
        kw = {}
        for f in fields(cls):
            if f.name in d:
                v = d[f.name]
                kw[f.name] = tuple(v) if isinstance(v, list) else v
        return cls(**kw)


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 1000
    patience: int = 30
    lr_initial: float = 1e-4
    lr_factor: float = 0.9
    lr_patience: int = 5
    lr_floor: float = 1e-6
    batch_size: int = 32
    class_weights: tuple[float, float] = (1.01, 16.01)
    l2: float = 1e-4
    seed: int = 0
    # when set, each mini-batch draws its windows from this many cells only
    cells_per_batch: int | None = None

    def __post_init__(self):
        if self.patience < 1 or self.lr_patience < 1:
            raise ValueError("patience values must be positive")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be positive")
        if self.cells_per_batch is not None and self.cells_per_batch < 1:
            raise ValueError("cells_per_batch must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        kw = {f.name: d[f.name] for f in fields(cls) if f.name in d}
        if "class_weights" in kw:
            kw["class_weights"] = tuple(kw["class_weights"])
        return cls(**kw)


# ---- data container -------------------------------------------------------------

@dataclass
class WindowSet:
    """Model-ready windows.

    ``seq`` is (N, 10, 59) normalized history; ``tiles`` holds one RGB tile
    in [0, 1] per distinct cell and ``tile_index`` maps each window to its
    tile; ``labels`` is (N,) of 0/1.
    """

    seq: np.ndarray
    tiles: np.ndarray
    tile_index: np.ndarray
    labels: np.ndarray
    cells: list = field(default_factory=list)
    targets: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "WindowSet":
        idx = np.asarray(idx, dtype=np.intp)
        return WindowSet(
            seq=self.seq[idx], tiles=self.tiles, tile_index=self.tile_index[idx],
            labels=self.labels[idx], cells=[self.cells[i] for i in idx] if self.cells else [],
            targets=None if self.targets is None else self.targets[idx],
        )


def pooled_gray(tiles: np.ndarray, side: int = POOLED_SIDE) -> np.ndarray:
    """Channel-mean grayscale, block-averaged down to ``side`` x ``side``, flattened."""
    n, h, w, _ = tiles.shape
    if h % side or w % side:
        raise ValueError(f"tile {h}x{w} does not pool evenly to {side}x{side}")
    gray = tiles.mean(axis=-1)
    return gray.reshape(n, side, h // side, side, w // side).mean(axis=(2, 4)).reshape(n, side * side)


# ---- models ------------------------------------------------------------------------

class Model:
    kind = "model"

    def __init__(self):
        self._params: list[E.Parameter] = []
        self._bn: list[tuple[str, E.BatchNormState]] = []

    def _param(self, p: E.Parameter) -> E.Parameter:
        self._params.append(p)
        return p

    def parameters(self) -> list[E.Parameter]:
        return list(self._params)

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for name, st in self._bn:
            out.append((f"{name}.running_mean", st.mean))
            out.append((f"{name}.running_var", st.var))
        return out

    def set_buffer(self, name: str, value: np.ndarray) -> None:
        for bn_name, st in self._bn:
            if name == f"{bn_name}.running_mean":
                st.mean = value.copy()
                return
            if name == f"{bn_name}.running_var":
                st.var = value.copy()
                return
        raise KeyError(name)

    def penalty(self):
        return None

    def config_dict(self) -> dict:
        return {}

    def forward(self, seq: np.ndarray, tiles: np.ndarray, tile_index: np.ndarray,
                training: bool = False) -> E.Tensor:
        raise NotImplementedError

    def n_parameters(self) -> int:
        return sum(p.size for p in self._params)


class Drcp(Model):
    """CNN tile branch + two-layer LSTM history branch + fully connected head."""

    kind = "drcp"

    def __init__(self, config: DrcpConfig = DrcpConfig(), seed: int = 0):
        super().__init__()
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(seed)
        dt = E.get_dtype()

        self.conv_blocks = []
        c_in = 3
        for i, (c_out, use_bn) in enumerate(zip(config.conv_block_channels, config.batchnorm_in_conv_blocks)):
            name = f"cnn.block{i}"
            k = self._param(glorot_uniform(rng, (3, 3, c_in, c_out), 9 * c_in, 9 * c_out, f"{name}.kernel"))
            b = self._param(zeros((c_out,), f"{name}.bias"))
            bn = self._bn_params(name, c_out, dt) if use_bn else None
            self.conv_blocks.append((k, b, bn))
            c_in = c_out

        self.decoder = []
        for i, c_out in enumerate(config.decoder_channels):
            name = f"cnn.decoder{i}"
            k = self._param(glorot_uniform(rng, (3, 3, c_in, c_out), 9 * c_in, 9 * c_out, f"{name}.kernel"))
            b = self._param(zeros((c_out,), f"{name}.bias"))
            self.decoder.append((k, b, self._bn_params(name, c_out, dt)))
            c_in = c_out

        fw = config.flatten_width
        self.cnn_dense = self._dense(rng, fw, config.post_flatten_dense, "cnn.dense")

        self.lstms = []
        d_in = config.feature_dim
        for i, units in enumerate(config.lstm_units):
            name = f"rnn.lstm{i}"
            wx = self._param(glorot_uniform(rng, (d_in, 4 * units), d_in, 4 * units, f"{name}.kernel"))
            wh = self._param(glorot_uniform(rng, (units, 4 * units), units, 4 * units, f"{name}.recurrent"))
            bias = np.zeros(4 * units, dtype=dt)
            bias[units:2 * units] = 1.0
            b = self._param(E.Parameter(bias, name=f"{name}.bias"))
            self.lstms.append((wx, wh, b))
            d_in = units
        self.rnn_dense = self._dense(rng, d_in, config.rnn_dense, "rnn.dense")

        self.head = []
        width = config.concat_width
        for i, size in enumerate(config.fc_sizes):
            self.head.append(self._dense(rng, width, size, f"head.dense{i}"))
            width = size

    def _bn_params(self, name, channels, dt):
        gamma = self._param(ones((channels,), f"{name}.bn.gamma"))
        beta = self._param(zeros((channels,), f"{name}.bn.beta"))
        state = E.BatchNormState(channels, dtype=dt)
        self._bn.append((f"{name}.bn", state))
        return gamma, beta, state

    def _dense(self, rng, n_in, n_out, name):
        w = self._param(glorot_uniform(rng, (n_in, n_out), n_in, n_out, f"{name}.kernel"))
        b = self._param(zeros((n_out,), f"{name}.bias"))
        return w, b

    def config_dict(self) -> dict:
        return asdict(self.config)

    def cnn_branch(self, tiles: E.Tensor, training: bool) -> E.Tensor:
        x = tiles
        for i, (k, b, bn) in enumerate(self.conv_blocks):
            x = E.conv2d(x, k, b)
            if bn is not None:
                x = E.batchnorm(x, bn[0], bn[1], bn[2], training)
            x = E.relu(x)
        for k, b, (gamma, beta, state) in self.decoder:
            x = E.conv2d(x, k, b)
            x = E.batchnorm(x, gamma, beta, state, training)
            x = E.maxpool2(x)
            x = E.relu(x)
        x = E.flatten(x)
        return E.sigmoid(E.dense(x, *self.cnn_dense))

    def rnn_branch(self, seq: E.Tensor) -> E.Tensor:
        x = seq
        last = len(self.lstms) - 1
        for i, (wx, wh, b) in enumerate(self.lstms):
            x = E.lstm(x, wx, wh, b, return_sequences=i < last, activation=self.config.lstm_activation)
        return E.sigmoid(E.dense(x, *self.rnn_dense))

    def forward(self, seq, tiles, tile_index, training=False) -> E.Tensor:
        seq = seq if isinstance(seq, E.Tensor) else E.Tensor(seq)
        tiles = tiles if isinstance(tiles, E.Tensor) else E.Tensor(tiles)
        # every window of a cell shares its tile, so the CNN runs once per distinct tile
        uniq, inverse = np.unique(np.asarray(tile_index), return_inverse=True)
        img = E.take_rows(self.cnn_branch(E.take_rows(tiles, uniq), training), inverse)
        rec = self.rnn_branch(seq)
        x = E.concat(img, rec)
        last = len(self.head) - 1
        for i, (w, b) in enumerate(self.head):
            x = E.dense(x, w, b)
            x = E.sigmoid(x) if i == last else E.relu(x)
        return x


class LogisticRegression(Model):
    """Affine score over the vectorized window, logistic output, L2 on the weights."""

    kind = "lr"

    def __init__(self, seed: int = 0, l2: float = 1e-4, n_inputs: int = BASELINE_INPUT):
        super().__init__()
        self.seed = seed
        self.l2 = l2
        self.n_inputs = n_inputs
        self.w = self._param(zeros((n_inputs, 1), "lr.kernel"))
        self.b = self._param(zeros((1,), "lr.bias"))

    def config_dict(self) -> dict:
        return {"l2": self.l2, "n_inputs": self.n_inputs}

    def penalty(self):
        return E.l2_penalty([self.w], self.l2)

    def forward(self, seq, tiles, tile_index, training=False) -> E.Tensor:
        x = E.Tensor(vectorize(seq, tiles, tile_index))
        return E.sigmoid(E.dense(x, self.w, self.b))


class Mlp(Model):
    kind = "mlp"

    def __init__(self, seed: int = 0, hidden: int = 100, n_inputs: int = BASELINE_INPUT):
        super().__init__()
        self.seed = seed
        self.hidden = hidden
        self.n_inputs = n_inputs
        rng = np.random.default_rng(seed)
        self.w1 = self._param(glorot_uniform(rng, (n_inputs, hidden), n_inputs, hidden, "mlp.hidden.kernel"))
        self.b1 = self._param(zeros((hidden,), "mlp.hidden.bias"))
        self.w2 = self._param(glorot_uniform(rng, (hidden, 1), hidden, 1, "mlp.out.kernel"))
        self.b2 = self._param(zeros((1,), "mlp.out.bias"))

    def config_dict(self) -> dict:
        return {"hidden": self.hidden, "n_inputs": self.n_inputs}

    def forward(self, seq, tiles, tile_index, training=False) -> E.Tensor:
        x = E.Tensor(vectorize(seq, tiles, tile_index))
        h = E.relu(E.dense(x, self.w1, self.b1))
        return E.sigmoid(E.dense(h, self.w2, self.b2))


def vectorize(seq, tiles, tile_index) -> np.ndarray:
    """Flattened history followed by the 16x16 pooled grayscale tile."""
    seq = seq.data if isinstance(seq, E.Tensor) else np.asarray(seq)
    tiles = tiles.data if isinstance(tiles, E.Tensor) else np.asarray(tiles)
    uniq, inv = np.unique(np.asarray(tile_index, dtype=np.intp), return_inverse=True)
    pooled = pooled_gray(tiles[uniq])[inv.reshape(-1)]
    return np.concatenate([seq.reshape(len(seq), -1), pooled], axis=1).astype(E.get_dtype())


def build_drcp(config: DrcpConfig = DrcpConfig(), seed: int = 0) -> Drcp:
    return Drcp(config, seed)


def build_baseline(kind: str, seed: int = 0, l2: float = 1e-4) -> Model:
    kind = kind.lower()
    if kind == "lr":
        return LogisticRegression(seed=seed, l2=l2)
    if kind == "mlp":
        return Mlp(seed=seed)
    raise ValueError(f"unknown baseline kind {kind!r}")


def build_model(kind: str, seed: int = 0, drcp_config: DrcpConfig | None = None, l2: float = 1e-4) -> Model:
    if kind == "drcp":
        return build_drcp(drcp_config or DrcpConfig(), seed)
    return build_baseline(kind, seed, l2)


# ---- training --------------------------------------------------------------------

class TrainingError(RuntimeError):
    pass


def _batches(n: int, size: int):
    for lo in range(0, n, size):
        yield slice(lo, min(lo + size, n))


def epoch_batches(rng: np.random.Generator, tile_index: np.ndarray, batch_size: int,
                  cells_per_batch: int | None = None) -> list[np.ndarray]:
    """Shuffled mini-batches of window indices for one epoch.

    With ``cells_per_batch`` the cells are shuffled into groups of that size,
    each group's windows are shuffled and cut into batches, and the batch
    order is shuffled; a batch then needs at most ``cells_per_batch`` tiles.
    """
    n = len(tile_index)
    if cells_per_batch is None:
        order = rng.permutation(n)
        return [order[sl] for sl in _batches(n, batch_size)]
    cells = np.unique(tile_index)
    cells = cells[rng.permutation(len(cells))]
    batches = []
    for lo in range(0, len(cells), cells_per_batch):
        members = np.flatnonzero(np.isin(tile_index, cells[lo:lo + cells_per_batch]))
        members = members[rng.permutation(len(members))]
        batches.extend(members[sl] for sl in _batches(len(members), batch_size))
    return [batches[i] for i in rng.permutation(len(batches))]


def evaluate_loss(model: Model, data: WindowSet, class_weights, batch_size: int = 256) -> float:
    """Mean class-weighted BCE in inference mode."""
    total = 0.0
    w0, w1 = class_weights
    with E.no_grad():
        for sl in _batches(len(data), batch_size):
            p = model.forward(data.seq[sl], data.tiles, data.tile_index[sl], training=False)
            total += float(E.weighted_bce(p, data.labels[sl], w0, w1, reduction="sum").data)
    return total / len(data)


def train(model: Model, train_set: WindowSet, val_set: WindowSet, config: TrainConfig = TrainConfig()):
    """Mini-batch Adam with plateau LR decay and early stopping on validation loss.

    Returns the model carrying its best-validation-loss weights and the
    per-epoch history.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise TrainingError("training needs non-empty train and validation splits")
    rng = np.random.default_rng(config.seed)
    params = model.parameters()
    opt = E.Adam(params)
    schedule = E.PlateauSchedule(config.lr_initial, config.lr_factor, config.lr_patience, config.lr_floor)
    stopper = E.EarlyStopping(config.patience)
    w0, w1 = config.class_weights
    best = _snapshot(model)
    history = []
    lr = schedule.lr
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        running = 0.0
        for idx in epoch_batches(rng, train_set.tile_index, config.batch_size, config.cells_per_batch):
            opt.zero_grad()
            try:
                p = model.forward(train_set.seq[idx], train_set.tiles, train_set.tile_index[idx], training=True)
                loss = E.weighted_bce(p, train_set.labels[idx], w0, w1)
                pen = model.penalty()
                if pen is not None:
                    loss = E.add(loss, pen)
            except E.NonFiniteError as exc:
                raise TrainingError(f"non-finite values in epoch {epoch}: {exc}") from exc
            if not math.isfinite(float(loss.data)):
                raise TrainingError(f"loss became NaN in epoch {epoch}")
            E.backward(loss)
            opt.step(lr)
            running += float(loss.data) * len(idx)
        val_loss = evaluate_loss(model, val_set, config.class_weights)
        if not math.isfinite(val_loss):
            raise TrainingError(f"validation loss became NaN in epoch {epoch}")
        history.append({
            "epoch": epoch, "train_loss": running / len(train_set), "val_loss": val_loss, "lr": lr,
        })
        log.info("%s epoch %d train %.5f val %.5f lr %.2e (%.1fs)", model.kind, epoch,
                 running / len(train_set), val_loss, lr, time.perf_counter() - t0)
        improved = val_loss < stopper.best
        stop = stopper.update(epoch, val_loss)
        if improved:
            best = _snapshot(model)
        lr = schedule.update(val_loss)
        if stop:
            break
    _restore(model, best)
    return model, {"epochs": history, "best_epoch": stopper.best_epoch, "best_val_loss": stopper.best}


def _snapshot(model: Model):
    return ([p.data.copy() for p in model.parameters()], [v.copy() for _, v in model.buffers()])


def _restore(model: Model, snap) -> None:
    values, buffers = snap
    for p, v in zip(model.parameters(), values):
        p.data[...] = v
    for (name, _), v in zip(model.buffers(), buffers):
        model.set_buffer(name, v)


def predict(model: Model, data: WindowSet, threshold: float = 0.5, batch_size: int = 256):
    """Inference-mode probabilities and ``p >= threshold`` labels."""
    out = []
    with E.no_grad():
        for sl in _batches(len(data), batch_size):
            out.append(model.forward(data.seq[sl], data.tiles, data.tile_index[sl], training=False).data[:, 0])
    probs = np.concatenate(out) if out else np.empty(0, dtype=E.get_dtype())
    return probs, (probs >= threshold).astype(np.int8)


# ---- checkpoints -------------------------------------------------------------------

CHECKPOINT_FORMAT = "roadcast-checkpoint/1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: Model, path, norm_stats_ref: str | None = None) -> None:
    """Manifest JSON, a single 0x00 byte, then little-endian float32 tensors in manifest order."""
    tensors = [(p.name, p.data) for p in model.parameters()] + model.buffers()
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "kind": model.kind,
        "config": model.config_dict(),
        "seed": model.seed,
        "norm_stats": norm_stats_ref,
        "tensors": [{"name": n, "shape": list(v.shape)} for n, v in tensors],
    }
    blob = b"".join(np.ascontiguousarray(v, dtype="<f4").tobytes() for _, v in tensors)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(json.dumps(manifest, sort_keys=True).encode() + b"\x00" + blob)


def read_manifest(path) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    sep = raw.find(b"\x00")
    if sep < 0:
        raise CheckpointError(f"{path}: no manifest separator")
    try:
        manifest = json.loads(raw[:sep].decode())
    except ValueError as exc:
        raise CheckpointError(f"{path}: unreadable manifest") from exc
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: unsupported checkpoint format {manifest.get('format')!r}")
    return manifest, raw[sep + 1:]


def load_checkpoint(path, expected_kind: str | None = None) -> Model:
    manifest, blob = read_manifest(path)
    kind = manifest["kind"]
    if expected_kind is not None and kind != expected_kind:
        raise CheckpointError(f"{path}: holds a {kind!r} model, expected {expected_kind!r}")
    sizes = [int(np.prod(t["shape"], dtype=np.int64)) for t in manifest["tensors"]]
    if len(blob) != 4 * sum(sizes):
        raise CheckpointError(f"{path}: blob has {len(blob)} bytes, manifest needs {4 * sum(sizes)}")
    cfg = manifest["config"]
    if kind == "drcp":
        model = Drcp(DrcpConfig.from_dict(cfg), seed=manifest["seed"])
    elif kind == "lr":
        model = LogisticRegression(seed=manifest["seed"], l2=cfg["l2"], n_inputs=cfg["n_inputs"])
    elif kind == "mlp":
        model = Mlp(seed=manifest["seed"], hidden=cfg["hidden"], n_inputs=cfg["n_inputs"])
    else:
        raise CheckpointError(f"{path}: unknown model kind {kind!r}")
    params = {p.name: p for p in model.parameters()}
    buffer_names = {n for n, _ in model.buffers()}
    expected = set(params) | buffer_names
    names = [t["name"] for t in manifest["tensors"]]
    if set(names) != expected or len(names) != len(expected):
        raise CheckpointError(f"{path}: tensor names do not match a {kind!r} model")
    offset = 0
    for t, size in zip(manifest["tensors"], sizes):
        value = np.frombuffer(blob, dtype="<f4", count=size, offset=offset).reshape(t["shape"])
        offset += 4 * size
        if t["name"] in params:
            p = params[t["name"]]
            if p.shape != value.shape:
                raise CheckpointError(f"{path}: shape mismatch for {t['name']}")
            p.data = value.astype(p.data.dtype)
        else:
            model.set_buffer(t["name"], value.astype(E.get_dtype()))
    return model


def with_tile_size(config: DrcpConfig, tile_size: int) -> DrcpConfig:
    return replace(config, tile_size=tile_size)
