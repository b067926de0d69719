"""Training: configuration, parameter init, Adam, the epoch loop, and binary
checkpoints.

Determinism contract: a (seed, config, data) triple fixes every random draw.
The master generator is counter-based (Philox); each epoch draws one child
seed for the shuffle, and dropout masks come straight off the master stream.
The full generator state rides along in checkpoints, so a resumed run replays
the exact same stream as an uninterrupted one.

Checkpoint format (little endian):
  magic    4 bytes b"MYGO"
  version  u32 (currently 1)
  u32 tensor count, then per tensor:
    u16 name length, UTF-8 name, u8 rank, rank x u64 dims, float32 payload
  u32 optimizer tensor count, same tensor encoding (adam.m.*, adam.v.*,
    trainer.step, trainer.epoch)
  u32 config echo length, UTF-8 key=value lines
  u32 rng blob length, canonical JSON of the generator state
"""

from __future__ import annotations

import dataclasses
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tape, Tensor
from .errors import ConfigError, DataError, NumericError
from .model import ABLATIONS, ModelParams, total_loss
from .nn import EncoderLayer

CHECKPOINT_MAGIC = b"MYGO"
CHECKPOINT_VERSION = 1

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

TUCKER_INIT_BOUND = 0.1


@dataclass
class TrainConfig:
    """Model and optimization hyperparameters (defaults: DB15K profile)."""

    dim: int = 256
    heads: int = 4
    ff_mult: int = 4
    dropout: float = 0.3
    m: int = 8
    n: int = 8
    learning_rate: float = 1e-3
    batch_size: int = 1024
    epochs: int = 2000
    lambda_con: float = 0.01
    tau: float = 0.5
    seed: int = 0
    eval_every: int = 100
    ablation: str = ""
    raw_relation_score: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.dim <= 0:
            raise ConfigError(f"dim must be positive, got {self.dim}")
        if self.heads <= 0 or self.dim % self.heads != 0:
            raise ConfigError(f"dim {self.dim} must be divisible by "
                              f"heads {self.heads}")
        if self.ff_mult <= 0:
            raise ConfigError("ff_mult must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.m <= 0 or self.n <= 0:
            raise ConfigError("token counts m and n must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size <= 0:
            raise ConfigError("batch_size must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.lambda_con < 0:
            raise ConfigError("lambda_con must be >= 0")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.eval_every < 0:
            raise ConfigError("eval_every must be >= 0")
        if self.ablation and self.ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {self.ablation!r}; "
                              f"choose from {', '.join(ABLATIONS)}")


def config_to_text(cfg):
    """Canonical key = value echo (sorted keys, one per line)."""
    lines = []
    for f in sorted(dataclasses.fields(cfg), key=lambda f: f.name):
        lines.append(f"{f.name} = {getattr(cfg, f.name)}")
    return "\n".join(lines) + "\n"


def config_from_items(items):
    """Build a TrainConfig from string key/value pairs (config file, echo)."""
    field_types = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    kwargs = {}
    for key, raw in items.items():
        if key not in field_types:
            raise ConfigError(f"unknown config key {key!r}")
        kind = field_types[key]
        try:
            if kind == "bool":
                low = raw.strip().lower()
                if low not in ("true", "false", "0", "1"):
                    raise ValueError(raw)
                kwargs[key] = low in ("true", "1")
            elif kind == "int":
                kwargs[key] = int(raw)
            elif kind == "float":
                kwargs[key] = float(raw)
            else:
                kwargs[key] = raw.strip()
        except ValueError:
            raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return TrainConfig(**kwargs)


def parse_config_text(text, source="<config>"):
    """Parse `key = value` lines ('#' comments and blank lines ignored)."""
    items = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        if key in items:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        items[key] = value.strip()
    return items


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def make_rng(seed):
    """Master generator: counter-based so state serializes compactly."""
    return np.random.Generator(np.random.Philox(seed))


def xavier_bound(shape):
    if len(shape) == 2:
        return math.sqrt(6.0 / (shape[0] + shape[1]))
    if len(shape) == 1:
        return math.sqrt(6.0 / (1 + shape[0]))
    raise ValueError(f"no init bound for shape {shape}")


def _uniform(rng, shape, dtype=np.float32):
    bound = xavier_bound(shape)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _init_layer(rng, d, ff):
    def w(shape):
        return Tensor(_uniform(rng, shape), requires_grad=True)

    def zeros(shape):
        return Tensor(np.zeros(shape, dtype=np.float32), requires_grad=True)

    def ones(shape):
        return Tensor(np.ones(shape, dtype=np.float32), requires_grad=True)

    return EncoderLayer(
        wq=w((d, d)), bq=zeros((d,)),
        wk=w((d, d)), bk=zeros((d,)),
        wv=w((d, d)), bv=zeros((d,)),
        wo=w((d, d)), bo=zeros((d,)),
        ln1_gain=ones((d,)), ln1_bias=zeros((d,)),
        ff1_w=w((d, ff)), ff1_b=zeros((ff,)),
        ff2_w=w((ff, d)), ff2_b=zeros((d,)),
        ln2_gain=ones((d,)), ln2_bias=zeros((d,)),
    )


def init_params(cfg, n_entities, n_relations, visual_dim, textual_dim, rng):
    """Fresh float32 parameters.

    Matrices, embeddings and token vectors draw uniform within the fan-based
    bound; biases and layer-norm offsets start at zero, layer-norm gains at
    one; the trilinear core draws uniform within +/-0.1.
    """
    d, ff = cfg.dim, cfg.ff_mult * cfg.dim

    def w(shape):
        return Tensor(_uniform(rng, shape), requires_grad=True)

    def zeros(shape):
        return Tensor(np.zeros(shape, dtype=np.float32), requires_grad=True)

    params = ModelParams(
        entity_emb=w((n_entities, d)),
        relation_emb=w((2 * n_relations, d)),
        visual_proj=w((visual_dim, d)),
        visual_bias=zeros((d,)),
        textual_proj=w((textual_dim, d)),
        textual_bias=zeros((d,)),
        ent_token=w((d,)),
        cxt_token=w((d,)),
        entity_layer=_init_layer(rng, d, ff),
        context_layer=_init_layer(rng, d, ff),
        core=Tensor(rng.uniform(-TUCKER_INIT_BOUND, TUCKER_INIT_BOUND,
                                size=(d, d, d)).astype(np.float32),
                    requires_grad=True),
    )
    for name, tensor in params.named().items():
        tensor.name = name
    return params


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, params):
        self.step_count = 0
        self.m = {name: np.zeros_like(t.data)
                  for name, t in params.named().items()}
        self.v = {name: np.zeros_like(t.data)
                  for name, t in params.named().items()}


def adam_step(params, state, lr):
    """One Adam update (beta1=0.9, beta2=0.999, eps=1e-8, bias-corrected).

    A non-finite gradient anywhere rejects the whole step before any tensor
    is touched. Missing gradients (parameters outside the active graph) count
    as zero. Gradients are cleared afterwards.
    """
    named = params.named()
    grads = {}
    for name, t in named.items():
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}; step rejected")
        grads[name] = g
    state.step_count += 1
    corr1 = 1.0 - ADAM_BETA1 ** state.step_count
    corr2 = 1.0 - ADAM_BETA2 ** state.step_count
    for name, t in named.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        t.data -= lr * (m / corr1) / (np.sqrt(v / corr2) + ADAM_EPS)
        t.zero_grad()


# ---------------------------------------------------------------------------
# rng state serialization
# ---------------------------------------------------------------------------

def rng_to_bytes(rng):
    def clean(value):
        if isinstance(value, dict):
            return {k: clean(v) for k, v in value.items()}
        if isinstance(value, np.ndarray):
            return [int(x) for x in value.tolist()]
        if isinstance(value, (np.integer,)):
            return int(value)
        return value

    state = clean(rng.bit_generator.state)
    return json.dumps(state, sort_keys=True).encode("utf-8")


def rng_from_bytes(blob):
    state = json.loads(blob.decode("utf-8"))
    if state.get("bit_generator") != "Philox":
        raise DataError("checkpoint rng state is not a Philox state")
    inner = state["state"]
    inner["counter"] = np.array(inner["counter"], dtype=np.uint64)
    inner["key"] = np.array(inner["key"], dtype=np.uint64)
    state["buffer"] = np.array(state["buffer"], dtype=np.uint64)
    bit_gen = np.random.Philox()
    bit_gen.state = state
    return np.random.Generator(bit_gen)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def _pack_tensor(name, arr):
    arr = np.ascontiguousarray(arr, dtype="<f4")
    encoded = name.encode("utf-8")
    parts = [struct.pack("<H", len(encoded)), encoded,
             struct.pack("<B", arr.ndim)]
    for dim in arr.shape:
        parts.append(struct.pack("<Q", dim))
    parts.append(arr.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, blob, path):
        self.blob = blob
        self.path = path
        self.pos = 0

    def take(self, count):
        if self.pos + count > len(self.blob):
            raise DataError(f"{self.path}: truncated checkpoint")
        piece = self.blob[self.pos:self.pos + count]
        self.pos += count
        return piece

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_tensor(reader):
    (name_len,) = reader.unpack("<H")
    name = reader.take(name_len).decode("utf-8")
    (rank,) = reader.unpack("<B")
    dims = [reader.unpack("<Q")[0] for _ in range(rank)]
    count = int(np.prod(dims)) if dims else 1
    payload = reader.take(4 * count)
    arr = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    return name, arr


@dataclass
class Checkpoint:
    tensors: dict
    optimizer: dict
    config_text: str
    rng_blob: bytes

    @property
    def epoch(self):
        return int(round(float(self.optimizer.get("trainer.epoch", [0])[0])))

    @property
    def step(self):
        return int(round(float(self.optimizer.get("trainer.step", [0])[0])))


def save_checkpoint(path, params, opt, cfg, rng_blob, epoch):
    """Serialize params + optimizer + config echo + rng state.

    `rng_blob` is the byte string from `rng_to_bytes` (taken at the moment
    the state was current, so snapshots stay self-consistent).
    """
    named = params.named()
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION),
             struct.pack("<I", len(named))]
    for name, tensor in named.items():
        parts.append(_pack_tensor(name, tensor.data))
    opt_items = []
    for name in named:
        opt_items.append((f"adam.m.{name}", opt.m[name]))
    for name in named:
        opt_items.append((f"adam.v.{name}", opt.v[name]))
    opt_items.append(("trainer.step", np.array([opt.step_count], dtype=np.float32)))
    opt_items.append(("trainer.epoch", np.array([epoch], dtype=np.float32)))
    parts.append(struct.pack("<I", len(opt_items)))
    for name, arr in opt_items:
        parts.append(_pack_tensor(name, arr))
    config_bytes = config_to_text(cfg).encode("utf-8")
    parts.append(struct.pack("<I", len(config_bytes)))
    parts.append(config_bytes)
    parts.append(struct.pack("<I", len(rng_blob)))
    parts.append(rng_blob)
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing checkpoint: {path}")
    reader = _Reader(path.read_bytes(), path)
    if reader.take(4) != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: bad checkpoint magic")
    (version,) = reader.unpack("<I")
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    (n_tensors,) = reader.unpack("<I")
    tensors = dict(_read_tensor(reader) for _ in range(n_tensors))
    (n_opt,) = reader.unpack("<I")
    optimizer = dict(_read_tensor(reader) for _ in range(n_opt))
    (cfg_len,) = reader.unpack("<I")
    config_text = reader.take(cfg_len).decode("utf-8")
    (rng_len,) = reader.unpack("<I")
    rng_blob = bytes(reader.take(rng_len))
    if reader.pos != len(reader.blob):
        raise DataError(f"{path}: trailing bytes after checkpoint payload")
    return Checkpoint(tensors, optimizer, config_text, rng_blob)


_LAYER_FIELDS = tuple(f.name for f in dataclasses.fields(EncoderLayer))
_TOP_FIELDS = ("entity_emb", "relation_emb", "visual_proj", "visual_bias",
               "textual_proj", "textual_bias", "ent_token", "cxt_token",
               "core")


def params_from_tensors(tensors):
    """Rebuild ModelParams from a checkpoint tensor dict (names must match)."""
    expected = set(_TOP_FIELDS)
    for prefix in ("entity_layer", "context_layer"):
        expected.update(f"{prefix}.{f}" for f in _LAYER_FIELDS)
    present = set(tensors.keys())
    if expected != present:
        missing = sorted(expected - present)
        extra = sorted(present - expected)
        raise DataError(f"checkpoint tensor mismatch: missing {missing}, "
                        f"unexpected {extra}")

    def t(name):
        return Tensor(tensors[name], requires_grad=True, name=name,
                      dtype=np.float32)

    def layer(prefix):
        return EncoderLayer(**{f: t(f"{prefix}.{f}") for f in _LAYER_FIELDS})

    d = tensors["ent_token"].shape[0]
    for name in ("entity_emb", "relation_emb", "visual_proj", "textual_proj"):
        if tensors[name].ndim != 2 or tensors[name].shape[1] != d:
            raise DataError(f"checkpoint tensor {name} does not match "
                            f"model dim {d}")
    if tensors["core"].shape != (d, d, d):
        raise DataError("checkpoint core tensor has wrong shape")
    return ModelParams(
        entity_emb=t("entity_emb"), relation_emb=t("relation_emb"),
        visual_proj=t("visual_proj"), visual_bias=t("visual_bias"),
        textual_proj=t("textual_proj"), textual_bias=t("textual_bias"),
        ent_token=t("ent_token"), cxt_token=t("cxt_token"),
        entity_layer=layer("entity_layer"), context_layer=layer("context_layer"),
        core=t("core"))


def optimizer_from_checkpoint(ckpt, params):
    state = AdamState(params)
    for name in params.named():
        m_key, v_key = f"adam.m.{name}", f"adam.v.{name}"
        if m_key not in ckpt.optimizer or v_key not in ckpt.optimizer:
            raise DataError(f"checkpoint missing optimizer state for {name}")
        state.m[name] = ckpt.optimizer[m_key].astype(np.float32)
        state.v[name] = ckpt.optimizer[v_key].astype(np.float32)
    state.step_count = ckpt.step
    return state


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    params: ModelParams
    opt: AdamState
    rng: np.random.Generator
    log: list
    epochs_done: int
    best_mrr: float = -1.0
    best_epoch: int = -1
    best_params: ModelParams = None
    best_opt: AdamState = None
    best_rng_blob: bytes = None


def _snapshot(params, opt):
    copy = params.cast(np.float32)
    opt_copy = AdamState(copy)
    opt_copy.step_count = opt.step_count
    opt_copy.m = {k: v.copy() for k, v in opt.m.items()}
    opt_copy.v = {k: v.copy() for k, v in opt.v.items()}
    return copy, opt_copy


def train(graph, data, cfg, log_path=None, resume_from=None):
    """Run the optimization loop over graph.train.

    Every epoch shuffles the triples with a child seed drawn from the master
    generator, then walks fixed-size batches. When a validation split exists
    and eval_every > 0 the filtered both-direction MRR is computed every
    eval_every epochs and the best parameters are kept.
    """
    from .evaluation import evaluate  # local import, avoids a cycle

    if graph.train.shape[0] == 0 and cfg.epochs > 0:
        raise DataError("cannot train on an empty train split")

    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        if ckpt.config_text != config_to_text(cfg):
            raise ConfigError("checkpoint config does not match the current "
                              "config; refusing to resume")
        params = params_from_tensors(ckpt.tensors)
        opt = optimizer_from_checkpoint(ckpt, params)
        rng = rng_from_bytes(ckpt.rng_blob)
        start_epoch = ckpt.epoch
    else:
        rng = make_rng(cfg.seed)
        params = init_params(cfg, graph.n_entities, graph.n_relations,
                             data.visual_features.shape[1],
                             data.textual_features.shape[1], rng)
        opt = AdamState(params)
        start_epoch = 0

    log_fh = None
    if log_path is not None:
        fresh = not Path(log_path).exists()
        log_fh = open(log_path, "a", encoding="utf-8")
        if fresh:
            log_fh.write("epoch\tstep\tL_kgc\tL_con\ttotal\n")

    result = TrainResult(params=params, opt=opt, rng=rng, log=[],
                         epochs_done=start_epoch)
    triples = graph.train
    try:
        for epoch in range(start_epoch, cfg.epochs):
            child_seed = int(rng.integers(0, 2 ** 63 - 1))
            order = np.random.default_rng(child_seed).permutation(len(triples))
            for lo in range(0, len(triples), cfg.batch_size):
                batch = triples[order[lo:lo + cfg.batch_size]]
                with Tape() as tape:
                    loss, kgc_value, con_value = total_loss(
                        batch, params, data, cfg, train=True, rng=rng)
                tape.backward(loss)
                adam_step(params, opt, cfg.learning_rate)
                row = (epoch, opt.step_count, kgc_value, con_value,
                       float(loss.data))
                result.log.append(row)
                if log_fh is not None:
                    log_fh.write(f"{row[0]}\t{row[1]}\t{row[2]:.6f}\t"
                                 f"{row[3]:.6f}\t{row[4]:.6f}\n")
            result.epochs_done = epoch + 1
            if (cfg.eval_every > 0 and graph.valid.shape[0] > 0
                    and (epoch + 1) % cfg.eval_every == 0):
                report = evaluate(graph, params, data, cfg, split="valid")
                mrr = report.metrics["filtered"]["both"].mrr
                if mrr > result.best_mrr:
                    result.best_mrr = mrr
                    result.best_epoch = epoch + 1
                    result.best_params, result.best_opt = _snapshot(params, opt)
                    result.best_rng_blob = rng_to_bytes(rng)
    finally:
        if log_fh is not None:
            log_fh.close()
    return result
