"""Dataset assembly, the composite loss, training, and checkpoints.

The training objective is

    L = l_recon * MSE + l_smooth * (smoothness + ||w||^2) + l_mono * hinge

where the smoothness and monotonicity terms are evaluated on the emitted
1D curve triple and on the fused 3D grid.  The enhancement chain being
differentiated end to end is: conditioned backbone -> 1D curves applied in
normalized Lab -> Lab back to sRGB -> fused 3D grid -> clamp.

Checkpoints are one file: a single-line JSON header (version, architecture,
metadata, payload checksum) followed by little-endian float32 parameter
blocks, backbone parameters first (in ``backbone.param_names`` order), the
basis grid bank last.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import backbone, lut, skintone
from .color import (
    Colorspace,
    ImageBuffer,
    lab_array_denormalize,
    lab_array_normalize,
    lab_array_to_srgb,
    lab_array_to_srgb_backward,
    load_png,
    srgb_array_to_lab,
)
from .errors import (
    ArchitectureMismatch,
    CorruptCheckpoint,
    DeltaOutOfRange,
    DimensionMismatch,
    EmptyDataset,
    MissingMask,
    ModeViolation,
    NonFiniteLoss,
    ScoreOutOfRange,
    VersionMismatch,
)

CHECKPOINT_FORMAT = "toneguide-checkpoint"
CHECKPOINT_VERSION = 1
DELTA_LIMIT = 40.0
IDENTITY_SCORE_LIMIT = 0.1


# --------------------------------------------------------------------------
# Configuration and data carriers
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 400
    lr: float = 1e-4
    batch_size: int = 1
    lambda_recon: float = 1.0
    lambda_smooth: float = 1e-4
    lambda_mono: float = 10.0
    seed: int = 0
    lut_bins: int = 33
    lut_dim: int = 33
    basis_count: int = 3
    use_label: bool = True
    use_1d_luts: bool = True
    score_range: tuple = (-1.0, 1.0)
    label_range: tuple = (1.0, 10.0)
    cond_size: int = 256

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.batch_size != 1:
            raise ValueError("only batch size 1 is supported")
        for lam in (self.lambda_recon, self.lambda_smooth, self.lambda_mono):
            if lam < 0:
                raise ValueError("loss weights must be >= 0")

    def backbone_config(self) -> backbone.BackboneConfig:
        return backbone.BackboneConfig(
            in_channels=4 + (1 if self.use_label else 0),
            lut_bins=self.lut_bins,
            basis_count=self.basis_count,
            emit_1d_luts=self.use_1d_luts,
            cond_size=self.cond_size,
        )


@dataclass(frozen=True)
class TrainingPair:
    """Manifest row: file-backed sample."""

    raw_path: str
    target_path: str
    score: float
    label: int | None = None
    mask_path: str | None = None


@dataclass
class Sample:
    """In-memory training sample."""

    raw: ImageBuffer
    target: ImageBuffer
    score: float
    label: int | None = None
    raw_id: str | None = None  # identity-pair dedup key; defaults to pixel hash
    is_identity: bool = False

    def __post_init__(self):
        if self.raw.data.shape != self.target.data.shape:
            raise DimensionMismatch(
                f"raw {self.raw.data.shape} and target {self.target.data.shape} differ"
            )
        if not (-1.0 <= self.score <= 1.0):
            raise ScoreOutOfRange(f"training score {self.score} outside [-1, 1]")
        if self.raw_id is None:
            self.raw_id = hashlib.sha1(self.raw.data.tobytes()).hexdigest()


@dataclass
class ModelCheckpoint:
    params: backbone.NetParams
    bank: lut.BasisLutBank
    centers: skintone.SkinToneCenters | None = None
    score_range: tuple = (-1.0, 1.0)
    label_range: tuple = (1.0, 10.0)
    metadata: dict = field(default_factory=dict)
    version: int = CHECKPOINT_VERSION

    @property
    def config(self) -> backbone.BackboneConfig:
        return self.params.config

    @property
    def use_label(self) -> bool:
        return self.config.in_channels == 5

    @property
    def use_1d_luts(self) -> bool:
        return self.config.emit_1d_luts

    def copy(self) -> "ModelCheckpoint":
        return ModelCheckpoint(
            params=self.params.copy(),
            bank=lut.BasisLutBank(self.bank.grids.copy()),
            centers=self.centers,
            score_range=self.score_range,
            label_range=self.label_range,
            metadata=dict(self.metadata),
            version=self.version,
        )


@dataclass(frozen=True)
class LossRow:
    epoch: int
    total: float
    lr_term: float
    smooth_term: float
    mono_term: float


@dataclass
class TrainResult:
    checkpoint: ModelCheckpoint
    log: list  # of LossRow


@dataclass(frozen=True)
class ActiveTransform:
    """The concrete transform emitted for one conditioned input."""

    triple: lut.Lut1DTriple | None
    fused: lut.Lut3D
    weights: np.ndarray


def initialize_checkpoint(
    config: TrainConfig, centers: skintone.SkinToneCenters | None = None
) -> ModelCheckpoint:
    arch = config.backbone_config()
    params = backbone.init_params(arch, seed=config.seed)
    bank = lut.BasisLutBank.initial(count=config.basis_count, dim=config.lut_dim, dtype=np.float32)
    return ModelCheckpoint(
        params=params,
        bank=bank,
        centers=centers,
        score_range=tuple(config.score_range),
        label_range=tuple(config.label_range),
        metadata={"epochs": 0, "final_loss": None, "seed": config.seed},
    )


# --------------------------------------------------------------------------
# Synthetic perturbation (dataset generation)
# --------------------------------------------------------------------------

def synth_perturb(
    img: ImageBuffer,
    delta_a: float | None,
    delta_b: float | None,
    delta_l: float | None = 0.0,
    seed: int | None = None,
    mode: str = "skin",
) -> ImageBuffer:
    """Shift every pixel by (delta_l, delta_a, delta_b) in Lab, re-encode.

    Skin mode keeps L untouched; passing a nonzero delta_l there is a
    ModeViolation.  Any delta given as None is drawn uniformly from
    [-40, 40] with ``seed``.
    """
    if mode not in ("skin", "natural"):
        raise ModeViolation(f"unknown perturbation mode {mode!r}")
    rng = np.random.default_rng(seed)
    if delta_a is None:
        delta_a = float(rng.uniform(-DELTA_LIMIT, DELTA_LIMIT))
    if delta_b is None:
        delta_b = float(rng.uniform(-DELTA_LIMIT, DELTA_LIMIT))
    if delta_l is None:
        delta_l = 0.0 if mode == "skin" else float(rng.uniform(-DELTA_LIMIT, DELTA_LIMIT))
    if mode == "skin" and delta_l != 0.0:
        raise ModeViolation("skin mode keeps L unchanged; delta_l must be 0")
    for name, d in (("delta_l", delta_l), ("delta_a", delta_a), ("delta_b", delta_b)):
        if not np.isfinite(d) or abs(d) > DELTA_LIMIT:
            raise DeltaOutOfRange(f"{name}={d} outside [-{DELTA_LIMIT}, {DELTA_LIMIT}]")
    lab = srgb_array_to_lab(img.data.astype(np.float64))
    lab += np.array([delta_l, delta_a, delta_b], dtype=np.float64)
    out = lab_array_to_srgb(lab)
    return ImageBuffer(np.clip(out, 0.0, 1.0).astype(np.float32), Colorspace.SRGB)


# --------------------------------------------------------------------------
# Dataset assembly
# --------------------------------------------------------------------------

def read_manifest(path) -> list:
    """CSV `raw_path,target_path,score,label,mask_path`; label/mask may be empty."""
    base = os.path.dirname(os.path.abspath(path))

    def _resolve(p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(base, p)

    pairs = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"raw_path", "target_path", "score"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise EmptyDataset(
                f"manifest must have columns {sorted(required)}, got {reader.fieldnames}"
            )
        for row in reader:
            label = row.get("label") or None
            mask = row.get("mask_path") or None
            pairs.append(
                TrainingPair(
                    raw_path=_resolve(row["raw_path"]),
                    target_path=_resolve(row["target_path"]),
                    score=float(row["score"]),
                    label=int(label) if label is not None else None,
                    mask_path=_resolve(mask) if mask is not None else None,
                )
            )
    return pairs


def write_manifest(pairs, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["raw_path", "target_path", "score", "label", "mask_path"])
        for p in pairs:
            writer.writerow(
                [p.raw_path, p.target_path, repr(p.score), p.label or "", p.mask_path or ""]
            )


def load_pairs(
    pairs,
    config: TrainConfig,
    centers: skintone.SkinToneCenters | None = None,
) -> list:
    """Load manifest rows into Samples, resolving labels from masks if needed."""
    samples = []
    mask_cache: dict = {}
    for p in pairs:
        raw = load_png(p.raw_path)
        target = load_png(p.target_path)
        label = p.label
        if config.use_label and label is None:
            if p.mask_path is None:
                raise MissingMask(
                    f"{p.raw_path}: label mode needs an explicit label or a mask"
                )
            if centers is None:
                raise MissingMask(f"{p.raw_path}: labeling from a mask needs centers")
            if p.mask_path not in mask_cache:
                mask_img = load_png(p.mask_path)
                mask_cache[p.mask_path] = mask_img.data[..., 0] > 0.5
            mean = skintone.mean_skin_color(raw, mask_cache[p.mask_path])
            label = skintone.classify(mean, centers)
        samples.append(
            Sample(raw=raw, target=target, score=p.score, label=label, raw_id=p.raw_path)
        )
    return samples


def assemble_samples(samples, config: TrainConfig) -> list:
    """Append one identity pair per distinct raw: target = raw, small seeded score."""
    rng = np.random.default_rng(config.seed)
    out = list(samples)
    seen: dict = {}
    for s in samples:
        if s.raw_id not in seen:
            seen[s.raw_id] = s
    for raw_id in seen:
        base = seen[raw_id]
        score = float(rng.uniform(-IDENTITY_SCORE_LIMIT, IDENTITY_SCORE_LIMIT))
        out.append(
            Sample(
                raw=base.raw,
                target=base.raw.copy(),
                score=score,
                label=base.label,
                raw_id=raw_id,
                is_identity=True,
            )
        )
    return out


def build_dataset(
    pairs,
    config: TrainConfig,
    centers: skintone.SkinToneCenters | None = None,
) -> list:
    if not pairs:
        return []
    return assemble_samples(load_pairs(pairs, config, centers), config)


# --------------------------------------------------------------------------
# The differentiable enhancement chain and the loss
# --------------------------------------------------------------------------

@dataclass
class SampleCache:
    """Per-sample tensors that stay fixed across epochs."""

    planes: np.ndarray  # conditioned input, float32
    lab_n: np.ndarray  # raw in normalized Lab, float64
    target: np.ndarray  # target sRGB, float64


_LAB_DENORM_SCALE = np.array([100.0, 256.0, 256.0])


def make_cache(sample: Sample, config: TrainConfig) -> SampleCache:
    cond = backbone.condition(
        sample.raw,
        sample.score,
        sample.label if config.use_label else None,
        size=config.cond_size,
        score_range=config.score_range,
        label_range=config.label_range,
    )
    lab_n = lab_array_normalize(srgb_array_to_lab(sample.raw.data.astype(np.float64)))
    return SampleCache(
        planes=cond.planes,
        lab_n=lab_n,
        target=sample.target.data.astype(np.float64),
    )


def apply_chain(
    params: backbone.NetParams,
    bank: lut.BasisLutBank,
    planes: np.ndarray,
    lab_n: np.ndarray,
    use_1d: bool,
    want_tape: bool = False,
):
    """Run the full enhancement chain on precomputed tensors.

    Returns (output sRGB array float64, tape dict or None).  The only
    mid-chain clamp is the in-gamut clamp inside the Lab re-encode; the
    final output clamp belongs to the 3D stage.
    """
    net = backbone.forward(params, planes)
    triple = net.lut_triple if use_1d else None
    weights = net.weights.astype(np.float64)
    fused = lut.fuse(bank, weights)

    if triple is not None:
        curves = [triple.l, triple.a, triple.b]
        lab_n2 = np.stack(
            [lut.apply_1d(curves[c], lab_n[..., c]) for c in range(3)], axis=-1
        )
    else:
        lab_n2 = lab_n
    color_tape: dict = {}
    rgb_mid = lab_array_to_srgb(lab_array_denormalize(lab_n2), tape=color_tape)
    out = lut.apply_3d(fused, rgb_mid, clamp=True)

    tape = None
    if want_tape:
        tape = {
            "net": net,
            "triple": triple,
            "weights": weights,
            "fused": fused,
            "lab_n": lab_n,
            "color": color_tape,
            "rgb_mid": rgb_mid,
            "out": out,
        }
    return out, tape


def loss_terms(
    out: np.ndarray,
    target: np.ndarray,
    transform: ActiveTransform,
    config: TrainConfig,
) -> dict:
    """Weighted loss components; total is their exact sum."""
    if out.shape != target.shape:
        raise DimensionMismatch(f"output {out.shape} vs target {target.shape}")
    diff = out - target
    recon = float((diff * diff).mean())
    smooth = lut.smoothness_penalty(transform.fused, weights=transform.weights)
    mono = lut.monotonicity_penalty(transform.fused)
    if transform.triple is not None:
        smooth += lut.smoothness_penalty(transform.triple)
        mono += lut.monotonicity_penalty(transform.triple)
    lr_term = config.lambda_recon * recon
    smooth_term = config.lambda_smooth * smooth
    mono_term = config.lambda_mono * mono
    return {
        "total": lr_term + smooth_term + mono_term,
        "lr_term": lr_term,
        "smooth_term": smooth_term,
        "mono_term": mono_term,
    }


def total_loss(
    enhanced: ImageBuffer,
    target: ImageBuffer,
    transform: ActiveTransform,
    config: TrainConfig | None = None,
) -> tuple:
    cfg = config if config is not None else TrainConfig()
    terms = loss_terms(
        enhanced.data.astype(np.float64), target.data.astype(np.float64), transform, cfg
    )
    return terms["total"], terms


def loss_and_grads(
    params: backbone.NetParams,
    bank: lut.BasisLutBank,
    cache: SampleCache,
    config: TrainConfig,
) -> tuple:
    """One sample's loss, components, and gradients for every trainable array.

    The returned dict maps backbone parameter names to gradients and adds a
    "bank" entry for the basis grids.
    """
    out, tape = apply_chain(
        params, bank, cache.planes, cache.lab_n, config.use_1d_luts, want_tape=True
    )
    triple = tape["triple"]
    fused = tape["fused"]
    weights = tape["weights"]
    terms = loss_terms(out, cache.target, ActiveTransform(triple, fused, weights), config)

    # reconstruction gradient on the chain output
    diff = out - cache.target
    g_out = (2.0 * config.lambda_recon / diff.size) * diff

    g_grid, g_mid = lut.apply_3d_backward(fused, tape["rgb_mid"], g_out, clamp=True)
    g_grid += config.lambda_smooth * lut.smoothness_backward_3d(fused.grid)
    g_grid += config.lambda_mono * lut.monotonicity_backward_3d(fused.grid)
    g_bank, g_weights = lut.fuse_backward(bank, weights, g_grid)
    g_weights = g_weights + config.lambda_smooth * 2.0 * weights

    g_lab = lab_array_to_srgb_backward(tape["color"], g_mid)
    g_lab_n = g_lab * _LAB_DENORM_SCALE

    g_entries = None
    if triple is not None:
        rows = []
        curves = [triple.l, triple.a, triple.b]
        for c in range(3):
            g_e, _ = lut.apply_1d_backward(curves[c], cache.lab_n[..., c], g_lab_n[..., c])
            g_e = g_e + config.lambda_smooth * lut.smoothness_backward_1d(curves[c].entries)
            g_e = g_e + config.lambda_mono * lut.monotonicity_backward_1d(curves[c].entries)
            rows.append(g_e)
        g_entries = np.stack(rows)

    grads = backbone.backward(params, tape["net"].tape, g_entries, g_weights)
    grads["bank"] = g_bank
    return terms["total"], terms, grads, out


# --------------------------------------------------------------------------
# Training loops
# --------------------------------------------------------------------------

def _run_training(
    checkpoint: ModelCheckpoint,
    samples,
    config: TrainConfig,
    epochs: int,
    lr: float,
    seed: int,
    progress_cb=None,
) -> TrainResult:
    if not samples:
        raise EmptyDataset("training needs at least one sample")
    ckpt = checkpoint.copy()
    if config.use_label and any(s.label is None for s in samples):
        raise MissingMask("label mode requires a label on every sample")

    caches = [make_cache(s, config) for s in samples]
    trainable = dict(ckpt.params.arrays)
    trainable["bank"] = ckpt.bank.grids
    state = backbone.AdamState.for_params(trainable, lr=lr)
    rng = np.random.default_rng(seed)
    log = []
    for epoch in range(epochs):
        order = rng.permutation(len(samples))
        sums = np.zeros(4)
        for idx in order:
            total, terms, grads, _ = loss_and_grads(ckpt.params, ckpt.bank, caches[idx], config)
            if not np.isfinite(total):
                raise NonFiniteLoss(
                    f"non-finite loss {total!r} at epoch {epoch}, sample {idx} "
                    f"(components {terms})"
                )
            backbone.adam_step(trainable, grads, state)
            sums += [total, terms["lr_term"], terms["smooth_term"], terms["mono_term"]]
        means = sums / len(samples)
        log.append(LossRow(epoch, *[float(v) for v in means]))
        if progress_cb is not None:
            progress_cb(epoch + 1, epochs, float(means[0]))
    ckpt.metadata = dict(ckpt.metadata)
    ckpt.metadata["epochs"] = int(ckpt.metadata.get("epochs", 0)) + epochs
    ckpt.metadata["final_loss"] = log[-1].total if log else ckpt.metadata.get("final_loss")
    ckpt.metadata["seed"] = seed
    return TrainResult(checkpoint=ckpt, log=log)


def train(
    samples,
    config: TrainConfig,
    centers: skintone.SkinToneCenters | None = None,
    progress_cb=None,
) -> TrainResult:
    """Train from scratch on already-assembled samples (batch size 1)."""
    ckpt = initialize_checkpoint(config, centers=centers)
    return _run_training(
        ckpt, samples, config, config.epochs, config.lr, config.seed, progress_cb
    )


def finetune(
    checkpoint: ModelCheckpoint,
    samples,
    epochs: int = 10,
    lr: float = 1e-3,
    seed: int = 0,
    progress_cb=None,
) -> TrainResult:
    """Adapt an existing model to user pairs with a fresh optimizer state.

    No identity-pair augmentation here: the user set is taken as-is.
    """
    if epochs < 0:
        raise ValueError(f"epochs must be >= 0, got {epochs}")
    config = config_from_checkpoint(checkpoint, epochs=max(epochs, 1), lr=lr, seed=seed)
    if epochs == 0:
        return TrainResult(checkpoint=checkpoint.copy(), log=[])
    return _run_training(checkpoint, samples, config, epochs, lr, seed, progress_cb)


def config_from_checkpoint(
    checkpoint: ModelCheckpoint, epochs: int = 400, lr: float = 1e-4, seed: int = 0
) -> TrainConfig:
    arch = checkpoint.config
    return TrainConfig(
        epochs=epochs,
        lr=lr,
        seed=seed,
        lut_bins=arch.lut_bins,
        lut_dim=checkpoint.bank.dim,
        basis_count=arch.basis_count,
        use_label=checkpoint.use_label,
        use_1d_luts=checkpoint.use_1d_luts,
        score_range=tuple(checkpoint.score_range),
        label_range=tuple(checkpoint.label_range),
        cond_size=arch.cond_size,
    )


def write_loss_log(log, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "total", "lr_term", "smooth_term", "mono_term"])
        for row in log:
            writer.writerow(
                [row.epoch, repr(row.total), repr(row.lr_term), repr(row.smooth_term), repr(row.mono_term)]
            )


# --------------------------------------------------------------------------
# Checkpoint persistence
# --------------------------------------------------------------------------

def _block_order(config: backbone.BackboneConfig) -> list:
    return backbone.param_names(config) + ["bank"]


def save_checkpoint(checkpoint: ModelCheckpoint, path) -> None:
    """Single file: one JSON header line, then float32 LE parameter blocks."""
    arch = checkpoint.config
    names = backbone.param_names(arch)
    for name in names:
        if checkpoint.params.arrays[name].dtype != np.float32:
            raise ArchitectureMismatch("checkpoints store float32 parameters only")
    blocks = [np.ascontiguousarray(checkpoint.params.arrays[n], dtype="<f4") for n in names]
    blocks.append(np.ascontiguousarray(checkpoint.bank.grids, dtype="<f4"))
    payload = b"".join(b.tobytes() for b in blocks)
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": checkpoint.version,
        "arch": arch.to_dict(),
        "lut_dim": checkpoint.bank.dim,
        "score_range": list(checkpoint.score_range),
        "label_range": list(checkpoint.label_range),
        "params": [[n, list(checkpoint.params.arrays[n].shape)] for n in names],
        "bank_shape": list(checkpoint.bank.grids.shape),
        "centers": None
        if checkpoint.centers is None
        else {
            "provenance": checkpoint.centers.provenance.value,
            "lab": checkpoint.centers.lab.tolist(),
        },
        "metadata": checkpoint.metadata,
        "payload_bytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(payload)
    os.replace(tmp, path)


def load_checkpoint(path) -> ModelCheckpoint:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"unreadable header: {exc}") from None
    if header.get("format") != CHECKPOINT_FORMAT:
        raise CorruptCheckpoint(f"not a {CHECKPOINT_FORMAT} file")
    if header.get("version") != CHECKPOINT_VERSION:
        raise VersionMismatch(
            f"checkpoint version {header.get('version')!r}, expected {CHECKPOINT_VERSION}"
        )
    if len(payload) != header["payload_bytes"]:
        raise CorruptCheckpoint(
            f"payload is {len(payload)} bytes, header says {header['payload_bytes']}"
        )
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise CorruptCheckpoint("payload checksum mismatch")

    arch = backbone.BackboneConfig.from_dict(header["arch"])
    expected_names = backbone.param_names(arch)
    header_names = [n for n, _ in header["params"]]
    if header_names != expected_names:
        raise ArchitectureMismatch(
            "parameter blocks do not match the declared architecture"
        )
    shapes = {n: tuple(s) for n, s in header["params"]}
    shapes["bank"] = tuple(header["bank_shape"])
    k, d = shapes["bank"][0], shapes["bank"][1]
    if shapes["bank"] != (k, d, d, d, 3) or k != arch.basis_count:
        raise ArchitectureMismatch(f"bad bank shape {shapes['bank']}")

    arrays = {}
    offset = 0
    for name in expected_names + ["bank"]:
        shape = shapes[name]
        n_items = int(np.prod(shape))
        n_bytes = n_items * 4
        if offset + n_bytes > len(payload):
            raise CorruptCheckpoint("payload shorter than the declared blocks")
        arrays[name] = (
            np.frombuffer(payload, dtype="<f4", count=n_items, offset=offset)
            .reshape(shape)
            .copy()
        )
        offset += n_bytes
    if offset != len(payload):
        raise CorruptCheckpoint("payload longer than the declared blocks")

    bank = lut.BasisLutBank(arrays.pop("bank"))
    params = backbone.NetParams(arch, arrays)
    centers = None
    if header.get("centers") is not None:
        centers = skintone.SkinToneCenters(
            lab=np.asarray(header["centers"]["lab"], dtype=np.float64),
            provenance=skintone.CenterProvenance(header["centers"]["provenance"]),
        )
    return ModelCheckpoint(
        params=params,
        bank=bank,
        centers=centers,
        score_range=tuple(header["score_range"]),
        label_range=tuple(header["label_range"]),
        metadata=dict(header["metadata"]),
        version=header["version"],
    )
