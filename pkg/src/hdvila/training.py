"""Two-stage pretraining driver: contrastive matching, then masked language
modeling, with JSONL step metrics, per-epoch checkpoints, and resume."""

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig
from .metrics import retrieval_metrics
from .model import (
    HybridTransformerConfig,
    JointConfig,
    JointInput,
    StagedEncoderConfig,
    TextStackConfig,
    TokenSequence,
    VideoEncoderConfig,
    Vocab,
    aggregate_segments,
    build_vocab,
    encode_segment,
    encode_text,
    flatten_params,
    init_joint_params,
    init_linear,
    init_mlm_params,
    init_text_params,
    init_video_params,
    joint_forward,
    load_params,
    mask_tokens,
    mlm_logits,
    pad_sequence,
    save_vocab,
    stack_rows,
    text_embedding,
    tokenize,
    zero_grads,
)
from .numerics import Tape, Tensor, add, mul
from .objectives import contrastive_loss, mlm_loss, video_embedding
from .optim import AdamState, NumericError, adamw_step, init_adam_state, lr_schedule
from .sampling import load_frames, plan_segments
from .synthetic import SyntheticSample, frame_source, generate_synthetic

STAGE_KEYS = {1: ("video", "text", "vproj"), 2: ("video", "text", "vproj", "joint", "mlm")}
# Contrastive heads excluded from stage-2 updates when freezing is on.
CONTRASTIVE_HEAD_PREFIXES = ("text.proj.", "vproj.")


@dataclass
class ModelBundle:
    video_config: VideoEncoderConfig
    text_config: TextStackConfig
    joint_config: JointConfig
    vocab: Vocab
    params: Dict[str, object]


@dataclass
class Dataset:
    samples: List[SyntheticSample]
    tokens: List[TokenSequence]


@dataclass
class TrainResult:
    metrics_path: Path
    checkpoints: List[Path]
    bundle: ModelBundle
    steps: int

    @property
    def last_checkpoint(self) -> Path:
        return self.checkpoints[-1]


def model_configs(config: RunConfig) -> Tuple[VideoEncoderConfig, TextStackConfig, JointConfig]:
    try:
        video = VideoEncoderConfig(
            hr=StagedEncoderConfig(config.hr_channels),
            lr=StagedEncoderConfig(config.lr_channels),
            transformer=HybridTransformerConfig(
                layers=config.video_layers,
                heads=config.heads,
                hidden=config.hidden,
                mlp_ratio=config.mlp_ratio,
            ),
            n_neighbors=config.n_neighbors,
            grid=config.grid,
        )
        text = TextStackConfig(
            layers=config.text_layers,
            hidden=config.hidden,
            heads=config.heads,
            mlp_ratio=config.mlp_ratio,
            max_len=config.max_len,
            embed_dim=config.embed_dim or None,
        )
        joint = JointConfig(
            layers=config.joint_layers,
            heads=config.heads,
            hidden=config.hidden,
            mlp_ratio=config.mlp_ratio,
        )
    except ValueError as err:
        raise ConfigError(str(err)) from err
    return video, text, joint


def _stream_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, stream)))


def build_model(config: RunConfig, vocab: Vocab) -> ModelBundle:
    """Initialize every parameter tree from the config's init stream."""
    rng = _stream_rng(config.seed, 0)
    video_config, text_config, joint_config = model_configs(config)
    params = {
        "video": init_video_params(rng, video_config),
        "text": init_text_params(rng, text_config, vocab.size),
        "vproj": {"proj": init_linear(rng, config.hidden, config.contrastive_dim)},
        "joint": init_joint_params(rng, joint_config, config.grid),
        "mlm": init_mlm_params(rng, config.hidden, vocab.size),
    }
    return ModelBundle(video_config, text_config, joint_config, vocab, params)


def prepare_data(config: RunConfig) -> Tuple[Vocab, Dataset, Dataset]:
    """Deterministic synthetic corpora plus the vocabulary they induce."""
    rng = _stream_rng(config.seed, 1)
    train = generate_synthetic(
        rng, config.train_samples, config.n_classes, config.clip_frames, config.lr_height, config.lr_width
    )
    eval_set = generate_synthetic(
        rng, config.eval_samples, config.n_classes, config.clip_frames, config.lr_height, config.lr_width
    )
    vocab = build_vocab((s.caption for s in train), config.vocab_size)

    def tokens_for(samples: Sequence[SyntheticSample]) -> List[TokenSequence]:
        return [pad_sequence(tokenize(s.caption, vocab, config.max_len), config.max_len) for s in samples]

    return vocab, Dataset(train, tokens_for(train)), Dataset(eval_set, tokens_for(eval_set))


def encode_sample_video(
    bundle: ModelBundle,
    config: RunConfig,
    sample: SyntheticSample,
    rng: np.random.Generator,
    segment_count: int,
) -> List[Tensor]:
    """Fused [P, d] token matrices, one per sampled segment."""
    plan = plan_segments(sample.n_frames, segment_count, config.frames_per_segment, config.frame_stride)
    sequences = load_frames(plan, frame_source(sample), rng, config.hr_height, config.hr_width)
    return [
        encode_segment(seq.hr_image, seq.lr_images, bundle.video_config, bundle.params["video"]).v
        for seq in sequences
    ]


def sample_video_embedding(
    bundle: ModelBundle,
    config: RunConfig,
    sample: SyntheticSample,
    rng: np.random.Generator,
    segment_count: int,
) -> Tensor:
    segments = encode_sample_video(bundle, config, sample, rng, segment_count)
    return video_embedding(segments, bundle.params["vproj"])


def sample_text_embedding(bundle: ModelBundle, tokens: TokenSequence) -> Tensor:
    states = encode_text(tokens, bundle.text_config, bundle.params["text"])
    return text_embedding(states, bundle.params["text"])


def contrastive_batch_loss(
    bundle: ModelBundle,
    config: RunConfig,
    samples: Sequence[SyntheticSample],
    tokens: Sequence[TokenSequence],
    rng: np.random.Generator,
) -> Tensor:
    v_rows = [
        sample_video_embedding(bundle, config, s, rng, config.segment_count) for s in samples
    ]
    t_rows = [sample_text_embedding(bundle, t) for t in tokens]
    return contrastive_loss(stack_rows(v_rows), stack_rows(t_rows), config.tau)[2]


def mlm_sample_loss(
    bundle: ModelBundle,
    config: RunConfig,
    sample: SyntheticSample,
    tokens: TokenSequence,
    rng: np.random.Generator,
) -> Tensor:
    """Consensus MLM loss of one sample over its segments."""
    batch = mask_tokens(tokens, bundle.vocab, rng, config.mask_prob)
    positions, labels, ids = batch.positions, batch.labels, batch.corrupted
    if not positions:
        # Nothing was selected; predict the first word unmasked so the
        # sample still contributes a finite, deterministic loss.
        positions, labels, ids = (1,), (tokens.ids[1],), tokens.ids
    corrupted = TokenSequence(ids=ids, attention_mask=tokens.attention_mask)
    states = encode_text(corrupted, bundle.text_config, bundle.params["text"])
    segments = encode_sample_video(bundle, config, sample, rng, config.segment_count)
    per_segment = []
    for tokens_v in segments:
        joint = joint_forward(
            JointInput(states, tokens_v, config.grid, corrupted.attention_mask),
            bundle.joint_config,
            bundle.params["joint"],
        )
        per_segment.append(mlm_logits(joint, positions, bundle.params["mlm"]))
    return mlm_loss(aggregate_segments(per_segment), labels)


def mlm_batch_loss(
    bundle: ModelBundle,
    config: RunConfig,
    samples: Sequence[SyntheticSample],
    tokens: Sequence[TokenSequence],
    rng: np.random.Generator,
) -> Tensor:
    total = None
    for sample, tok in zip(samples, tokens):
        loss = mlm_sample_loss(bundle, config, sample, tok, rng)
        total = loss if total is None else add(total, loss)
    total = mul(total, 1.0 / len(samples))
    if config.joint_contrastive:
        total = add(total, contrastive_batch_loss(bundle, config, samples, tokens, rng))
    return total


def stage_param_tree(bundle: ModelBundle, stage: int) -> Dict[str, object]:
    return {key: bundle.params[key] for key in STAGE_KEYS[stage]}


def trainable_params(bundle: ModelBundle, stage: int, config: RunConfig) -> Dict[str, Tensor]:
    flat = flatten_params(stage_param_tree(bundle, stage))
    if stage == 2 and config.freeze_contrastive:
        flat = {
            name: tensor
            for name, tensor in flat.items()
            if not name.startswith(CONTRASTIVE_HEAD_PREFIXES)
        }
    return flat


def verify_stage_superset(stage1_names: Sequence[str], stage2_names: Sequence[str]) -> None:
    """Stage 2 must carry every stage-1 parameter; dropping any is an error."""
    missing = sorted(set(stage1_names) - set(stage2_names))
    if missing:
        raise ValueError(f"stage 2 dropped {len(missing)} stage-1 parameters, e.g. {missing[0]!r}")


def _checkpoint_tensors(
    bundle: ModelBundle, stage: int, epoch: int, state: AdamState
) -> Dict[str, np.ndarray]:
    tensors: Dict[str, np.ndarray] = {
        name: tensor.data for name, tensor in flatten_params(stage_param_tree(bundle, stage)).items()
    }
    for name, m in state.m.items():
        tensors[f"opt.m.{name}"] = m
        tensors[f"opt.v.{name}"] = state.v[name]
    tensors["opt.t"] = np.float32(state.t)
    tensors["meta.stage"] = np.float32(stage)
    tensors["meta.epoch"] = np.float32(epoch)
    return tensors


def _load_optimizer(state: AdamState, tensors: Dict[str, np.ndarray]) -> None:
    for name in state.m:
        key = f"opt.m.{name}"
        if key in tensors:
            state.m[name] = np.asarray(tensors[key], dtype=np.float32).reshape(state.m[name].shape)
            state.v[name] = np.asarray(tensors[f"opt.v.{name}"], dtype=np.float32).reshape(
                state.v[name].shape
            )
    state.t = int(tensors["opt.t"])


def load_bundle(config: RunConfig, checkpoint_path) -> Tuple[ModelBundle, "object"]:
    """Rebuild the model deterministically and overwrite it from a checkpoint."""
    vocab, _, _ = prepare_data(config)
    bundle = build_model(config, vocab)
    ckpt = load_checkpoint(checkpoint_path)
    present = {
        key: bundle.params[key]
        for key in STAGE_KEYS[2]
        if any(name.startswith(f"{key}.") for name in ckpt.tensors)
    }
    load_params(present, ckpt.tensors)
    return bundle, ckpt


def _append_metric(handle, step: int, stage: int, loss: float, lr: float) -> None:
    handle.write(json.dumps({"step": step, "stage": stage, "loss": loss, "lr": lr}) + "\n")
    handle.flush()


def train(config: RunConfig, resume: Optional[str] = None) -> TrainResult:
    """Run both stages, writing metrics, vocab, and per-epoch checkpoints.

    With `resume`, training continues from a checkpoint's stage/epoch
    boundary, its optimizer moments, and its saved RNG state; the metrics
    file is appended to instead of truncated.
    """
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vocab, train_set, _ = prepare_data(config)
    bundle = build_model(config, vocab)
    save_vocab(vocab, out_dir / "vocab.tsv")
    metrics_path = out_dir / "metrics.jsonl"

    train_rng = _stream_rng(config.seed, 2)
    global_step = 0
    resume_stage, resume_epoch = 1, 0
    if resume is not None:
        ckpt = load_checkpoint(resume)
        resume_stage = int(ckpt.tensors["meta.stage"])
        resume_epoch = int(ckpt.tensors["meta.epoch"])
        load_params(stage_param_tree(bundle, resume_stage), ckpt.tensors)
        train_rng = ckpt.rng()
        global_step = ckpt.step
        resume_tensors = ckpt.tensors
    checkpoints: List[Path] = []

    steps_per_epoch = config.train_samples // config.batch_size
    stage_epochs = {1: config.stage1_epochs, 2: config.stage2_epochs}

    def save_stage_checkpoint(stage: int, epoch: int, state: AdamState) -> Path:
        path = out_dir / f"stage{stage}_epoch{epoch:04d}.hdvk"
        save_checkpoint(
            _checkpoint_tensors(bundle, stage, epoch, state),
            path,
            rng=train_rng,
            step=global_step,
        )
        checkpoints.append(path)
        return path

    with open(metrics_path, "a" if resume is not None else "w", encoding="utf-8") as metrics:
        for stage in (1, 2):
            if stage < resume_stage:
                continue
            epochs = stage_epochs[stage]
            start_epoch = resume_epoch if stage == resume_stage else 0
            if stage == 2 and resume_stage == 1:
                # Stage 2 starts from the stage-1 artifact, not from live
                # state: reload it and check nothing would be dropped.
                stage1_final = checkpoints[-1] if checkpoints else Path(resume)
                loaded = load_checkpoint(stage1_final)
                params1 = [n for n in loaded.tensors if not n.startswith(("opt.", "meta."))]
                verify_stage_superset(params1, flatten_params(stage_param_tree(bundle, 2)))
                load_params(stage_param_tree(bundle, 1), loaded.tensors)
            trainable = trainable_params(bundle, stage, config)
            state = init_adam_state(trainable)
            if resume is not None and stage == resume_stage:
                _load_optimizer(state, resume_tensors)
            else:
                save_stage_checkpoint(stage, start_epoch, state)
            total_steps = epochs * steps_per_epoch
            warmup = int(round(config.warmup_fraction * total_steps))
            for epoch in range(start_epoch, epochs):
                order = train_rng.permutation(config.train_samples)
                for b in range(steps_per_epoch):
                    picked = order[b * config.batch_size : (b + 1) * config.batch_size]
                    samples = [train_set.samples[i] for i in picked]
                    tokens = [train_set.tokens[i] for i in picked]
                    with Tape() as tape:
                        if stage == 1:
                            loss = contrastive_batch_loss(bundle, config, samples, tokens, train_rng)
                        else:
                            loss = mlm_batch_loss(bundle, config, samples, tokens, train_rng)
                    loss_value = float(loss.item())
                    if not math.isfinite(loss_value):
                        raise NumericError(
                            f"non-finite loss {loss_value} at step {global_step + 1} (stage {stage})"
                        )
                    tape.backward(loss)
                    stage_step = epoch * steps_per_epoch + b + 1
                    lr_t = lr_schedule(stage_step, total_steps, warmup, config.learning_rate)
                    adamw_step(trainable, state, lr_t, config.weight_decay)
                    zero_grads(bundle.params)
                    global_step += 1
                    _append_metric(metrics, global_step, stage, loss_value, lr_t)
                save_stage_checkpoint(stage, epoch + 1, state)

    return TrainResult(metrics_path, checkpoints, bundle, global_step)


def eval_retrieval(
    config: RunConfig,
    bundle: ModelBundle,
    dataset: Optional[Dataset] = None,
    rng: Optional[np.random.Generator] = None,
) -> Dict[str, float]:
    """Video-to-text retrieval metrics over the held-out synthetic set.

    Each video is encoded with twice the training segment count; ranking
    ground truth is the diagonal pairing.
    """
    if dataset is None:
        _, _, dataset = prepare_data(config)
    if rng is None:
        rng = _stream_rng(config.seed, 3)
    segment_count = 2 * config.segment_count
    v_rows = []
    t_rows = []
    for sample, tokens in zip(dataset.samples, dataset.tokens):
        v_rows.append(sample_video_embedding(bundle, config, sample, rng, segment_count).data)
        t_rows.append(sample_text_embedding(bundle, tokens).data)
    v = np.stack(v_rows).astype(np.float64)
    t = np.stack(t_rows).astype(np.float64)
    scores = v @ t.T
    return retrieval_metrics(scores, np.arange(len(dataset.samples)))
