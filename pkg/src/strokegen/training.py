"""Training drivers: writer-ID pretraining for the style encoder and the
diffusion run that follows, plus checkpoint glue for both.

Both loops are deterministic given their seed: module construction happens
under torch.manual_seed, every stochastic draw goes through explicit
generators, and checkpoints carry optimizer and RNG state so a resumed run
reproduces the uninterrupted one bit for bit.
"""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch
from torch.nn import functional as F

from .checkpoint import (Checkpoint, load_checkpoint, pack_module,
                         pack_optimizer, pack_rng, save_checkpoint,
                         unpack_module, unpack_optimizer, unpack_rng)
from .config import RunConfig, config_from_dict
from .dataset import Sample
from .diffusion import (DiffusionSchedule, GenerationModel, SequenceStats,
                        StrokeDenoiser, StyleBank, TrainState, ema_apply,
                        ema_shadow, make_schedule, prepare_batch, train_step)
from .errors import CheckpointError, InvalidArgument
from .style_encoder import (MultiScaleConfig, StyleEncoder, build_pyramid,
                            render_style_image)
from .text_layout import TextLayoutEncoder, Vocabulary

LogFn = Callable[[dict], None]


def _noop_log(record: dict) -> None:
    return None


# ---------------------------------------------------------------------------
# writer-ID pretraining

@dataclass
class PretrainState:
    encoder: StyleEncoder
    optimizer: torch.optim.Optimizer
    np_rng: np.random.Generator
    step: int = 0
    history: list = field(default_factory=list)


def _pyramid_cache(samples: Sequence[Sample],
                   cfg: MultiScaleConfig) -> list[torch.Tensor]:
    """Per-scale stacked tensors (n, h_k, w_k) of every sample's rendered
    style image."""
    planes = [[] for _ in range(cfg.num_scales)]
    for sample in samples:
        img = render_style_image(sample.strokes, cfg)
        for k, plane in enumerate(build_pyramid(img, cfg)):
            planes[k].append(plane.astype(np.float32))
    return [torch.from_numpy(np.stack(p)) for p in planes]


def _gather(cache: list[torch.Tensor], idx: np.ndarray) -> list[torch.Tensor]:
    sel = torch.from_numpy(np.ascontiguousarray(idx))
    return [c[sel] for c in cache]


def init_pretrain(cfg: MultiScaleConfig, num_writers: int, lr: float,
                  seed: int) -> PretrainState:
    torch.manual_seed(seed)
    encoder = StyleEncoder(cfg, num_writers)
    optimizer = torch.optim.Adam(encoder.parameters(), lr=lr)
    np_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    return PretrainState(encoder, optimizer, np_rng)


def split_train_val(n: int, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if n < 2:
        raise InvalidArgument("need at least two samples to split")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    perm = rng.permutation(n)
    val_count = max(1, int(round(n * val_fraction)))
    if val_count >= n:
        raise InvalidArgument("val fraction leaves no training data")
    return perm[val_count:], perm[:val_count]


def writer_accuracy(encoder: StyleEncoder, cache: list[torch.Tensor],
                    labels: torch.Tensor, idx: np.ndarray,
                    batch_size: int = 32) -> float:
    encoder.eval()
    hits = 0
    with torch.no_grad():
        for start in range(0, len(idx), batch_size):
            part = idx[start:start + batch_size]
            logits = encoder.writer_logits(encoder(_gather(cache, part)))
            hits += int((logits.argmax(dim=1) == labels[part]).sum())
    return hits / len(idx)


def pretrain_writer_id(samples: Sequence[Sample], cfg: MultiScaleConfig,
                       num_writers: int, *, iters: int, batch_size: int,
                       lr: float, val_fraction: float, eval_interval: int,
                       seed: int, log: LogFn = _noop_log,
                       state: PretrainState | None = None) -> PretrainState:
    """Train the writer-ID head (and trunk) on rendered style images.

    Pass a resumed `state` to continue a checkpointed run; the data split
    depends only on the seed, so resumption sees the same split.
    """
    if state is None:
        state = init_pretrain(cfg, num_writers, lr, seed)
    cache = _pyramid_cache(samples, cfg)
    labels = torch.tensor([s.writer_id for s in samples], dtype=torch.int64)
    if int(labels.max()) >= num_writers:
        raise InvalidArgument("writer_id outside the configured class count")
    train_idx, val_idx = split_train_val(len(samples), val_fraction, seed)

    encoder = state.encoder
    while state.step < iters:
        encoder.train()
        pick = train_idx[state.np_rng.integers(len(train_idx), size=batch_size)]
        logits = encoder.writer_logits(encoder(_gather(cache, pick)))
        loss = F.cross_entropy(logits, labels[torch.from_numpy(pick)])
        state.optimizer.zero_grad()
        loss.backward()
        state.optimizer.step()
        state.step += 1
        if state.step % eval_interval == 0 or state.step == iters:
            acc = writer_accuracy(encoder, cache, labels, val_idx)
            record = {"step": state.step, "loss": float(loss.detach()),
                      "val_accuracy": acc}
            state.history.append(record)
            log(record)
    return state


def save_style_checkpoint(path, state: PretrainState, cfg: MultiScaleConfig,
                          num_writers: int) -> None:
    tensors: dict = {}
    pack_module("encoder", state.encoder, tensors)
    opt_meta = pack_optimizer(state.optimizer, tensors)
    rng_extra = pack_rng(tensors, np_rng=state.np_rng)
    save_checkpoint(
        path, "style-encoder", tensors,
        config={"multiscale": dataclasses.asdict(cfg),
                "num_writers": num_writers},
        extra={"step": state.step, "optimizer": opt_meta,
               "history": state.history, **rng_extra})


def _multiscale_from_dict(d: dict) -> MultiScaleConfig:
    return MultiScaleConfig(
        full_size=tuple(d["full_size"]),
        scales=tuple(tuple(s) for s in d["scales"]),
        patch=d["patch"], grid=tuple(d["grid"]), dim=d["dim"],
        heads=d["heads"], layers=d["layers"], channels=d["channels"],
        local_crop=tuple(d["local_crop"]))


def load_style_checkpoint(path, lr: float = 1e-3) -> tuple[PretrainState, MultiScaleConfig, int]:
    ckpt = load_checkpoint(path)
    if ckpt.kind != "style-encoder":
        raise CheckpointError(f"{path}: kind {ckpt.kind!r}, wanted style-encoder")
    cfg = _multiscale_from_dict(ckpt.config["multiscale"])
    num_writers = ckpt.config["num_writers"]
    encoder = StyleEncoder(cfg, num_writers)
    unpack_module("encoder", encoder, ckpt.tensors)
    optimizer = torch.optim.Adam(encoder.parameters(), lr=lr)
    np_rng = np.random.default_rng()
    unpack_optimizer(optimizer, ckpt.tensors, ckpt.extra["optimizer"])
    unpack_rng(ckpt.tensors, ckpt.extra, np_rng=np_rng)
    state = PretrainState(encoder, optimizer, np_rng, step=ckpt.extra["step"],
                          history=list(ckpt.extra.get("history", [])))
    return state, cfg, num_writers


# ---------------------------------------------------------------------------
# diffusion training

def build_generation_modules(run: RunConfig, vocab: Vocabulary,
                             seed: int) -> tuple[TextLayoutEncoder, StrokeDenoiser]:
    torch.manual_seed(seed)
    text_encoder = TextLayoutEncoder(vocab, run.text.dim, run.style.dim,
                                     heads=run.text.heads)
    denoiser = StrokeDenoiser(run.diffusion.dim, run.diffusion.heads,
                              run.diffusion.layers, cond_dim=run.text.dim)
    return text_encoder, denoiser


def schedule_from_config(run: RunConfig) -> DiffusionSchedule:
    return make_schedule(run.diffusion.steps, profile=run.profile,
                         beta_min=run.diffusion.beta_min,
                         beta_max=run.diffusion.beta_max,
                         sigma_mode=run.diffusion.sigma_mode)


def init_train(samples: Sequence[Sample], style_encoder: StyleEncoder,
               run: RunConfig, *, ablate_layout: bool = False,
               vocab: Vocabulary | None = None) -> tuple[TrainState, StyleBank]:
    if not samples:
        raise InvalidArgument("empty training set")
    vocab = vocab or Vocabulary()
    text_encoder, denoiser = build_generation_modules(run, vocab, run.seed)
    style_encoder.requires_grad_(False)
    style_encoder.eval()
    bank = StyleBank(samples, style_encoder)
    params = list(text_encoder.parameters()) + list(denoiser.parameters())
    optimizer = torch.optim.Adam(params, lr=run.diffusion_train.lr)
    state = TrainState(
        text_encoder=text_encoder, denoiser=denoiser, optimizer=optimizer,
        sched=schedule_from_config(run), stats=SequenceStats.measure(samples),
        torch_gen=torch.Generator().manual_seed(run.seed + 1),
        np_rng=np.random.default_rng(np.random.SeedSequence([run.seed, 3])),
        lambda_pen=run.diffusion.lambda_pen, base_lr=run.diffusion_train.lr,
        warmup=run.diffusion_train.warmup,
        decay_iters=run.diffusion_train.iters,
        ema_decay=run.diffusion_train.ema_decay,
        ema=ema_shadow(text_encoder, denoiser),
        ablate_layout=ablate_layout)
    return state, bank


def train_diffusion(samples: Sequence[Sample], state: TrainState,
                    bank: StyleBank, *, iters: int, batch_size: int,
                    log: LogFn = _noop_log) -> TrainState:
    """Run the diffusion loop up to `iters` total steps (continues from
    state.step when resuming)."""
    n = len(samples)
    while state.step < iters:
        idx = state.np_rng.integers(n, size=batch_size)
        batch = prepare_batch(samples, [int(i) for i in idx], bank, state,
                              crop_rng=state.np_rng)
        l_stroke, l_drawn = train_step(state, batch)
        record = {"iter": state.step, "loss_stroke": l_stroke,
                  "loss_drawn": l_drawn}
        state.history.append(record)
        log(record)
    return state


def save_generation_checkpoint(path, state: TrainState,
                               style_encoder: StyleEncoder, run: RunConfig,
                               num_writers: int) -> None:
    tensors: dict = {}
    pack_module("style", style_encoder, tensors)
    pack_module("text", state.text_encoder, tensors)
    pack_module("denoiser", state.denoiser, tensors)
    if state.ema is not None:
        for name, value in state.ema.items():
            tensors[f"ema.{name}"] = value
    opt_meta = pack_optimizer(state.optimizer, tensors)
    rng_extra = pack_rng(tensors, np_rng=state.np_rng, torch_gen=state.torch_gen)
    save_checkpoint(
        path, "generation", tensors,
        config={"run": run.to_dict(), "num_writers": num_writers},
        extra={"step": state.step, "optimizer": opt_meta,
               "stats": state.stats.as_dict(),
               "vocab": state.text_encoder.vocab.manifest(),
               "ablate_layout": state.ablate_layout, **rng_extra})


def load_generation_checkpoint(path) -> tuple[GenerationModel, RunConfig, dict]:
    """Rebuild a sampling-ready model bundle from a generation checkpoint.

    Conditioning and denoiser weights come from the moving-average shadow
    when the checkpoint carries one; the raw training weights stay under
    their own names for `resume_train_state`."""
    ckpt = load_checkpoint(path)
    if ckpt.kind != "generation":
        raise CheckpointError(f"{path}: kind {ckpt.kind!r}, wanted generation")
    run = config_from_dict(ckpt.config["run"])
    vocab = Vocabulary.from_manifest(ckpt.extra["vocab"])
    style_encoder = StyleEncoder(run.style, ckpt.config["num_writers"])
    text_encoder, denoiser = build_generation_modules(run, vocab, run.seed)
    unpack_module("style", style_encoder, ckpt.tensors)
    unpack_module("text", text_encoder, ckpt.tensors)
    unpack_module("denoiser", denoiser, ckpt.tensors)
    ema = _unpack_ema(ckpt.tensors)
    if ema:
        ema_apply(ema, text_encoder, denoiser)
    for module in (style_encoder, text_encoder, denoiser):
        module.eval()
        module.requires_grad_(False)
    model = GenerationModel(
        style_encoder=style_encoder, text_encoder=text_encoder,
        denoiser=denoiser, sched=schedule_from_config(run),
        stats=SequenceStats.from_dict(ckpt.extra["stats"]),
        ablate_layout=bool(ckpt.extra.get("ablate_layout", False)))
    return model, run, ckpt.extra


def resume_train_state(path, samples: Sequence[Sample],
                       ) -> tuple[TrainState, StyleBank, RunConfig, int, StyleEncoder]:
    """Restore a full training state (modules, optimizer, RNG streams) so
    continued training matches an uninterrupted run bit for bit."""
    ckpt = load_checkpoint(path)
    if ckpt.kind != "generation":
        raise CheckpointError(f"{path}: kind {ckpt.kind!r}, wanted generation")
    run = config_from_dict(ckpt.config["run"])
    num_writers = ckpt.config["num_writers"]
    vocab = Vocabulary.from_manifest(ckpt.extra["vocab"])
    style_encoder = StyleEncoder(run.style, num_writers)
    unpack_module("style", style_encoder, ckpt.tensors)
    state, bank = init_train(samples, style_encoder, run,
                             ablate_layout=bool(ckpt.extra["ablate_layout"]),
                             vocab=vocab)
    unpack_module("text", state.text_encoder, ckpt.tensors)
    unpack_module("denoiser", state.denoiser, ckpt.tensors)
    ema = _unpack_ema(ckpt.tensors)
    if ema:
        state.ema = ema
    unpack_optimizer(state.optimizer, ckpt.tensors, ckpt.extra["optimizer"])
    unpack_rng(ckpt.tensors, ckpt.extra, np_rng=state.np_rng,
               torch_gen=state.torch_gen)
    state.step = ckpt.extra["step"]
    state.stats = SequenceStats.from_dict(ckpt.extra["stats"])
    return state, bank, run, num_writers, style_encoder


def _unpack_ema(tensors: dict) -> dict:
    return {name[4:]: torch.from_numpy(arr.copy())
            for name, arr in tensors.items() if name.startswith("ema.")}


def sampling_model(state: TrainState, style_encoder: StyleEncoder,
                   *, use_ema: bool = True) -> GenerationModel:
    """Frozen copy of the training modules for in-process sampling, using
    the moving-average weights by default."""
    text_encoder = copy.deepcopy(state.text_encoder)
    denoiser = copy.deepcopy(state.denoiser)
    if use_ema and state.ema:
        ema_apply(state.ema, text_encoder, denoiser)
    for module in (text_encoder, denoiser):
        module.eval()
        module.requires_grad_(False)
    return GenerationModel(
        style_encoder=style_encoder, text_encoder=text_encoder,
        denoiser=denoiser, sched=state.sched, stats=state.stats,
        ablate_layout=state.ablate_layout)
