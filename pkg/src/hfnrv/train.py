# Copyright 2026 The hfnrv Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Overfits a VideoModel to one video."""
import dataclasses
import json
import math
from typing import Callable, List, Mapping, NamedTuple, Optional, Sequence, Tuple
from absl import logging
import numpy as np
from hfnrv.autograd import Parameter
from hfnrv.layers import Module
from hfnrv.loss import LossConfig, total_loss
from hfnrv.media import VideoSequence, psnr
from hfnrv.model import EmbeddingSet, ModelConfig, VideoModel, encode_video


OPTIMIZERS = ("adan", "adam")


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    base_lr: float = 3e-3
    epochs: int = 300
    warmup_fraction: float = 0.1
    batch_size: int = 1
    seed: int = 0
    optimizer: str = "adan"
    shuffle: bool = False
    weight_decay: float = 0.0
    loss: LossConfig = dataclasses.field(default_factory=LossConfig)

    def validate(self):
        if self.base_lr <= 0:
            raise ValueError(f"train.base_lr must be > 0, got {self.base_lr}")
        if self.epochs < 0:
            raise ValueError(f"train.epochs must be >= 0, got {self.epochs}")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError(
                f"train.warmup_fraction must be in [0, 1), got {self.warmup_fraction}"
            )
        if self.batch_size < 1:
            raise ValueError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"train.optimizer {self.optimizer!r} not in {OPTIMIZERS}")
        if self.weight_decay < 0:
            raise ValueError(
                f"train.weight_decay must be >= 0, got {self.weight_decay}"
            )
        self.loss.validate()


class TrainRecord(NamedTuple):
    epoch: int
    loss: float
    psnr: float
    lr: float

    def to_json(self) -> str:
        return json.dumps(self._asdict(), sort_keys=True)


@dataclasses.dataclass
class TrainLog:
    records: List[TrainRecord] = dataclasses.field(default_factory=list)

    def append(self, record: TrainRecord):
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def to_jsonl(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.records)

    @classmethod
    def from_jsonl(cls, text: str) -> "TrainLog":
        return cls(
            [TrainRecord(**json.loads(line)) for line in text.splitlines() if line]
        )


def warmup_steps(total_steps: int, cfg: TrainConfig) -> int:
    return min(round(cfg.warmup_fraction * total_steps), max(total_steps - 1, 0))


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Linear warmup to base_lr, then cosine decay reaching 0 at the last step."""
    if not 0 <= step < total_steps:
        raise ValueError(f"Step {step} outside 0..{total_steps - 1}")
    warmup = warmup_steps(total_steps, cfg)
    if step < warmup:
        return cfg.base_lr * step / warmup
    span = total_steps - 1 - warmup
    progress = (step - warmup) / span if span > 0 else 0.0
    return cfg.base_lr * (1.0 + math.cos(math.pi * progress)) / 2.0


class Optimizer:
    def __init__(self, params: Sequence[Parameter], weight_decay: float = 0.0):
        self.params = list(params)
        self.weight_decay = weight_decay
        self.steps = 0

    def _grads(self) -> List[np.ndarray]:
        missing = [p.name or repr(p) for p in self.params if p.grad is None]
        if missing:
            raise RuntimeError(f"No gradient for {missing[:5]}")
        return [p.grad for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float):
        raise NotImplementedError


class Adam(Optimizer):
    def __init__(self, params, weight_decay=0.0, betas=(0.9, 0.999), eps=1e-8):
        super().__init__(params, weight_decay)
        self.betas = betas
        self.eps = eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float):
        grads = self._grads()
        self.steps += 1
        b1, b2 = self.betas
        bc1 = 1 - b1**self.steps
        bc2 = 1 - b2**self.steps
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay:
                p.data = p.data * (1 - lr * self.weight_decay)
            p.data = (p.data - lr * update).astype(p.dtype)


class Adan(Optimizer):
    """Adaptive Nesterov momentum: moments of the gradient, its difference and
    the squared Nesterov-corrected gradient, with decoupled weight decay."""

    def __init__(self, params, weight_decay=0.0, betas=(0.98, 0.92, 0.99), eps=1e-8):
        super().__init__(params, weight_decay)
        self.betas = betas
        self.eps = eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.d = [np.zeros_like(p.data) for p in self.params]
        self.n = [np.zeros_like(p.data) for p in self.params]
        self.previous: List[Optional[np.ndarray]] = [None] * len(self.params)

    def step(self, lr: float):
        grads = self._grads()
        self.steps += 1
        b1, b2, b3 = self.betas
        bc1 = 1 - b1**self.steps
        bc2 = 1 - b2**self.steps
        bc3 = 1 - b3**self.steps
        for i, (p, g) in enumerate(zip(self.params, grads)):
            previous = g if self.previous[i] is None else self.previous[i]
            diff = g - previous
            m, d, n = self.m[i], self.d[i], self.n[i]
            m *= b1
            m += (1 - b1) * g
            d *= b2
            d += (1 - b2) * diff
            nesterov = g + b2 * diff
            n *= b3
            n += (1 - b3) * nesterov * nesterov
            denom = np.sqrt(n) / math.sqrt(bc3) + self.eps
            update = (m / bc1 + b2 * d / bc2) / denom
            if self.weight_decay:
                p.data = p.data * (1 - lr * self.weight_decay)
            p.data = (p.data - lr * update).astype(p.dtype)
            self.previous[i] = g.copy()


def make_optimizer(name: str, params: Sequence[Parameter], weight_decay: float = 0.0):
    if name == "adan":
        return Adan(params, weight_decay)
    if name == "adam":
        return Adam(params, weight_decay)
    raise ValueError(f"Unknown optimizer {name!r}, expected one of {OPTIMIZERS}")


def apply_masks(module: Module, masks: Mapping[str, np.ndarray]):
    """Zeroes masked-out weights; masks map parameter names to keep-bitmaps."""
    params = dict(module.named_parameters())
    for name, keep in masks.items():
        p = params[name]
        p.data = np.where(keep, p.data, 0).astype(p.dtype)


def train_video(
    frames: VideoSequence,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    model: Optional[VideoModel] = None,
    masks: Optional[Mapping[str, np.ndarray]] = None,
    on_epoch: Optional[Callable[[TrainRecord], None]] = None,
) -> Tuple[VideoModel, EmbeddingSet, TrainLog]:
    """Runs epochs x ceil(T / batch_size) optimizer steps.

    Each step back-propagates the mean total loss of its frames. When masks
    (keyed by decoder parameter name) are given, masked weights stay zero.
    """
    model_cfg.validate()
    train_cfg.validate()
    model_cfg.validate_frame(frames.frame_size)
    if model is None:
        model = VideoModel(model_cfg, seed=train_cfg.seed)
    if masks:
        apply_masks(model.decoder, masks)
    optimizer = make_optimizer(
        train_cfg.optimizer, model.parameters(), train_cfg.weight_decay
    )
    rng = np.random.default_rng(train_cfg.seed)
    steps_per_epoch = math.ceil(len(frames) / train_cfg.batch_size)
    total_steps = train_cfg.epochs * steps_per_epoch
    log = TrainLog()
    step = 0
    for epoch in range(1, train_cfg.epochs + 1):
        if train_cfg.shuffle:
            order = rng.permutation(len(frames))
        else:
            order = np.arange(len(frames))
        losses, psnrs = [], []
        lr = 0.0
        for start in range(0, len(frames), train_cfg.batch_size):
            batch = order[start : start + train_cfg.batch_size]
            lr = lr_at(step, total_steps, train_cfg)
            optimizer.zero_grad()
            for t in batch:
                target = frames.tensor(int(t))
                recon, _, _ = model.forward_train(target)
                report = total_loss(recon, target, train_cfg.loss)
                (report.l_total * (1.0 / len(batch))).backward()
                losses.append(float(report.l_total))
                psnrs.append(psnr(np.clip(recon.data, 0.0, 1.0), frames.frames[t]))
            optimizer.step(lr)
            if masks:
                apply_masks(model.decoder, masks)
            step += 1
            logging.vlog(
                1,
                "step %d/%d lr %.3g batch loss %.6f",
                step,
                total_steps,
                lr,
                float(np.mean(losses[-len(batch) :])),
            )
        record = TrainRecord(epoch, float(np.mean(losses)), float(np.mean(psnrs)), lr)
        log.append(record)
        logging.info(
            "epoch %d/%d loss %.6f psnr %.3f lr %.3g",
            epoch,
            train_cfg.epochs,
            record.loss,
            record.psnr,
            lr,
        )
        if on_epoch is not None:
            on_epoch(record)
    return model, encode_video(model, frames.frames), log
