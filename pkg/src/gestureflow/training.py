"""Training loop, checkpointing, and resume for the motion flow.

Optimization is adaptive moment estimation with gradient-norm clipping and an
exponential learning-rate decay between the configured endpoints. Checkpoints
are MGT1 tensor files carrying every parameter/buffer, the full optimizer
state, standardizers, skeleton, configs, and the numpy RNG state, so an
interrupted run resumes bit-exactly.
"""

import dataclasses
import hashlib
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from .audio import AudioConfig
from .bvh import Skeleton, skeleton_from_dict, skeleton_to_dict
from .data import PreparedDataset, Standardizer, window_arrays
from .errors import DataError, NumericError
from .flow import FlowConfig, MotionFlow, data_dropout
from .seeding import substream_seed
from .tensorfile import read_tensors, write_tensors

FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 80000
    lr_max: float = 2e-3
    lr_final: float = 5e-4
    data_dropout: float = 0.4
    batch_size: int = 32
    chunk_length: int = 20  # frames per chunk; encoder state threads inside a chunk
    seed: Optional[int] = None  # None: derive from the global seed
    dropout_mode: str = "frame"
    grad_clip: float = 5.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    checkpoint_interval: int = 1000
    log_interval: int = 50
    divergence_factor: float = 10.0

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}


def learning_rate(step, config):
    """Exponential decay from lr_max at step 0 to lr_final at config.steps."""
    if config.steps <= 0:
        return config.lr_final
    frac = min(max(step / config.steps, 0.0), 1.0)
    return config.lr_max * (config.lr_final / config.lr_max) ** frac


def resolve_flow_config(flow_config, pose_dim, n_mels):
    """Fill in data-dependent dimensions left at 0 in the config."""
    updates = {}
    if flow_config.pose_dim == 0:
        updates["pose_dim"] = pose_dim
    if flow_config.n_mels == 0:
        updates["n_mels"] = n_mels
    cfg = dataclasses.replace(flow_config, **updates) if updates else flow_config
    if cfg.pose_dim != pose_dim or cfg.n_mels != n_mels:
        raise DataError(
            f"flow config dims (D={cfg.pose_dim}, mels={cfg.n_mels}) do not match "
            f"the prepared dataset (D={pose_dim}, mels={n_mels})"
        )
    return cfg


class _WindowStore:
    """Per-sequence window arrays, ready for contiguous chunk slicing."""

    def __init__(self, sequences, history_len, context_radius):
        self.items = []
        for seq in sequences:
            targets, histories, contexts = window_arrays(
                seq.poses, seq.mels, history_len, context_radius
            )
            self.items.append(
                (
                    targets.astype(np.float64),
                    histories.astype(np.float64),
                    contexts.astype(np.float64),
                )
            )
        self.min_length = min(t.shape[0] for t, _, _ in self.items)

    def sample_chunks(self, rng, batch_size, chunk_length):
        length = min(chunk_length, self.min_length)
        seq_idx = rng.integers(0, len(self.items), size=batch_size)
        targets, histories, contexts = [], [], []
        for s in seq_idx:
            t, h, c = self.items[s]
            start = int(rng.integers(0, t.shape[0] - length + 1))
            targets.append(t[start : start + length])
            histories.append(h[start : start + length])
            contexts.append(c[start : start + length])
        return np.stack(targets), np.stack(histories), np.stack(contexts)


def assemble_batch(store, rng, train_config):
    """Draw one training batch and apply data dropout to the histories."""
    targets, histories, contexts = store.sample_chunks(
        rng, train_config.batch_size, train_config.chunk_length
    )
    histories = data_dropout(
        histories, train_config.data_dropout, rng, train_config.dropout_mode
    )
    return targets, histories, contexts


def gradients(model, targets, histories, contexts):
    """Exact reverse-mode gradients of the NLL for every parameter.

    Returns (loss tensor, dict parameter name -> gradient tensor).
    """
    model.zero_grad(set_to_none=True)
    loss = model.nll(targets, histories, contexts)
    if not torch.isfinite(loss):
        raise NumericError("non-finite training loss")
    loss.backward()
    grads = {}
    for name, param in model.named_parameters():
        grad = torch.zeros_like(param) if param.grad is None else param.grad.detach().clone()
        if not torch.isfinite(grad).all():
            raise NumericError(f"non-finite gradient in parameter block {name!r}")
        grads[name] = grad
    return loss.detach(), grads


def _standardizer_arrays(prefix, standardizer):
    return {
        f"{prefix}/mean": standardizer.mean.astype(np.float64),
        f"{prefix}/std": standardizer.std.astype(np.float64),
    }


def save_checkpoint(path, model, optimizer, step, rng, *, pose_std, mel_std,
                    skeleton, rest_root_position, train_config, audio_config,
                    dataset_config, initial_nll, config_hash, global_seed):
    arrays = {}
    for name, tensor in model.state_dict().items():
        arrays[f"model/{name}"] = tensor.detach().cpu().numpy()
    opt_state = optimizer.state_dict()
    for idx, state in opt_state["state"].items():
        for key, value in state.items():
            arrays[f"opt/{idx}/{key}"] = value.detach().cpu().numpy()
    arrays.update(_standardizer_arrays("pose_std", pose_std))
    arrays.update(_standardizer_arrays("mel_std", mel_std))
    arrays["rest_root_position"] = np.asarray(rest_root_position, dtype=np.float64)
    metadata = {
        "format_version": FORMAT_VERSION,
        "step": step,
        "flow_config": model.config.to_dict(),
        "train_config": train_config.to_dict(),
        "audio_config": audio_config.to_dict(),
        "dataset_config": dataset_config.to_dict() if dataset_config else None,
        "skeleton": skeleton_to_dict(skeleton),
        "rng_state": rng.bit_generator.state,
        "initial_nll": initial_nll,
        "config_hash": config_hash,
        "seed": global_seed,
    }
    write_tensors(path, arrays, metadata)


@dataclass
class CheckpointBundle:
    """Everything a trained model needs downstream."""

    model: MotionFlow
    flow_config: FlowConfig
    train_config: TrainConfig
    audio_config: AudioConfig
    pose_standardizer: Standardizer
    mel_standardizer: Standardizer
    skeleton: Skeleton
    rest_root_position: np.ndarray
    step: int
    rng_state: dict
    initial_nll: float
    config_hash: str
    seed: int
    optimizer_arrays: dict
    checkpoint_id: str


def load_checkpoint(path):
    arrays, meta = read_tensors(path)
    if meta.get("format_version") != FORMAT_VERSION:
        raise DataError(
            f"{path}: checkpoint format version {meta.get('format_version')} "
            f"not supported (expected {FORMAT_VERSION})"
        )
    flow_config = FlowConfig(**meta["flow_config"])
    model = MotionFlow(flow_config)
    state = {
        name[len("model/"):]: torch.from_numpy(arr)
        for name, arr in arrays.items()
        if name.startswith("model/")
    }
    model.load_state_dict(state)
    optimizer_arrays = {
        name: arr for name, arr in arrays.items() if name.startswith("opt/")
    }
    with open(path, "rb") as fh:
        checkpoint_id = hashlib.sha256(fh.read()).hexdigest()[:16]
    return CheckpointBundle(
        model=model,
        flow_config=flow_config,
        train_config=TrainConfig(**meta["train_config"]),
        audio_config=AudioConfig(**meta["audio_config"]),
        pose_standardizer=Standardizer(arrays["pose_std/mean"], arrays["pose_std/std"]),
        mel_standardizer=Standardizer(arrays["mel_std/mean"], arrays["mel_std/std"]),
        skeleton=skeleton_from_dict(meta["skeleton"]),
        rest_root_position=arrays["rest_root_position"],
        step=int(meta["step"]),
        rng_state=meta["rng_state"],
        initial_nll=float(meta["initial_nll"]),
        config_hash=meta["config_hash"],
        seed=meta["seed"],
        optimizer_arrays=optimizer_arrays,
        checkpoint_id=checkpoint_id,
    )


def _restore_optimizer(optimizer, bundle):
    groups = optimizer.state_dict()["param_groups"]
    state = {}
    indices = sorted(
        {int(name.split("/")[1]) for name in bundle.optimizer_arrays}
    )
    for idx in indices:
        entry = {}
        for key in ("step", "exp_avg", "exp_avg_sq"):
            arr = bundle.optimizer_arrays.get(f"opt/{idx}/{key}")
            if arr is not None:
                entry[key] = torch.from_numpy(arr.copy())
        state[idx] = entry
    optimizer.load_state_dict({"state": state, "param_groups": groups})


def train(dataset: PreparedDataset, flow_config: FlowConfig, train_config: TrainConfig,
          workdir, *, audio_config=AudioConfig(), dataset_config=None,
          global_seed=0, config_hash="", resume=None, log_path=None,
          stop_after=None):
    """Run the step budget; returns the final checkpoint path.

    Checkpoints land in workdir/checkpoints; the training log (step, nll, lr)
    is appended to workdir/train_log.csv. `stop_after` simulates an
    interruption: the run checkpoints and returns early at that step.
    """
    os.makedirs(os.path.join(workdir, "checkpoints"), exist_ok=True)
    train_seed = train_config.seed
    if train_seed is None:
        train_seed = substream_seed(global_seed, "train")

    pose_dim = dataset.train[0].poses.shape[1]
    flow_config = resolve_flow_config(flow_config, pose_dim, dataset.n_mels)
    store = _WindowStore(dataset.train, flow_config.history_len, flow_config.context_radius)

    if resume is not None:
        bundle = load_checkpoint(resume)
        model = bundle.model
        rng = np.random.default_rng()
        rng.bit_generator.state = bundle.rng_state
        start_step = bundle.step
        initial_nll = bundle.initial_nll
    else:
        torch.manual_seed(substream_seed(train_seed, "model-init"))
        model = MotionFlow(flow_config, init_seed=substream_seed(train_seed, "linear-init"))
        rng = np.random.default_rng(substream_seed(train_seed, "batches"))
        start_step = 0
        initial_nll = None

    optimizer = torch.optim.Adam(
        model.parameters(),
        lr=train_config.lr_max,
        betas=(train_config.adam_beta1, train_config.adam_beta2),
    )
    if resume is not None:
        _restore_optimizer(optimizer, bundle)

    if log_path is None:
        log_path = os.path.join(workdir, "train_log.csv")
    log_mode = "a" if resume is not None else "w"
    log = open(log_path, log_mode, encoding="utf-8")
    if log_mode == "w":
        log.write(f"# config_hash={config_hash} seed={global_seed} format_version={FORMAT_VERSION}\n")
        log.write("step,nll,lr\n")

    def checkpoint_path(step):
        return os.path.join(workdir, "checkpoints", f"step_{step:08d}.mgt")

    def write_ckpt(step):
        path = checkpoint_path(step)
        save_checkpoint(
            path, model, optimizer, step, rng,
            pose_std=dataset.pose_standardizer,
            mel_std=dataset.mel_standardizer,
            skeleton=dataset.skeleton,
            rest_root_position=dataset.rest_root_position,
            train_config=train_config,
            audio_config=audio_config,
            dataset_config=dataset_config,
            initial_nll=initial_nll,
            config_hash=config_hash,
            global_seed=global_seed,
        )
        return path

    try:
        if not model.actnorm_initialized:
            init_batch = assemble_batch(store, np.random.default_rng(substream_seed(train_seed, "actnorm")), train_config)
            model.initialize_actnorm(*[torch.as_tensor(a) for a in init_batch])
            with torch.no_grad():
                initial_nll = float(model.nll(*[torch.as_tensor(a) for a in init_batch]))
        if initial_nll is None:
            raise DataError("resumed checkpoint lacks an initial NLL record")

        last_path = None
        for step in range(start_step, train_config.steps):
            lr = learning_rate(step, train_config)
            for group in optimizer.param_groups:
                group["lr"] = lr
            batch = assemble_batch(store, rng, train_config)
            tensors = [torch.as_tensor(a) for a in batch]
            loss, _ = gradients(model, *tensors)
            loss_val = float(loss)
            if loss_val > train_config.divergence_factor * initial_nll:
                raise NumericError(
                    f"training diverged at step {step}: nll {loss_val:.3f} exceeds "
                    f"{train_config.divergence_factor} x initial nll {initial_nll:.3f}"
                )
            torch.nn.utils.clip_grad_norm_(model.parameters(), train_config.grad_clip)
            optimizer.step()
            done = step + 1
            if done % train_config.log_interval == 0 or done == train_config.steps:
                log.write(f"{done},{loss_val:.6f},{lr:.8g}\n")
                log.flush()
            if done % train_config.checkpoint_interval == 0 or done == train_config.steps:
                last_path = write_ckpt(done)
            if stop_after is not None and done >= stop_after:
                return last_path if last_path else write_ckpt(done)
        if last_path is None:
            last_path = write_ckpt(train_config.steps)
        return last_path
    finally:
        log.close()
