"""Conditional normalizing flow for motion: an invertible map between pose
vectors and a standard-normal latent, conditioned on pose history and speech
context through a recurrent encoder.

Each flow step is actnorm -> LU-parameterized invertible linear -> affine
coupling. The coupling network sees one half of the dimensions plus the
conditioning vector and emits a bounded log-scale and a shift for the other
half; halves swap roles on alternating steps so every dimension gets
transformed. Exact log-determinants make the negative log-likelihood exact.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import torch
from torch import nn

from .errors import ContractViolation, NumericError

LOG_TWO_PI = math.log(2.0 * math.pi)
MIN_LINEAR_DIAG = 1e-8


@dataclass(frozen=True)
class FlowConfig:
    pose_dim: int = 0  # D; 0 means "infer from the prepared dataset"
    n_mels: int = 0  # 0 means "infer from the prepared dataset"
    flow_steps: int = 8  # K
    cond_dim: int = 64
    hidden_size: int = 128  # recurrent encoder width
    coupling_hidden: int = 128
    history_len: int = 10  # H
    context_radius: int = 5  # w
    scale_bound: float = 3.0  # coupling log-scale squashed into [-bound, bound]

    def to_dict(self):
        return {
            "pose_dim": self.pose_dim,
            "n_mels": self.n_mels,
            "flow_steps": self.flow_steps,
            "cond_dim": self.cond_dim,
            "hidden_size": self.hidden_size,
            "coupling_hidden": self.coupling_hidden,
            "history_len": self.history_len,
            "context_radius": self.context_radius,
            "scale_bound": self.scale_bound,
        }

    @property
    def context_len(self):
        return 2 * self.context_radius + 1

    def validate(self):
        if self.pose_dim < 2:
            raise ContractViolation("pose_dim must be >= 2")
        if self.flow_steps < 1:
            raise ContractViolation("flow_steps must be >= 1")


class ActNorm(nn.Module):
    """Per-dimension affine layer with data-dependent initialization."""

    def __init__(self, dim):
        super().__init__()
        self.bias = nn.Parameter(torch.zeros(dim))
        self.log_scale = nn.Parameter(torch.zeros(dim))
        self.register_buffer("initialized", torch.zeros((), dtype=torch.int64))

    @torch.no_grad()
    def initialize_from(self, x):
        """Set scale/bias so this batch comes out zero-mean, unit-std."""
        if self.initialized.item():
            raise ContractViolation("actnorm already initialized")
        if x.shape[0] < 2:
            raise ContractViolation("actnorm initialization needs >= 2 samples")
        std = x.std(dim=0, unbiased=False)
        if (std < 1e-6).any():
            warnings.warn("actnorm: zero-variance dimension, clamping std to 1e-6")
            std = std.clamp_min(1e-6)
        self.bias.copy_(-x.mean(dim=0))
        self.log_scale.copy_(-torch.log(std))
        self.initialized.fill_(1)

    def forward(self, x):
        y = (x + self.bias) * torch.exp(self.log_scale)
        return y, self.log_scale.sum()

    def inverse(self, y):
        return y * torch.exp(-self.log_scale) - self.bias


class InvertibleLinear(nn.Module):
    """LU-parameterized D x D map: W = P L U with fixed permutation P,
    unit-lower L, and upper U whose diagonal stays away from zero."""

    def __init__(self, dim, init="orthogonal", init_rng=None):
        super().__init__()
        if init == "identity":
            p = np.eye(dim)
            lower = np.zeros((dim, dim))
            upper = np.zeros((dim, dim))
            log_diag = np.zeros(dim)
            sign = np.ones(dim)
        elif init == "orthogonal":
            rng = init_rng if init_rng is not None else np.random.default_rng(0)
            q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
            p, l, u = scipy.linalg.lu(q)
            lower = np.tril(l, -1)
            diag = np.diag(u).copy()
            upper = np.triu(u, 1)
            log_diag = np.log(np.abs(diag))
            sign = np.sign(diag)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.register_buffer("permutation", torch.tensor(p, dtype=torch.float64))
        self.register_buffer("diag_sign", torch.tensor(sign, dtype=torch.float64))
        self.lower = nn.Parameter(torch.tensor(lower, dtype=torch.float64))
        self.upper = nn.Parameter(torch.tensor(upper, dtype=torch.float64))
        self.log_diag = nn.Parameter(torch.tensor(log_diag, dtype=torch.float64))

    def _factors(self):
        dim = self.log_diag.shape[0]
        eye = torch.eye(dim, dtype=self.lower.dtype, device=self.lower.device)
        log_diag = self.log_diag.clamp_min(math.log(MIN_LINEAR_DIAG))
        l = eye + torch.tril(self.lower, -1)
        u = torch.triu(self.upper, 1) + torch.diag(self.diag_sign * torch.exp(log_diag))
        return l, u, log_diag

    def weight(self):
        l, u, _ = self._factors()
        return self.permutation @ l @ u

    def forward(self, x):
        _, _, log_diag = self._factors()
        return x @ self.weight().T, log_diag.sum()

    def inverse(self, y):
        l, u, _ = self._factors()
        v = y @ self.permutation  # rows of P^T y
        a = torch.linalg.solve_triangular(l, v.T, upper=False, unitriangular=True)
        x = torch.linalg.solve_triangular(u, a, upper=True)
        return x.T


class AffineCoupling(nn.Module):
    """Scale/shift one half of the dimensions from the other half + conditioning."""

    def __init__(self, dim, cond_dim, hidden, swap, scale_bound=3.0):
        super().__init__()
        self.split = (dim + 1) // 2
        self.swap = swap
        self.scale_bound = scale_bound
        a_dim = dim - self.split if swap else self.split
        b_dim = dim - a_dim
        out = nn.Linear(hidden, 2 * b_dim)
        # zero-initialized output makes the coupling start as the identity
        nn.init.zeros_(out.weight)
        nn.init.zeros_(out.bias)
        self.net = nn.Sequential(
            nn.Linear(a_dim + cond_dim, hidden),
            nn.Tanh(),
            nn.Linear(hidden, hidden),
            nn.Tanh(),
            out,
        )
        self.b_dim = b_dim

    def _split(self, x):
        if self.swap:
            return x[..., self.split :], x[..., : self.split]
        return x[..., : self.split], x[..., self.split :]

    def _join(self, a, b):
        if self.swap:
            return torch.cat([b, a], dim=-1)
        return torch.cat([a, b], dim=-1)

    def _scale_shift(self, a, cond):
        h = self.net(torch.cat([a, cond], dim=-1))
        raw_scale, shift = h[..., : self.b_dim], h[..., self.b_dim :]
        log_scale = self.scale_bound * torch.tanh(raw_scale / self.scale_bound)
        return log_scale, shift

    def forward(self, x, cond):
        a, b = self._split(x)
        log_scale, shift = self._scale_shift(a, cond)
        y_b = b * torch.exp(log_scale) + shift
        return self._join(a, y_b), log_scale.sum(dim=-1)

    def inverse(self, y, cond):
        a, y_b = self._split(y)
        log_scale, shift = self._scale_shift(a, cond)
        b = (y_b - shift) * torch.exp(-log_scale)
        return self._join(a, b)


class FlowStep(nn.Module):
    def __init__(self, dim, cond_dim, hidden, swap, scale_bound=3.0,
                 linear_init="orthogonal", init_rng=None):
        super().__init__()
        self.actnorm = ActNorm(dim)
        self.linear = InvertibleLinear(dim, init=linear_init, init_rng=init_rng)
        self.coupling = AffineCoupling(dim, cond_dim, hidden, swap, scale_bound)

    def forward(self, x, cond):
        x, ld_act = self.actnorm(x)
        x, ld_lin = self.linear(x)
        x, ld_coup = self.coupling(x, cond)
        return x, ld_act + ld_lin + ld_coup

    def inverse(self, y, cond):
        y = self.coupling.inverse(y, cond)
        y = self.linear.inverse(y)
        return self.actnorm.inverse(y)


class ConditioningEncoder(nn.Module):
    """Single-layer GRU over per-frame [pose history; speech context] vectors."""

    def __init__(self, input_dim, hidden_size, cond_dim):
        super().__init__()
        self.gru = nn.GRU(input_dim, hidden_size, batch_first=True)
        self.project = nn.Linear(hidden_size, cond_dim)

    def forward(self, frames, state=None):
        out, state = self.gru(frames, state)
        return self.project(out), state


class MotionFlow(nn.Module):
    """K flow steps plus the recurrent conditioning encoder.

    All computation is double precision: exact invertibility is the model's
    core contract, the LU solves lose too much in float32, and the model is
    small enough that float64 costs nothing at this scale.
    """

    def __init__(self, config: FlowConfig, linear_init="orthogonal", init_seed=0):
        super().__init__()
        config.validate()
        self.config = config
        cond_input = (
            config.history_len * config.pose_dim
            + config.context_len * config.n_mels
        )
        self.encoder = ConditioningEncoder(cond_input, config.hidden_size, config.cond_dim)
        self.steps = nn.ModuleList(
            [
                FlowStep(
                    config.pose_dim,
                    config.cond_dim,
                    config.coupling_hidden,
                    swap=(k % 2 == 1),
                    scale_bound=config.scale_bound,
                    linear_init=linear_init,
                    init_rng=np.random.default_rng([init_seed, k]),
                )
                for k in range(config.flow_steps)
            ]
        )
        self.to(torch.float64)

    @property
    def dtype(self):
        return next(self.parameters()).dtype

    def encode(self, histories, contexts, state=None):
        """histories (B, L, H, D), contexts (B, L, C, M) -> cond (B, L, cond_dim)."""
        b, l = histories.shape[:2]
        frames = torch.cat(
            [histories.reshape(b, l, -1), contexts.reshape(b, l, -1)], dim=-1
        )
        return self.encoder(frames, state)

    def flow_forward(self, x, cond):
        """Pose -> latent; returns (z, per-sample log|det J|)."""
        logdet = torch.zeros(x.shape[:-1], dtype=x.dtype, device=x.device)
        for k, step in enumerate(self.steps):
            x, ld = step(x, cond)
            if not torch.isfinite(x).all():
                raise NumericError(f"non-finite activations in flow step {k}")
            logdet = logdet + ld
        return x, logdet

    def flow_inverse(self, z, cond):
        """Latent -> pose; exact algebraic inverse of flow_forward."""
        for k, step in reversed(list(enumerate(self.steps))):
            z = step.inverse(z, cond)
            if not torch.isfinite(z).all():
                raise NumericError(f"non-finite activations in inverse flow step {k}")
        return z

    def nll_from_cond(self, x, cond):
        """Per-frame negative log-likelihood in nats, averaged."""
        z, logdet = self.flow_forward(x, cond)
        dim = self.config.pose_dim
        log_prob = -0.5 * (z ** 2).sum(dim=-1) - 0.5 * dim * LOG_TWO_PI
        return -(log_prob + logdet).mean()

    def nll(self, targets, histories, contexts, state=None):
        """NLL over chunked batches: targets (B, L, D), histories (B, L, H, D),
        contexts (B, L, C, M). Encoder state threads over each chunk's frames."""
        cond, _ = self.encode(histories, contexts, state)
        b, l, d = targets.shape
        return self.nll_from_cond(targets.reshape(b * l, d), cond.reshape(b * l, -1))

    @torch.no_grad()
    def initialize_actnorm(self, targets, histories, contexts):
        """Data-dependent init: each step's actnorm standardizes the
        activations that actually reach it on this batch."""
        cond, _ = self.encode(histories, contexts)
        b, l, d = targets.shape
        x = targets.reshape(b * l, d)
        cond = cond.reshape(b * l, -1)
        for step in self.steps:
            step.actnorm.initialize_from(x)
            x, _ = step(x, cond)

    @property
    def actnorm_initialized(self):
        return all(bool(s.actnorm.initialized.item()) for s in self.steps)


def data_dropout(pose_history, rate, rng, mode="frame"):
    """Randomly zero standardized history poses (training-time only).

    mode "frame" masks each history slot independently; mode "window" masks
    all slots of a window together. `pose_history` has shape (..., H, D).
    """
    if not 0.0 <= rate < 1.0:
        raise ContractViolation("dropout rate must be in [0, 1)")
    history = np.asarray(pose_history)
    if rate == 0.0:
        return history.copy()
    if mode == "frame":
        keep = rng.random(history.shape[:-1]) >= rate
        return history * keep[..., None]
    if mode == "window":
        keep = rng.random(history.shape[:-2]) >= rate
        return history * keep[..., None, None]
    raise ContractViolation(f"unknown dropout mode {mode!r}")
