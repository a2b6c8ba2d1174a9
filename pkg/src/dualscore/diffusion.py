"""Denoising-diffusion math core: schedules, forward process, posterior
mean, classifier-free guidance, the training loss, and an ancestral
reverse sampler used for self-tests.

Timesteps are 1-based: t in [1, T].  A schedule's arrays are indexed with
t - 1.  alpha_bar[0] corresponds to t=1; the virtual alpha_bar at t=0 is 1.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ShapeMismatchError


@dataclass
class DiffusionSchedule:
    T: int
    beta: np.ndarray       # (T,)
    alpha: np.ndarray      # (T,) = 1 - beta
    alpha_bar: np.ndarray  # (T,) running product of alpha
    sigma: np.ndarray      # (T,) posterior std, sigma_t^2 ~ beta_t

    def alpha_bar_prev(self, t):
        return 1.0 if t == 1 else self.alpha_bar[t - 2]

    def to_dict(self):
        return {"T": self.T, "beta_start": float(self.beta[0]),
                "beta_end": float(self.beta[-1])}


def build_schedule(T, beta_start=1e-4, beta_end=0.02, kind="linear"):
    if kind != "linear":
        raise ConfigurationError(f"unknown schedule kind {kind!r}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigurationError(
            f"invalid beta range [{beta_start}, {beta_end}]")
    if T < 1:
        raise ConfigurationError("T must be >= 1")
    beta = np.linspace(beta_start, beta_end, T)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    alpha_bar_prev = np.concatenate([[1.0], alpha_bar[:-1]])
    sigma = np.sqrt(beta * (1.0 - alpha_bar_prev) / (1.0 - alpha_bar))
    return DiffusionSchedule(T, beta, alpha, alpha_bar, sigma)


@dataclass
class NoisedSample:
    z_t: np.ndarray
    t: int
    eps: np.ndarray  # the exact Gaussian draw, retained for tests


def _check_t(schedule, t):
    if not (1 <= t <= schedule.T):
        raise ValueError(f"t={t} outside [1, {schedule.T}]")


def forward_sample(schedule, x, t, rng, eps=None):
    """z_t = sqrt(abar_t) x + sqrt(1 - abar_t) eps.  `eps` may be injected
    for deterministic tests."""
    _check_t(schedule, t)
    x = np.asarray(x, dtype=float)
    if eps is None:
        eps = rng.standard_normal(x.shape)
    ab = schedule.alpha_bar[t - 1]
    z_t = np.sqrt(ab) * x + np.sqrt(1.0 - ab) * eps
    return NoisedSample(z_t, t, eps)


def posterior_mean(schedule, z_t, t, x_hat):
    """Mean of q(z_{t-1} | z_t, x_hat), the standard DDPM posterior with
    cumulative alphas."""
    _check_t(schedule, t)
    ab_t = schedule.alpha_bar[t - 1]
    ab_prev = schedule.alpha_bar_prev(t)
    beta_t = schedule.beta[t - 1]
    denom = 1.0 - ab_t
    if denom < 1e-12:
        raise ValueError("posterior undefined: 1 - alpha_bar_t below 1e-12")
    coef_x = np.sqrt(ab_prev) * beta_t / denom
    coef_z = np.sqrt(1.0 - beta_t) * (1.0 - ab_prev) / denom
    return coef_x * np.asarray(x_hat, dtype=float) \
        + coef_z * np.asarray(z_t, dtype=float)


def cfg_combine(x_cond, x_uncond, gamma):
    """Classifier-free guidance: gamma * cond + (1 - gamma) * uncond."""
    x_cond = np.asarray(x_cond, dtype=float)
    x_uncond = np.asarray(x_uncond, dtype=float)
    if x_cond.shape != x_uncond.shape:
        raise ShapeMismatchError("cfg_combine: shape mismatch")
    if gamma == 1.0:
        return x_cond.copy()
    if gamma == 0.0:
        return x_uncond.copy()
    return gamma * x_cond + (1.0 - gamma) * x_uncond


def ddpm_loss(schedule, denoiser, x, t, rng, w=None):
    """Single Monte-Carlo draw of w(t) ||x - denoiser(z_t, t)||^2."""
    _check_t(schedule, t)
    x = np.asarray(x, dtype=float)
    z = forward_sample(schedule, x, t, rng)
    weight = 1.0 if w is None else w(t)
    diff = x - denoiser(z.z_t, t)
    return float(weight * np.sum(diff * diff))


def reverse_sample(schedule, denoiser, shape, rng, noise_hook=None):
    """Ancestral sampling from t=T down to 1; no noise is added at t=1.

    noise_hook(t, shape) may inject the per-step Gaussian draws for
    determinism tests.
    """
    z = rng.standard_normal(shape)
    for t in range(schedule.T, 0, -1):
        x_hat = denoiser(z, t)
        mu = posterior_mean(schedule, z, t, x_hat)
        if t > 1:
            noise = noise_hook(t, shape) if noise_hook else \
                rng.standard_normal(shape)
            z = mu + schedule.sigma[t - 1] * noise
        else:
            z = mu
    return z
