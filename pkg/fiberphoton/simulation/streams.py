"""Quantum-jump Monte-Carlo photon streams and the two-detector chain.

The trajectory is a fixed-step stochastic wavefunction in the basis
``(ground, excited)``. Per step the emitter jumps to the ground state with
probability ``gamma_par * |c_e|^2 * dt`` (an emission), otherwise the
amplitudes evolve with the exact propagator of the damped, driven
non-Hermitian Hamiltonian and are renormalized. Pure dephasing randomizes
the excited-state phase at rate ``gamma_perp - gamma_par / 2``.

Randomness comes from two independent PCG64 streams spawned from the run
seed: one drives the trajectory, the other the detection chain. Output is a
pure function of the configuration.
"""

from __future__ import annotations

import logging
import math

import numba
import numpy as np
from scipy import linalg

from fiberphoton.config import SimConfig, max_stable_dt
from fiberphoton.errors import SimulationError
from fiberphoton.io.tags import CHANNEL_A, CHANNEL_B, TagStream

logger = logging.getLogger(__name__)

__all__ = [
    "detect_and_split",
    "max_stable_dt",
    "seed_streams",
    "simulate_emissions",
    "simulate_tags",
]


def seed_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Return independent ``(trajectory, detection)`` generators for ``seed``."""
    trajectory, detection = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.PCG64(trajectory)), np.random.Generator(np.random.PCG64(detection))


def step_propagator(config: SimConfig) -> np.ndarray:
    """Exact one-step propagator ``expm(-i H_eff dt)`` in the (g, e) basis."""
    rabi = config.drive.rabi
    delta = config.drive.detuning
    hamiltonian = np.array(
        [
            [0.0, 0.5 * rabi],
            [0.5 * rabi, -delta - 0.5j * config.emitter.gamma_par],
        ],
        dtype=complex,
    )
    return linalg.expm(-1j * hamiltonian * config.dt)


@numba.njit(nogil=True)
def _jump_chunk(uniforms, n_steps, first_step, state, propagator, jump_scale, dephase_prob, out):
    """Advance the trajectory ``n_steps`` steps; return the number of emissions."""
    c_g = state[0]
    c_e = state[1]
    u00 = propagator[0, 0]
    u01 = propagator[0, 1]
    u10 = propagator[1, 0]
    u11 = propagator[1, 1]
    # A step that emits restarts from the ground state and still evolves for
    # the rest of the step, so the state after it sits one dt past the jump.
    reset_norm = math.sqrt(abs(u00) ** 2 + abs(u10) ** 2)
    reset_g = u00 / reset_norm
    reset_e = u10 / reset_norm
    n_out = 0
    for k in range(n_steps):
        p_excited = c_e.real * c_e.real + c_e.imag * c_e.imag
        if uniforms[2 * k] < jump_scale * p_excited:
            out[n_out] = first_step + k
            n_out += 1
            c_g = reset_g
            c_e = reset_e
        else:
            g_new = u00 * c_g + u01 * c_e
            e_new = u10 * c_g + u11 * c_e
            norm = math.sqrt(
                g_new.real * g_new.real + g_new.imag * g_new.imag + e_new.real * e_new.real + e_new.imag * e_new.imag
            )
            c_g = g_new / norm
            c_e = e_new / norm
        kick = uniforms[2 * k + 1]
        if kick < dephase_prob:
            phase = 2.0 * math.pi * kick / dephase_prob
            c_e = c_e * (math.cos(phase) + 1j * math.sin(phase))
    state[0] = c_g
    state[1] = c_e
    return n_out


def _emission_steps(config: SimConfig) -> np.ndarray:
    trajectory_rng, _ = seed_streams(config.seed)
    n_total = config.n_steps
    if config.drive.rabi == 0:
        return np.zeros(0, dtype=np.int64)

    propagator = step_propagator(config)
    jump_scale = config.emitter.gamma_par * config.dt
    dephase_prob = config.emitter.pure_dephasing * config.dt
    state = np.array([1.0 + 0.0j, 0.0j])
    buffer = np.empty(config.chunk_steps, dtype=np.int64)
    pieces = []
    done = 0
    while done < n_total:
        n_steps = min(config.chunk_steps, n_total - done)
        uniforms = trajectory_rng.random(2 * n_steps)
        count = _jump_chunk(uniforms, n_steps, done, state, propagator, jump_scale, dephase_prob, buffer)
        pieces.append(buffer[:count].copy())
        done += n_steps
        logger.debug("simulated %d/%d steps, %d emissions in chunk", done, n_total, count)
    return np.concatenate(pieces) if pieces else np.zeros(0, dtype=np.int64)


def simulate_emissions(config: SimConfig) -> np.ndarray:
    """Emission times (s) of one quantum-jump trajectory.

    Args:
        config: Validated run definition; its step already satisfies the
            stability bound.

    Returns:
        Sorted float64 array of emission times in seconds.
    """
    steps = _emission_steps(config)
    logger.info("trajectory produced %d emissions over %.3g s", steps.size, config.duration)
    return steps * config.dt


def _to_grid(times_s: np.ndarray, resolution_ps: int) -> np.ndarray:
    ticks = np.floor(np.asarray(times_s, dtype=float) * 1e12 / resolution_ps)
    return ticks.astype(np.int64) * resolution_ps


@numba.njit(nogil=True)
def _dead_time_mask(timestamps, dead_ps):
    """Non-paralyzable dead time on one sorted channel."""
    keep = np.ones(timestamps.size, dtype=np.bool_)
    if timestamps.size == 0:
        return keep
    last = timestamps[0]
    for i in range(1, timestamps.size):
        if timestamps[i] - last >= dead_ps:
            last = timestamps[i]
        else:
            keep[i] = False
    return keep


def detect_and_split(emissions: np.ndarray, config: SimConfig) -> TagStream:
    """Turn emission times into a two-channel detector stream.

    Each emission survives with probability ``eta_det`` and goes to channel A
    with probability ``split_ratio``. Independent Poisson backgrounds are
    added, timestamps are floored to the resolution grid, and each channel
    drops tags falling within ``dead_time`` of its last kept tag.

    Raises:
        SimulationError: For unsorted emission times.
    """
    emissions = np.asarray(emissions, dtype=float)
    if emissions.size and np.any(np.diff(emissions) < 0):
        raise SimulationError("emission times must be sorted")
    _, rng = seed_streams(config.seed)

    detected = emissions[rng.random(emissions.size) < config.eta_det]
    to_a = rng.random(detected.size) < config.split_ratio
    per_channel = {CHANNEL_A: [detected[to_a]], CHANNEL_B: [detected[~to_a]]}
    for label, rate in ((CHANNEL_A, config.bg_rate_a), (CHANNEL_B, config.bg_rate_b)):
        n_background = rng.poisson(rate * config.duration) if rate > 0 else 0
        per_channel[label].append(rng.random(n_background) * config.duration)

    dead_ps = int(round(config.dead_time * 1e12))
    kept = {}
    for label, parts in per_channel.items():
        ticks = np.sort(_to_grid(np.concatenate(parts), config.resolution))
        kept[label] = ticks[_dead_time_mask(ticks, dead_ps)]
    stream = TagStream.from_channels(kept[CHANNEL_A], kept[CHANNEL_B])
    logger.info("detected %d tags on A and %d on B", kept[CHANNEL_A].size, kept[CHANNEL_B].size)
    return stream


def simulate_tags(config: SimConfig) -> TagStream:
    """Full chain: trajectory followed by detection."""
    return detect_and_split(simulate_emissions(config), config)
