"""Versioned checkpoint files sufficient to resume training bitwise.

A checkpoint is a single ``.npz`` archive holding every parameter and
optimizer array plus a JSON metadata blob (config, accountant state, RNG
states, batch-sampler state, iteration counter, and the metric log).
"""

from __future__ import annotations

import json
from dataclasses import asdict

import numpy as np

from .network import NetworkSpec, ParameterSet, RmspropState
from .privacy import MomentsLedger
from .training import (
    EpochSampler,
    MetricLog,
    MetricRow,
    TrainConfig,
    TrainState,
)

MAGIC = "dpwgan-checkpoint"
FORMAT_VERSION = 1


def _pack_arrays(prefix: str, arrays) -> dict:
    return {f"{prefix}_{i}": np.asarray(a) for i, a in enumerate(arrays)}


def _unpack_arrays(archive, prefix: str) -> list[np.ndarray]:
    keys = sorted(
        (k for k in archive.files if k.startswith(prefix + "_")),
        key=lambda k: int(k.rsplit("_", 1)[1]),
    )
    return [archive[k] for k in keys]


def save_checkpoint(path, state: TrainState) -> None:
    """Write the full training state to ``path``."""
    meta = {
        "magic": MAGIC,
        "format_version": FORMAT_VERSION,
        "config": asdict(state.config),
        "disc_spec": {
            "layer_widths": list(state.disc_spec.layer_widths),
            "activations": list(state.disc_spec.activations),
        },
        "gen_spec": {
            "layer_widths": list(state.gen_spec.layer_widths),
            "activations": list(state.gen_spec.activations),
        },
        "ledger": state.ledger.state_dict(),
        "rng_state": state.rng.bit_generator.state,
        "eval_rng_state": state.eval_rng.bit_generator.state,
        "sampler_cursor": state.sampler.cursor,
        "iteration": state.iteration,
        "rmsprop": {
            "decay": state.disc_opt.decay,
            "eps": state.disc_opt.epsilon_stabilizer,
        },
        # wallclock is display-only and would break byte-level determinism
        "log": [
            {
                "generator_iteration": r.generator_iteration,
                "wasserstein_estimate": r.wasserstein_estimate,
                "epsilon_spent": r.epsilon_spent,
            }
            for r in state.log.rows
        ],
    }
    arrays = {
        "sampler_permutation": state.sampler.permutation,
        **_pack_arrays("disc_w", state.disc.weights),
        **_pack_arrays("disc_b", state.disc.biases),
        **_pack_arrays("gen_w", state.gen.weights),
        **_pack_arrays("gen_b", state.gen.biases),
        **_pack_arrays("disc_opt", state.disc_opt.running_sq_avg),
        **_pack_arrays("gen_opt", state.gen_opt.running_sq_avg),
    }
    arrays["meta_json"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **arrays)


class CheckpointError(ValueError):
    """The file is not a readable checkpoint of a supported version."""


def load_checkpoint(path) -> TrainState:
    """Rebuild a TrainState exactly as it was saved."""
    try:
        archive = np.load(path, allow_pickle=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if "meta_json" not in archive.files:
        raise CheckpointError(f"{path} is not a checkpoint (missing metadata)")
    meta = json.loads(bytes(archive["meta_json"]).decode("utf-8"))
    if meta.get("magic") != MAGIC:
        raise CheckpointError(f"{path} has wrong magic {meta.get('magic')!r}")
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {meta.get('format_version')!r}"
        )

    config = TrainConfig(**meta["config"])
    disc_spec = NetworkSpec(
        tuple(meta["disc_spec"]["layer_widths"]), tuple(meta["disc_spec"]["activations"])
    )
    gen_spec = NetworkSpec(
        tuple(meta["gen_spec"]["layer_widths"]), tuple(meta["gen_spec"]["activations"])
    )
    disc = ParameterSet(_unpack_arrays(archive, "disc_w"), _unpack_arrays(archive, "disc_b"))
    gen = ParameterSet(_unpack_arrays(archive, "gen_w"), _unpack_arrays(archive, "gen_b"))
    decay, eps = meta["rmsprop"]["decay"], meta["rmsprop"]["eps"]
    disc_opt = RmspropState(_unpack_arrays(archive, "disc_opt"), decay, eps)
    gen_opt = RmspropState(_unpack_arrays(archive, "gen_opt"), decay, eps)

    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng_state"]
    eval_rng = np.random.default_rng()
    eval_rng.bit_generator.state = meta["eval_rng_state"]

    sampler = EpochSampler.__new__(EpochSampler)
    sampler.n_rows = config.M
    sampler.batch_size = config.m
    sampler.permutation = archive["sampler_permutation"]
    sampler.cursor = int(meta["sampler_cursor"])

    log = MetricLog([MetricRow(**row, wallclock=0.0) for row in meta["log"]])
    return TrainState(
        config=config,
        disc_spec=disc_spec,
        gen_spec=gen_spec,
        disc=disc,
        gen=gen,
        disc_opt=disc_opt,
        gen_opt=gen_opt,
        ledger=MomentsLedger.from_state_dict(meta["ledger"]),
        rng=rng,
        eval_rng=eval_rng,
        sampler=sampler,
        iteration=int(meta["iteration"]),
        log=log,
    )
