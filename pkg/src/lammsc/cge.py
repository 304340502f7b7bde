"""Conditional-GAN channel estimation.

The generator maps a 4-channel condition image (received pilots and known
pilot symbols, re/im planes) to the 2-channel gain image; a discriminator
judges (condition, gains) pairs. Training alternates discriminator and
generator updates with a BCE adversarial objective plus a strong L1
reconstruction term, and is fully seed-deterministic.

Model file format (magic ``CGE1``, version 1):
  4 bytes magic, 1 byte version, little-endian uint32 header length,
  UTF-8 JSON header (grid extents, hyperparameters, history, layer specs),
  then the float32 weight and bias arrays in layer order, generator first.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .channel import (ChannelRealization, PilotPattern, apply_channel,
                      gen_channel, insert_pilots, nmse)
from .errors import FormatError, ShapeError, TrainingError

_CGE_MAGIC = b"CGE1"
_CGE_VERSION = 1

CONDITION_CHANNELS = 4  # re/im of masked rx grid + re/im of pilot mask
GAIN_CHANNELS = 2


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    lambda_l1: float = 100.0
    val_fraction: float = 0.1


@dataclass
class TrainHistory:
    d_loss: list = field(default_factory=list)  # per epoch
    g_loss: list = field(default_factory=list)
    val_nmse: list = field(default_factory=list)


@dataclass
class CganModel:
    generator: nn.Sequential
    discriminator: nn.Sequential
    rows: int
    cols: int
    hyper: TrainConfig
    history: TrainHistory


def build_generator(rows: int, cols: int, seed: int) -> list[nn.LayerParams]:
    """Three strided conv blocks down, two deconv blocks up, deconv output."""
    if rows % 8 or cols % 8:
        raise ValueError(f"generator needs extents divisible by 8, got "
                         f"{rows}x{cols}")
    rng = np.random.default_rng(seed)
    slope = 0.2
    return [
        nn.conv_layer(4, 32, 4, 2, 1, "leaky_relu", slope, rng=rng),
        nn.conv_layer(32, 64, 4, 2, 1, "leaky_relu", slope, rng=rng),
        nn.conv_layer(64, 128, 4, 2, 1, "leaky_relu", slope, rng=rng),
        nn.deconv_layer(128, 64, 4, 2, 1, "leaky_relu", slope, rng=rng),
        nn.deconv_layer(64, 32, 4, 2, 1, "leaky_relu", slope, rng=rng),
        nn.deconv_layer(32, GAIN_CHANNELS, 4, 2, 1, "linear", rng=rng),
    ]


def build_discriminator(rows: int, cols: int, seed: int) -> list[nn.LayerParams]:
    """Four conv layers over (condition, candidate gains); spatial mean head."""
    if rows % 16 or cols % 16:
        raise ValueError(f"discriminator needs extents divisible by 16, got "
                         f"{rows}x{cols}")
    rng = np.random.default_rng(seed)
    return [
        nn.conv_layer(CONDITION_CHANNELS + GAIN_CHANNELS, 32, 4, 2, 1, "relu",
                      rng=rng),
        nn.conv_layer(32, 64, 4, 2, 1, "relu", rng=rng),
        nn.conv_layer(64, 128, 4, 2, 1, "relu", rng=rng),
        nn.conv_layer(128, 1, 4, 2, 1, "linear", rng=rng),
    ]


def make_condition(y: np.ndarray, pattern: PilotPattern) -> np.ndarray:
    """Stack [re/im of y at pilot cells, re/im of pilot symbols] as planes."""
    y = np.asarray(y)
    if y.shape != (pattern.rows, pattern.cols):
        raise ShapeError(f"make_condition: grid {y.shape} vs pattern "
                         f"{pattern.rows}x{pattern.cols}")
    mask = pattern.mask()
    masked = np.where(mask, y, 0.0).astype(np.complex64)
    pilots = np.zeros((pattern.rows, pattern.cols), np.complex64)
    pilots[np.ix_(pattern.pilot_rows, pattern.pilot_cols)] = pattern.symbols
    cond = np.empty((CONDITION_CHANNELS, pattern.rows, pattern.cols), np.float32)
    cond[0] = masked.real
    cond[1] = masked.imag
    cond[2] = pilots.real
    cond[3] = pilots.imag
    return cond


def gains_to_planes(gains: np.ndarray) -> np.ndarray:
    gains = np.asarray(gains)
    out = np.empty((GAIN_CHANNELS,) + gains.shape, np.float32)
    out[0] = gains.real
    out[1] = gains.imag
    return out


def planes_to_gains(planes: np.ndarray) -> np.ndarray:
    return (planes[0] + 1j * planes[1]).astype(np.complex64)


def estimate(model: CganModel, condition: np.ndarray) -> np.ndarray:
    """Generator forward pass; returns the estimated complex gain grid."""
    condition = np.asarray(condition, dtype=np.float32)
    if condition.shape != (CONDITION_CHANNELS, model.rows, model.cols):
        raise ShapeError(f"condition shape {condition.shape} does not match the "
                         f"model grid {model.rows}x{model.cols}")
    planes = model.generator.forward(condition[None])[0]
    return planes_to_gains(planes)


# ---------------------------------------------------------------------------
# training

def _disc_forward(disc: nn.Sequential, x: np.ndarray, record: bool):
    """Conv chain, then mean over spatial cells and sigmoid -> (N,) scores."""
    z = disc.forward(x, record=record)
    s = z.mean(axis=(1, 2, 3))
    return nn.activate("sigmoid", s), z.shape


def _disc_backward(disc: nn.Sequential, p: np.ndarray, dp: np.ndarray, z_shape):
    ds = dp * p * (1.0 - p)
    cells = z_shape[1] * z_shape[2] * z_shape[3]
    dz = np.broadcast_to((ds / cells)[:, None, None, None], z_shape)
    return disc.backward(np.ascontiguousarray(dz, dtype=np.float32))


def _stack_batch(dataset, indices):
    conds = np.stack([dataset[i][0] for i in indices])
    gains = np.stack([gains_to_planes(dataset[i][1]) for i in indices])
    return conds, gains


def _validation_nmse(gen: nn.Sequential, dataset, indices, batch_size: int) -> float:
    scores = []
    for start in range(0, len(indices), batch_size):
        chunk = indices[start:start + batch_size]
        conds, gains = _stack_batch(dataset, chunk)
        est = gen.forward(conds)
        for est_planes, truth_planes in zip(est, gains):
            scores.append(nmse(planes_to_gains(est_planes),
                               planes_to_gains(truth_planes)))
    return float(np.mean(scores))


def train_cgan(dataset, hyper: TrainConfig | None = None, seed: int = 0) -> CganModel:
    """Adversarial training on (condition, true gains) pairs.

    The dataset is split 90/10 train/validation by the seed; losses and
    validation NMSE are recorded per epoch. Deterministic: the same seed and
    dataset give bit-identical weights.
    """
    hyper = hyper or TrainConfig()
    if len(dataset) < 64:
        raise ValueError(f"training needs at least 64 pairs, got {len(dataset)}")
    rows, cols = dataset[0][1].shape
    rng = np.random.default_rng(seed)
    gen = nn.Sequential(build_generator(rows, cols, int(rng.integers(2 ** 63))))
    disc = nn.Sequential(build_discriminator(rows, cols, int(rng.integers(2 ** 63))))
    g_state = nn.AdamState.for_params(gen.parameters(), hyper.lr, hyper.beta1,
                                      hyper.beta2)
    d_state = nn.AdamState.for_params(disc.parameters(), hyper.lr, hyper.beta1,
                                      hyper.beta2)

    perm = rng.permutation(len(dataset))
    n_val = max(1, int(round(len(dataset) * hyper.val_fraction)))
    val_idx = perm[:n_val]
    train_idx = perm[n_val:]

    history = TrainHistory()
    lam = np.float32(hyper.lambda_l1)
    for epoch in range(hyper.epochs):
        order = rng.permutation(train_idx)
        d_losses = []
        g_losses = []
        for start in range(0, len(order), hyper.batch_size):
            batch = order[start:start + hyper.batch_size]
            conds, gains = _stack_batch(dataset, batch)
            n = conds.shape[0]
            ones = np.ones(n, np.float32)
            zeros = np.zeros(n, np.float32)

            # discriminator: real pairs up, generated pairs down
            fake = gen.forward(conds, record=True)
            p_real, z_shape = _disc_forward(disc, np.concatenate([conds, gains], 1),
                                            record=True)
            loss_real = nn.bce_loss(p_real, ones)
            _, grads_real = _disc_backward(disc, p_real, nn.bce_grad(p_real, ones),
                                           z_shape)
            p_fake, z_shape = _disc_forward(disc, np.concatenate([conds, fake], 1),
                                            record=True)
            loss_fake = nn.bce_loss(p_fake, zeros)
            _, grads_fake = _disc_backward(disc, p_fake, nn.bce_grad(p_fake, zeros),
                                           z_shape)
            d_loss = loss_real + loss_fake
            nn.adam_step(disc.parameters(),
                         [a + b for a, b in zip(grads_real, grads_fake)], d_state)

            # generator: fool the updated discriminator, stay close in L1
            p_adv, z_shape = _disc_forward(disc, np.concatenate([conds, fake], 1),
                                           record=True)
            adv_loss = nn.bce_loss(p_adv, ones)
            dx, _ = _disc_backward(disc, p_adv, nn.bce_grad(p_adv, ones), z_shape)
            l1 = nn.l1_loss(fake, gains)
            g_loss = adv_loss + float(lam) * l1
            dfake = dx[:, CONDITION_CHANNELS:] + lam * nn.l1_grad(fake, gains)
            _, g_grads = gen.backward(dfake)
            nn.adam_step(gen.parameters(), g_grads, g_state)

            if not (np.isfinite(d_loss) and np.isfinite(g_loss)):
                raise TrainingError(f"non-finite loss at epoch {epoch}, step "
                                    f"{start // hyper.batch_size}: d={d_loss}, "
                                    f"g={g_loss}")
            d_losses.append(d_loss)
            g_losses.append(g_loss)
        history.d_loss.append(float(np.mean(d_losses)))
        history.g_loss.append(float(np.mean(g_losses)))
        history.val_nmse.append(_validation_nmse(gen, dataset, val_idx,
                                                 hyper.batch_size))
    return CganModel(gen, disc, rows, cols, hyper, history)


def untrained_model(rows: int, cols: int, seed: int = 0,
                    hyper: TrainConfig | None = None) -> CganModel:
    """Freshly initialized networks, e.g. as the learnability baseline."""
    rng = np.random.default_rng(seed)
    gen = nn.Sequential(build_generator(rows, cols, int(rng.integers(2 ** 63))))
    disc = nn.Sequential(build_discriminator(rows, cols, int(rng.integers(2 ** 63))))
    return CganModel(gen, disc, rows, cols, hyper or TrainConfig(), TrainHistory())


def evaluate_nmse(model: CganModel, pairs) -> float:
    """Mean NMSE of the generator over (condition, true gains) pairs."""
    scores = [nmse(estimate(model, cond), gains) for cond, gains in pairs]
    return float(np.mean(scores))


def make_training_set(count: int, rows: int, cols: int, sigma_f: float,
                      sigma_t: float, pattern: PilotPattern, snr_db: float,
                      seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Synthesize (condition, gains) pairs from pilot-only frames."""
    rng = np.random.default_rng(seed)
    frame = insert_pilots(np.zeros((rows, cols), np.complex64), pattern)
    pairs = []
    for _ in range(count):
        chan_seed = int(rng.integers(2 ** 63))
        noise_seed = int(rng.integers(2 ** 63))
        h = gen_channel(chan_seed, rows, cols, sigma_f, sigma_t)
        y = apply_channel(frame, h, snr_db, noise_seed)
        pairs.append((make_condition(y, pattern), h.gains))
    return pairs


def pairs_from_realizations(realizations: list[ChannelRealization],
                            pattern: PilotPattern, snr_db: float,
                            noise_seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Build (condition, gains) pairs from stored channel realizations."""
    rng = np.random.default_rng(noise_seed)
    frame = insert_pilots(np.zeros((pattern.rows, pattern.cols), np.complex64),
                          pattern)
    pairs = []
    for h in realizations:
        y = apply_channel(frame, h, snr_db, int(rng.integers(2 ** 63)))
        pairs.append((make_condition(y, pattern), h.gains))
    return pairs


# ---------------------------------------------------------------------------
# persistence

def _layer_spec(p: nn.LayerParams) -> dict:
    return {"kind": p.kind, "stride": p.stride, "padding": p.padding,
            "activation": p.activation, "slope": p.slope,
            "w_shape": list(p.weights.shape), "b_shape": list(p.bias.shape)}


def save_model(model: CganModel, path) -> None:
    header = json.dumps(
        {"rows": model.rows, "cols": model.cols, "hyper": asdict(model.hyper),
         "history": asdict(model.history),
         "generator": [_layer_spec(p) for p in model.generator.layers],
         "discriminator": [_layer_spec(p) for p in model.discriminator.layers]},
        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CGE_MAGIC)
        fh.write(bytes([_CGE_VERSION]))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for p in model.generator.layers + model.discriminator.layers:
            fh.write(np.ascontiguousarray(p.weights, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(p.bias, dtype="<f4").tobytes())


def _read_layers(specs, body: bytes, offset: int):
    layers = []
    for spec in specs:
        w_shape = tuple(spec["w_shape"])
        b_shape = tuple(spec["b_shape"])
        w_count = int(np.prod(w_shape))
        b_count = int(np.prod(b_shape))
        need = (w_count + b_count) * 4
        if offset + need > len(body):
            raise FormatError("model file is truncated inside the weight data")
        w = np.frombuffer(body[offset:offset + w_count * 4], dtype="<f4")
        offset += w_count * 4
        b = np.frombuffer(body[offset:offset + b_count * 4], dtype="<f4")
        offset += b_count * 4
        layers.append(nn.LayerParams(spec["kind"], w.reshape(w_shape).copy(),
                                     b.reshape(b_shape).copy(), spec["stride"],
                                     spec["padding"], spec["activation"],
                                     spec["slope"]))
    return layers, offset


def load_model(path) -> CganModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 9 or blob[:4] != _CGE_MAGIC:
        raise FormatError(f"{path}: not a CGE model file (bad magic)")
    if blob[4] != _CGE_VERSION:
        raise FormatError(f"{path}: unsupported model version {blob[4]} "
                          f"(expected {_CGE_VERSION})")
    (hlen,) = struct.unpack("<I", blob[5:9])
    if len(blob) < 9 + hlen:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(blob[9:9 + hlen].decode("utf-8"))
        rows, cols = int(header["rows"]), int(header["cols"])
        hyper = TrainConfig(**header["hyper"])
        history = TrainHistory(**header["history"])
        gen_specs = header["generator"]
        disc_specs = header["discriminator"]
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed model header ({exc})") from exc
    body = blob[9 + hlen:]
    gen_layers, offset = _read_layers(gen_specs, body, 0)
    disc_layers, offset = _read_layers(disc_specs, body, offset)
    if offset != len(body):
        raise FormatError(f"{path}: {len(body) - offset} unexpected trailing bytes")
    return CganModel(nn.Sequential(gen_layers), nn.Sequential(disc_layers),
                     rows, cols, hyper, history)
