"""Correlated Rayleigh fading grids, pilots, and the least-squares baseline.

A "grid" is a 2-D complex64 array (subcarrier rows x time-symbol columns).
Fading is flat per cell: the received grid is y = H * x + n. Spatial
correlation comes from circularly smoothing an i.i.d. CN(0,1) draw with a
separable Gaussian kernel and re-normalizing to unit mean power.

Dataset file format (magic ``LMCH``, version 1):
  4 bytes magic, 1 byte version, little-endian uint32 header length,
  UTF-8 JSON header {rows, cols, sigma_f, sigma_t, count, seeds},
  then ``count`` grids as little-endian interleaved float32 re/im pairs.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ShapeError

NO_NOISE = math.inf  # snr_db sentinel that disables additive noise

_LMCH_MAGIC = b"LMCH"
_LMCH_VERSION = 1

_QPSK = (np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0)).astype(np.complex64)


@dataclass
class ChannelRealization:
    """True channel gains plus the parameters that generated them."""

    gains: np.ndarray  # complex64 (rows, cols)
    sigma_f: float
    sigma_t: float
    seed: int

    @property
    def rows(self) -> int:
        return self.gains.shape[0]

    @property
    def cols(self) -> int:
        return self.gains.shape[1]


@dataclass(frozen=True)
class PilotPattern:
    """Regular comb lattice of known unit-power QPSK pilots."""

    rows: int
    cols: int
    d_f: int
    d_t: int
    seed: int
    pilot_rows: np.ndarray
    pilot_cols: np.ndarray
    symbols: np.ndarray  # complex64 (len(pilot_rows), len(pilot_cols))

    def mask(self) -> np.ndarray:
        m = np.zeros((self.rows, self.cols), dtype=bool)
        m[np.ix_(self.pilot_rows, self.pilot_cols)] = True
        return m

    def data_indices(self) -> np.ndarray:
        """Flat row-major indices of the non-pilot (data) cells."""
        return np.flatnonzero(~self.mask().ravel())

    def positions(self) -> list[tuple[int, int]]:
        return [(int(r), int(c)) for r in self.pilot_rows for c in self.pilot_cols]


def make_pilot_pattern(rows: int, cols: int, d_f: int = 4, d_t: int = 4,
                       seed: int = 97) -> PilotPattern:
    if d_f < 1 or d_t < 1:
        raise ValueError(f"pilot spacings must be >= 1, got ({d_f}, {d_t})")
    if d_f > rows or d_t > cols:
        raise ValueError(f"pilot spacings ({d_f}, {d_t}) exceed grid {rows}x{cols}")
    pilot_rows = np.arange(0, rows, d_f)
    pilot_cols = np.arange(0, cols, d_t)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, 4, size=(pilot_rows.size, pilot_cols.size))
    return PilotPattern(rows, cols, d_f, d_t, seed, pilot_rows, pilot_cols,
                        _QPSK[idx])


def _gauss_taps(sigma: float) -> np.ndarray:
    """Normalized Gaussian kernel truncated at 3 sigma."""
    radius = int(math.ceil(3.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-0.5 * (t / sigma) ** 2)
    return taps / taps.sum()


def _circular_smooth(plane: np.ndarray, sigma: float, axis: int) -> np.ndarray:
    if sigma <= 0.0:
        return plane
    taps = _gauss_taps(sigma)
    radius = taps.size // 2
    out = np.zeros_like(plane)
    for off, w in zip(range(-radius, radius + 1), taps):
        out += w * np.roll(plane, off, axis=axis)
    return out


def gen_channel(seed: int, rows: int, cols: int, sigma_f: float = 0.0,
                sigma_t: float = 0.0) -> ChannelRealization:
    """Draw a correlated Rayleigh gain grid, normalized to unit mean power."""
    if rows < 4 or cols < 4:
        raise ValueError(f"channel grid must be at least 4x4, got {rows}x{cols}")
    if sigma_f < 0 or sigma_t < 0:
        raise ValueError("smoothing stds must be non-negative")
    rng = np.random.default_rng(seed)
    h = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols)))
    h /= np.sqrt(2.0)
    h = _circular_smooth(h, sigma_f, axis=0)
    h = _circular_smooth(h, sigma_t, axis=1)
    h *= np.sqrt(h.size / np.sum(np.abs(h) ** 2))
    return ChannelRealization(h.astype(np.complex64), float(sigma_f), float(sigma_t),
                              int(seed))


def apply_channel(x: np.ndarray, h, snr_db: float, noise_seed: int = 0) -> np.ndarray:
    """Per-cell fading plus complex Gaussian noise of power 10^(-snr_db/10)."""
    gains = h.gains if isinstance(h, ChannelRealization) else np.asarray(h)
    x = np.asarray(x)
    if x.shape != gains.shape:
        raise ShapeError(f"apply_channel: frame {x.shape} vs gains {gains.shape}")
    y = x.astype(np.complex128) * gains.astype(np.complex128)
    if snr_db != NO_NOISE:
        nvar = 10.0 ** (-snr_db / 10.0)
        rng = np.random.default_rng(noise_seed)
        noise = rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
        y += np.sqrt(nvar / 2.0) * noise
    return y.astype(np.complex64)


def insert_pilots(x: np.ndarray, pattern: PilotPattern) -> np.ndarray:
    """Overwrite the pilot lattice with the known pilot symbols."""
    if x.shape[0] < pattern.rows or x.shape[1] < pattern.cols:
        raise ShapeError(f"grid {x.shape} does not cover pattern "
                         f"{pattern.rows}x{pattern.cols}")
    y = np.array(x, dtype=np.complex64, copy=True)
    y[np.ix_(pattern.pilot_rows, pattern.pilot_cols)] = pattern.symbols
    return y


def _axis_weights(n: int, knots: np.ndarray):
    """Per-target lower knot index and linear weight, clamped at the edges."""
    targets = np.arange(n, dtype=np.float64)
    if knots.size == 1:
        return np.zeros(n, dtype=np.intp), np.zeros(n, dtype=np.float64)
    lo = np.clip(np.searchsorted(knots, targets, side="right") - 1, 0, knots.size - 2)
    left = knots[lo].astype(np.float64)
    right = knots[lo + 1].astype(np.float64)
    w = np.clip((targets - left) / (right - left), 0.0, 1.0)
    return lo, w


def ls_estimate(y: np.ndarray, pattern: PilotPattern) -> np.ndarray:
    """Least-squares pilot estimates, bilinearly interpolated to the full grid.

    Cells beyond the outermost pilot row/column take the nearest pilot value.
    """
    if pattern.pilot_rows.size == 0 or pattern.pilot_cols.size == 0:
        raise ValueError("pilot pattern is empty")
    y = np.asarray(y)
    if y.shape[0] < pattern.rows or y.shape[1] < pattern.cols:
        raise ShapeError(f"grid {y.shape} does not cover pattern "
                         f"{pattern.rows}x{pattern.cols}")
    at_pilots = (y[np.ix_(pattern.pilot_rows, pattern.pilot_cols)].astype(np.complex128)
                 / pattern.symbols.astype(np.complex128))
    r0, wr = _axis_weights(pattern.rows, pattern.pilot_rows)
    c0, wc = _axis_weights(pattern.cols, pattern.pilot_cols)
    r1 = np.minimum(r0 + 1, pattern.pilot_rows.size - 1)
    c1 = np.minimum(c0 + 1, pattern.pilot_cols.size - 1)
    wr = wr[:, None]
    wc = wc[None, :]
    est = ((1 - wr) * (1 - wc) * at_pilots[np.ix_(r0, c0)]
           + (1 - wr) * wc * at_pilots[np.ix_(r0, c1)]
           + wr * (1 - wc) * at_pilots[np.ix_(r1, c0)]
           + wr * wc * at_pilots[np.ix_(r1, c1)])
    return est.astype(np.complex64)


def nmse(est: np.ndarray, truth: np.ndarray) -> float:
    """Normalized mean squared error sum|est-truth|^2 / sum|truth|^2."""
    est = np.asarray(est)
    truth = np.asarray(truth)
    if est.shape != truth.shape:
        raise ShapeError(f"nmse: shapes {est.shape} and {truth.shape} differ")
    denom = float(np.sum(np.abs(truth.astype(np.complex128)) ** 2))
    if denom == 0.0:
        raise ValueError("nmse undefined for all-zero truth")
    num = float(np.sum(np.abs(est.astype(np.complex128) - truth.astype(np.complex128)) ** 2))
    return num / denom


# ---------------------------------------------------------------------------
# dataset persistence

def save_channel_dataset(path, realizations: list[ChannelRealization]) -> None:
    if not realizations:
        raise ValueError("cannot save an empty channel dataset")
    first = realizations[0]
    for r in realizations:
        if (r.rows, r.cols, r.sigma_f, r.sigma_t) != (first.rows, first.cols,
                                                      first.sigma_f, first.sigma_t):
            raise ValueError("all realizations in a dataset must share parameters")
    header = json.dumps(
        {"rows": first.rows, "cols": first.cols, "sigma_f": first.sigma_f,
         "sigma_t": first.sigma_t, "count": len(realizations),
         "seeds": [r.seed for r in realizations]},
        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_LMCH_MAGIC)
        fh.write(bytes([_LMCH_VERSION]))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for r in realizations:
            fh.write(np.ascontiguousarray(r.gains, dtype="<c8").tobytes())


def load_channel_dataset(path) -> list[ChannelRealization]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 9 or blob[:4] != _LMCH_MAGIC:
        raise FormatError(f"{path}: not a channel dataset (bad magic)")
    version = blob[4]
    if version != _LMCH_VERSION:
        raise FormatError(f"{path}: unsupported dataset version {version} "
                          f"(expected {_LMCH_VERSION})")
    (hlen,) = struct.unpack("<I", blob[5:9])
    if len(blob) < 9 + hlen:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(blob[9:9 + hlen].decode("utf-8"))
        rows, cols = int(header["rows"]), int(header["cols"])
        count = int(header["count"])
        seeds = list(header["seeds"])
        sigma_f, sigma_t = float(header["sigma_f"]), float(header["sigma_t"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed header ({exc})") from exc
    if len(seeds) != count:
        raise FormatError(f"{path}: header lists {len(seeds)} seeds for {count} grids")
    body = blob[9 + hlen:]
    grid_bytes = rows * cols * 8
    if len(body) != count * grid_bytes:
        raise FormatError(f"{path}: expected {count * grid_bytes} data bytes, "
                          f"found {len(body)}")
    out = []
    for i in range(count):
        flat = np.frombuffer(body[i * grid_bytes:(i + 1) * grid_bytes], dtype="<c8")
        out.append(ChannelRealization(flat.reshape(rows, cols).astype(np.complex64),
                                      sigma_f, sigma_t, int(seeds[i])))
    return out
