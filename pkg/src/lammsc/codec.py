"""Deterministic transmission chain: byte tokens -> QPSK frames and back.

Text is serialized as byte tokens 0..255 plus a terminator token 256. Each
token is sent as 10 bits (the 9-bit token value, MSB first, left-padded to
an even bit count), i.e. 5 Gray-mapped QPSK symbols per token. Symbols fill
the non-pilot cells of a grid row-major, spilling into further frames as
needed; unused data cells stay at zero power and are excluded from symbol
statistics. The chain is the pluggable stand-in for a learned codec: any
replacement must map text to unit-power data symbols and back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import PilotPattern, insert_pilots
from .errors import ShapeError

TERMINATOR = 256
BITS_PER_TOKEN = 10
SYMBOLS_PER_TOKEN = BITS_PER_TOKEN // 2

_SQRT2 = math.sqrt(2.0)
_BIT_SHIFTS = np.arange(BITS_PER_TOKEN - 1, -1, -1, dtype=np.uint16)
_BIT_WEIGHTS = (1 << _BIT_SHIFTS.astype(np.int64))


@dataclass
class TokenStream:
    """Byte tokens plus exactly one trailing terminator."""

    tokens: np.ndarray  # uint16, values 0..256
    origin_length: int
    missing_terminator: bool = False
    dropped_partial: bool = False

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.uint16)
        terms = np.flatnonzero(self.tokens == TERMINATOR)
        if terms.size != 1 or terms[0] != self.tokens.size - 1:
            raise ValueError("token stream must contain exactly one terminator, "
                             "at the end")

    def payload(self) -> np.ndarray:
        return self.tokens[:-1]


def tokenize(text: str) -> TokenStream:
    """Serialize UTF-8 text to byte tokens; invertible via detokenize."""
    data = text.encode("utf-8")
    tokens = np.empty(len(data) + 1, dtype=np.uint16)
    tokens[:len(data)] = np.frombuffer(data, dtype=np.uint8)
    tokens[-1] = TERMINATOR
    return TokenStream(tokens, origin_length=len(data))


def detokenize(ts: TokenStream) -> str:
    """Decode the byte payload; corrupted sequences yield replacement chars."""
    return bytes(ts.payload().astype(np.uint8)).decode("utf-8", errors="replace")


def modulate(ts: TokenStream, repetition: int = 1) -> np.ndarray:
    """Map tokens to unit-modulus QPSK symbols, each repeated ``repetition`` times."""
    if repetition < 1:
        raise ValueError(f"repetition must be >= 1, got {repetition}")
    bits = ((ts.tokens[:, None] >> _BIT_SHIFTS) & 1).reshape(-1, 2).astype(np.float32)
    symbols = ((1.0 - 2.0 * bits[:, 0]) + 1j * (1.0 - 2.0 * bits[:, 1])) / _SQRT2
    if repetition > 1:
        symbols = np.repeat(symbols, repetition)
    return symbols.astype(np.complex64)


def demodulate(symbols: np.ndarray, repetition: int = 1) -> TokenStream:
    """Average repetition groups, hard-decide bit pairs, reassemble tokens.

    The stream is truncated at the first decoded terminator. Decoded 10-bit
    values outside the token alphabet keep their low byte, so noise never
    silently changes the stream length. A trailing partial token is dropped
    (flagged); a missing terminator is appended (flagged).
    """
    if repetition < 1:
        raise ValueError(f"repetition must be >= 1, got {repetition}")
    symbols = np.asarray(symbols).ravel()
    per_token = SYMBOLS_PER_TOKEN * repetition
    usable = (symbols.size // per_token) * per_token
    dropped = usable != symbols.size
    symbols = symbols[:usable]
    if repetition > 1:
        symbols = symbols.reshape(-1, repetition).mean(axis=1)
    bits = np.empty((symbols.size, 2), dtype=np.int64)
    bits[:, 0] = symbols.real < 0.0
    bits[:, 1] = symbols.imag < 0.0
    values = bits.reshape(-1, BITS_PER_TOKEN) @ _BIT_WEIGHTS
    term = np.flatnonzero(values == TERMINATOR)
    if term.size:
        values = values[:term[0] + 1]
        missing = False
    else:
        values = np.append(values, TERMINATOR)
        missing = True
    tokens = np.where(values == TERMINATOR, TERMINATOR, values & 0xFF).astype(np.uint16)
    return TokenStream(tokens, origin_length=int(tokens.size - 1),
                       missing_terminator=missing, dropped_partial=dropped)


@dataclass
class Frame:
    """One grid of symbols: pilots at the lattice, data row-major elsewhere."""

    grid: np.ndarray  # complex64 (rows, cols)
    data_cells: np.ndarray  # flat row-major indices of non-pilot cells
    occupancy: int  # leading data cells that carry symbols; the rest is padding

    def extract(self, received: np.ndarray) -> np.ndarray:
        """Pull this frame's occupied data symbols out of a same-shaped grid."""
        if received.shape != self.grid.shape:
            raise ShapeError(f"frame is {self.grid.shape}, received grid is "
                             f"{received.shape}")
        return received.ravel()[self.data_cells[:self.occupancy]]


def map_to_grid(symbols: np.ndarray, pattern: PilotPattern) -> list[Frame]:
    """Pack symbols into as many frames as needed; pad the last with zeros."""
    symbols = np.asarray(symbols, dtype=np.complex64).ravel()
    data_cells = pattern.data_indices()
    per_frame = data_cells.size
    n_frames = max(1, -(-symbols.size // per_frame))
    frames = []
    for i in range(n_frames):
        chunk = symbols[i * per_frame:(i + 1) * per_frame]
        flat = np.zeros(pattern.rows * pattern.cols, dtype=np.complex64)
        flat[data_cells[:chunk.size]] = chunk
        grid = insert_pilots(flat.reshape(pattern.rows, pattern.cols), pattern)
        frames.append(Frame(grid, data_cells, occupancy=int(chunk.size)))
    return frames


def equalize(y: np.ndarray, h_est: np.ndarray, noise_var: float = 0.0,
             mode: str = "zf") -> np.ndarray:
    """Divide out estimated gains: zero-forcing or MMSE weighting."""
    y = np.asarray(y)
    h_est = np.asarray(h_est)
    if y.shape != h_est.shape:
        raise ShapeError(f"equalize: received {y.shape} vs estimate {h_est.shape}")
    if noise_var < 0:
        raise ValueError("noise_var must be non-negative")
    if mode not in ("zf", "mmse"):
        raise ValueError(f"unknown equalizer mode {mode!r}")
    h = h_est.astype(np.complex128)
    reg = 1e-9 if mode == "zf" else max(noise_var, 1e-9)
    out = y.astype(np.complex128) * np.conj(h) / (np.abs(h) ** 2 + reg)
    return out.astype(np.complex64)


def hard_decide(symbols: np.ndarray) -> np.ndarray:
    """Nearest QPSK constellation point by quadrant."""
    symbols = np.asarray(symbols)
    re = np.where(symbols.real >= 0.0, 1.0, -1.0)
    im = np.where(symbols.imag >= 0.0, 1.0, -1.0)
    return ((re + 1j * im) / _SQRT2).astype(np.complex64)


def ser(sent: np.ndarray, decided: np.ndarray) -> float:
    """Fraction of QPSK decisions that differ from the sent constellation points."""
    sent = np.asarray(sent).ravel()
    decided = np.asarray(decided).ravel()
    if sent.size != decided.size:
        raise ShapeError(f"ser: {sent.size} sent vs {decided.size} decided symbols")
    if sent.size == 0:
        return 0.0
    errors = hard_decide(sent) != hard_decide(decided)
    return float(np.count_nonzero(errors)) / sent.size


def rail_error_rate(sent: np.ndarray, decided: np.ndarray) -> float:
    """Per-rail (per-bit) error rate of the QPSK decisions."""
    sent = np.asarray(sent).ravel()
    decided = np.asarray(decided).ravel()
    if sent.size != decided.size:
        raise ShapeError(f"rail_error_rate: {sent.size} vs {decided.size} symbols")
    re_err = np.count_nonzero((sent.real >= 0) != (decided.real >= 0))
    im_err = np.count_nonzero((sent.imag >= 0) != (decided.imag >= 0))
    return (re_err + im_err) / (2.0 * sent.size)
