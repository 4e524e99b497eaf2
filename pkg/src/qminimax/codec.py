"""Blockwise quantized James-Stein estimator.

The encoder sees the observed sequence, quantizes each block norm on a
uniform radius grid, splits the bit budget across blocks from the
quantized norms alone, and codes each block direction with a random
spherical codebook carved out of a shared Gaussian base code. The decoder
only needs the radius indices to rebuild the same split, so the direction
index widths are never transmitted.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .allocation import Allocation, allocate_bits
from .blocks import BlockSystem, build_blocks
from .rng import gaussian_rows

MAGIC = b"QMSE"
VERSION = 1
_HEADER = struct.Struct(">dQQdd")  # epsilon, budget, seed, m0, c0
_SCAN_CHUNK = 1 << 15
# T_k * b_k that land within this of an integer are treated as that integer
_WIDTH_SNAP = 1e-9


class CodecError(Exception):
    pass


class EnumerationCapError(CodecError):
    def __init__(self, block: int, width: int, cap: int):
        super().__init__(
            f"block {block} needs a 2^{width}-row codebook, above the cap 2^{cap}; "
            "lower the budget or raise max_codebook_log2"
        )
        self.block = block
        self.width = width


class IncompatibleHeaderError(CodecError):
    pass


class FramingError(CodecError):
    pass


class VacuousBoundError(ValueError):
    pass


class BlockingRegimeWarning(UserWarning):
    """Budget below log^3(1/eps): the block sizes are too coarse for the scheme."""


@dataclass(frozen=True)
class CodecConfig:
    epsilon: float
    budget: int
    seed: int = 0
    m0: float = 1.0
    c0: float = 1.0
    max_codebook_log2: int = 26

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.budget < 0 or int(self.budget) != self.budget:
            raise ValueError("budget must be a nonnegative integer number of bits")
        if not (self.m0 > 0 and self.c0 > 0):
            raise ValueError("m0 and c0 must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    @property
    def blocks(self) -> BlockSystem:
        return build_blocks(self.epsilon)

    def header(self) -> tuple:
        return (float(self.epsilon), int(self.budget), int(self.seed), float(self.m0), float(self.c0))


@dataclass(frozen=True)
class RadiusCodebook:
    """Grid {sqrt(T eps^2) + i eps^2 : i = 0..size} for one block."""

    block: int
    base: float
    step: float
    size: int  # s_k; the grid has size + 1 points
    upper: float  # clamp ceiling sqrt(T eps^2) + c0 (j pi)^(-m0)

    @property
    def points(self) -> np.ndarray:
        return self.base + self.step * np.arange(self.size + 1)

    @property
    def index_bits(self) -> int:
        return max(0, math.ceil(math.log2(self.size + 1)))

    def value(self, index: int) -> float:
        return self.base + index * self.step

    def signal_energy(self, index: int) -> float:
        """Shat^2 - T eps^2 evaluated without cancellation (exactly 0 at index 0)."""
        return index * self.step * (2.0 * self.base + index * self.step)


def radius_codebook(k: int, blocks: BlockSystem, cfg: CodecConfig) -> RadiusCodebook:
    eps2 = cfg.epsilon**2
    T, j = blocks.sizes[k - 1], blocks.starts[k - 1]
    reach = cfg.c0 * (j * math.pi) ** (-cfg.m0)
    base = math.sqrt(T * eps2)
    return RadiusCodebook(k, base, eps2, math.ceil(reach / eps2), base + reach)


def clip_and_quantize_radius(y_block, k: int, blocks: BlockSystem, cfg: CodecConfig):
    """Return (S_k, i_k, Shat_k) for block ``k``.

    Exact midpoints between grid points go to the lower index.
    """
    book = radius_codebook(k, blocks, cfg)
    S = min(max(float(np.linalg.norm(y_block)), book.base), book.upper)
    i = math.ceil((S - book.base) / book.step - 0.5)
    i = min(max(i, 0), book.size)
    return S, i, book.value(i)


@dataclass(frozen=True)
class CodePlan:
    """Everything both ends derive from the radius indices."""

    books: tuple[RadiusCodebook, ...]
    radius_indices: tuple[int, ...]
    radii: np.ndarray
    weights: np.ndarray
    allocation: Allocation
    widths: tuple[int, ...]
    offsets: tuple[int, ...]

    @property
    def bits(self) -> np.ndarray:
        return self.allocation.bits

    @property
    def shrinkage(self) -> np.ndarray:
        """Per-block norm of the decoded block, ((Shat^2 - T eps^2)/Shat) sqrt(1 - 2^(-2b))."""
        energy = np.array([b.signal_energy(i) for b, i in zip(self.books, self.radius_indices)])
        return energy / self.radii * np.sqrt(1.0 - 2.0 ** (-2.0 * self.bits))


def make_plan(radius_indices, cfg: CodecConfig) -> CodePlan:
    blocks = cfg.blocks
    books = tuple(radius_codebook(k, blocks, cfg) for k in range(1, blocks.K + 1))
    if len(radius_indices) != blocks.K:
        raise FramingError(f"expected {blocks.K} radius indices, got {len(radius_indices)}")
    for book, i in zip(books, radius_indices):
        if not 0 <= i <= book.size:
            raise FramingError(f"radius index {i} outside 0..{book.size} in block {book.block}")
    radii = np.array([b.value(i) for b, i in zip(books, radius_indices)])
    energy = np.array([b.signal_energy(i) for b, i in zip(books, radius_indices)])
    weights = energy**2 / radii**2
    alloc = allocate_bits(weights, blocks.sizes, cfg.budget)
    raw = np.asarray(blocks.sizes) * alloc.bits
    widths = tuple(max(0, math.ceil(x - _WIDTH_SNAP)) for x in raw)
    offsets = tuple(int(o) for o in np.cumsum([0] + [1 << w for w in widths[:-1]]))
    return CodePlan(books, tuple(int(i) for i in radius_indices), radii, weights, alloc, widths, offsets)


def base_code_row(seed: int, row: int, length: int) -> np.ndarray:
    """Row ``row`` of the shared base code, truncated to ``length`` entries."""
    return gaussian_rows(seed, row, 1, length)[0]


def select_direction(y_block, seed: int, offset: int, width: int) -> int:
    """Index within rows offset..offset+2^width-1 maximising <z/|z|, y>.

    Rows are scanned in chunks; ties keep the lowest index.
    """
    y = np.asarray(y_block, dtype=float)
    total = 1 << width
    best, best_score = 0, -np.inf
    for start in range(0, total, _SCAN_CHUNK):
        count = min(_SCAN_CHUNK, total - start)
        rows = gaussian_rows(seed, offset + start, count, y.size)
        scores = (rows @ y) / np.linalg.norm(rows, axis=1)
        i = int(np.argmax(scores))
        if scores[i] > best_score:
            best, best_score = start + i, float(scores[i])
    return best


@dataclass(frozen=True)
class QuantizedMessage:
    epsilon: float
    budget: int
    seed: int
    m0: float
    c0: float
    radius_indices: tuple[int, ...]
    direction_indices: tuple[int, ...]
    radius_widths: tuple[int, ...] = field(compare=False)
    direction_widths: tuple[int, ...] = field(compare=False)

    @property
    def payload_bits(self) -> int:
        return sum(self.radius_widths) + sum(self.direction_widths)

    @property
    def direction_bits(self) -> int:
        return sum(self.direction_widths)

    def config(self, max_codebook_log2: int = 26) -> CodecConfig:
        return CodecConfig(self.epsilon, self.budget, self.seed, self.m0, self.c0, max_codebook_log2)

    def to_bytes(self) -> bytes:
        acc, nbits = 0, 0
        fields = zip(
            self.radius_indices + self.direction_indices,
            self.radius_widths + self.direction_widths,
        )
        for value, width in fields:
            if value >> width:
                raise CodecError(f"index {value} does not fit in {width} bits")
            acc = (acc << width) | value
            nbits += width
        pad = -nbits % 8
        payload = (acc << pad).to_bytes((nbits + pad) // 8, "big")
        header = _HEADER.pack(self.epsilon, self.budget, self.seed, self.m0, self.c0)
        return MAGIC + bytes([VERSION]) + header + payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "QuantizedMessage":
        prefix = len(MAGIC) + 1
        if len(data) < prefix + _HEADER.size:
            raise FramingError("stream shorter than its header")
        if data[: len(MAGIC)] != MAGIC:
            raise FramingError("bad magic prefix")
        if data[len(MAGIC)] != VERSION:
            raise FramingError(f"unsupported version {data[len(MAGIC)]}")
        eps, budget, seed, m0, c0 = _HEADER.unpack_from(data, prefix)
        try:
            cfg = CodecConfig(eps, budget, seed, m0, c0)
        except ValueError as exc:
            raise FramingError(f"corrupt header: {exc}") from exc
        payload = data[prefix + _HEADER.size :]
        reader = _BitReader(payload)

        blocks = cfg.blocks
        books = [radius_codebook(k, blocks, cfg) for k in range(1, blocks.K + 1)]
        rwidths = tuple(b.index_bits for b in books)
        radius = tuple(reader.read(w) for w in rwidths)
        plan = make_plan(radius, cfg)
        direction = tuple(reader.read(w) for w in plan.widths)
        reader.finish()
        return cls(eps, budget, seed, m0, c0, radius, direction, rwidths, plan.widths)


class _BitReader:
    def __init__(self, data: bytes):
        self.value = int.from_bytes(data, "big")
        self.total = 8 * len(data)
        self.pos = 0

    def read(self, width: int) -> int:
        if self.pos + width > self.total:
            raise FramingError("payload truncated")
        self.pos += width
        return (self.value >> (self.total - self.pos)) & ((1 << width) - 1)

    def finish(self):
        rest = self.total - self.pos
        if rest >= 8:
            raise FramingError(f"{rest // 8} unexpected trailing bytes")
        if self.value & ((1 << rest) - 1):
            raise FramingError("nonzero padding bits")


@dataclass(frozen=True)
class EncodingTrace:
    norms: np.ndarray  # clamped S_k
    plan: CodePlan
    message: QuantizedMessage


def _as_array(Y) -> np.ndarray:
    return np.asarray(getattr(Y, "values", Y), dtype=float)


def warn_if_coarse(cfg: CodecConfig):
    threshold = math.log(1.0 / cfg.epsilon) ** 3
    if cfg.budget < threshold:
        warnings.warn(
            f"budget {cfg.budget} < log^3(1/eps) = {threshold:.1f}; the first block "
            "is too long for this budget and the risk guarantees do not apply",
            BlockingRegimeWarning,
            stacklevel=3,
        )


def encode_trace(Y, cfg: CodecConfig) -> EncodingTrace:
    y = _as_array(Y)
    blocks = cfg.blocks
    if y.size < blocks.N:
        raise ValueError(f"observation has {y.size} coordinates, need {blocks.N}")
    norms, radius = [], []
    for k, sl in enumerate(blocks.slices(), start=1):
        S, i, _ = clip_and_quantize_radius(y[sl], k, blocks, cfg)
        norms.append(S)
        radius.append(i)
    plan = make_plan(radius, cfg)
    for k, w in enumerate(plan.widths, start=1):
        if w > cfg.max_codebook_log2:
            raise EnumerationCapError(k, w, cfg.max_codebook_log2)

    direction = []
    for sl, w, off in zip(blocks.slices(), plan.widths, plan.offsets):
        direction.append(0 if w == 0 else select_direction(y[sl], cfg.seed, off, w))
    msg = QuantizedMessage(
        *cfg.header(),
        tuple(radius),
        tuple(direction),
        tuple(b.index_bits for b in plan.books),
        plan.widths,
    )
    return EncodingTrace(np.array(norms), plan, msg)


def encode(Y, cfg: CodecConfig) -> QuantizedMessage:
    """Quantize an observed sequence into a self-describing message."""
    warn_if_coarse(cfg)
    return encode_trace(Y, cfg).message


@dataclass(frozen=True)
class QuantizedEstimate:
    coefficients: np.ndarray
    plan: CodePlan


def decode(msg: QuantizedMessage, cfg: CodecConfig | None = None) -> QuantizedEstimate:
    """Rebuild the coefficient estimate from a message.

    ``cfg`` defaults to the configuration echoed in the header; when given it
    must agree with the header field for field.
    """
    if cfg is None:
        cfg = msg.config()
    elif cfg.header() != (msg.epsilon, msg.budget, msg.seed, msg.m0, msg.c0):
        raise IncompatibleHeaderError(
            f"message header {(msg.epsilon, msg.budget, msg.seed, msg.m0, msg.c0)} "
            f"does not match decoder configuration {cfg.header()}"
        )
    plan = make_plan(msg.radius_indices, cfg)
    if len(msg.direction_indices) != len(plan.widths):
        raise FramingError("direction index count does not match the block count")
    blocks = cfg.blocks
    theta = np.zeros(blocks.N)
    for sl, w, off, idx, norm in zip(
        blocks.slices(), plan.widths, plan.offsets, msg.direction_indices, plan.shrinkage
    ):
        if idx >> w:
            raise FramingError(f"direction index {idx} does not fit in {w} bits")
        if norm == 0.0:
            continue
        z = base_code_row(cfg.seed, off + idx, sl.stop - sl.start)
        theta[sl] = norm * z / np.linalg.norm(z)
    return QuantizedEstimate(theta, plan)


def quantized_estimate(Y, cfg: CodecConfig) -> np.ndarray:
    """encode followed by decode, without the serialization round trip."""
    return decode(encode_trace(Y, cfg).message, cfg).coefficients


def james_stein_block(y_block, epsilon: float) -> np.ndarray:
    """Positive-part James-Stein shrinkage ((|y|^2 - T eps^2)/|y|^2)_+ y."""
    y = np.asarray(y_block, dtype=float)
    if y.size == 0:
        raise ValueError("empty block")
    energy = float(y @ y)
    if energy == 0.0:
        return np.zeros_like(y)
    factor = max(0.0, 1.0 - y.size * epsilon**2 / energy)
    return factor * y


def blockwise_james_stein(Y, epsilon: float) -> np.ndarray:
    """James-Stein on every weakly geometric block; zero beyond N."""
    y = _as_array(Y)
    blocks = build_blocks(epsilon)
    out = np.zeros(blocks.N)
    for sl in blocks.slices():
        out[sl] = james_stein_block(y[sl], epsilon)
    return out


def nu(t: float) -> float:
    denom = t - 6.0 * math.log(t) - 7.0
    if denom <= 0:
        raise VacuousBoundError(f"codeword distortion bound is vacuous for t={t}")
    return (6.0 * math.log(t) + 7.0) / denom


def distortion_bound(q: float, t: int) -> float:
    """Upper bound 2^(-2q)(1 + nu(t)) + 2 e^(-2t) on the expected codeword distortion."""
    if q < 0:
        raise ValueError("rate q must be nonnegative")
    return 2.0 ** (-2.0 * q) * (1.0 + nu(t)) + 2.0 * math.exp(-2.0 * t)


def codeword_distortion_samples(q: float, t: int, trials: int, seed: int, method: str = "order-statistic") -> np.ndarray:
    """Draws of |sqrt(1 - 2^(-2q)) Z* - y|^2 for a unit y and 2^(qt) uniform codewords.

    Z* is the codeword with the largest inner product with y. ``enumerate``
    scores every codeword explicitly and is only feasible for small qt.
    ``order-statistic`` samples the largest inner product directly: for a
    uniform point on the sphere, (1 + <z, y>)/2 is Beta((t-1)/2, (t-1)/2),
    and the maximum of n such draws has distribution F^n, inverted here on
    the survival scale so that n = 2^128 stays accurate.
    """
    from scipy.stats import beta as beta_dist

    from .rng import generator

    if t < 2:
        raise ValueError("t must be at least 2")
    gain = math.sqrt(1.0 - 2.0 ** (-2.0 * q))
    rng = generator(seed)
    if method == "order-statistic":
        log_n = q * t * math.log(2.0)
        v = rng.random(trials)
        # F(max)^n is uniform, so the survival probability of the max is 1 - V^(1/n)
        p = -np.expm1(np.log(v) * math.exp(-log_n))
        half = (t - 1) / 2.0
        inner = 2.0 * beta_dist.isf(p, half, half) - 1.0
    elif method == "enumerate":
        n = round(2.0 ** (q * t))
        if n > 1 << 20:
            raise ValueError("too many codewords to enumerate")
        inner = np.empty(trials)
        for i in range(trials):
            z = rng.standard_normal((n, t))
            # by symmetry y can be fixed to the first basis vector
            inner[i] = np.max(z[:, 0] / np.linalg.norm(z, axis=1))
    else:
        raise ValueError(f"unknown method {method!r}")
    return gain**2 + 1.0 - 2.0 * gain * inner
