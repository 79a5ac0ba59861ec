"""Stateful dropout-mask generation engines.

Three strategies are modeled:

* ``general-serial``   -- one hardware RNG + one comparator, looped n times
                          (one mask bit per clock cycle).
* ``general-parallel`` -- n RNG/comparator pairs producing all bits at once.
* ``proposed``         -- a stored predefined mask that is circularly
                          rotated each step; no RNG, no comparator.

The two general forms are *functionally* identical given the same random
stream consumed in position order; they differ only in the cost model
(:mod:`rotodrop.hwcost`).  The hardware RNG is modeled as a Fibonacci
LFSR, the standard FPGA choice.

Generator instances are single-owner mutable state: replaying from the
same seed reproduces the identical mask sequence bit for bit.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

from .mask import BitMask, make_bernoulli_mask, make_exact_mask, rotate

# Maximal-length tap sets (polynomial exponents, descending). Tap t feeds
# back bit (width - t); the register width itself must always be tapped so
# the shifted-out bit re-enters the feedback and the all-zero state stays
# unreachable.
DEFAULT_TAPS = {
    8: (8, 6, 5, 4),
    16: (16, 15, 13, 4),
    32: (32, 22, 2, 1),
}

SUPPORTED_WIDTHS = (8, 16, 32)


class Lfsr:
    """Fibonacci linear-feedback shift register (shift-right form).

    Each step outputs the low bit, shifts right, and inserts the XOR of
    the tapped bits at the top.  With ``width`` 8 and the default taps
    the state sequence is maximal: all 255 nonzero states are visited
    before repeating.
    """

    def __init__(self, width: int = 8, taps=None, state: int = 1):
        if width not in SUPPORTED_WIDTHS:
            raise ValueError(f"LFSR width must be one of {SUPPORTED_WIDTHS}, got {width}")
        taps = tuple(sorted(DEFAULT_TAPS[width] if taps is None else taps, reverse=True))
        if not taps or any(t < 1 or t > width for t in taps):
            raise ValueError(f"taps must lie in 1..{width}, got {taps}")
        if width not in taps:
            raise ValueError(f"tap set must include the register width {width}")
        if not (1 <= state < (1 << width)):
            raise ValueError(f"state must be a nonzero {width}-bit value, got {state}")
        self.width = width
        self.taps = taps
        self._state = state
        self._shifts = tuple(width - t for t in taps)
        self._cycle = None  # lazy (outputs, states, index) cache for batch draws

    @classmethod
    def from_seed(cls, seed: int, width: int = 8, taps=None) -> "Lfsr":
        """Map an arbitrary integer seed onto a valid nonzero state."""
        state = seed % ((1 << width) - 1) + 1
        return cls(width=width, taps=taps, state=state)

    @property
    def state(self) -> int:
        return self._state

    def step(self) -> int:
        """Advance one clock cycle, returning the output bit."""
        s = self._state
        out = s & 1
        fb = 0
        for sh in self._shifts:
            fb ^= (s >> sh) & 1
        self._state = (s >> 1) | (fb << (self.width - 1))
        return out

    def uniform(self, k: int | None = None) -> float:
        """Collect k output bits (MSB first) as a value in [0, 1)."""
        k = self.width if k is None else k
        if not (1 <= k <= self.width):
            raise ValueError(f"bit width k must be in 1..{self.width}, got {k}")
        v = 0
        for _ in range(k):
            v = (v << 1) | self.step()
        return v / (1 << k)

    # -- vectorized draws ----------------------------------------------------
    #
    # The full state cycle for the small widths is tiny (2^w - 1 states), so
    # batch draws are served from a precomputed output-bit table.  Output is
    # bit-for-bit identical to repeated step()/uniform() calls.

    _MAX_CACHED_WIDTH = 16

    def _ensure_cycle(self):
        if self._cycle is not None:
            return self._cycle if self._cycle != "unavailable" else None
        if self.width > self._MAX_CACHED_WIDTH:
            return None
        period = (1 << self.width) - 1
        outputs = np.empty(period, dtype=np.uint8)
        states = np.empty(period, dtype=np.int64)
        index = {}
        probe = Lfsr(self.width, self.taps, state=self._state)
        for i in range(period):
            index[probe.state] = i
            states[i] = probe.state
            outputs[i] = probe.step()
        if probe.state != self._state:
            # Non-maximal tap set: the orbit of this state is shorter than
            # the full cycle, so fall back to scalar stepping.
            self._cycle = "unavailable"
            return None
        self._cycle = (outputs, states, index)
        return self._cycle

    def uniforms(self, count: int, k: int | None = None) -> np.ndarray:
        """count successive uniform(k) draws as a float array."""
        k = self.width if k is None else k
        if not (1 <= k <= self.width):
            raise ValueError(f"bit width k must be in 1..{self.width}, got {k}")
        cycle = self._ensure_cycle()
        if cycle is None:
            return np.array([self.uniform(k) for _ in range(count)])
        outputs, states, index = cycle
        period = outputs.size
        start = index[self._state]
        pos = (start + np.arange(count * k, dtype=np.int64)) % period
        bits = outputs[pos].reshape(count, k)
        weights = (1 << np.arange(k - 1, -1, -1, dtype=np.int64))
        values = bits.astype(np.int64) @ weights
        if count:
            # advance the register to where scalar stepping would have left it
            self._state = int(states[(start + count * k) % period])
        return values / float(1 << k)


class ScheduleMode(str, enum.Enum):
    CONSTANT = "constant"
    SEQUENCE = "sequence"
    RANDOM = "random"


@dataclass(frozen=True)
class RotationSchedule:
    """Source of per-step rotate amounts for the proposed generator.

    * constant -- the same r every step
    * sequence -- a list of r values cycled with period len(values)
    * random   -- seeded stream of r drawn uniformly from [1, n-1]
                  (0 excluded so the mask changes every step)
    """

    mode: ScheduleMode
    values: tuple = ()
    seed: int = 0

    @classmethod
    def constant(cls, r: int) -> "RotationSchedule":
        if r < 0:
            raise ValueError(f"rotate amount must be non-negative, got {r}")
        return cls(ScheduleMode.CONSTANT, (int(r),))

    @classmethod
    def sequence(cls, values) -> "RotationSchedule":
        vals = tuple(int(v) for v in values)
        if not vals:
            raise ValueError("sequence schedule needs at least one value")
        if any(v < 0 for v in vals):
            raise ValueError(f"rotate amounts must be non-negative, got {vals}")
        return cls(ScheduleMode.SEQUENCE, vals)

    @classmethod
    def random(cls, seed: int) -> "RotationSchedule":
        return cls(ScheduleMode.RANDOM, (), int(seed))

    def amounts(self, n: int):
        """Infinite iterator of rotate amounts for masks of length n."""
        if self.mode is ScheduleMode.CONSTANT:
            return itertools.repeat(self.values[0])
        if self.mode is ScheduleMode.SEQUENCE:
            return itertools.cycle(self.values)
        rng = np.random.default_rng(self.seed)

        def _draw():
            while True:
                yield int(rng.integers(1, n)) if n > 1 else 0

        return _draw()


class GeneratorKind(str, enum.Enum):
    GENERAL_SERIAL = "general-serial"
    GENERAL_PARALLEL = "general-parallel"
    PROPOSED = "proposed"

    @classmethod
    def parse(cls, text: str) -> "GeneratorKind":
        aliases = {"general": cls.GENERAL_SERIAL, "rotation": cls.PROPOSED}
        try:
            return aliases.get(text, None) or cls(text)
        except ValueError:
            raise ValueError(
                f"unknown generator kind {text!r}; expected one of "
                f"{[k.value for k in cls]} or 'general'"
            ) from None


class GeneralMaskGenerator:
    """RNG + comparator mask source (serial and parallel hardware forms).

    Each mask bit costs one fresh uniform compared against the drop
    ratio d = 1 - p: bit = 1 iff uniform >= d.  Serial and parallel
    differ only in hardware cost, so one stream consumed in position
    order serves both.
    """

    def __init__(self, n: int, p: float, lfsr: Lfsr | None = None, seed: int = 0,
                 sample_bits: int | None = None):
        if n < 1:
            raise ValueError(f"mask length must be >= 1, got {n}")
        if not (0.0 <= p <= 1.0):
            raise ValueError(f"keep probability must be in [0, 1], got {p!r}")
        self.n = n
        self.p = p
        self.lfsr = lfsr if lfsr is not None else Lfsr.from_seed(seed)
        self.sample_bits = sample_bits

    def next_mask(self) -> BitMask:
        drop = 1.0 - self.p
        bits = [1 if self.lfsr.uniform(self.sample_bits) >= drop else 0
                for _ in range(self.n)]
        return BitMask(bits)

    def next_masks(self, count: int) -> np.ndarray:
        """count masks as a (count, n) uint8 array, in stream order."""
        drop = 1.0 - self.p
        u = self.lfsr.uniforms(count * self.n, self.sample_bits)
        return (u.reshape(count, self.n) >= drop).astype(np.uint8)


class ProposedMaskGenerator:
    """Rotation-based mask source: no RNG, no comparator.

    A predefined mask is stored once; every step rotates the working
    mask by the schedule's next amount and emits it.  Every emitted mask
    is a rotation of the predefined mask, so the keep/drop distribution
    (the popcount) is maintained exactly, for any schedule.
    """

    def __init__(self, predefined: BitMask, schedule: RotationSchedule):
        self.predefined = predefined
        self.current = predefined
        self.schedule = schedule
        self._amounts = schedule.amounts(len(predefined))
        self._offset = 0  # rotation of current relative to predefined

    def next_mask(self) -> BitMask:
        self._offset = (self._offset + next(self._amounts)) % len(self.predefined)
        self.current = rotate(self.predefined, self._offset)
        return self.current

    def next_masks(self, count: int) -> np.ndarray:
        n = len(self.predefined)
        r = np.fromiter(itertools.islice(self._amounts, count), dtype=np.int64, count=count)
        offsets = (self._offset + np.cumsum(r)) % n
        cols = (offsets[:, None] + np.arange(n)[None, :]) % n
        out = self.predefined.bits[cols]
        if count:
            self._offset = int(offsets[-1])
            self.current = BitMask(out[-1])
        return out


@dataclass(frozen=True)
class GeneratorConfig:
    """Everything needed to rebuild a mask generator deterministically."""

    kind: GeneratorKind = GeneratorKind.GENERAL_SERIAL
    n: int = 8
    p: float = 0.5
    seed: int = 0
    lfsr_width: int = 8
    lfsr_taps: tuple | None = None
    sample_bits: int | None = None
    schedule: RotationSchedule = field(default_factory=lambda: RotationSchedule.constant(1))
    predefined: str = "exact"  # exact | bernoulli

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"mask length must be >= 1, got {self.n}")
        if not (0.0 <= self.p <= 1.0):
            raise ValueError(f"keep probability must be in [0, 1], got {self.p!r}")
        if self.predefined not in ("exact", "bernoulli"):
            raise ValueError(
                f"predefined mask mode must be 'exact' or 'bernoulli', got {self.predefined!r}"
            )


def make_generator(config: GeneratorConfig):
    """Build a fresh generator instance from a config."""
    if config.kind in (GeneratorKind.GENERAL_SERIAL, GeneratorKind.GENERAL_PARALLEL):
        lfsr = Lfsr.from_seed(config.seed, width=config.lfsr_width, taps=config.lfsr_taps)
        return GeneralMaskGenerator(config.n, config.p, lfsr=lfsr,
                                    sample_bits=config.sample_bits)
    rng = np.random.default_rng(config.seed)
    if config.predefined == "exact":
        predefined = make_exact_mask(config.n, config.p, rng)
    else:
        predefined = make_bernoulli_mask(config.n, config.p, rng)
    return ProposedMaskGenerator(predefined, config.schedule)


def generator_stream(config: GeneratorConfig, count: int) -> list[BitMask]:
    """Emit ``count`` masks from a fresh generator, in step order."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    gen = make_generator(config)
    return [BitMask(row) for row in gen.next_masks(count)]
