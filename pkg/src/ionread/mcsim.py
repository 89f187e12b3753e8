"""Monte Carlo trajectory sampler for detection count histograms.

Two independent samplers generate the same physics through different
mechanisms, so they can cross-validate each other and the closed forms:

rate_equation draws the leak time directly from its exponential law.  A
dark ion that leaks at time fraction x < 1 fluoresces for the remainder
and yields Poisson((1-x)*lambda0) detected photons; a bright ion emits
until its leak, Poisson(min(x,1)*lambda0).  The exponential scale comes
from inverting the per-photon leak probability: the mean leak time in
window units is eta/(alpha*lambda0).

photon_level simulates the per-photon story: the number of emission slots
in the window is Poisson(lambda0/eta), each emitted photon carries a
Bernoulli(alpha) leak check and a Bernoulli(eta) detection check.  The
first leak switches the ion's manifold; a dark ion emits from that slot
onward, a bright ion stops emitting there.  Second leaks are not
simulated (single leak event per trajectory).

Determinism: trials are partitioned into fixed blocks of 65536 and each
block gets its own counter-based generator keyed by (seed, block index).
The histogram is therefore bit-identical no matter how blocks are
scheduled; a reduction over any permutation of blocks gives the same
counts.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .detmodel import HistKind, LeakParams, PhotonHistogram
from .errors import ConfigError, DomainError

CHUNK = 65536
_KEY_SALT = 0x1CE0_D1CE


class McMode(str, Enum):
    RATE_EQUATION = "rate_equation"
    PHOTON_LEVEL = "photon_level"


class InitialState(str, Enum):
    DARK = "dark"
    BRIGHT = "bright"


@dataclass(frozen=True)
class McConfig:
    trials: int
    seed: int = 0
    mode: McMode = McMode.RATE_EQUATION
    initial: InitialState = InitialState.DARK

    def __post_init__(self):
        if not isinstance(self.trials, int) or isinstance(self.trials, bool) or self.trials < 1:
            raise DomainError(f"trials must be a positive integer, got {self.trials!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        object.__setattr__(self, "mode", McMode(self.mode))
        object.__setattr__(self, "initial", InitialState(self.initial))


def _chunk_rng(seed: int, chunk_index: int) -> np.random.Generator:
    # 2-word Philox key: the salt keeps chunk streams from colliding with
    # any other keyed use of the same seed
    key = np.array([seed, (_KEY_SALT << 32) + chunk_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _leak_fraction(params: LeakParams, eta: float, which: InitialState) -> float:
    if not 0 < eta <= 1:
        raise DomainError(f"collection efficiency must be in (0, 1], got {eta}")
    alpha = params.alpha1 if which is InitialState.DARK else params.alpha2
    a = alpha / eta
    if which is InitialState.DARK and a >= 1.0:
        raise DomainError(f"alpha1/eta must be < 1 for dark trajectories, got {a}")
    return a


def _rate_equation_chunk(rng, size, params, eta, initial):
    lam0 = params.lambda0
    a = _leak_fraction(params, eta, initial)
    if a * lam0 == 0.0:
        x = np.full(size, np.inf)
    else:
        # leak time in units of the window: Exponential(mean 1/(a*lambda0))
        x = rng.exponential(scale=1.0 / (a * lam0), size=size)
    no_leak = x >= 1.0
    if initial is InitialState.DARK:
        mean = np.where(no_leak, 0.0, (1.0 - np.minimum(x, 1.0)) * lam0)
    else:
        mean = np.minimum(x, 1.0) * lam0
    counts = rng.poisson(mean)
    return counts, int(no_leak.sum())


def _photon_level_chunk(rng, size, params, eta, initial):
    lam0 = params.lambda0
    a = _leak_fraction(params, eta, initial)
    alpha = a * eta
    slots = rng.poisson(lam0 / eta, size=size)
    if alpha == 0.0:
        leak_slot = np.full(size, np.iinfo(np.int64).max, dtype=np.int64)
    else:
        leak_slot = rng.geometric(alpha, size=size)
    no_leak = leak_slot > slots
    if initial is InitialState.DARK:
        emitted = np.where(no_leak, 0, slots - leak_slot + 1)
    else:
        emitted = np.where(no_leak, slots, leak_slot - 1)
    counts = rng.binomial(emitted, eta)
    return counts, int(no_leak.sum())


def _chunk_counts(params: LeakParams, eta: float, config: McConfig, chunk_index: int):
    """Bin counts and no-leak tally of one fixed trial block.

    Block i covers trials [i*CHUNK, min((i+1)*CHUNK, trials)). Exposed so
    reductions over blocks in any order can be checked for equality.
    """
    start = chunk_index * CHUNK
    if not 0 <= start < config.trials:
        raise DomainError(f"chunk {chunk_index} is out of range for {config.trials} trials")
    size = min(CHUNK, config.trials - start)
    rng = _chunk_rng(config.seed, chunk_index)
    if config.mode is McMode.RATE_EQUATION:
        counts, no_leak = _rate_equation_chunk(rng, size, params, eta, config.initial)
    else:
        counts, no_leak = _photon_level_chunk(rng, size, params, eta, config.initial)
    return np.bincount(counts), no_leak


def simulate_histogram(params: LeakParams, eta: float, config: McConfig) -> PhotonHistogram:
    """Sample config.trials trajectories into a count histogram.

    Deterministic for a fixed seed regardless of how the trial blocks
    would be scheduled. meta carries the configuration plus
    no_leak_trials, the number of trajectories whose leak never fired
    inside the window (the point mass of the leak-time law).
    """
    n_chunks = (config.trials + CHUNK - 1) // CHUNK
    bins = np.zeros(1, dtype=np.int64)
    no_leak_total = 0
    for i in range(n_chunks):
        chunk_bins, no_leak = _chunk_counts(params, eta, config, i)
        if len(chunk_bins) > len(bins):
            chunk_bins[: len(bins)] += bins
            bins = chunk_bins
        else:
            bins[: len(chunk_bins)] += chunk_bins
        no_leak_total += no_leak
    meta = {
        "seed": config.seed,
        "mode": config.mode.value,
        "initial": config.initial.value,
        "no_leak_trials": no_leak_total,
        "lambda0": params.lambda0,
        "alpha1": params.alpha1,
        "alpha2": params.alpha2,
        "eta": eta,
    }
    return PhotonHistogram(
        values=tuple(int(v) for v in bins),
        kind=HistKind.SIMULATED,
        trials=config.trials,
        meta=meta,
    )


def total_variation(hist_a, hist_b) -> float:
    """TV distance between two histograms' normalized frequencies.

    Accepts PhotonHistogram or plain sequences; shorter input is padded
    with zeros.
    """
    pa = list(hist_a.frequencies() if isinstance(hist_a, PhotonHistogram) else hist_a)
    pb = list(hist_b.frequencies() if isinstance(hist_b, PhotonHistogram) else hist_b)
    width = max(len(pa), len(pb))
    pa += [0.0] * (width - len(pa))
    pb += [0.0] * (width - len(pb))
    return 0.5 * sum(abs(x - y) for x, y in zip(pa, pb))


def format_histogram_csv(hist: PhotonHistogram) -> str:
    """CSV with a comment metadata line, then n,count rows (occupied bins)."""
    meta = hist.meta or {}
    trials = hist.trials if hist.trials is not None else int(round(hist.total))
    parts = [f"trials={trials}"]
    for key in ("seed", "mode", "initial"):
        if key in meta:
            parts.append(f"{key}={meta[key]}")
    lines = ["# " + " ".join(parts), "n,count"]
    for n, v in enumerate(hist.values):
        if v > 0:
            lines.append(f"{n},{int(v)}")
    return "\n".join(lines) + "\n"


def write_histogram_csv(path, hist: PhotonHistogram) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_histogram_csv(hist))


def parse_histogram_csv(text: str) -> PhotonHistogram:
    """Inverse of format_histogram_csv; unoccupied bins read back as 0.

    Files without the metadata comment are treated as measured data with
    trials inferred from the column sum.
    """
    meta = {}
    trials = None
    rows = {}
    saw_header = False
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            for token in line[1:].split():
                if "=" not in token:
                    continue
                key, _, val = token.partition("=")
                if key == "trials":
                    trials = int(val)
                elif key == "seed":
                    meta[key] = int(val)
                else:
                    meta[key] = val
            continue
        if line == "n,count":
            saw_header = True
            continue
        m = re.fullmatch(r"(\d+),(\d+)", line)
        if not m:
            raise ConfigError(f"bad histogram row: {line!r}")
        n, c = int(m.group(1)), int(m.group(2))
        if n in rows:
            raise ConfigError(f"duplicate histogram bin {n}")
        rows[n] = c
    if not saw_header:
        raise ConfigError("histogram CSV is missing the n,count header")
    if not rows:
        raise ConfigError("histogram CSV has no data rows")
    width = max(rows) + 1
    values = tuple(rows.get(n, 0) for n in range(width))
    kind = HistKind.SIMULATED if trials is not None else HistKind.MEASURED
    if trials is None:
        trials = sum(values)
    return PhotonHistogram(values=values, kind=kind, trials=trials, meta=meta)


def read_histogram_csv(path) -> PhotonHistogram:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_histogram_csv(fh.read())
