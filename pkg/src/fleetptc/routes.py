"""Drive cycles: representation, synthetic generation, randomized episode
sampling, and evaluation-route composition.

A route is the velocity profile the lead vehicle follows.  Synthetic routes
are sampled from a first-order Markov chain over discretized
(velocity, acceleration) cluster states built from a seed profile, which
preserves the seed's speed statistics without replaying it.  Three built-in
representative profiles (urban / suburban / highway) ship as data files and
stand in for proprietary telematics cycles.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass

import numpy as np

from .driver import DESIRED_SPEED_FACTOR, IdmParams
from .errors import InvalidInput, SynthesisError

ACCEL_LIMIT = 4.0          # m/s^2, physical plausibility bound on profiles
MAX_EPISODE_DURATION_S = 10000.0

N_VEL_BINS = 10            # Markov-chain cluster discretization
N_ACC_BINS = 7

MEAN_SPEED_TOLERANCE = 0.15   # synthetic mean speed within +/-15% of seed
SPEED_NOISE_SCALE = 0.05      # +/-5% multiplicative episode noise
BLEND_SECONDS = 5.0           # linear blend window at composition junctions

ROUTE_LABELS = ("urban", "suburban", "highway", "mixed", "custom")

MASS_RANGE_KG = (8000.0, 24000.0)
TIME_HEADWAY_RANGE_S = (3.0, 4.0)
MIN_GAP_RANGE_M = (5.0, 7.0)


@dataclass(frozen=True)
class Route:
    dt_s: float
    speeds_m_s: tuple
    label: str = "custom"

    def __post_init__(self):
        if self.dt_s <= 0:
            raise InvalidInput("route dt must be > 0")
        if self.label not in ROUTE_LABELS:
            raise InvalidInput(f"unknown route label {self.label!r}")
        v = np.asarray(self.speeds_m_s, dtype=float)
        if len(v) < 2:
            raise InvalidInput("route needs at least 2 samples")
        if np.any(v < 0):
            raise InvalidInput("route speeds must be >= 0")
        accel = np.abs(np.diff(v)) / self.dt_s
        if np.any(accel > ACCEL_LIMIT + 1e-9):
            raise InvalidInput(
                f"route accelerations exceed {ACCEL_LIMIT} m/s^2 "
                f"(max {accel.max():.3f})")

    @property
    def speeds(self) -> np.ndarray:
        return np.asarray(self.speeds_m_s, dtype=float)

    @property
    def duration_s(self) -> float:
        return (len(self.speeds_m_s) - 1) * self.dt_s

    def mean_speed(self) -> float:
        return float(np.mean(self.speeds_m_s))

    def max_speed(self) -> float:
        return float(np.max(self.speeds_m_s))


@dataclass(frozen=True)
class RouteSet:
    routes: tuple
    label: str = "custom"

    def __post_init__(self):
        if not self.routes:
            raise InvalidInput("route set must not be empty")


@dataclass(frozen=True)
class EpisodeConfig:
    route: Route
    mass_kg: float
    idm_params: IdmParams
    speed_noise_seed: int
    duration_s: float

    def __post_init__(self):
        if not 0 <= self.duration_s <= MAX_EPISODE_DURATION_S:
            raise InvalidInput(
                f"episode duration {self.duration_s} outside [0, {MAX_EPISODE_DURATION_S}] s")


# ---------------------------------------------------------------------------
# Markov-chain synthesis


def _rate_limit(speeds: np.ndarray, dt: float) -> np.ndarray:
    """Forward pass clamping |dv| per step to the plausibility bound."""
    out = speeds.copy()
    step = ACCEL_LIMIT * dt
    for k in range(1, len(out)):
        out[k] = min(max(out[k], out[k - 1] - step), out[k - 1] + step)
        out[k] = max(out[k], 0.0)
    return out


def synthesize_routes(seed_route: Route, n: int, rng_seed: int) -> RouteSet:
    """Sample n speed profiles statistically similar to the seed.

    Builds a first-order Markov chain over (velocity bin, acceleration bin)
    cluster states from the seed, then walks it, drawing accelerations from
    the empirical pool of the sampled cluster.  Each profile keeps the
    seed's duration, stays within the seed's speed range, and is redrawn
    until its mean speed is within +/-15% of the seed's.
    """
    if n < 1:
        raise InvalidInput("need n >= 1 synthetic routes")
    v = seed_route.speeds
    if len(v) < 100:
        raise InvalidInput("seed route must have at least 100 samples")
    dt = seed_route.dt_s
    accel = np.diff(v) / dt
    if float(np.std(v)) < 1e-3 or float(np.max(np.abs(accel))) < 1e-6:
        raise SynthesisError("seed route is (nearly) constant speed")

    v_lo, v_hi = float(v.min()), float(v.max())
    a_lo, a_hi = float(accel.min()), float(accel.max())
    v_edges = np.linspace(v_lo, v_hi, N_VEL_BINS + 1)[1:-1]
    a_edges = np.linspace(a_lo, a_hi, N_ACC_BINS + 1)[1:-1]

    def v_bin(x):
        return int(np.searchsorted(v_edges, x, side="right"))

    def a_bin(x):
        return int(np.searchsorted(a_edges, x, side="right"))

    n_states = N_VEL_BINS * N_ACC_BINS
    states = np.array([v_bin(vv) * N_ACC_BINS + a_bin(aa)
                       for vv, aa in zip(v[:-1], accel)])
    counts = np.zeros((n_states, n_states))
    np.add.at(counts, (states[:-1], states[1:]), 1.0)
    row_totals = counts.sum(axis=1)
    # fallbacks for unvisited rows: same velocity bin pooled, then global
    pooled_by_vbin = np.zeros((N_VEL_BINS, n_states))
    for vb in range(N_VEL_BINS):
        pooled_by_vbin[vb] = counts[vb * N_ACC_BINS:(vb + 1) * N_ACC_BINS].sum(axis=0)
    global_counts = counts.sum(axis=0)

    abin_of = np.array([a_bin(x) for x in accel])
    accel_pools = [accel[abin_of == ab] for ab in range(N_ACC_BINS)]

    cumrows = {}

    def cumulative_for(state):
        if state not in cumrows:
            row = counts[state]
            if row.sum() == 0:
                row = pooled_by_vbin[state // N_ACC_BINS]
            if row.sum() == 0:
                row = global_counts
            cumrows[state] = np.cumsum(row / row.sum())
        return cumrows[state]

    rng = np.random.default_rng(rng_seed)
    length = len(v)
    seed_mean = float(v.mean())
    routes = []
    for _ in range(n):
        for _attempt in range(25):
            out = np.empty(length)
            out[0] = v[0]
            state = int(states[0])
            for k in range(1, length):
                cum = cumulative_for(state)
                nxt = int(np.searchsorted(cum, rng.random(), side="right"))
                nxt = min(nxt, n_states - 1)
                pool = accel_pools[nxt % N_ACC_BINS]
                a_k = float(pool[rng.integers(len(pool))]) if len(pool) else 0.0
                out[k] = min(max(out[k - 1] + a_k * dt, 0.0), v_hi)
                eff_a = (out[k] - out[k - 1]) / dt
                state = v_bin(out[k]) * N_ACC_BINS + a_bin(eff_a)
            if abs(out.mean() - seed_mean) <= MEAN_SPEED_TOLERANCE * seed_mean:
                routes.append(Route(dt, tuple(out.tolist()), seed_route.label))
                break
        else:
            raise SynthesisError(
                "could not synthesize a route within the mean-speed bound")
    return RouteSet(tuple(routes), seed_route.label)


# ---------------------------------------------------------------------------
# episode sampling


def _smooth_noise_field(length: int, rng: np.random.Generator) -> np.ndarray:
    """Low-pass filtered white noise normalized to max |.| = 1."""
    white = rng.standard_normal(length)
    width = 10.0  # samples
    half = int(4 * width)
    kernel = np.exp(-0.5 * (np.arange(-half, half + 1) / width) ** 2)
    kernel /= kernel.sum()
    smooth = np.convolve(white, kernel, mode="same")
    peak = np.max(np.abs(smooth))
    return smooth / peak if peak > 0 else smooth


def sample_episode(route_set: RouteSet, rng_seed: int,
                   duration_cap_s: float | None = None,
                   mass_range=MASS_RANGE_KG,
                   headway_range=TIME_HEADWAY_RANGE_S,
                   min_gap_range=MIN_GAP_RANGE_M,
                   noise_scale: float = SPEED_NOISE_SCALE) -> EpisodeConfig:
    """Draw one randomized training episode: uniform route choice, mass and
    driver parameters from their declared ranges, and a smooth +/-5%
    multiplicative speed-noise field over the chosen profile."""
    rng = np.random.default_rng(rng_seed)
    route = route_set.routes[int(rng.integers(len(route_set.routes)))]
    mass = float(rng.uniform(*mass_range))
    headway = float(rng.uniform(*headway_range))
    min_gap = float(rng.uniform(*min_gap_range))

    speeds = route.speeds
    field = 1.0 + noise_scale * _smooth_noise_field(len(speeds), rng)
    noisy = _rate_limit(np.maximum(speeds * field, 0.0), route.dt_s)
    noisy_route = Route(route.dt_s, tuple(noisy.tolist()), route.label)

    idm = IdmParams(desired_speed_m_s=DESIRED_SPEED_FACTOR * noisy_route.max_speed(),
                    time_headway_s=headway, min_gap_m=min_gap)
    duration = min(noisy_route.duration_s, MAX_EPISODE_DURATION_S)
    if duration_cap_s is not None:
        duration = min(duration, duration_cap_s)
    return EpisodeConfig(route=noisy_route, mass_kg=mass, idm_params=idm,
                         speed_noise_seed=int(rng_seed), duration_s=duration)


def evaluation_episode(route: Route, duration_cap_s: float | None = None,
                       mass_kg: float = 12000.0) -> EpisodeConfig:
    """Deterministic evaluation episode: no noise, nominal driver and mass."""
    idm = IdmParams(desired_speed_m_s=DESIRED_SPEED_FACTOR * route.max_speed())
    duration = min(route.duration_s, MAX_EPISODE_DURATION_S)
    if duration_cap_s is not None:
        duration = min(duration, duration_cap_s)
    return EpisodeConfig(route=route, mass_kg=mass_kg, idm_params=idm,
                         speed_noise_seed=0, duration_s=duration)


# ---------------------------------------------------------------------------
# evaluation-route composition


def compose_evaluation_route(parts) -> Route:
    """Concatenate time-proportional slices of the given routes.

    parts is a list of (Route, fraction); fractions must sum to 1.  The
    composed duration is the fraction-weighted average of the part
    durations; slice k contributes fraction_k of it, tiling its source
    profile if the slice is longer.  Junctions get a 5-second linear speed
    blend, and a final rate-limit pass guarantees profile plausibility.
    """
    if not parts:
        raise InvalidInput("need at least one (route, fraction) part")
    fracs = [f for _, f in parts]
    if any(f <= 0 for f in fracs):
        raise InvalidInput("fractions must be positive")
    if abs(sum(fracs) - 1.0) > 1e-9:
        raise InvalidInput(f"fractions must sum to 1, got {sum(fracs)}")
    dt = parts[0][0].dt_s
    if any(abs(r.dt_s - dt) > 1e-12 for r, _ in parts):
        raise InvalidInput("all parts must share the same dt")

    total_samples = int(round(sum(f * len(r.speeds_m_s) for r, f in parts)))
    counts = [int(round(f * total_samples)) for f in fracs[:-1]]
    counts.append(total_samples - sum(counts))  # exact total

    segments = []
    for (route, _), m in zip(parts, counts):
        src = route.speeds
        reps = int(np.ceil(m / len(src)))
        segments.append(np.tile(src, reps)[:m])

    blend_half = max(1, int(round(BLEND_SECONDS / dt / 2)))
    composed = np.concatenate(segments)
    # linear ramps across junctions, in place, keeping the total length
    offset = 0
    for seg in segments[:-1]:
        offset += len(seg)
        left = max(0, offset - blend_half)
        right = min(len(composed), offset + blend_half)
        composed[left:right] = np.linspace(composed[left], composed[right - 1],
                                           right - left)
    composed = _rate_limit(np.maximum(composed, 0.0), dt)
    if len(composed) != total_samples:
        raise AssertionError("composition changed the sample count")
    return Route(dt, tuple(composed.tolist()), "mixed")


# ---------------------------------------------------------------------------
# file format: line 1 "dt=<real>", then one speed per line (m/s)


def save_route(path, route: Route):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dt={float(route.dt_s)!r}\n")
        for sp in route.speeds_m_s:
            fh.write(f"{float(sp)!r}\n")


def load_route(path, label: str | None = None) -> Route:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("dt="):
        raise InvalidInput(f"route file {path} must start with 'dt=<real>'")
    try:
        dt = float(lines[0][3:])
        speeds = tuple(float(tok) for tok in lines[1:])
    except ValueError as err:
        raise InvalidInput(f"malformed route file {path}: {err}") from None
    if label is None:
        stem = str(path).rsplit("/", 1)[-1].split(".")[0]
        label = stem if stem in ROUTE_LABELS else "custom"
    return Route(dt, speeds, label)


def builtin_route(name: str) -> Route:
    """Load one of the shipped representative profiles by label."""
    if name not in ("urban", "suburban", "highway"):
        raise InvalidInput(f"no built-in route named {name!r}")
    ref = importlib.resources.files("fleetptc").joinpath(f"data/{name}.route")
    with importlib.resources.as_file(ref) as path:
        return load_route(path, label=name)
