#!/usr/bin/env python3
"""Generate the three shipped representative drive profiles.

The committed files under src/fleetptc/data/ stand in for external drive
cycles; this script documents exactly how they were produced.  Re-running it
is deterministic and reproduces the files byte-for-byte.
"""

import pathlib

import numpy as np

DT = 1.0
DURATION_S = 2400
OUT_DIR = pathlib.Path(__file__).resolve().parents[1] / "src" / "fleetptc" / "data"


def ramp(cur, target, rate, n_left):
    """Speed samples ramping cur -> target at the given rate, capped at n_left."""
    out = []
    v = cur
    while abs(target - v) > 1e-9 and len(out) < n_left:
        step = np.clip(target - v, -rate * DT, rate * DT)
        v += step
        out.append(v)
    return out


def segments_profile(rng, n, cruise_speed, cruise_jitter, cruise_len, stop_len,
                     stop_prob=1.0, slow_floor=0.0, accel=(0.8, 1.8)):
    v = [0.0]
    while len(v) < n:
        target = rng.uniform(*cruise_speed)
        rate = rng.uniform(*accel)
        v += ramp(v[-1], target, rate, n - len(v))
        for _ in range(int(rng.uniform(*cruise_len))):
            if len(v) >= n:
                break
            v.append(max(0.0, v[-1] + rng.uniform(-cruise_jitter, cruise_jitter)))
        if len(v) >= n:
            break
        if rng.random() < stop_prob:
            low = slow_floor if rng.random() < 0.5 else 0.0
            v += ramp(v[-1], low, rng.uniform(*accel), n - len(v))
            if low == 0.0:
                v += [0.0] * min(int(rng.uniform(*stop_len)), n - len(v))
    return np.array(v[:n])


def make(kind):
    n = int(DURATION_S / DT) + 1
    if kind == "urban":
        rng = np.random.default_rng(20240501)
        v = segments_profile(rng, n, cruise_speed=(7.0, 13.5), cruise_jitter=0.35,
                             cruise_len=(15, 60), stop_len=(10, 40))
    elif kind == "suburban":
        rng = np.random.default_rng(20240502)
        v = segments_profile(rng, n, cruise_speed=(11.0, 18.0), cruise_jitter=0.3,
                             cruise_len=(40, 120), stop_len=(8, 25),
                             stop_prob=0.7, slow_floor=4.0)
    elif kind == "highway":
        rng = np.random.default_rng(20240503)
        v = segments_profile(rng, n, cruise_speed=(22.0, 27.5), cruise_jitter=0.2,
                             cruise_len=(120, 400), stop_len=(5, 10),
                             stop_prob=0.25, slow_floor=17.0, accel=(0.5, 1.0))
    else:
        raise ValueError(kind)
    return v


def main():
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    for kind in ("urban", "suburban", "highway"):
        v = make(kind)
        assert np.all(v >= 0) and np.max(np.abs(np.diff(v))) / DT <= 4.0
        path = OUT_DIR / f"{kind}.route"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"dt={DT!r}\n")
            for sp in v:
                fh.write(f"{float(sp)!r}\n")
        print(f"{kind}: mean {v.mean():.2f} m/s, max {v.max():.2f} m/s, "
              f"stopped {np.mean(v < 0.05) * 100:.0f}% -> {path}")


if __name__ == "__main__":
    main()
