"""Route-module tests: synthesis statistics against a histogram
total-variation oracle, sampling uniformity via chi-square, composition
slicing/blending, and file round-trips."""

import numpy as np
import pytest
from scipy import stats

from fleetptc import routes
from fleetptc.errors import InvalidInput, SynthesisError

SUBURBAN = routes.builtin_route("suburban")
URBAN = routes.builtin_route("urban")
HIGHWAY = routes.builtin_route("highway")


# ---------------------------------------------------------------------------
# invariants of shipped profiles


@pytest.mark.parametrize("route", [SUBURBAN, URBAN, HIGHWAY])
def test_builtin_profiles_valid(route):
    v = route.speeds
    assert np.all(v >= 0)
    assert np.max(np.abs(np.diff(v))) / route.dt_s <= routes.ACCEL_LIMIT


def test_builtin_profiles_ordered_by_speed():
    assert URBAN.mean_speed() < SUBURBAN.mean_speed() < HIGHWAY.mean_speed()


# ---------------------------------------------------------------------------
# synthesis


def test_synthesize_single_route_mean_bound():
    out = routes.synthesize_routes(SUBURBAN, 1, rng_seed=3)
    assert len(out.routes) == 1
    r = out.routes[0]
    assert abs(r.mean_speed() - SUBURBAN.mean_speed()) \
        <= routes.MEAN_SPEED_TOLERANCE * SUBURBAN.mean_speed()
    assert r.max_speed() <= SUBURBAN.max_speed() + 1e-12
    assert np.min(r.speeds) >= 0.0
    assert len(r.speeds) == len(SUBURBAN.speeds)


def test_synthesize_deterministic():
    a = routes.synthesize_routes(SUBURBAN, 3, rng_seed=11)
    b = routes.synthesize_routes(SUBURBAN, 3, rng_seed=11)
    assert a == b
    c = routes.synthesize_routes(SUBURBAN, 3, rng_seed=12)
    assert a != c


def tv_distance(a, b, bins, lo, hi):
    ha, _ = np.histogram(a, bins=bins, range=(lo, hi))
    hb, _ = np.histogram(b, bins=bins, range=(lo, hi))
    pa = ha / ha.sum()
    pb = hb / hb.sum()
    return 0.5 * np.abs(pa - pb).sum()


def test_synthesis_speed_distribution_close_to_seed():
    out = routes.synthesize_routes(SUBURBAN, 50, rng_seed=7)
    assert len(out.routes) == 50
    pooled = np.concatenate([r.speeds for r in out.routes])
    d = tv_distance(pooled, SUBURBAN.speeds, bins=20, lo=0.0,
                    hi=SUBURBAN.max_speed())
    assert d < 0.2, f"TV distance {d:.3f}"


def test_synthesis_rejects_degenerate_seed():
    flat = routes.Route(1.0, tuple([10.0] * 200))
    with pytest.raises(SynthesisError):
        routes.synthesize_routes(flat, 1, rng_seed=0)


def test_synthesis_rejects_bad_args():
    with pytest.raises(InvalidInput):
        routes.synthesize_routes(SUBURBAN, 0, rng_seed=0)
    short = routes.Route(1.0, tuple(np.linspace(0, 3, 50).tolist()))
    with pytest.raises(InvalidInput):
        routes.synthesize_routes(short, 1, rng_seed=0)


# ---------------------------------------------------------------------------
# episode sampling


def test_sample_episode_single_route_always_chosen():
    rs = routes.RouteSet((SUBURBAN,), "suburban")
    for seed in range(5):
        ep = routes.sample_episode(rs, seed)
        assert ep.route.label == "suburban"
        assert len(ep.route.speeds) == len(SUBURBAN.speeds)


def test_sample_episode_parameter_ranges_and_noise():
    rs = routes.RouteSet((SUBURBAN,), "suburban")
    for seed in range(30):
        ep = routes.sample_episode(rs, seed)
        assert 8000.0 <= ep.mass_kg <= 24000.0
        assert 3.0 <= ep.idm_params.time_headway_s <= 4.0
        assert 5.0 <= ep.idm_params.min_gap_m <= 7.0
        ratio = ep.route.speeds[SUBURBAN.speeds > 1.0] \
            / SUBURBAN.speeds[SUBURBAN.speeds > 1.0]
        assert np.all(ratio > 0.94) and np.all(ratio < 1.06)
        assert ep.duration_s <= routes.MAX_EPISODE_DURATION_S


def test_sample_episode_deterministic():
    rs = routes.RouteSet((SUBURBAN, URBAN), "mixed")
    assert routes.sample_episode(rs, 99) == routes.sample_episode(rs, 99)


def test_route_choice_uniform_chi_square():
    # 10^4 draws over a 25-route set: every frequency in [0.02, 0.06] and the
    # chi-square statistic below the 99% critical value
    rset = routes.synthesize_routes(SUBURBAN, 25, rng_seed=1)
    counts = np.zeros(25)
    lookup = {id(r): i for i, r in enumerate(rset.routes)}
    for seed in range(10_000):
        rng = np.random.default_rng(seed)
        counts[int(rng.integers(25))] += 1
    freqs = counts / counts.sum()
    assert np.all(freqs >= 0.02) and np.all(freqs <= 0.06)
    chi2 = ((counts - 400.0) ** 2 / 400.0).sum()
    assert chi2 < stats.chi2.ppf(0.99, df=24)
    assert len(lookup) == 25


# ---------------------------------------------------------------------------
# composition


def test_compose_single_part_identity():
    out = routes.compose_evaluation_route([(SUBURBAN, 1.0)])
    assert len(out.speeds) == len(SUBURBAN.speeds)
    np.testing.assert_allclose(out.speeds, SUBURBAN.speeds)


def test_compose_slice_durations():
    parts = [(SUBURBAN, 0.45), (URBAN, 0.10), (HIGHWAY, 0.45)]
    out = routes.compose_evaluation_route(parts)
    total = len(out.speeds)
    expect_total = int(round(sum(f * len(r.speeds) for r, f in parts)))
    assert total == expect_total  # exact duration accounting
    # equal-duration parts: slices are 45% / 10% / 45% of the total
    assert len(SUBURBAN.speeds) == len(URBAN.speeds) == len(HIGHWAY.speeds)
    assert int(round(0.45 * total)) + int(round(0.10 * total)) \
        + (total - int(round(0.45 * total)) - int(round(0.10 * total))) == total


def test_compose_junction_continuity():
    # scan oracle over the composed profile: no step exceeds the accel bound
    out = routes.compose_evaluation_route(
        [(URBAN, 0.45), (HIGHWAY, 0.10), (SUBURBAN, 0.45)])
    steps = np.abs(np.diff(out.speeds)) / out.dt_s
    assert np.max(steps) <= routes.ACCEL_LIMIT + 1e-9


def test_compose_rejects_bad_fractions():
    with pytest.raises(InvalidInput):
        routes.compose_evaluation_route([(SUBURBAN, 0.5), (URBAN, 0.6)])
    with pytest.raises(InvalidInput):
        routes.compose_evaluation_route([(SUBURBAN, -0.5), (URBAN, 1.5)])
    with pytest.raises(InvalidInput):
        routes.compose_evaluation_route([])


# ---------------------------------------------------------------------------
# file IO


def test_route_file_roundtrip(tmp_path):
    path = tmp_path / "r.route"
    routes.save_route(path, SUBURBAN)
    back = routes.load_route(path, label="suburban")
    assert back == SUBURBAN


def test_route_file_rejects_missing_header(tmp_path):
    p = tmp_path / "bad.route"
    p.write_text("1.0\n2.0\n")
    with pytest.raises(InvalidInput):
        routes.load_route(p)


def test_builtin_route_unknown_name():
    with pytest.raises(InvalidInput):
        routes.builtin_route("rural")
