import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rissim.gbsm import (SUPPRESSED_STD, ChannelMatrix, LargeScaleSample, ValidityError,
                         assemble_channel, draw_large_scale, gbsm_channel, generate_clusters,
                         load_scenario, pathloss, uma_los_pathloss, uma_nlos_pathloss)
from rissim.geometry import ArraySpec, Orientation, link_geometry
from rissim.units import wavelength

FC = 2e9
LAM = wavelength(FC)
BS = np.array([0.0, 0.0, 25.0])
UE = np.array([250.0, 0.0, 1.5])
RIS = np.array([200.0, 50.0, 25.0])


@pytest.fixture(scope="module")
def los():
    return load_scenario("UMa-LoS", FC)


@pytest.fixture(scope="module")
def nlos():
    return load_scenario("UMa-NLoS", FC)


def geo_between(a, b):
    return link_geometry(a, Orientation.facing(b - a), b, Orientation.facing(a - b))


def _pl_reference(d2d, d3d, fc, h_bs, h_ut, nlos=False):
    # straight transcription of the UMa pathloss table, scalar math only
    c = 299792458.0
    fg = fc / 1e9
    d_bp = 4 * (h_bs - 1) * (h_ut - 1) * fc / c
    if d2d <= d_bp:
        pl_los = 28 + 22 * math.log10(d3d) + 20 * math.log10(fg)
    else:
        pl_los = 28 + 40 * math.log10(d3d) + 20 * math.log10(fg) - 9 * math.log10(d_bp**2 + (h_bs - h_ut) ** 2)
    if not nlos:
        return pl_los
    return max(pl_los, 13.54 + 39.08 * math.log10(d3d) + 20 * math.log10(fg) - 0.6 * (h_ut - 1.5))


def test_pathloss_ris_link(los):
    geo = geo_between(BS, RIS)
    expected = 28.0 + 22 * math.log10(206.155) + 20 * math.log10(2)
    assert pathloss(los, geo) == pytest.approx(expected, abs=1e-4)


@given(st.floats(10, 5000), st.floats(1.5, 22.5), st.floats(0.5e9, 6e9))
def test_pathloss_matches_reference(d2d, h_ut, fc):
    d3d = math.hypot(d2d, 25 - h_ut)
    assert float(uma_los_pathloss(d2d, d3d, fc, 25, h_ut)) == pytest.approx(_pl_reference(d2d, d3d, fc, 25, h_ut))
    assert float(uma_nlos_pathloss(d2d, d3d, fc, 25, h_ut)) == pytest.approx(
        _pl_reference(d2d, d3d, fc, 25, h_ut, nlos=True))


def test_nlos_above_los_sweep():
    d2d = np.linspace(10, 5000, 2000)
    d3d = np.hypot(d2d, 23.5)
    assert np.all(uma_nlos_pathloss(d2d, d3d, FC, 25, 1.5) >= uma_los_pathloss(d2d, d3d, FC, 25, 1.5))


def test_los_pathloss_continuous_at_breakpoint():
    d_bp = 4 * 24 * 0.5 * FC / 299792458.0
    lo = uma_los_pathloss(d_bp - 1e-6, math.hypot(d_bp, 23.5), FC, 25, 1.5)
    hi = uma_los_pathloss(d_bp + 1e-6, math.hypot(d_bp, 23.5), FC, 25, 1.5)
    assert float(lo) == pytest.approx(float(hi), abs=1e-3)


def test_pathloss_validity(los):
    geo = link_geometry((0, 0, 25), Orientation(), (0.6, 0.0, 25.8), Orientation())
    with pytest.raises(ValidityError) as e:
        pathloss(los, geo)
    assert e.value.bound == 10.0
    far = link_geometry((0, 0, 25), Orientation(), (6000, 0, 1.5), Orientation())
    with pytest.raises(ValidityError) as e:
        pathloss(los, far)
    assert e.value.bound == 5000.0


def test_table_values(los, nlos):
    # frequency-dependent spreads are evaluated at 6 GHz for carriers below it
    assert los.lgds[0] == pytest.approx(-6.955 - 0.0963 * math.log10(6))
    assert nlos.lgasa[0] == pytest.approx(2.08 - 0.27 * math.log10(6))
    assert load_scenario("UMa-LoS", 28e9).lgds[0] == pytest.approx(-6.955 - 0.0963 * math.log10(28))
    assert (los.n_clusters, nlos.n_clusters) == (12, 20)
    assert (los.sf_sigma_db, nlos.sf_sigma_db) == (4.0, 6.0)
    assert (los.k_mu_db, los.k_sigma_db) == (9.0, 3.5)


def test_table_version_checked(tmp_path):
    p = tmp_path / "t.json"
    p.write_text(json.dumps({"schema_version": 99, "scenarios": {}}))
    with pytest.raises(ValueError):
        load_scenario("UMa-LoS", path=p)


def test_unknown_scenario():
    with pytest.raises(ValueError):
        load_scenario("UMi-LoS")


def test_suppressed_sf_and_k(los):
    sc = los.suppressed(sf=True, k=True)
    geo = geo_between(BS, RIS)
    rng = np.random.default_rng(1)
    draws = [draw_large_scale(sc, geo, rng) for _ in range(200)]
    assert max(abs(d.sf_db) for d in draws) < 1e-8
    assert max(abs(d.k_db - 9.0) for d in draws) < 1e-8


def test_sf_mean(nlos):
    geo = geo_between(BS, UE)
    rng = np.random.default_rng(2)
    sf = np.array([draw_large_scale(nlos, geo, rng).sf_db for _ in range(10_000)])
    assert abs(sf.mean()) < 3 * nlos.sf_sigma_db / 100
    assert sf.std() == pytest.approx(nlos.sf_sigma_db, rel=0.05)


def test_spreads_positive_and_capped(los):
    geo = geo_between(BS, RIS)
    rng = np.random.default_rng(3)
    for _ in range(500):
        d = draw_large_scale(los, geo, rng)
        assert d.ds > 0 and min(d.asd, d.asa, d.zsd, d.zsa) > 0
        assert max(d.asd, d.asa) <= 104 and max(d.zsd, d.zsa) <= 52


def test_single_cluster_single_ray(los):
    sc = dataclasses.replace(los, n_clusters=1, rays_per_cluster=1)
    geo = geo_between(BS, RIS)
    rng = np.random.default_rng(4)
    cl = generate_clusters(draw_large_scale(sc, geo, rng), geo, sc, rng)
    assert cl.powers.tolist() == [1.0]
    assert cl.delays.tolist() == [0.0]


def test_cluster_invariants(nlos):
    geo = geo_between(BS, UE)
    rng = np.random.default_rng(5)
    for _ in range(50):
        cl = generate_clusters(draw_large_scale(nlos, geo, rng), geo, nlos, rng)
        assert abs(cl.powers.sum() - 1) < 1e-12
        assert cl.delays[0] == 0.0 and np.all(np.diff(cl.delays) >= 0)
        assert cl.phases.shape == (20, 20)


def test_ray_offsets_are_symmetric(los):
    geo = geo_between(BS, RIS)
    rng = np.random.default_rng(6)
    cl = generate_clusters(draw_large_scale(los, geo, rng), geo, los, rng)
    # each cluster uses every +-alpha offset exactly once
    np.testing.assert_allclose(np.sort(cl.aoa_offsets, axis=1).sum(axis=1), 0.0, atol=1e-12)
    np.testing.assert_allclose(np.abs(cl.aoa_offsets).max(axis=1), 2.1551 * 11 * np.pi / 180)


def test_cluster_azimuths_centered_on_los(los):
    o = Orientation.facing((1, 0, 0))
    geo = link_geometry(BS, o, RIS, Orientation((0, -1, 0), (0, 0, 1)))
    lss = LargeScaleSample(80.0, 0.0, 9.0, 1e-7, 10.0, 30.0, 3.0, 8.0)
    rng = np.random.default_rng(7)
    aoa = np.concatenate([generate_clusters(lss, geo, los, rng).aoa for _ in range(10_000)])
    circ = np.angle(np.mean(np.exp(1j * aoa)))
    assert circ == pytest.approx(geo.phi_a, abs=0.01)


def test_los_weight_negligible_at_minus_100_db(los):
    geo = geo_between(BS, RIS)
    tx, rx = ArraySpec(2, 2), ArraySpec(1, 2)
    rng = np.random.default_rng(8)
    lss0 = draw_large_scale(los, geo, rng)
    cl = generate_clusters(lss0, geo, los, rng)
    lss = dataclasses.replace(lss0, k_db=-100.0, sf_db=0.0)
    full = assemble_channel(cl, lss, geo, tx, rx, LAM).h
    no_los = assemble_channel(cl, dataclasses.replace(lss, k_db=-np.inf), geo, tx, rx, LAM).h
    # weight sqrt(K/(K+1)) ~ 1e-5 in amplitude
    assert np.linalg.norm(full - no_los) / np.linalg.norm(full) < 1e-4


def _sv_ratio(h):
    s = np.linalg.svd(h, compute_uv=False)
    return s[1] / s[0]


def test_rank_one_limit(los):
    geo = geo_between(BS, RIS)
    tx = ArraySpec(4, 4, orientation=Orientation.facing(RIS - BS))
    rx = ArraySpec(6, 6, orientation=Orientation.facing(BS - RIS))
    rng = np.random.default_rng(9)
    lss0 = draw_large_scale(los, geo, rng)
    cl = generate_clusters(lss0, geo, los, rng)
    h = assemble_channel(cl, dataclasses.replace(lss0, k_db=60.0), geo, tx, rx, LAM).h
    assert _sv_ratio(h) < 1e-2
    h_inf = assemble_channel(cl, dataclasses.replace(lss0, k_db=np.inf), geo, tx, rx, LAM).h
    assert _sv_ratio(h_inf) < 1e-12


@pytest.mark.parametrize("name", ["UMa-LoS", "UMa-NLoS"])
def test_normalization(name):
    sc = load_scenario(name, FC)
    geo = geo_between(BS, UE)
    tx, rx = ArraySpec(2, 2), ArraySpec(1, 4)
    rng = np.random.default_rng(10)
    ratios = []
    for _ in range(1000):
        lss = draw_large_scale(sc, geo, rng)
        cl = generate_clusters(lss, geo, sc, rng)
        h = assemble_channel(cl, lss, geo, tx, rx, LAM).h
        ratios.append(np.linalg.norm(h) ** 2 / (10 ** (-lss.beta_db / 10) * h.size))
    assert np.mean(ratios) == pytest.approx(1.0, rel=0.05)


def test_determinism(nlos):
    geo = geo_between(BS, UE)
    tx, rx = ArraySpec(4, 4), ArraySpec(1, 4)
    h1 = gbsm_channel(nlos, geo, tx, rx, LAM, np.random.default_rng([1, 2, 0])).h
    h2 = gbsm_channel(nlos, geo, tx, rx, LAM, np.random.default_rng([1, 2, 0])).h
    assert h1.tobytes() == h2.tobytes()


def test_channel_shape_and_metadata(los):
    geo = geo_between(BS, RIS)
    ch = gbsm_channel(los, geo, ArraySpec(4, 4), ArraySpec(3, 5), LAM, np.random.default_rng(0),
                      link="HA", drop=7)
    assert ch.shape == (15, 16)
    assert (ch.link, ch.model, ch.drop) == ("HA", "UMa-LoS", 7)


def test_channel_matrix_rejects_non_finite():
    with pytest.raises(ValueError):
        ChannelMatrix(np.array([[1.0, np.nan]]))


def _interdecile(x):
    return np.percentile(x, 90) - np.percentile(x, 10)


def test_disabling_sf_narrows_eigenvalue_spread(los):
    geo = geo_between(BS, RIS)
    tx, rx = ArraySpec(2, 2), ArraySpec(3, 3)
    out = []
    for sc in (los, los.suppressed(sf=True)):
        rng = np.random.default_rng(11)
        e = [np.linalg.norm(gbsm_channel(sc, geo, tx, rx, LAM, rng).h, 2) for _ in range(300)]
        out.append(_interdecile(20 * np.log10(e)))
    assert out[1] < out[0]


def test_suppressed_std_is_tiny():
    assert 0 < SUPPRESSED_STD < 1e-9
