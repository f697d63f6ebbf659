"""Split-field time stepper: differencing, boundary projection,
energy behaviour, recordings, transforms, and external formats."""

import csv
import warnings

import numpy as np
import pytest

from paulipml import timedomain as td
from paulipml.algebra import projector
from paulipml.errors import StabilityError, TruncationWarning
from paulipml.geometry import face_axis_sign, face_normal
from paulipml.stretching import AbsorptionProfile


@pytest.fixture
def grid(unit_box):
    return td.Grid(unit_box, (13, 13, 13))


def test_grid_validation(unit_box):
    with pytest.raises(ValueError):
        td.Grid(unit_box, (4, 13, 13))


def test_grid_metrics(grid):
    assert np.allclose(grid.spacing, 2.0 / 12.0)
    x = grid.mesh()
    assert x.shape == (3, 13, 13, 13)
    assert x[0, 0, 0, 0] == -1.0 and x[0, -1, 0, 0] == 1.0
    # norm of the constant field 1 is sqrt(volume) = sqrt(8)
    one = np.ones((2, 13, 13, 13)) / np.sqrt(2.0)
    assert grid.norm(one) == pytest.approx(np.sqrt(8.0))


def test_source_weights_must_sum_to_one(grid):
    spatial = np.zeros((2, 13, 13, 13))
    with pytest.raises(ValueError):
        td.SourceSpec(spatial, lambda t: 1.0, 1.0, weights=(0.5, 0.5, 0.5))


def test_gaussian_source_support_and_envelope(grid):
    src = td.gaussian_source(grid, width=0.2, t_off=1.0)
    x = grid.mesh()
    outside = np.any(np.abs(x) > 0.5 + 1e-12, axis=0)
    assert np.all(src.spatial[:, outside] == 0.0)
    assert np.max(np.abs(src.spatial)) > 0.0
    assert np.all(src(-0.1) == 0.0)
    assert np.all(src(1.5) == 0.0)
    assert np.allclose(src(0.5), src.spatial)  # sin^2(pi/2) = 1


def test_diff4_exact_on_quartics(grid):
    x = grid.axes[1]
    f = np.zeros((2, 13, 13, 13))
    f[:] = (x ** 4 - 2 * x ** 2 + 3 * x)[None, None, :, None]
    d = td.diff4(f, axis=2, h=grid.spacing[1])
    want = (4 * x ** 3 - 4 * x + 3)[None, None, :, None] * np.ones_like(f)
    assert np.allclose(d, want, atol=1e-10)


def test_apply_boundary_kills_incoming_trace(grid, rng):
    state = td.SplitState(rng.standard_normal((3, 2, 13, 13, 13))
                          + 1j * rng.standard_normal((3, 2, 13, 13, 13)))
    td.apply_boundary(state, grid)
    s = state.trace
    # interior face nodes satisfy pi^-(nu) s = 0 exactly; edge and corner
    # nodes are rewritten by whichever face the sweep visits last
    for k in range(1, 7):
        axis, sign = face_axis_sign(k)
        pim = projector(-1, face_normal(k))
        idx = [slice(1, -1)] * 3
        idx[axis] = -1 if sign > 0 else 0
        face = s[(slice(None),) + tuple(idx)]
        res = np.einsum("ab,b...->a...", pim, face)
        assert np.max(np.abs(res)) < 1e-12


def _energy(grid, state):
    return sum(grid.norm(state.U[j]) ** 2 for j in range(3))


def _run_energy(grid, profiles, T=3.0):
    cfg = td.SimConfig(grid, cfl=0.5, T=T, stride=4)
    src = td.gaussian_source(grid, width=0.15, t_off=1.0)
    rec = td.run(cfg, profiles, src)
    return rec


def test_energy_decays_after_source_off(grid, bump_profiles, zero_profiles):
    """The trace norm decays once the source stops, and absorption
    removes it faster than the bare outflow condition alone."""
    norms = {}
    for name, profs in (("abs", bump_profiles), ("bare", zero_profiles)):
        rec = _run_energy(grid, profs)
        times = np.asarray(rec.times)
        vals = np.array([grid.norm(s) for s in rec.traces])
        peak = vals[times <= 1.2].max()
        final = vals[-1]
        assert final < 0.5 * peak
        norms[name] = final
    assert norms["abs"] < norms["bare"]


def test_boundary_condition_holds_after_run(grid, bump_profiles):
    cfg = td.SimConfig(grid, cfl=0.5, T=1.5, stride=100, record_splits=True)
    src = td.gaussian_source(grid, width=0.15, t_off=1.0)
    rec = td.run(cfg, bump_profiles, src)
    state = td.SplitState(rec.splits[-1], rec.times[-1])
    s = state.trace
    worst = 0.0
    for k in range(1, 7):
        axis, sign = face_axis_sign(k)
        pim = projector(-1, face_normal(k))
        idx = [slice(None)] * 3
        idx[axis] = -1 if sign > 0 else 0
        face = s[(slice(None),) + tuple(idx)]
        worst = max(worst, np.max(np.abs(
            np.einsum("ab,b...->a...", pim, face))))
    assert worst < 1e-3  # edge nodes carry the sequential-face residual


def test_causality_probe(grid, zero_profiles):
    """A probe outside the light cone of the source support stays zero."""
    probe = (1.0, 1.0, 1.0)
    cfg = td.SimConfig(grid, cfl=0.5, T=0.2, probes=(probe,))
    src = td.gaussian_source(grid, width=0.1, t_off=1.0)
    rec = td.run(cfg, zero_profiles, src)
    series = rec.probe_series()
    # support radius 0.5 (inner box), distance to corner ~ sqrt(3)-? > 0.3
    assert np.max(np.abs(series)) < 1e-10


def test_stability_error_on_blowup(grid, zero_profiles):
    state = td.SplitState.zeros(grid)
    state.U[:] = 1.0
    huge_dt = 50.0 * np.min(grid.spacing)
    with pytest.raises(StabilityError):
        for _ in range(200):
            state = td.step(state, zero_profiles, None, huge_dt, grid)


def test_sigma_dt_warning(unit_box):
    grid = td.Grid(unit_box, (5, 5, 5))
    profs = tuple(AbsorptionProfile(a=0.5, b=1.0, sigma0=100.0)
                  for _ in range(3))
    cfg = td.SimConfig(grid, cfl=1.0, T=0.5)
    with pytest.warns(UserWarning, match="sigma0"):
        td.run(cfg, profs, None)


def test_simpson_weights_integrate_cubics():
    t = np.linspace(0.0, 2.0, 21)
    w = td._simpson_weights(t)
    assert np.dot(w, t ** 3) == pytest.approx(4.0)
    assert np.sum(w) == pytest.approx(2.0)


def test_laplace_of_trace_closed_form(grid):
    """For s(t, x) = e^{-t} g(x) the truncated transform is
    (1 - e^{-(tau+1) T}) / (tau + 1) * g."""
    rec = td.Recording(grid, dt=0.01)
    g = np.ones((2, 13, 13, 13), dtype=complex)
    T = 8.0
    for t in np.linspace(0.0, T, 801):
        rec.times.append(t)
        rec.traces.append(np.exp(-t) * g)
    tau = 1.5 + 0.5j
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        got = td.laplace_of_trace(rec, tau)
    want = (1 - np.exp(-(tau + 1) * T)) / (tau + 1)
    assert np.allclose(got, want * g, atol=1e-9)


def test_laplace_truncation_warning(grid):
    rec = td.Recording(grid, dt=0.01)
    g = np.ones((2, 13, 13, 13), dtype=complex)
    for t in np.linspace(0.0, 0.5, 51):  # trace has not decayed by T
        rec.times.append(t)
        rec.traces.append(g.copy())
    with pytest.warns(TruncationWarning):
        td.laplace_of_trace(rec, 0.5)


def test_weighted_norms_with_splits(grid, bump_profiles):
    cfg = td.SimConfig(grid, cfl=0.5, T=1.0, stride=2, record_splits=True)
    src = td.gaussian_source(grid, width=0.15, t_off=0.5)
    rec = td.run(cfg, bump_profiles, src)
    out = td.weighted_norms(rec, lam=1.0)
    assert out["volume"] > 0
    assert out["boundary"] >= 0
    assert np.isfinite(out["dual"]) and out["dual"] > 0
    # a larger weight shrinks every norm
    out2 = td.weighted_norms(rec, lam=2.0)
    assert out2["volume"] < out["volume"]


def test_weighted_norms_without_splits(grid, bump_profiles):
    cfg = td.SimConfig(grid, cfl=0.5, T=0.5, stride=2)
    rec = td.run(cfg, bump_profiles, td.gaussian_source(grid, t_off=0.5))
    out = td.weighted_norms(rec, lam=1.0)
    assert np.isnan(out["dual"])


def test_snapshot_round_trip(tmp_path, rng):
    field = (rng.standard_normal((2, 4, 5, 6))
             + 1j * rng.standard_normal((2, 4, 5, 6)))
    path = tmp_path / "snap.bin"
    td.write_snapshot(path, field, (0.1, 0.2, 0.3), 1.25)
    back, spacing, t = td.read_snapshot(path)
    assert np.array_equal(back, field)
    assert spacing == (0.1, 0.2, 0.3)
    assert t == 1.25


def test_snapshot_layout_is_component_major_x_fastest(tmp_path):
    field = np.zeros((2, 2, 2, 2), dtype=complex)
    field[0, 1, 0, 0] = 3.0 + 4.0j  # second x-node of the first component
    path = tmp_path / "snap.bin"
    td.write_snapshot(path, field, (1, 1, 1), 0.0)
    raw = np.fromfile(path, dtype="<f8")
    assert raw[2] == 3.0 and raw[3] == 4.0
    hdr = (tmp_path / "snap.bin.hdr").read_text()
    assert "component-major x-fastest re,im float64 le" in hdr


def test_probe_csv(tmp_path, grid, zero_profiles):
    cfg = td.SimConfig(grid, cfl=0.5, T=0.2,
                       probes=((0.0, 0.0, 0.0), (0.5, 0.0, 0.0)))
    rec = td.run(cfg, zero_profiles, td.gaussian_source(grid, t_off=1.0))
    path = tmp_path / "probes.csv"
    td.write_probes(path, rec)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t",
                       "re_u1_p0", "im_u1_p0", "re_u2_p0", "im_u2_p0",
                       "re_u1_p1", "im_u1_p1", "re_u2_p1", "im_u2_p1"]
    assert len(rows) - 1 == len(rec.probe_times)
    assert float(rows[1][0]) == 0.0
