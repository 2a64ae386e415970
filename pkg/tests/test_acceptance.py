"""Acceptance gate: one test per shipping criterion, run with `pytest -v`.

Each test is self-contained and asserts the criterion at its stated
tolerance.  The synthetic end-to-end criteria (5, 7, 8) share the
session-scoped trained model from conftest so the 200-epoch fixture is
paid for once.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import make_fixture_centers, random_image
from test_backbone import projection_loss_and_grads
from test_lut import oracle_1d, oracle_3d
from test_skintone import silhouette_oracle
from toneguide import backbone, cli, engine, lut, mos, skintone, trainer
from toneguide.color import (
    ImageBuffer,
    RgbPixel,
    lab_array_to_srgb,
    save_png,
    srgb_array_to_lab,
    srgb_to_lab,
)


def rel_err(fd: float, analytic: float) -> float:
    denom = max(abs(fd), abs(analytic))
    if denom == 0.0:
        return 0.0
    return abs(fd - analytic) / denom


def mean_b(img: ImageBuffer) -> float:
    return float(srgb_array_to_lab(img.data.astype(np.float64))[..., 2].mean())


def mean_abs_per_channel(a: ImageBuffer, b: ImageBuffer) -> np.ndarray:
    return np.abs(a.data.astype(np.float64) - b.data.astype(np.float64)).mean(axis=(0, 1))


def user_set_loss(ckpt: trainer.ModelCheckpoint, samples) -> float:
    """Mean reconstruction MSE of the checkpoint on a list of samples."""
    config = trainer.config_from_checkpoint(ckpt)
    total = 0.0
    for s in samples:
        cache = trainer.make_cache(s, config)
        out, _ = trainer.apply_chain(
            ckpt.params, ckpt.bank, cache.planes, cache.lab_n, config.use_1d_luts
        )
        total += float(((out - cache.target) ** 2).mean())
    return total / len(samples)


def test_criterion_01_gradient_fidelity():
    start = time.monotonic()
    rng = np.random.default_rng(11)
    instances = 0

    def check(flat, gflat, coords, loss_fn, tol):
        for k in coords:
            h = 1e-6 * max(1.0, abs(flat[k]))
            orig = flat[k]
            flat[k] = orig + h
            up = loss_fn()
            flat[k] = orig - h
            down = loss_fn()
            flat[k] = orig
            fd = (up - down) / (2.0 * h)
            assert rel_err(fd, gflat[k]) < tol, (fd, gflat[k])

    # 1D application: entry and input gradients, float64
    for _ in range(15):
        size = int(rng.integers(4, 34))
        entries = rng.normal(0.0, 1.0, size)
        xs = rng.uniform(0.02, 0.98, 6)
        proj = rng.normal(0.0, 1.0, 6)
        loss = lambda: float(np.sum(proj * lut.apply_1d(lut.Lut1D(entries), xs)))
        g_e, g_x = lut.apply_1d_backward(lut.Lut1D(entries), xs, proj)
        check(entries, g_e, rng.choice(size, 3, replace=False), loss, 1e-5)
        check(xs, g_x, [0, 3], loss, 1e-5)
        instances += 1

    # 3D application: grid and input gradients, float64
    for _ in range(15):
        dim = int(rng.integers(2, 6))
        grid = rng.normal(0.0, 0.5, (dim, dim, dim, 3))
        rgb = rng.uniform(0.02, 0.98, (4, 3))
        proj = rng.normal(0.0, 1.0, (4, 3))
        loss = lambda: float(np.sum(proj * lut.apply_3d(lut.Lut3D(grid), rgb, clamp=True)))
        g_grid, g_rgb = lut.apply_3d_backward(lut.Lut3D(grid), rgb, proj, clamp=True)
        gg = g_grid.reshape(-1)
        check(grid.reshape(-1), gg, rng.choice(grid.size, 3, replace=False), loss, 1e-5)
        check(rgb.reshape(-1), g_rgb.reshape(-1), [0, 5], loss, 1e-5)
        instances += 1

    # basis fusion: bank and weight gradients
    for _ in range(10):
        dim = int(rng.integers(3, 6))
        bank = lut.BasisLutBank.initial(count=3, dim=dim)
        bank.grids += rng.normal(0.0, 0.1, bank.grids.shape)
        w = rng.normal(0.0, 1.0, 3)
        proj = rng.normal(0.0, 1.0, (dim, dim, dim, 3))
        loss = lambda: float(np.sum(proj * lut.fuse(bank, w).grid))
        g_bank, g_w = lut.fuse_backward(bank, w, proj)
        check(
            bank.grids.reshape(-1),
            g_bank.reshape(-1),
            rng.choice(bank.grids.size, 3, replace=False),
            loss,
            1e-5,
        )
        check(w, g_w, [0, 1, 2], loss, 1e-5)
        instances += 1

    # smoothness and monotonicity penalties, 1D and 3D
    for _ in range(10):
        size = int(rng.integers(5, 18))
        entries = rng.normal(0.0, 1.0, size)
        loss_1d = lambda: lut.smoothness_penalty(lut.Lut1D(entries)) + lut.monotonicity_penalty(
            lut.Lut1D(entries)
        )
        g = lut.smoothness_backward_1d(entries) + lut.monotonicity_backward_1d(entries)
        check(entries, g, rng.choice(size, 4, replace=False), loss_1d, 1e-5)
        grid = rng.normal(0.0, 0.5, (3, 3, 3, 3))
        loss_3d = lambda: lut.smoothness_penalty(lut.Lut3D(grid)) + lut.monotonicity_penalty(
            lut.Lut3D(grid)
        )
        g3 = lut.smoothness_backward_3d(grid) + lut.monotonicity_backward_3d(grid)
        check(grid.reshape(-1), g3.reshape(-1), rng.choice(grid.size, 3, replace=False), loss_3d, 1e-5)
        instances += 1

    assert instances >= 50

    # full network in single precision: the float32 analytic gradients are
    # checked against a float64 finite-difference reference of the same
    # parameters (float32 central differences sit below the rounding floor)
    arch = backbone.BackboneConfig(
        in_channels=5, widths=(4, 6, 8, 8, 8), head_hidden=10, lut_bins=7
    )
    for seed in range(5):
        params32 = backbone.init_params(arch, seed=seed)
        nrng = np.random.default_rng(100 + seed)
        for name in ("g1d.w2", "g3d.w2"):
            params32.arrays[name] += (
                0.05 * nrng.standard_normal(params32.arrays[name].shape)
            ).astype(np.float32)
        planes32 = nrng.random((5, 32, 32)).astype(np.float32)
        proj_lut = nrng.standard_normal((3, arch.lut_bins))
        proj_w = nrng.standard_normal(arch.basis_count)
        assert all(a.dtype == np.float32 for a in params32.arrays.values())
        _, grads32 = projection_loss_and_grads(params32, planes32, proj_lut, proj_w)

        params64 = backbone.NetParams(
            arch, {n: a.astype(np.float64) for n, a in params32.arrays.items()}
        )
        planes64 = planes32.astype(np.float64)
        checked = 0
        for name in params32.names():
            # pre-norm conv biases cancel inside instance norm: their true
            # gradient is zero, so a relative-error check is undefined there
            if name.startswith("conv") and name.endswith(".b"):
                continue
            flat = params64.arrays[name].ravel()
            gflat = grads32[name].ravel()
            for k in nrng.choice(flat.size, size=min(4, flat.size), replace=False):
                h = 1e-6 * max(1.0, abs(flat[k]))
                orig = flat[k]
                flat[k] = orig + h
                up, _ = projection_loss_and_grads(params64, planes64, proj_lut, proj_w)
                flat[k] = orig - h
                down, _ = projection_loss_and_grads(params64, planes64, proj_lut, proj_w)
                flat[k] = orig
                fd = (up - down) / (2.0 * h)
                assert abs(fd - gflat[k]) < 1e-6 + 1e-3 * max(abs(fd), abs(gflat[k])), (
                    name,
                    fd,
                    gflat[k],
                )
                checked += 1
        assert checked >= 10

    assert time.monotonic() - start < 60.0


def test_criterion_02_interpolation_oracle():
    rng = np.random.default_rng(22)
    for _ in range(500):
        size = int(rng.integers(2, 34))
        entries = rng.normal(0.0, 1.0, size)
        curve = lut.Lut1D(entries)
        xs = rng.uniform(-0.2, 1.2, 5)
        got = lut.apply_1d(curve, xs)
        want = np.array([oracle_1d(entries, float(x)) for x in xs])
        assert np.abs(got - want).max() < 1e-6

    for _ in range(500):
        dim = int(rng.integers(2, 7))
        grid = rng.normal(0.0, 1.0, (dim, dim, dim, 3))
        cube = lut.Lut3D(grid)
        rgb = rng.uniform(0.0, 1.0, (3, 3))
        # the output clamp is the enhancement chain's job, not interpolation's
        got = lut.apply_3d(cube, rgb, clamp=False)
        want = np.stack([oracle_3d(grid, p) for p in rgb])
        assert np.abs(got - want).max() < 1e-6

    # lattice exactness, bit-wise in double precision
    for size in (2, 3, 5, 9, 17, 33):
        entries = rng.normal(0.0, 1.0, size)
        xs = np.linspace(0.0, 1.0, size)
        assert np.array_equal(lut.apply_1d(lut.Lut1D(entries), xs), entries)
    for dim in (2, 3, 4, 5):
        grid = rng.normal(0.0, 1.0, (dim, dim, dim, 3))
        axis = np.linspace(0.0, 1.0, dim)
        rr, gg, bb = np.meshgrid(axis, axis, axis, indexing="ij")
        pts = np.stack([rr, gg, bb], axis=-1)
        got = lut.apply_3d(lut.Lut3D(grid), pts, clamp=False)
        assert np.array_equal(got, grid.transpose(2, 1, 0, 3))


def test_criterion_03_colorspace_round_trip():
    rng = np.random.default_rng(33)
    rgb = rng.uniform(0.0, 1.0, (10_000, 3))
    back = lab_array_to_srgb(srgb_array_to_lab(rgb))
    assert np.abs(back - rgb).max() < 1e-4

    white = srgb_to_lab(RgbPixel(1.0, 1.0, 1.0))
    assert abs(white.l - 100.0) < 1e-3 and abs(white.a) < 1e-3 and abs(white.b) < 1e-3
    black = srgb_to_lab(RgbPixel(0.0, 0.0, 0.0))
    assert black.l == 0.0 and black.a == 0.0 and black.b == 0.0
    grays = np.linspace(0.0, 1.0, 64)[:, None].repeat(3, axis=1)
    lab = srgb_array_to_lab(grays)
    assert np.abs(lab[:, 1:]).max() < 1e-3
    assert np.abs(lab_array_to_srgb(lab) - grays).max() < 1e-4


def test_criterion_04_mos_pipeline():
    table = mos.RatingTable(
        [
            mos.RatingRecord("s0", "img_low", -1.0),
            mos.RatingRecord("s0", "img_mid", 0.0),
            mos.RatingRecord("s0", "img_high", 1.0),
        ]
    )
    result = mos.process_ratings(table)
    assert round(result.entries["img_low"].mos, 3) == 29.588

    def random_table(rng) -> mos.RatingTable:
        n_subjects = int(rng.integers(3, 7))
        n_images = int(rng.integers(3, 7))
        records = []
        for s in range(n_subjects):
            # headroom: a +-1 shift or 0.2..1 scale must stay inside the scale
            values = rng.uniform(-1.2, 1.2, n_images)
            values[0] += 0.3  # keep subject variance nonzero
            for i in range(n_images):
                records.append(mos.RatingRecord(f"s{s}", f"i{i}", float(values[i])))
        return mos.RatingTable(records)

    rng = np.random.default_rng(44)
    for _ in range(100):
        table = random_table(rng)
        base = mos.compute_mos(table)
        shift = float(rng.uniform(-1.0, 1.0))
        scale = float(rng.uniform(0.2, 1.0))
        shifted = mos.RatingTable(
            [
                mos.RatingRecord(
                    r.subject_id, r.image_id, r.rating + (shift if r.subject_id == "s0" else 0.0)
                )
                for r in table.records
            ]
        )
        scaled = mos.RatingTable(
            [
                mos.RatingRecord(
                    r.subject_id, r.image_id, r.rating * (scale if r.subject_id == "s1" else 1.0)
                )
                for r in table.records
            ]
        )
        for variant in (shifted, scaled):
            other = mos.compute_mos(variant)
            for image_id, entry in base.items():
                assert abs(other[image_id].mos - entry.mos) < 1e-9

    # subject rejection boundary: the rule is strictly greater than 5%
    records = [
        mos.RatingRecord("busy", f"i{k}", float(np.sin(k) * 2.0)) for k in range(100)
    ]
    records += [mos.RatingRecord("other", "i0", 1.0), mos.RatingRecord("other", "i1", -1.0)]
    table = mos.RatingTable(records)
    at_5 = [("busy", f"i{k}") for k in range(5)]
    retained, rejected = mos.reject_subjects(table, at_5)
    assert rejected == []
    assert sum(r.subject_id == "busy" for r in retained.records) == 95
    _, rejected = mos.reject_subjects(table, at_5 + [("busy", "i5")])
    assert rejected == ["busy"]


def test_criterion_05_synthetic_end_to_end(synthetic_model):
    model = synthetic_model
    assert model.train_seconds < 600.0

    log = model.log
    assert log[-1].lr_term <= 0.2 * log[0].lr_term

    scores = [-1.0, -0.5, 0.0, 0.5, 1.0]
    outs = {
        s: engine.enhance(model.checkpoint, engine.EnhanceRequest(model.heldout, s))
        for s in scores
    }
    bs = [mean_b(outs[s]) for s in scores]
    diffs = np.diff(bs)
    inversions = [float(d) for d in diffs if d < 0]
    b_range = max(bs) - min(bs)
    assert b_range > 0
    assert len(inversions) <= 1
    if inversions:
        assert max(-d for d in inversions) < 0.1 * b_range

    identity_dev = mean_abs_per_channel(outs[0.0], model.heldout)
    assert identity_dev.max() < 0.02


def test_criterion_06_ablation_flags():
    # Two clusters share the same raw images but pull in opposite b directions;
    # the label is the only input that can tell them apart.  A label-blind model
    # sees contradictory targets for identical (image, score) pairs and can only
    # fit their mean, so its inter-score output spread collapses.
    base = trainer.TrainConfig(epochs=120, lr=3e-4, lut_bins=17, lut_dim=9, cond_size=64, seed=7)

    raws = [random_image(seed) for seed in (300, 301)]
    samples = []
    for raw in raws:
        for score in (-1.0, -0.5, 0.5, 1.0):
            up = trainer.synth_perturb(raw, 0.0, 20.0 * score)
            down = trainer.synth_perturb(raw, 0.0, -20.0 * score)
            samples.append(trainer.Sample(raw=raw, target=up, score=score, label=2))
            samples.append(trainer.Sample(raw=raw, target=down, score=score, label=9))
    centers = make_fixture_centers(raws)

    def cluster_spreads(ckpt: trainer.ModelCheckpoint) -> dict:
        spreads = {}
        for label in (2, 9):
            deltas = []
            for raw in raws:
                hi = engine.enhance(ckpt, engine.EnhanceRequest(raw, 1.0, label=label))
                lo = engine.enhance(ckpt, engine.EnhanceRequest(raw, -1.0, label=label))
                deltas.append(mean_b(hi) - mean_b(lo))
            spreads[label] = float(np.mean(deltas))
        return spreads

    on = trainer.train(samples, base, centers=centers)
    spread_on = cluster_spreads(on.checkpoint)
    off = trainer.train(samples, replace(base, use_label=False), centers=centers)
    spread_off = cluster_spreads(off.checkpoint)

    # labels-on learns both directions; measured ~+29.3 / -29.7 vs ~0.14 off
    assert spread_on[2] > 0.0 > spread_on[9]
    for label in (2, 9):
        assert abs(spread_off[label]) < abs(spread_on[label])

    # 1D stage off: training still converges on a single-direction subset
    label2 = [s for s in samples if s.label == 2]
    no1d = trainer.train(label2, replace(base, use_1d_luts=False), centers=centers)
    assert no1d.log[-1].lr_term < no1d.log[0].lr_term


def test_criterion_07_finetuning(synthetic_model):
    # The user wants every rendition shifted +10 along b relative to what the
    # general model already produces.  Warm-started fine-tuning only has to
    # learn that constant offset; a from-scratch model has to rebuild the whole
    # score-conditioned mapping and stays well above the fine-tuned loss.
    ckpt = synthetic_model.checkpoint
    user_samples = []
    for i in range(2):
        raw = random_image(2000 + i)
        label = engine.resolve_label(ckpt, raw)
        for s in (-0.5, 0.0, 0.5):
            rendered = engine.enhance(ckpt, engine.EnhanceRequest(raw, s, label=label))
            target = trainer.synth_perturb(rendered, 0.0, 10.0)
            user_samples.append(trainer.Sample(raw=raw, target=target, score=s, label=label))

    pre = user_set_loss(ckpt, user_samples)
    tuned = trainer.finetune(ckpt, user_samples, epochs=10, lr=1e-4, seed=0)
    post = user_set_loss(tuned.checkpoint, user_samples)
    # measured: pre 2.86e-3, post 7.80e-4 (ratio 0.27)
    assert post <= 0.5 * pre

    # from-scratch training never dips below the finetuned loss within 5x the
    # epochs, even at a higher learning rate (measured floor ~1.6e-3)
    scratch_config = trainer.config_from_checkpoint(ckpt, epochs=50, lr=3e-4, seed=0)
    scratch = trainer.train(user_samples, scratch_config, centers=ckpt.centers)
    assert min(row.lr_term for row in scratch.log) > post


def test_criterion_08_multi_round(synthetic_model):
    identity_ckpt = trainer.initialize_checkpoint(trainer.TrainConfig(epochs=1, seed=0))
    img = random_image(888)
    out = engine.enhance(identity_ckpt, engine.EnhanceRequest(img, 0.0, label=5, rounds=2))
    assert mean_abs_per_channel(out, img).max() < 2e-3

    ckpt = synthetic_model.checkpoint
    raw = synthetic_model.raws[0]
    r1 = engine.enhance(ckpt, engine.EnhanceRequest(raw, 1.0))
    r2 = engine.enhance(ckpt, engine.EnhanceRequest(r1, 1.0))
    mag1 = float(np.abs(r1.data.astype(np.float64) - raw.data).mean())
    mag2 = float(np.abs(r2.data.astype(np.float64) - r1.data).mean())
    assert mag2 <= mag1


def test_criterion_09_kmeans_silhouette():
    rng = np.random.default_rng(99)
    true_centers = np.array([[30.0, 5.0, 5.0], [60.0, 10.0, -10.0], [80.0, -5.0, 15.0]])
    points = np.concatenate(
        [c + rng.normal(0.0, 0.1, (60, 3)) for c in true_centers]
    )
    found = skintone.kmeans_lab(points, k=3, seed=0)
    for c in true_centers:
        nearest = np.linalg.norm(found.lab - c, axis=1).min()
        assert nearest < 0.5

    labels = np.array([skintone.classify(p, found) for p in points])
    assert skintone.silhouette(points, labels) > 0.8

    for i in range(20):
        n = int(rng.integers(8, 25))
        pts = rng.normal(0.0, 5.0, (n, 3))
        k = int(rng.integers(2, 5))
        labels = rng.integers(0, k, n)
        labels[:k] = np.arange(k)  # every cluster nonempty
        got = skintone.silhouette(pts, labels)
        assert abs(got - silhouette_oracle(pts, labels)) < 1e-9


def test_criterion_10_determinism_and_persistence(tmp_path):
    config = trainer.TrainConfig(epochs=3, seed=5, lut_bins=7, lut_dim=5, cond_size=32)
    samples = []
    for i in range(3):
        raw = random_image(600 + i, 8, 8)
        samples.append(
            trainer.Sample(raw=raw, target=trainer.synth_perturb(raw, 0.0, 8.0), score=0.4, label=4)
        )
    a = trainer.train(samples, config)
    b = trainer.train(samples, config)
    for name in a.checkpoint.params.arrays:
        assert np.array_equal(a.checkpoint.params.arrays[name], b.checkpoint.params.arrays[name])
    assert np.array_equal(a.checkpoint.bank.grids, b.checkpoint.bank.grids)

    path_a, path_b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    trainer.save_checkpoint(a.checkpoint, path_a)
    trainer.save_checkpoint(b.checkpoint, path_b)
    assert path_a.read_bytes() == path_b.read_bytes()
    loaded = trainer.load_checkpoint(path_a)
    for name in a.checkpoint.params.arrays:
        assert np.array_equal(loaded.params.arrays[name], a.checkpoint.params.arrays[name])
    assert np.array_equal(loaded.bank.grids, a.checkpoint.bank.grids)

    # CLI stability across runs: enhance, mos, cluster
    src = tmp_path / "in.png"
    save_png(samples[0].raw, src)
    outs = []
    for tag in ("x", "y"):
        out = tmp_path / f"enh_{tag}.png"
        rc = cli.main([
            "enhance", "--model", str(path_a), "--in", str(src), "--out", str(out),
            "--score", "0.7", "--label", "4",
        ])
        assert rc == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]

    ratings = tmp_path / "ratings.csv"
    ratings.write_text(
        "subject_id,image_id,rating\ns0,i0,-1.0\ns0,i1,0.0\ns0,i2,1.0\n"
    )
    mos_outs = []
    for tag in ("x", "y"):
        out = tmp_path / f"mos_{tag}.csv"
        assert cli.main(["mos", "--ratings", str(ratings), "--out", str(out)]) == 0
        mos_outs.append(out.read_bytes())
    assert mos_outs[0] == mos_outs[1]

    points = tmp_path / "points.csv"
    rng = np.random.default_rng(0)
    lines = ["L,a,b"]
    for i, l_val in enumerate(np.linspace(20, 90, 10)):
        for _ in range(4):
            p = np.array([l_val, 10.0 + 2 * i, 15.0 - 2 * i]) + rng.normal(0, 0.01, 3)
            lines.append(",".join(repr(float(v)) for v in p))
    points.write_text("\n".join(lines) + "\n")
    cluster_outs = []
    for tag in ("x", "y"):
        out = tmp_path / f"centers_{tag}.txt"
        assert cli.main(["cluster", "--points", str(points), "--out", str(out)]) == 0
        cluster_outs.append(out.read_bytes())
    assert cluster_outs[0] == cluster_outs[1]
