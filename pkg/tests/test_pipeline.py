import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from skimage.metrics import structural_similarity

from motiongraph.errors import ConfigurationError, DimensionError, DivergenceError, InputError
from motiongraph.numerics import no_grad
from motiongraph.numerics.tensor import Tape, Tensor, backward
from motiongraph.pipeline.bench import bench_memory, parse_size
from motiongraph.pipeline.checkpoint import load_checkpoint, save_checkpoint
from motiongraph.pipeline.config import format_config, parse_config, preset
from motiongraph.pipeline.metrics import loss, psnr, ssim
from motiongraph.pipeline.model import Model, forward, init_params, summary
from motiongraph.pipeline.synthetic import make_scene, oracle_field, translating_squares
from motiongraph.pipeline.train import smoothed, train
from motiongraph.warp import forward_warp


def toy(**changes):
    return preset("toy").replace(**changes)


# -- configuration ----------------------------------------------------------------

def test_parse_config_with_comments_and_preset():
    cfg = parse_config("preset = toy\n# a comment\nk = 3   # trailing\nloss = l1\n"
                       "spatial_on = false\n")
    assert (cfg.H, cfg.k, cfg.loss, cfg.spatial_on) == (16, 3, "l1", False)


def test_format_round_trips():
    cfg = toy(gamma=0.25, backward_on=False)
    assert parse_config(format_config(cfg)) == cfg


@pytest.mark.parametrize("text, key", [
    ("colour = 3", "colour"),
    ("k = three", "k"),
    ("H = 15\nM = 2", "divisible"),
    ("preset = toy\nk = 16", "k="),
    ("loss = perceptual", "loss"),
    ("k = 2\npreset = toy", "preset"),
    ("just words", "key = value"),
    ("T_out = 3", "T_out"),
])
def test_bad_configs_name_the_problem(text, key):
    with pytest.raises(ConfigurationError, match=key):
        parse_config(text)


def test_unknown_preset():
    with pytest.raises(ConfigurationError):
        preset("imagenet")


def test_dataset_defaults():
    ucf, kitti, city = preset("ucf"), preset("kitti"), preset("cityscapes")
    assert (ucf.grid, ucf.k_graph, ucf.d_tf, ucf.d_lf, ucf.M) == ((32, 32), 10, 16, 4, 4)
    assert (kitti.grid, kitti.k_graph, kitti.d_tf) == ((16, 52), 8, 32)
    assert (city.grid, city.k_graph, city.d_tf) == ((32, 64), 10, 32)
    assert ucf.displacement_bound == 64.0
    assert ucf.k_out == ucf.k_graph


def test_location_toggle_shrinks_nodes_by_the_location_width():
    on, off = toy(), toy(location_feature_on=False)
    assert on.d_node - off.d_node == on.d_lf
    with no_grad():
        feats = forward(np.zeros((4, 16, 16, 3)), init_params(off), off).features
    assert feats[0].shape[-1] == off.d_tf


# -- losses and metrics -----------------------------------------------------------

def test_loss_values():
    a = np.random.default_rng(0).random((4, 4, 3))
    for kind in ("mse", "l1"):
        assert loss(Tensor(a), a, kind).item() == 0.0
    assert loss(Tensor(a + 0.5), a, "mse").item() == pytest.approx(0.25)
    assert loss(Tensor(a + 0.5), a, "l1").item() == pytest.approx(0.5)
    with pytest.raises(DimensionError):
        loss(Tensor(a), a[:2])
    with pytest.raises(ValueError):
        loss(Tensor(a), a, "huber")


def test_mse_gradient_is_two_r_over_n():
    rng = np.random.default_rng(1)
    pred, target = rng.random((3, 5)), rng.random((3, 5))
    x = Tensor(pred, requires_grad=True)
    with Tape():
        backward(loss(x, target))
    np.testing.assert_allclose(x.grad, 2 * (pred - target) / pred.size, atol=1e-15)


def test_psnr():
    a = np.full((4, 4, 3), 0.5)
    assert psnr(a, a) == math.inf
    assert psnr(a, a + 0.1) == pytest.approx(20.0)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000), size=st.sampled_from([16, 23, 32]))
def test_ssim_matches_scikit_image(seed, size):
    rng = np.random.default_rng(seed)
    a = rng.random((size, size, 3))
    b = np.clip(a + 0.2 * rng.standard_normal(a.shape), 0, 1)
    ref = structural_similarity(a, b, data_range=1.0, channel_axis=-1, gaussian_weights=True,
                                sigma=1.5, use_sample_covariance=False)
    assert ssim(a, b) == pytest.approx(ref, abs=1e-10)


def test_ssim_identity_and_negative():
    a = np.random.default_rng(2).random((20, 20, 3))
    assert ssim(a, a) == pytest.approx(1.0)
    assert ssim(a, 1 - a) <= 0


# -- synthetic scenes -------------------------------------------------------------

def scene(sprites, T=5, H=16, W=16, background="constant"):
    return make_scene({"height": H, "width": W, "frames": T, "background": background,
                       "sprites": sprites})


def test_static_sprite():
    sc = scene([{"size": 4, "color": [1, 0, 0], "position": [3, 5]}], background="checker")
    assert all(np.array_equal(f, sc.frames[0]) for f in sc.frames)
    assert not sc.displacement.any()


def test_linear_motion():
    sc = scene([{"size": 3, "color": [1, 1, 1], "position": [1, 2], "velocity": [2, 1]}])

    def centroid(t):
        ys, xs = np.nonzero(sc.owner[t] == 0)
        return xs.mean(), ys.mean()

    x0, y0 = centroid(0)
    x4, y4 = centroid(4)
    assert (x4 - x0, y4 - y0) == (8, 4)
    assert np.all(sc.displacement[sc.owner[:-1] == 0] == [2, 1])


def test_later_sprites_cover_earlier_ones():
    red = {"size": 4, "color": [1, 0, 0], "position": [0, 6], "velocity": [2, 0]}
    blue = {"size": 4, "color": [0, 0, 1], "position": [12, 6], "velocity": [-2, 0]}
    sc = scene([red, blue])
    under = np.stack([sc.sprites[0].coverage(t, 16, 16) == 1 for t in range(5)])
    overlap = under & (sc.owner == 1)
    assert overlap.any()
    assert np.all(sc.frames[overlap] == [0.0, 0.0, 1.0])


@pytest.mark.parametrize("bad", [
    {"size": 4, "color": [1, 0, 0], "position": [14, 0]},
    {"size": 4, "color": [1, 0, 0], "position": [0, 0], "velocity": [0.3, 0]},
    {"size": 4, "color": [1, 0], "position": [0, 0]},
    {"shape": "star", "size": 4, "color": [1, 0, 0], "position": [0, 0]},
])
def test_bad_sprites_are_rejected(bad):
    with pytest.raises(InputError):
        scene([bad])


def test_oracle_field_predicts_the_next_frame():
    sc = translating_squares(1, 16, 16, 5, seed=3, velocity=(1, 0), background="constant")[0]
    P = oracle_field(sc, 0, 4)
    with no_grad():
        pred = forward_warp(sc.frames[:4], P).data
    # background first uncovered at the target time has no source and takes the fallback
    seen = (sc.owner[4] >= 0) | (sc.owner[:4] == -1).any(axis=0)
    assert (~seen).any()
    assert np.abs(pred - sc.frames[4])[seen].max() < 1e-6


# -- model ------------------------------------------------------------------------

def test_forward_extents_and_determinism():
    cfg = toy(k_decode=3)
    frames = np.random.default_rng(0).random((4, 16, 16, 3))
    with no_grad():
        a = forward(frames, init_params(cfg), cfg)
        b = forward(frames, init_params(cfg), cfg)
    assert a.prediction.shape == (16, 16, 3)
    assert a.field.shape == (4, 16, 16, 3, 3)
    assert np.array_equal(a.prediction.data, b.prediction.data)
    assert np.array_equal(a.field.data, b.field.data)


def test_wrong_frame_extents():
    cfg = toy()
    with pytest.raises(DimensionError):
        Model(cfg).predict(np.zeros((3, 16, 16, 3)))


def test_backward_toggle_removes_exactly_the_backward_blocks():
    frames = np.random.default_rng(1).random((4, 16, 16, 3))
    with no_grad():
        on = forward(frames, init_params(toy()), toy()).trace
        off_cfg = toy(backward_on=False)
        off = forward(frames, init_params(off_cfg), off_cfg).trace
    assert len(on) == 2 * 12
    assert [b for b in on if b != "backward"] == off


def test_every_parameter_gets_a_finite_gradient():
    cfg = toy()
    params = init_params(cfg)
    rng = np.random.default_rng(2)
    with Tape():
        out = forward(rng.random((4, 16, 16, 3)), params, cfg)
        backward(loss(out.prediction, rng.random((16, 16, 3))))
    for name, p in params.items():
        assert p.grad is not None and np.isfinite(p.grad).all(), name
        assert np.abs(p.grad).max() > 0, name


def test_parameter_counts_are_stable():
    a, b = summary(preset("ucf")), summary(preset("ucf"))
    assert a == b
    assert Model(preset("ucf")).parameter_count() == 134_734
    assert "total" in a


# -- training ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def clips():
    return translating_squares(3, 16, 16, 6, seed=0, velocity=(1, 0), background="constant")


def test_training_is_deterministic(clips):
    a = train(clips, toy(), 6).history
    b = train(clips, toy(), 6).history
    c = train(clips, toy(seed=1), 6).history
    assert a == b
    assert a != c


def test_zero_learning_rate_freezes_the_loss(clips):
    cfg = toy()
    scenes = [clips[0]] * 1
    # one window per scene of 5 frames, so every step sees the same sample
    short = [type(clips[0])(s.height, s.width, s.frames[:5], s.displacement[:4], s.owner[:5],
                            s.sprites, s.background) for s in scenes]
    hist = train(short, cfg, 4, base_lr=0.0, final_lr=0.0, weight_decay=0.0).history
    assert len(set(hist)) == 1


def test_non_finite_parameters_abort_with_their_group(clips):
    cfg = toy()
    params = init_params(cfg)
    w = params["fusion.fc1.weight"].data.copy()
    w[0, 0] = np.nan
    params["fusion.fc1.weight"].assign(w)
    with pytest.raises(DivergenceError, match="fusion") as info:
        train(clips, cfg, 2, params=params)
    assert info.value.group == "fusion"


def test_static_scenes_are_learned():
    still = translating_squares(4, 16, 16, 5, seed=5, velocity=(0, 0), background="smooth")
    cfg = toy()
    params = train(still, cfg, 60, base_lr=1e-2).params
    model = Model(cfg, params)
    sc = translating_squares(1, 16, 16, 5, seed=9, velocity=(0, 0), background="smooth")[0]
    pred = model.predict(sc.frames[:4])
    assert np.mean((pred - sc.frames[4]) ** 2) < 1e-3


def test_smoothing():
    np.testing.assert_allclose(smoothed([1, 2, 3, 4], window=2), [1, 1.5, 2.5, 3.5])


def test_steps_must_be_positive(clips):
    with pytest.raises(ValueError):
        train(clips, toy(), 0)


# -- checkpoints ------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    cfg = toy(seed=4, k_decode=2)
    params = init_params(cfg)
    save_checkpoint(tmp_path / "ck", params, cfg)
    cfg2, params2 = load_checkpoint(tmp_path / "ck")
    assert cfg2 == cfg
    for name, p in params.items():
        assert np.array_equal(p.data, params2[name].data)


def test_bad_checkpoints(tmp_path):
    with pytest.raises(InputError):
        load_checkpoint(tmp_path)
    (tmp_path / "manifest.json").write_text("{not json")
    with pytest.raises(InputError):
        load_checkpoint(tmp_path)


# -- memory benchmark -------------------------------------------------------------

def test_storage_slopes():
    rep = bench_memory([parse_size(s) for s in ("256", "1024", "4096")])
    assert abs(rep.slope_graph - 1.0) <= 0.1
    assert abs(rep.slope_dense - 2.0) <= 0.1
    g = [r.graph_bytes for r in rep.rows]
    d = [r.dense_bytes for r in rep.rows]
    for i in range(2):
        assert g[i + 1] / g[i] == pytest.approx(4, rel=0.1)
        assert d[i + 1] / d[i] == pytest.approx(16, rel=0.1)
    assert rep.to_csv().startswith("n,Hs,Ws,graph_bytes,dense_bytes\n256,16,16,")


def test_empty_graph_is_header_only():
    rep = bench_memory([(4, 4), (8, 8)], k=0)
    assert {r.graph_bytes for r in rep.rows} == {64}


def test_parse_size():
    assert parse_size("16x52") == (16, 52)
    assert parse_size("1024") == (32, 32)
    with pytest.raises(ValueError):
        parse_size("1000")
