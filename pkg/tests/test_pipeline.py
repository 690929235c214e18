import dataclasses
import json

import numpy as np
import pytest

from polarformer.head import PolarBox
from polarformer.pipeline.config import EvalConfig, ModelConfig, RunConfig, load_config
from polarformer.pipeline.forward import (
    Detection,
    StageError,
    bev_encoder_stage,
    decoder_stage,
    range_bucket,
    read_detections,
    run_forward,
    write_detections,
)
from polarformer.pipeline.params import (
    flatten_params,
    init_params,
    load_params,
    save_params,
    tensor_role,
)
from polarformer.pipeline.tensor_io import TensorFormatError, load_tensor, save_tensor
from polarformer.polar_grid import default_multiscale_spec
from polarformer.scene_sim import SceneConfig, generate_scene


def small_config(**model):
    m = dict(d_model=8, heads=2, deform_heads=2, deform_points=2, cross_plane_layers=1,
             bev_layers=1, decoder_layers=2, num_queries=12)
    m.update(model)
    return RunConfig(
        grid=default_multiscale_spec(feature_dim=m["d_model"], height_samples=2),
        scene=SceneConfig(num_boxes=4),
        model=ModelConfig(**m),
    )


# -- config -------------------------------------------------------------------


def test_config_defaults():
    cfg = RunConfig()
    assert cfg.model.d_model == 32 and cfg.model.heads == 4
    assert (cfg.model.cross_plane_layers, cfg.model.bev_layers) == (3, 6)
    assert cfg.model.num_queries == 100 and cfg.eval.thresholds == (0.5, 1.0, 2.0, 4.0)
    assert [lv.shape for lv in cfg.grid.levels] == [(64, 256), (32, 128), (16, 64)]


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(d_model=30, heads=4)
    with pytest.raises(ValueError):
        ModelConfig(num_queries=0)
    with pytest.raises(ValueError):
        ModelConfig(pe_mode="rotary")
    with pytest.raises(ValueError):
        RunConfig(model=ModelConfig(d_model=16, heads=4))  # grid feature_dim stays 32
    with pytest.raises(ValueError):
        RunConfig(loss_mode="spherical")


def test_config_json_round_trip(tmp_path):
    cfg = small_config()
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert load_config(path) == cfg
    assert load_config(None) == RunConfig()
    partial = tmp_path / "p.json"
    partial.write_text(json.dumps({"model": {"d_model": 16}, "scene_seed": 4}))
    cfg2 = load_config(partial)
    assert cfg2.grid.feature_dim == 16 and cfg2.scene_seed == 4


# -- parameters ------------------------------------------------------------------


def test_init_params_deterministic_float32_valued():
    cfg = small_config()
    a, b = flatten_params(init_params(cfg, 3)), flatten_params(init_params(cfg, 3))
    assert a.keys() == b.keys()
    for name in a:
        assert np.array_equal(a[name], b[name])
        assert np.array_equal(a[name], a[name].astype(np.float32).astype(np.float64))
    c = flatten_params(init_params(cfg, 4))
    assert any(not np.array_equal(a[n], c[n]) for n in a)


def test_param_archive_round_trip(tmp_path):
    cfg = small_config()
    params = init_params(cfg, 9)
    save_params(tmp_path / "p", params, cfg)
    manifest = json.loads((tmp_path / "p" / "manifest.json").read_text())
    names = {e["name"] for e in manifest["tensors"]}
    assert names == set(flatten_params(params))
    assert {e["role"] for e in manifest["tensors"]} <= {"weight", "bias", "norm", "embedding", "reference"}
    back = flatten_params(load_params(tmp_path / "p", cfg))
    for name, arr in flatten_params(params).items():
        assert np.array_equal(back[name], arr)


def test_param_archive_errors(tmp_path):
    cfg = small_config()
    save_params(tmp_path / "p", init_params(cfg, 0), cfg)
    manifest = tmp_path / "p" / "manifest.json"
    m = json.loads(manifest.read_text())
    victim = m["tensors"][0]
    save_tensor(tmp_path / "p" / victim["file"], np.zeros([s + 1 for s in victim["shape"]]))
    with pytest.raises(TensorFormatError):
        load_params(tmp_path / "p", cfg)
    save_params(tmp_path / "q", init_params(cfg, 0), cfg)
    with pytest.raises(ValueError, match="query_embed|ref_init"):
        load_params(tmp_path / "q", small_config(num_queries=5))


def test_tensor_roles():
    assert tensor_role("decoder.0.cls_b") == "bias"
    assert tensor_role("decoder.0.cross_attn.offset_b") == "bias"
    assert tensor_role("bev_encoder.1.norm1.gamma") == "norm"
    assert tensor_role("cross_plane.0.layers.0.attn.w_q") == "weight"
    assert tensor_role("query_embed") == "embedding"


# -- forward -------------------------------------------------------------------


def test_forward_shapes_and_determinism():
    cfg = small_config()
    scene = generate_scene(1, cfg.scene)
    params = init_params(cfg, 1)
    a = run_forward(scene, cfg, params)
    b = run_forward(scene, cfg, params)
    assert [m.data.shape for m in a.aligned] == [(64, 256, 8), (32, 128, 8), (16, 64, 8)]
    assert [e.shape for e in a.encoded] == [(64, 256, 8), (32, 128, 8), (16, 64, 8)]
    assert len(a.detections) == cfg.model.num_queries
    for x, y in zip(a.detections, b.detections):
        assert x == y
    for det in a.detections:
        assert det.bucket == range_bucket(det.box.rho)
        assert all(0 < s < 1 for s in det.box.scores) and len(det.box.scores) == 10


def test_forward_empty_scene_shared_init():
    cfg = small_config()
    scene = dataclasses.replace(generate_scene(1, cfg.scene), boxes=())
    params = init_params(cfg, 2)
    shared = dataclasses.replace(
        params,
        query_embed=np.repeat(params.query_embed[:1], cfg.model.num_queries, axis=0),
        ref_init=np.repeat(params.ref_init[:1], cfg.model.num_queries, axis=0),
    )
    dets = run_forward(scene, cfg, shared).detections
    assert len(dets) == cfg.model.num_queries
    scores = np.array([d.box.scores for d in dets])
    assert np.all(scores == scores[0])


def test_stage_isolation_bit_exact(tmp_path):
    cfg = small_config()
    scene = generate_scene(5, cfg.scene)
    params = init_params(cfg, 5)
    res = run_forward(scene, cfg, params)
    reloaded = []
    for u, m in enumerate(res.aligned):
        save_tensor(tmp_path / f"a{u}.pbev", m.data)
        reloaded.append(load_tensor(tmp_path / f"a{u}.pbev").astype(np.float64))
    encoded = bev_encoder_stage(reloaded, params)
    for x, y in zip(encoded, res.encoded):
        assert np.array_equal(x, y)
    enc_reloaded = []
    for u, e in enumerate(res.encoded):
        save_tensor(tmp_path / f"e{u}.pbev", e)
        enc_reloaded.append(load_tensor(tmp_path / f"e{u}.pbev").astype(np.float64))
    assert decoder_stage(enc_reloaded, params, cfg) == res.detections


def test_stage_errors_are_labelled():
    cfg = small_config()
    scene = generate_scene(1, cfg.scene)
    params = init_params(cfg, 1)
    with pytest.raises(StageError) as info:
        run_forward(scene, cfg, dataclasses.replace(params, cross_plane=params.cross_plane[:2]))
    assert info.value.stage == "setup"
    bad_cfg = small_config(num_queries=3)
    with pytest.raises(StageError) as info:
        decoder_stage([np.zeros((64, 256, 8)), np.zeros((32, 128, 8)), np.zeros((16, 64, 8))],
                      dataclasses.replace(params, ref_init=np.zeros((3, 2))), bad_cfg)
    assert info.value.stage == "decoder" and "[decoder]" in str(info.value)


def test_detection_files_round_trip(tmp_path):
    boxes = [PolarBox(12.0, 0.4, 0.2, 3.0, 1.5, 1.2, 0.7, 2.5, -1.1, scores=(0.9,), label=4),
             PolarBox(40.0, -2.0, 0.0, 1.0, 1.0, 1.0, label=0, scores=(0.2,))]
    dets = [Detection(b, matched=i == 0, bucket=range_bucket(b.rho)) for i, b in enumerate(boxes)]
    write_detections(tmp_path / "d.jsonl", dets)
    lines = (tmp_path / "d.jsonl").read_text().splitlines()
    rec = json.loads(lines[0])
    for key in ("class", "score", "rho", "phi", "z", "l", "w", "h", "yaw", "vx", "vy", "x", "y"):
        assert key in rec
    assert rec["x"] == pytest.approx(12.0 * np.sin(0.4)) and rec["y"] == pytest.approx(12.0 * np.cos(0.4))
    back = read_detections(tmp_path / "d.jsonl")
    for a, b in zip(back, dets):
        assert a.matched == b.matched and a.bucket == b.bucket and a.box.label == b.box.label
        assert a.box.rho == b.box.rho and a.box.score == b.box.score
        assert a.box.vx == pytest.approx(b.box.vx, abs=1e-12) and a.box.vy == pytest.approx(b.box.vy, abs=1e-12)


def test_range_buckets():
    ev = EvalConfig()
    assert range_bucket(17.99, ev.near_max, ev.far_min) == "near"
    assert range_bucket(18.0) == "medium" and range_bucket(35.0) == "medium"
    assert range_bucket(35.01) == "far"
    with pytest.raises(ValueError):
        Detection(PolarBox(1, 0, 0, 1, 1, 1), bucket="mid")
