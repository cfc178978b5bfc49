import json

import numpy as np
import pytest

from tacgan.harness import (
    ConfigError,
    RunConfig,
    TrainingDiverged,
    _Trainer,
    classifier_fn,
    config_from_dict,
    config_to_dict,
    derive_seed,
    load_record,
    mnist_config,
    prepare_mnist,
    run_training,
    save_record,
    sweep,
    sweep_configs,
    validate_config,
)
from tacgan.networks import MlpSpec, forward_np
from tacgan.synthdata import IdxDataset, save_idx


def tiny_config(**overrides) -> RunConfig:
    base = dict(
        experiment="mog1d",
        variant="tacgan",
        lambda_c=1.0,
        seed=0,
        iterations=4,
        steps_d_per_g=2,
        batch_size=30,
        train_size=600,
        eval_every=2,
        eval_samples=90,
        final_samples=120,
        g_hidden=(8, 8),
        d_hidden=(8, 8),
    )
    base.update(overrides)
    return RunConfig(**base)


# -- config ------------------------------------------------------------------


def test_config_round_trip():
    cfg = tiny_config(d_m=2.5, lambda_c=1.5)
    assert config_from_dict(config_to_dict(cfg)) == cfg


def test_config_unknown_field_rejected():
    data = config_to_dict(tiny_config())
    data["mystery_knob"] = 3
    with pytest.raises(ConfigError, match="mystery_knob"):
        config_from_dict(data)


def test_config_schema_version_mismatch():
    data = config_to_dict(tiny_config())
    data["schema_version"] = 99
    with pytest.raises(ConfigError, match="99.*expected 1"):
        config_from_dict(data)


def test_config_validation_errors():
    with pytest.raises(ConfigError, match="experiment"):
        validate_config(tiny_config(experiment="mog3d"))
    with pytest.raises(ConfigError, match="steps_d_per_g"):
        validate_config(tiny_config(steps_d_per_g=0))
    with pytest.raises(ConfigError, match="divisible"):
        validate_config(tiny_config(batch_size=256))
    with pytest.raises(ConfigError, match="lambda_c"):
        validate_config(tiny_config(variant="vanilla", lambda_c=1.0))


def test_derive_seed_stable_and_distinct():
    assert derive_seed(7, "noise") == derive_seed(7, "noise")
    assert derive_seed(7, "noise") != derive_seed(7, "data")
    assert derive_seed(7, "noise") != derive_seed(8, "noise")


# -- training loop -------------------------------------------------------------


def test_run_training_zero_iterations_initial_metrics_only():
    rec = run_training(tiny_config(iterations=0))
    iterations = {it for it, _, _ in rec.metrics}
    assert iterations == {0}
    assert rec.series("mmd")[0][0] == 0
    assert rec.final_x.shape == (120, 1)


def test_run_training_schedule_ratio():
    rec = run_training(tiny_config(iterations=5, steps_d_per_g=3))
    assert rec.last("d_steps") == 15.0
    assert rec.last("g_steps") == 5.0


def test_run_training_deterministic_metrics():
    a = run_training(tiny_config())
    b = run_training(tiny_config())
    assert a.metrics == b.metrics
    np.testing.assert_array_equal(a.final_x, b.final_x)


def test_run_training_seed_changes_output():
    a = run_training(tiny_config())
    b = run_training(tiny_config(seed=1))
    assert a.metrics != b.metrics


def test_player_isolation_bits():
    trainer = _Trainer(tiny_config())
    g_before = {k: v.copy() for k, v in trainer.g_params.items()}
    for _ in range(3):
        trainer.disc_step()
    for k, v in trainer.g_params.items():
        np.testing.assert_array_equal(v, g_before[k])
    d_before = {k: v.copy() for k, v in trainer.players["d"]["params"].items()}
    c_before = {k: v.copy() for k, v in trainer.players["c"]["params"].items()}
    trainer.gen_step()
    for k, v in trainer.players["d"]["params"].items():
        np.testing.assert_array_equal(v, d_before[k])
    for k, v in trainer.players["c"]["params"].items():
        np.testing.assert_array_equal(v, c_before[k])
    assert any(
        not np.array_equal(trainer.g_params[k], g_before[k]) for k in trainer.g_params
    )


def test_lambda_zero_reduces_to_vanilla():
    acgan = run_training(tiny_config(variant="acgan", lambda_c=0.0, iterations=6))
    vanilla = run_training(tiny_config(variant="vanilla", lambda_c=0.0, iterations=6))
    for name in ("d_loss", "g_loss", "term_a", "mmd"):
        assert acgan.series(name) == vanilla.series(name), name
    for k in vanilla.checkpoints["g"]:
        np.testing.assert_array_equal(acgan.checkpoints["g"][k], vanilla.checkpoints["g"][k])
    for k in vanilla.checkpoints["d"]:
        np.testing.assert_array_equal(acgan.checkpoints["d"][k], vanilla.checkpoints["d"][k])


def test_tacgan_lambda_zero_also_reduces():
    tac = run_training(tiny_config(variant="tacgan", lambda_c=0.0, iterations=4))
    vanilla = run_training(tiny_config(variant="vanilla", lambda_c=0.0, iterations=4))
    assert tac.series("g_loss") == vanilla.series("g_loss")


@pytest.mark.parametrize("variant", ["vanilla", "cgan_concat", "acgan", "tacgan", "projection"])
def test_all_variants_train_mog(variant):
    lam = 1.0 if variant in ("acgan", "tacgan") else 0.0
    rec = run_training(tiny_config(variant=variant, lambda_c=lam, iterations=3))
    assert np.isfinite(rec.last("d_loss"))
    assert np.isfinite(rec.last("g_loss"))


def test_hinge_variant_trains():
    rec = run_training(tiny_config(adv_loss="hinge", iterations=3))
    assert np.isfinite(rec.last("d_loss"))


def test_mog2d_trains():
    rec = run_training(tiny_config(experiment="mog2d", iterations=3))
    assert rec.final_x.shape[1] == 2
    assert np.isfinite(rec.last("mmd"))


def test_divergence_aborts_with_snapshot():
    cfg = tiny_config(lr=1e80, iterations=50, eval_every=50)
    with np.errstate(over="ignore", invalid="ignore"):  # blow-up is the point
        with pytest.raises(TrainingDiverged) as err:
            run_training(cfg)
    assert err.value.iteration >= 1
    assert isinstance(err.value.losses, dict)


# -- persistence -----------------------------------------------------------------


def test_record_round_trip(tmp_path):
    rec = run_training(tiny_config(iterations=2))
    save_record(rec, tmp_path / "run")
    loaded = load_record(tmp_path / "run")
    assert loaded == rec


def test_record_out_dir_auto_persist(tmp_path):
    cfg = tiny_config(iterations=1, out_dir=str(tmp_path / "auto"))
    rec = run_training(cfg)
    assert load_record(tmp_path / "auto") == rec


def test_metric_csv_bit_identical_across_runs(tmp_path):
    for name in ("a", "b"):
        save_record(run_training(tiny_config(iterations=3)), tmp_path / name)
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (
        tmp_path / "b" / "metrics.csv"
    ).read_bytes()


def test_record_schema_version_error(tmp_path):
    rec = run_training(tiny_config(iterations=1))
    save_record(rec, tmp_path / "run")
    meta = json.loads((tmp_path / "run" / "record.json").read_text())
    meta["schema_version"] = 2
    (tmp_path / "run" / "record.json").write_text(json.dumps(meta))
    with pytest.raises(ConfigError, match="2.*expected 1"):
        load_record(tmp_path / "run")


def test_classifier_fn_shapes():
    rec = run_training(tiny_config(iterations=2))
    logits = classifier_fn(rec)(np.zeros((5, 1)))
    assert logits.shape == (5, 3)


# -- sweeps ---------------------------------------------------------------------


def test_sweep_configs_dm_layout():
    cfgs = sweep_configs("dm", tiny_config(), ["acgan", "tacgan", "projection"])
    assert len(cfgs) == 15
    assert sorted({c.d_m for c in cfgs}) == [1.0, 2.0, 3.0, 4.0, 5.0]


def test_sweep_configs_lambda_layout():
    cfgs = sweep_configs("lambda", tiny_config(), ["tacgan"])
    assert len(cfgs) == 6
    assert [c.lambda_c for c in cfgs] == [0.5, 1.0, 1.5, 2.0, 2.5, 3.0]


def test_sweep_configs_empty_axis():
    with pytest.raises(ConfigError, match="no values"):
        sweep_configs("dm", tiny_config(), ["tacgan"], values=[])


def test_sweep_runs_and_marks_failures(tmp_path):
    template = tiny_config(iterations=2)
    results = sweep(
        "dm", template, ["tacgan"], tmp_path, values=[2.0, 3.0], workers=1
    )
    assert [status for _, status, _ in results] == ["ok", "ok"]
    assert (tmp_path / "summary.csv").exists()
    run_dirs = [p for p in tmp_path.iterdir() if p.is_dir()]
    assert len(run_dirs) == 2
    loaded = load_record(run_dirs[0])
    assert loaded.config.d_m in (2.0, 3.0)


def test_sweep_parallel_workers(tmp_path):
    template = tiny_config(iterations=1)
    results = sweep("dm", template, ["tacgan"], tmp_path, values=[2.0, 4.0], workers=2)
    assert sorted(status for _, status, _ in results) == ["ok", "ok"]
    assert len([p for p in tmp_path.iterdir() if p.is_dir()]) == 2


def test_sweep_marks_diverged_run(tmp_path):
    template = tiny_config(iterations=30, eval_every=30, lr=1e80)
    with np.errstate(over="ignore", invalid="ignore"):
        results = sweep("dm", template, ["tacgan"], tmp_path, values=[3.0], workers=1)
    assert results[0][1] == "failed"
    assert "non-finite" in results[0][2]


# -- MNIST path -------------------------------------------------------------------


def _fake_mnist_idx(tmp_path, n_per_digit=60, side=6, seed=0):
    """Tiny IDX corpus whose three digit classes are linearly separable blobs."""
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for digit in (0, 1, 2):
        base = np.zeros((side, side))
        base[digit * 2 : digit * 2 + 2, :] = 200.0
        for _ in range(n_per_digit):
            img = np.clip(base + rng.normal(0, 20, size=(side, side)), 0, 255)
            images.append(img.astype(np.uint8))
            labels.append(digit)
    order = rng.permutation(len(labels))
    ds = IdxDataset(
        images=np.stack(images)[order], labels=np.array(labels, dtype=np.uint8)[order]
    )
    save_idx(ds, tmp_path / "images.idx", tmp_path / "labels.idx")
    return tmp_path / "images.idx", tmp_path / "labels.idx"


@pytest.fixture(scope="module")
def prepared_mnist(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("mnist")
    images, labels = _fake_mnist_idx(tmp_path)
    meta = prepare_mnist(
        images,
        labels,
        tmp_path / "prepared",
        seed=0,
        disjoint_zeros=True,
        per_digit=25,
        oracle_max_epochs=20,
    )
    return tmp_path / "prepared", meta


def test_prepare_mnist_outputs(prepared_mnist):
    prepared_dir, meta = prepared_mnist
    assert (prepared_dir / "groups.npz").exists()
    assert (prepared_dir / "oracle.json").exists()
    assert meta["oracle_heldout_accuracy"] >= 0.99
    blob = np.load(prepared_dir / "groups.npz")
    assert blob["x"].shape[0] == 100  # 2 groups x 4 x per_digit=25
    assert sorted(np.unique(blob["group"])) == [0, 1]
    props = [float((blob["digit"] == d).mean()) for d in (0, 1, 2)]
    assert props == [0.5, 0.25, 0.25]


def test_oracle_recovers_group_proportions(prepared_mnist):
    # oracle-measured frequencies on real data stay within its error budget
    from tacgan.metrics import label_proportions
    from tacgan.networks import MlpSpec, forward_np, load_params

    prepared_dir, meta = prepared_mnist
    params = load_params(prepared_dir / "oracle.json")
    spec = MlpSpec(tuple(meta["oracle_layer_sizes"]))
    blob = np.load(prepared_dir / "groups.npz")
    props = label_proportions(blob["x"], lambda x: forward_np(spec, params, x))
    budget = (1.0 - meta["oracle_heldout_accuracy"]) + 0.01
    np.testing.assert_allclose(props, [0.5, 0.25, 0.25], atol=budget)


def test_mnist_run_trains_and_logs_proportions(prepared_mnist):
    prepared_dir, _ = prepared_mnist
    cfg = mnist_config(
        "tacgan",
        lambda_c=1.0,
        seed=0,
        iterations=3,
        eval_every=3,
        batch_size=20,
        latent_dim=8,
        g_hidden=(16,),
        d_hidden=(16, 16),
        eval_samples=50,
        final_samples=60,
        data_dir=str(prepared_dir),
    )
    rec = run_training(cfg)
    props = [rec.last(f"prop_digit{d}") for d in (0, 1, 2)]
    assert sum(props) == pytest.approx(1.0, abs=1e-12)
    assert rec.final_x.shape == (60, 36)
    assert "d" in rec.checkpoints and "g" in rec.checkpoints


def test_mnist_requires_data_dir():
    with pytest.raises(ConfigError, match="data_dir"):
        run_training(mnist_config("tacgan", lambda_c=1.0, iterations=1))


def test_mnist_shared_trunk_player_routing(prepared_mnist):
    prepared_dir, _ = prepared_mnist
    cfg = mnist_config(
        "tacgan",
        lambda_c=1.0,
        seed=0,
        iterations=1,
        batch_size=20,
        latent_dim=8,
        g_hidden=(16,),
        d_hidden=(16, 16),
        eval_samples=30,
        final_samples=30,
        data_dir=str(prepared_dir),
    )
    trainer = _Trainer(cfg)
    assert trainer.shared_trunk
    flat = trainer.players["d"]["params"]
    twin_before = {k: flat[k].copy() for k in ("head.twin_cls.W", "head.twin_cls.b")}
    trunk_before = {k: v.copy() for k, v in flat.items() if k.startswith("trunk.")}
    trainer.disc_step()
    # twin head moved, and the twin update never touched the trunk directly:
    assert any(not np.array_equal(flat[k], twin_before[k]) for k in twin_before)
    assert any(not np.array_equal(flat[k], trunk_before[k]) for k in trunk_before)
    # cmi optimizer only owns its head parameters
    assert set(trainer.players["cmi"]["names"]) == {"head.twin_cls.W", "head.twin_cls.b"}
