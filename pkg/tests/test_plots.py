import csv
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from tacgan.harness import RunConfig, RunRecord, run_training, save_record
from tacgan.plots import emit_kde_plot, emit_proportions_plot, plot_run_dir
from tacgan.synthdata import make_mog_spec, sample_mog


def _record_with_samples(x, y, config=None, metrics=None):
    config = config or RunConfig(experiment="mog1d", variant="tacgan", lambda_c=1.0)
    return RunRecord(
        config=config,
        metrics=metrics or [(0, "mmd", 1.0)],
        final_x=x,
        final_y=y,
        checkpoints={},
        wall_clock=0.0,
        build_id="test",
    )


def test_kde_plot_ground_truth_self_consistency(tmp_path):
    # true samples plotted as "generated" must hug the true density
    spec = make_mog_spec(3.0)
    batch = sample_mog(spec, 30000, seed=0)
    record = _record_with_samples(batch.x, batch.y)
    paths = emit_kde_plot(record, spec, tmp_path)

    with open(paths["csv"], newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], np.array(rows[1:], dtype=float)
    for k in range(3):
        true_col = data[:, header.index(f"true_{k}")]
        kde_col = data[:, header.index(f"kde_{k}")]
        assert np.max(np.abs(true_col - kde_col)) < 0.03


def test_kde_plot_svg_is_well_formed_xml(tmp_path):
    spec = make_mog_spec(3.0)
    batch = sample_mog(spec, 2000, seed=1)
    record = _record_with_samples(batch.x, batch.y)
    paths = emit_kde_plot(record, spec, tmp_path)
    root = ET.parse(paths["svg"]).getroot()
    assert root.tag.endswith("svg")
    assert any(child.tag.endswith("polyline") for child in root)


def test_kde_plot_missing_class_warns_and_omits(tmp_path):
    spec = make_mog_spec(3.0)
    rng = np.random.default_rng(2)
    x = rng.normal(size=(500, 1))
    y = rng.integers(0, 2, size=500)  # class 2 never appears
    record = _record_with_samples(x, y)
    with pytest.warns(UserWarning, match="class 2"):
        paths = emit_kde_plot(record, spec, tmp_path)
    with open(paths["csv"], newline="") as fh:
        header = next(csv.reader(fh))
    assert "kde_2" not in header
    assert "true_2" in header


def test_kde_plot_rejects_2d(tmp_path):
    spec = make_mog_spec(3.0, base_mean=(0.0, 0.0))
    batch = sample_mog(spec, 100, seed=3)
    record = _record_with_samples(
        batch.x, batch.y, config=RunConfig(experiment="mog2d", variant="tacgan", lambda_c=1.0)
    )
    with pytest.raises(ValueError, match="1-d"):
        emit_kde_plot(record, spec, tmp_path)


def _mnist_record(variant, lam, props):
    config = RunConfig(
        experiment="mnist_overlap",
        variant=variant,
        lambda_c=lam,
        batch_size=100,
        data_dir="unused",
    )
    metrics = [(10, f"prop_digit{d}", p) for d, p in enumerate(props)]
    x = np.zeros((4, 16))
    y = np.zeros(4, dtype=int)
    return _record_with_samples(x, y, config=config, metrics=metrics)


def test_proportions_plot_csv_schema(tmp_path):
    records = [
        _mnist_record("tacgan", 0.5, [0.49, 0.26, 0.25]),
        _mnist_record("tacgan", 1.0, [0.51, 0.24, 0.25]),
        _mnist_record("acgan", 0.5, [0.40, 0.35, 0.25]),
    ]
    paths = emit_proportions_plot(records, tmp_path)
    with open(paths["csv"], newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["lambda_c", "variant", "digit", "proportion"]
    assert len(rows) == 1 + 3 * 3
    svg_text = Path(paths["svg"]).read_text()
    assert "stroke-dasharray" in svg_text  # dashed truth lines
    assert "truth 0.5" in svg_text and "truth 0.25" in svg_text
    ET.fromstring(svg_text)


def test_proportions_plot_single_record(tmp_path):
    paths = emit_proportions_plot([_mnist_record("tacgan", 1.0, [0.5, 0.25, 0.25])], tmp_path)
    with open(paths["csv"], newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 4


def test_proportions_plot_rejects_mixed_experiments(tmp_path):
    good = _mnist_record("tacgan", 1.0, [0.5, 0.25, 0.25])
    bad = _record_with_samples(np.zeros((4, 1)), np.zeros(4, dtype=int))
    with pytest.raises(ValueError, match="mnist_overlap"):
        emit_proportions_plot([good, bad], tmp_path)


def test_plot_run_dir_dispatch(tmp_path):
    cfg = RunConfig(
        experiment="mog1d",
        variant="tacgan",
        lambda_c=1.0,
        iterations=1,
        steps_d_per_g=1,
        batch_size=30,
        train_size=300,
        eval_samples=60,
        final_samples=300,
        g_hidden=(6,),
        d_hidden=(6,),
    )
    rec = run_training(cfg)
    save_record(rec, tmp_path / "run")
    paths = plot_run_dir(tmp_path / "run", tmp_path / "plots")
    assert paths["csv"].endswith("kde.csv")
    ET.parse(paths["svg"])
