import math

import numpy as np
import pytest

from subgradfed import CompressorSpec, GenConfig, RunConfig, Schedule, generate, run
from subgradfed import report
from subgradfed.report import Curve


@pytest.fixture(scope="module")
def csv_path(tmp_path_factory):
    p = generate(GenConfig(n=4, d=40, noise_scale=1.0, seed=5))
    cfg = RunConfig("EF21P", CompressorSpec("TopK", 10, 40, 4), Schedule("PolyakEF21P"), max_rounds=200)
    path = tmp_path_factory.mktemp("rep") / "ef.csv"
    run(p, cfg).to_csv(path)
    return path


def test_axis_labels_and_one_polyline_per_curve(csv_path):
    curves = report.load_curves([csv_path])
    svg = report.render_svg(curves, "demo")
    assert ">bits/n<" in svg and "f(x)−f(x*)" in svg
    assert svg.count("<polyline") == 1 and ">ef<" in svg


def test_identical_inputs_give_two_polylines(csv_path):
    curves = report.load_curves([csv_path, csv_path])
    svg = report.render_svg(curves)
    assert svg.count("<polyline") == 2
    colors = {line.split('stroke="')[1].split('"')[0] for line in svg.splitlines() if line.startswith("<polyline")}
    assert len(colors) == 2


def test_svg_is_byte_reproducible(csv_path):
    a = report.render_svg(report.load_curves([csv_path]), "t")
    b = report.render_svg(report.load_curves([csv_path]), "t")
    assert a == b and "<svg" in a and a.endswith("</svg>\n")


def test_nonfinite_rows_are_dropped_and_counted():
    c = Curve("c", "mem", np.array([0.0, 1.0, 2.0, 3.0, 4.0]), np.array([1.0, math.nan, math.inf, 0.0, 0.5]))
    x, y, dropped = c.clean()
    assert x.tolist() == [0.0, 4.0] and y.tolist() == [1.0, 0.5] and dropped == 3
    s = report.summarize([c], "f_subopt_w")["curves"][0]
    assert s["dropped"] == 3 and s["points"] == 2 and s["best_subopt"] == 0.5 and s["final_subopt"] == 0.5
    svg = report.render_svg([c])
    assert "nan" not in svg and "inf" not in svg


def test_empty_and_long_curves():
    empty = Curve("e", "mem", np.array([]), np.array([]))
    assert report.render_svg([empty]).count("<polyline") == 0
    n = 10 * report.MAX_POINTS
    long = Curve("l", "mem", np.arange(n, dtype=float), 1.0 / (1.0 + np.arange(n)))
    line = [s for s in report.render_svg([long]).splitlines() if s.startswith("<polyline")][0]
    assert line.count(",") <= report.MAX_POINTS + 1


def test_missing_column(csv_path):
    with pytest.raises(ValueError):
        report.curve_from_csv(csv_path, column="f_subopt_avg_missing")
