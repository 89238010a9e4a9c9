import csv
import json

import pytest

from report_plots import PlotSpec, SchemaError, render
from report_plots.cli import main


def write_records(path, rows=5):
    cols = ["t", "dt", "mass", "px", "py", "pz", "energy", "entropy", "diss",
            "min_f", "max_f"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for i in range(rows):
            t = 0.01 * i
            w.writerow([t, 0.01, 1.0, 0, 0, 0, 3.0, -4.0 - 0.1 * i, 0.5,
                        0.0, 0.2])
    return path


def write_degiorgi(path):
    data = {"levels": [0.0, 0.1, 0.15, 0.175],
            "times": [0.05, 0.075, 0.0875, 0.09375],
            "energies": [1.0, 0.2, 0.03, 0.0],
            "comparison": [1.0, 0.25, 0.0625, 0.015625],
            "Q": 4.0, "Q_fit": 5.1, "thresholds": {"K1": 0.2},
            "fitted_C": 1.7, "verdict": "decay_confirmed"}
    path.write_text(json.dumps(data))
    return path


def write_appearance(path):
    data = {"sup_value": 2.0, "fitted_exponent": -1.1,
            "theoretical_exponent": -1.5, "window": [0.01, 0.1],
            "margin_max": 0.4, "margin_median": 0.3,
            "value_series": [[0.01, 2.0], [0.05, 0.9], [0.2, 0.4]],
            "margin_series": [[0.01, 0.002], [0.05, 0.01], [0.2, 0.35]]}
    path.write_text(json.dumps(data))
    return path


def test_spec_validation_rejects_unknown_fields():
    with pytest.raises(SchemaError):
        PlotSpec.from_dict({"kind": "timeseries", "out": "x.png", "bogus": 1})
    with pytest.raises(SchemaError):
        PlotSpec.from_dict({"kind": "heatmap", "out": "x.png"})
    with pytest.raises(SchemaError):
        PlotSpec.from_dict({"out": "x.png"})


def test_timeseries_figure(tmp_path):
    rec = write_records(tmp_path / "records.csv")
    out = tmp_path / "ts.png"
    render(PlotSpec(kind="timeseries", out=str(out), csv=str(rec)))
    assert out.exists() and out.stat().st_size > 0


def test_timeseries_missing_column_is_named(tmp_path):
    rec = tmp_path / "records.csv"
    with open(rec, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mass"])
        w.writerow([0.0, 1.0])
    spec = PlotSpec(kind="timeseries", out=str(tmp_path / "x.png"),
                    csv=str(rec))
    with pytest.raises(SchemaError, match="entropy"):
        render(spec)


def test_empty_csv_is_an_error(tmp_path):
    rec = tmp_path / "records.csv"
    with open(rec, "w", newline="") as fh:
        csv.writer(fh).writerow(["t", "mass", "entropy", "energy"])
    spec = PlotSpec(kind="timeseries", out=str(tmp_path / "x.png"),
                    csv=str(rec))
    with pytest.raises(SchemaError, match="no data rows"):
        render(spec)


def test_degiorgi_decay_figure(tmp_path):
    rep = write_degiorgi(tmp_path / "degiorgi_report.json")
    out = tmp_path / "decay.png"
    render(PlotSpec(kind="degiorgi_decay", out=str(out), report=str(rep)))
    assert out.exists() and out.stat().st_size > 0


def test_degiorgi_missing_key_is_named(tmp_path):
    rep = write_degiorgi(tmp_path / "degiorgi_report.json")
    data = json.loads(rep.read_text())
    del data["comparison"]
    rep.write_text(json.dumps(data))
    spec = PlotSpec(kind="degiorgi_decay", out=str(tmp_path / "x.png"),
                    report=str(rep))
    with pytest.raises(SchemaError, match="comparison"):
        render(spec)


def test_envelope_figure(tmp_path):
    rep = write_appearance(tmp_path / "appearance_report.json")
    out = tmp_path / "env.png"
    render(PlotSpec(kind="envelope", out=str(out), report=str(rep)))
    assert out.exists() and out.stat().st_size > 0


def test_inequality_trends_figure(tmp_path):
    table = tmp_path / "inequalities.csv"
    with open(table, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "lhs", "empirical_constant"])
        for i in range(4):
            w.writerow(["hls", 1.0 + i, 0.5 + 0.01 * i])
            w.writerow(["sobolev", 2.0 + i, 0.08])
    trend = tmp_path / "poincare_trend.json"
    trend.write_text(json.dumps({"epsilons": [0.5, 0.1, 0.02],
                                 "envelopes": [1.0, 1.9, 3.3],
                                 "slope": -0.36, "predicted_slope": -1 / 3}))
    out = tmp_path / "trends.png"
    render(PlotSpec(kind="inequality_trends", out=str(out), csv=str(table),
                    trend=str(trend)))
    assert out.exists() and out.stat().st_size > 0


def test_cli_round_trip(tmp_path, capsys):
    rep = write_degiorgi(tmp_path / "degiorgi_report.json")
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "degiorgi_decay",
                                "report": str(rep),
                                "out": str(tmp_path / "decay.png")}))
    assert main(["render", "--spec", str(spec)]) == 0
    assert (tmp_path / "decay.png").exists()


def test_cli_schema_error_exit(tmp_path, capsys):
    rep = write_degiorgi(tmp_path / "degiorgi_report.json")
    data = json.loads(rep.read_text())
    del data["energies"]
    rep.write_text(json.dumps(data))
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "degiorgi_decay",
                                "report": str(rep),
                                "out": str(tmp_path / "decay.png")}))
    assert main(["render", "--spec", str(spec)]) != 0
    assert "energies" in capsys.readouterr().err


def test_cli_missing_spec_file(capsys):
    assert main(["render", "--spec", "/nonexistent/spec.json"]) == 2
