import json

import numpy as np
import pandas as pd
import pytest

from graph_simulations.temporal_communities.data.constants import REPORT_ROWS
from graph_simulations.temporal_communities.data.train_config import TrainConfig
from graph_simulations.temporal_communities.errors import DatasetFormatError
from graph_simulations.temporal_communities.logic.clustering import kmeans_init
from graph_simulations.temporal_communities.logic.export import (
    build_report,
    export_clusters,
    export_embeddings,
    export_history,
    export_metrics,
    export_report,
    get_summary_dict,
    load_assignments,
    load_embeddings,
    read_metrics,
)
from graph_simulations.temporal_communities.logic.plots import save_all_plots


def metrics(lp):
    rows = {name: 0.5 for name in REPORT_ROWS}
    rows["LP_ACC"] = lp
    rows["COM_NMI L_G"] = float("nan")
    return rows


def test_embeddings_files(tmp_path, typed_graph):
    Z = np.random.default_rng(0).normal(size=(5, 3))
    export_embeddings(Z, typed_graph, str(tmp_path))
    df = pd.read_csv(tmp_path / "embeddings.tsv", sep="\t", float_precision="round_trip")
    assert list(df.columns) == ["node", "type", "id", "z0", "z1", "z2"]
    assert df["type"].tolist() == ["author"] * 3 + ["paper"] * 2
    # %.17g keeps every bit
    np.testing.assert_array_equal(df[["z0", "z1", "z2"]].to_numpy(), Z)
    back, nodes = load_embeddings(str(tmp_path))
    np.testing.assert_array_equal(back, Z)
    np.testing.assert_array_equal(nodes, np.arange(5))


def test_embeddings_tsv_fallback(tmp_path, typed_graph):
    Z = np.arange(4.0).reshape(2, 2)
    export_embeddings(Z, typed_graph, str(tmp_path), nodes=[3, 1])
    (tmp_path / "embeddings.npz").unlink()
    back, nodes = load_embeddings(str(tmp_path))
    np.testing.assert_array_equal(back, Z)
    np.testing.assert_array_equal(nodes, [3, 1])
    with pytest.raises(ValueError):
        export_embeddings(Z, typed_graph, str(tmp_path))
    with pytest.raises(DatasetFormatError):
        load_embeddings(str(tmp_path / "empty"))


def test_cluster_files(tmp_path, typed_graph):
    Z = np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [5.0, 5.0], [5.1, 5.0]])
    state = kmeans_init(Z, 2, np.random.default_rng(0))
    paths = export_clusters(state, state.z, typed_graph, str(tmp_path))
    assert len(paths) == 2
    z, nodes = load_assignments(str(tmp_path))
    np.testing.assert_array_equal(z, state.z)
    np.testing.assert_array_equal(nodes, np.arange(5))
    params = json.loads((tmp_path / "cluster_params.json").read_text())
    assert params["K"] == 2


def test_metrics_table(tmp_path):
    text = export_metrics(metrics(0.75), str(tmp_path), run="a")
    assert "0.7500" in text and "n/a" in text
    series = read_metrics(str(tmp_path / "metrics.tsv"))
    assert list(series.index) == list(REPORT_ROWS)
    assert series["LP_ACC"] == 0.75
    assert np.isnan(series["COM_NMI L_G"])


def test_report_aggregates_runs(tmp_path):
    for name, lp in (("base", 0.6), ("ablation", 0.7)):
        export_metrics(metrics(lp), str(tmp_path / name))
    df = build_report([str(tmp_path)])
    assert sorted(df.columns) == ["ablation", "base"]
    assert list(df.index) == list(REPORT_ROWS)
    assert df.loc["LP_ACC", "ablation"] == pytest.approx(0.7)
    path = export_report(df, str(tmp_path / "out"))
    assert pd.read_csv(path, sep="\t", index_col="metric").shape == (len(REPORT_ROWS), 2)
    (tmp_path / "empty").mkdir()
    with pytest.raises(DatasetFormatError):
        build_report([str(tmp_path / "empty")])


def test_report_names_and_duplicates(tmp_path):
    export_metrics(metrics(0.6), str(tmp_path / "r"))
    f = str(tmp_path / "r" / "metrics.tsv")
    df = build_report([f, f], names=["x", "x"])
    assert list(df.columns) == ["x", "x#2"]
    with pytest.raises(ValueError):
        build_report([f], names=["x", "y"])


def test_history_files(tmp_path):
    history = [{"epoch": 0, "loss": 1.0, "loss_e": 0.5, "loss_t": 0.5, "loss_c": float("nan")}]
    cycles = [{"cycle": 0, "epoch": 0, "loss": 1.0, "K": 2, "phase": "done", "lower_bound": -3.0}]
    paths = export_history(history, cycles, str(tmp_path))
    assert len(paths) == 2
    assert pd.read_csv(paths[1])["K"].tolist() == [2]
    assert export_history([], [], str(tmp_path / "none")) == []


def test_summary_sections(typed_graph):
    summary = get_summary_dict(cfg=TrainConfig(), metrics={"LP_ACC": 0.8, "CF_ACC L_y": float("nan")},
                               graph=typed_graph)
    assert summary["Graph"]["Nodes"] == 5
    assert summary["Configuration"]["Variant"] == "full"
    assert summary["Metrics"] == {"LP_ACC": "0.8000", "CF_ACC L_y": "n/a"}


def test_summary_reports_failing_section(typed_graph):
    class Broken:
        epoch = 1
        cycles = []
        clusters = None

        @property
        def history(self):
            return [{"epoch": 0}]

    summary = get_summary_dict(state=Broken(), graph=typed_graph)
    assert "ERROR" in summary["Training"]
    assert summary["Graph"]["Edges"] == 5


def test_plots_are_written(tmp_path):
    rng = np.random.default_rng(0)
    Z = np.vstack([rng.normal(0, 0.1, (10, 3)), rng.normal(3, 0.1, (10, 3))])
    state = kmeans_init(Z, 2, rng)
    state.trace.extend([-10.0, -8.0, -7.5])
    history = [{"epoch": i, "loss": 1.0 / (i + 1), "loss_e": 0.5, "loss_t": float("nan"), "loss_c": float("nan")}
               for i in range(3)]
    cycles = [{"cycle": 0, "K": 2, "valid_lp": 0.7}, {"cycle": 1, "K": 2, "valid_lp": 0.8}]
    paths = save_all_plots(str(tmp_path), history=history, cycles=cycles, clusters=state, Z=Z,
                           assignments=state.z)
    names = sorted(p.rsplit("/", 1)[-1] for p in paths)
    assert names == ["cluster_sizes.png", "embedding_pca.png", "k_per_cycle.png",
                     "loss_curves.png", "lower_bound.png"]
    for p in paths:
        with open(p, "rb") as f:
            assert f.read(8) == b"\x89PNG\r\n\x1a\n"


def test_projection_skipped_for_one_row(tmp_path):
    assert save_all_plots(str(tmp_path), Z=np.zeros((1, 3)), assignments=[0]) == []
