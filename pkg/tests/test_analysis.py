import json
import math

import numpy as np
import pytest

from c3gnn.analysis import (DISTANCE_FIELDS, REGIONS, balanced_accuracy, class_regions,
                            distance_report, distance_report_from_embeddings, per_class_recall,
                            set_distance, top1_accuracy)
from c3gnn.encoder import EncoderDims, embed_numpy, init_params
from c3gnn.graphdata import Dataset, Graph, LabeledGraph
from c3gnn.subclassing import assign_from_embeddings


def test_set_distance_examples():
    assert set_distance([0, 0], [[3, 4]]) == 5.0
    assert set_distance([0, 0], [[3, 4], [0, 0]]) == 2.5
    assert set_distance([1, 1], [[1, 1]]) == 0.0
    with pytest.raises(ValueError):
        set_distance([0, 0], np.zeros((0, 2)))


def test_class_regions_thirds():
    regions = class_regions({1: 100, 2: 50, 3: 20, 4: 10, 5: 5, 6: 1})
    assert [regions[c] for c in range(1, 7)] == ["many", "many", "medium", "medium", "few", "few"]
    regions = class_regions({1: 127, 2: 40, 3: 20, 4: 13})
    assert regions[1] == "many" and regions[4] == "few"
    assert set(regions.values()) <= set(REGIONS)


def test_report_with_single_subclass_equates_class_and_subclass():
    rng = np.random.default_rng(0)
    h = rng.normal(size=(9, 3))
    labels = [1, 1, 1, 2, 2, 2, 3, 3, 3]
    rep = distance_report_from_embeddings(h, labels, labels, class_regions({1: 3, 2: 3, 3: 3}))
    for s in rep.samples:
        assert s.intra_class == s.intra_subclass
        assert s.inter_subclass is None
    assert math.isnan(rep.mean("inter_subclass"))


def test_report_on_separated_clusters():
    # class 1 is two tight blobs far apart, class 2 one blob elsewhere
    h = np.array([[0, 0], [0, 0.1], [10, 0], [10, 0.1], [0, 50], [0, 50.1]], dtype=float)
    labels = [1, 1, 1, 1, 2, 2]
    subs = [0, 0, 1, 1, 2, 2]
    rep = distance_report_from_embeddings(h, labels, subs, {1: "many", 2: "few"}, split_classes=[1])
    s0 = rep.samples[0]
    assert s0.intra_subclass == pytest.approx(0.1)
    assert s0.inter_subclass == pytest.approx(set_distance(h[0], h[2:4]))
    assert s0.intra_class == pytest.approx(set_distance(h[0], h[1:4]))
    assert rep.mean("intra_subclass", only_split=True) < rep.mean("intra_class", only_split=True)
    summary = rep.summary()
    assert set(summary) == {"all", "split_classes", *REGIONS}
    assert set(summary["all"]) == set(DISTANCE_FIELDS)


def test_records_and_histogram(tmp_path):
    h = np.random.default_rng(1).normal(size=(6, 2))
    rep = distance_report_from_embeddings(h, [1, 1, 1, 2, 2, 2], [0, 0, 1, 2, 2, 2], {1: "many", 2: "few"}, [1])
    rep.write_records(tmp_path / "d.jsonl")
    rows = [json.loads(x) for x in (tmp_path / "d.jsonl").read_text().splitlines()]
    assert len(rows) == 6 and rows[0]["graph_id"] == 0
    table = rep.histogram(bins=5).splitlines()
    assert table[0].startswith("#") and len(table) == 6
    total = sum(int(line.split()[1]) for line in table[1:])
    assert total == 6  # every sample has an intra-class distance


def small_set(rng, n_per, k=3):
    graphs = []
    for c in range(1, k + 1):
        for _ in range(n_per):
            graphs.append(LabeledGraph(Graph(3, ((0, 1), (1, 2)), rng.normal(size=(3, 2)) + c), c))
    return Dataset(tuple(graphs), k, 2)


def test_accuracy_metrics_agree_on_balanced_set():
    rng = np.random.default_rng(2)
    ds = small_set(rng, 4)
    params = init_params(EncoderDims(2, 3, 8, 8, 4), seed=0)
    recalls = per_class_recall(params, ds)
    assert set(recalls) == {1, 2, 3}
    assert balanced_accuracy(params, ds) == pytest.approx(top1_accuracy(params, ds))


def test_distance_report_from_params():
    rng = np.random.default_rng(3)
    train, test = small_set(rng, 8), small_set(rng, 3)
    params = init_params(EncoderDims(2, 3, 8, 8, 4), seed=1)
    h = embed_numpy(params, [lg.graph for lg in train.graphs])
    a = assign_from_embeddings(h, train.labels, cap=4, epoch=0)
    rep = distance_report(params, a, test)
    assert len(rep.samples) == len(test)
    assert rep.split_classes == [1, 2, 3]
    for s in rep.samples:
        assert 0 <= s.subclass < a.num_subclasses(s.label)
