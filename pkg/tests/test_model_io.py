import logging

import pytest
import ujson

from httpsid.backend.features import FeatureSetId
from httpsid.backend.labels import Target
from httpsid.backend.learners import Learner
from httpsid.backend.model_io import FORMAT_VERSION, MODEL_FORMAT, dumps, load_model, save_model
from httpsid.backend.task_runner import Evaluator
from httpsid.exceptions import ModelFormatError, SchemaMismatchError
from httpsid.models import ExperimentSpec

from ut_cases import blob_corpus, synthetic_corpus

log = logging.getLogger("httpsid")


def _train(learner: Learner, grid: dict, set_id: FeatureSetId = FeatureSetId.Combined, seed: int = 7):
    data = synthetic_corpus(per_class=6, seed=3)
    spec = ExperimentSpec(learner=learner, feature_set=set_id, target=Target.OS, grid=grid, repetitions=1)
    model, _ = Evaluator(1).fit(data, spec, seed)
    return model, data


class TestModelIO:
    @pytest.mark.parametrize("learner, grid", [
        (Learner.KNN, {"k": [4], "weights": ["distance"], "metric": ["manhattan"]}),
        (Learner.RF, {"n_trees": [20]}),
        (Learner.SVM_RBF, {"C": [32.0], "gamma": [0.125]}),
    ])
    def test_round_trip(self, tmp_path, learner, grid):
        model, data = _train(learner, grid)
        path = tmp_path / f"{learner.value}.json"
        save_model(path, model)
        loaded = load_model(path)

        assert loaded.learner == learner
        assert loaded.target == Target.OS
        assert loaded.schema_id == FeatureSetId.Combined
        assert loaded.hyperparameters == model.hyperparameters
        assert loaded.predict(data) == model.predict(data)
        assert dumps(loaded) == dumps(model)

    def test_equal_models_equal_bytes(self, tmp_path):
        grid = {"n_trees": [20]}
        a, _ = _train(Learner.RF, grid)
        b, _ = _train(Learner.RF, grid)
        save_model(tmp_path / "a.json", a)
        save_model(tmp_path / "b.json", b)
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_document_layout(self):
        model, _ = _train(Learner.KNN, {"k": [4], "weights": ["uniform"], "metric": ["euclidean"]}, FeatureSetId.Common)
        doc = ujson.loads(dumps(model))
        assert doc["format"] == MODEL_FORMAT
        assert doc["format_version"] == FORMAT_VERSION
        assert doc["learner"] == "KNN"
        assert doc["schema_id"] == "Common"
        assert doc["hyperparameters"] == {"k": 4, "weights": "uniform", "metric": "euclidean"}
        assert len(doc["scaling"]["min"]) == len(doc["scaling"]["max"]) == 26
        assert doc["params"]["classes"] == ["OSX", "Ubuntu", "Windows"]

    @pytest.mark.parametrize("patch", [
        {"format": "something-else"},
        {"format_version": FORMAT_VERSION + 1},
        {"learner": "Perceptron"},
        {"hyperparameters": {"k": 4, "depth": 3}},
        {"schema_id": "Peaks"},
    ])
    def test_bad_document(self, tmp_path, patch):
        model, _ = _train(Learner.KNN, {"k": [4], "weights": ["uniform"], "metric": ["euclidean"]})
        doc = {**ujson.loads(dumps(model)), **patch}
        path = tmp_path / "bad.json"
        path.write_text(ujson.dumps(doc))
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_missing_params(self, tmp_path):
        model, _ = _train(Learner.RF, {"n_trees": [20]})
        doc = ujson.loads(dumps(model))
        del doc["params"]["classes"]
        path = tmp_path / "bad.json"
        path.write_text(ujson.dumps(doc))
        with pytest.raises(ModelFormatError):
            load_model(path)

    @pytest.mark.parametrize("content", ["", "not json", "[1, 2, 3]"])
    def test_not_a_model(self, tmp_path, content):
        path = tmp_path / "junk.json"
        path.write_text(content)
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_schema_mismatch(self):
        model, _ = _train(Learner.KNN, {"k": [4], "weights": ["uniform"], "metric": ["euclidean"]})
        with pytest.raises(SchemaMismatchError):
            model.predict(blob_corpus(per_class=3, set_id=FeatureSetId.Common))

    def test_subset_schema_projects(self):
        model, data = _train(Learner.KNN, {"k": [4], "weights": ["uniform"], "metric": ["euclidean"]}, FeatureSetId.Common)
        assert len(model.predict(data)) == len(data)

    def test_empty_input(self):
        model, _ = _train(Learner.RF, {"n_trees": [20]})
        assert model.predict([]) == []
        assert model.votes([]) == []

    def test_votes(self):
        model, data = _train(Learner.RF, {"n_trees": [20]})
        for v in model.votes(data[:5]):
            assert set(v) == {"OSX", "Ubuntu", "Windows"}
