from __future__ import annotations

import json
import random

import pytest

from qaforge.corpus import Passage
from qaforge.dataset import (
    SquadDataset,
    build_training_mix,
    dumps_squad,
    emit_squad,
    qa_content_id,
    read_squad,
    write_squad,
)
from qaforge.errors import ConfigurationError, EmissionError, SquadParseError
from qaforge.parsefilter import SyntheticExample


def make_example(passage: Passage, question: str, answer: str, score: float = -1.0):
    start = passage.text.index(answer)
    return SyntheticExample(
        passage_id=passage.id,
        question=question,
        answer=answer,
        answer_start=start,
        lm_score=score,
        language=passage.language,
    )


@pytest.fixture()
def passage() -> Passage:
    return Passage.build("p1", "north tower stands over the harbor wall at dawn", "en")


class TestEmitSquad:
    def test_groups_examples_under_one_passage(self, passage):
        examples = [
            make_example(passage, f"which thing {i}", word)
            for i, word in enumerate(["north", "tower", "harbor", "wall", "dawn",
                                      "stands", "over", "the", "at", "north tower"])
        ]
        dataset = emit_squad(examples, {passage.id: passage})
        assert len(dataset.articles) == 1
        assert dataset.articles[0].title == passage.id
        assert len(dataset.articles[0].paragraphs) == 1
        assert len(dataset.articles[0].paragraphs[0].qas) == 10

    def test_empty_input_is_a_valid_empty_dataset(self):
        dataset = emit_squad([], {})
        assert dataset.articles == []
        result = read_squad(dumps_squad(dataset))
        assert result.violations == []

    def test_round_trip_preserves_all_tuples(self, passage):
        other = Passage.build("p0", "a stone bridge crosses the cold river", "en")
        examples = [
            make_example(passage, "where is the wall", "harbor wall", -2.0),
            make_example(passage, "what stands", "north tower", -1.0),
            make_example(other, "what crosses the river", "stone bridge", -0.5),
        ]
        lookup = {p.id: p for p in (passage, other)}
        emitted = emit_squad(examples, lookup)
        result = read_squad(dumps_squad(emitted))
        assert result.violations == []

        recovered = set()
        for article in result.dataset.articles:
            for paragraph in article.paragraphs:
                for qa in paragraph.qas:
                    for answer in qa.answers:
                        recovered.add(
                            (paragraph.context, qa.question, answer.text, answer.answer_start)
                        )
        expected = {
            (lookup[e.passage_id].text, e.question, e.answer, e.answer_start)
            for e in examples
        }
        assert recovered == expected

    def test_emission_is_byte_identical_and_input_order_free(self, passage):
        examples = [
            make_example(passage, f"q {i}", word)
            for i, word in enumerate(["north", "tower", "harbor"])
        ]
        shuffled = list(examples)
        random.Random(1).shuffle(shuffled)
        first = dumps_squad(emit_squad(examples, {passage.id: passage}))
        second = dumps_squad(emit_squad(shuffled, {passage.id: passage}))
        assert first == second

    def test_articles_sorted_by_passage_id(self, passage):
        zebra = Passage.build("zz", "water under the old bridge", "en")
        examples = [
            make_example(zebra, "q", "water"),
            make_example(passage, "q", "tower"),
        ]
        dataset = emit_squad(examples, {passage.id: passage, zebra.id: zebra})
        assert [a.title for a in dataset.articles] == ["p1", "zz"]

    def test_qa_ids_are_content_hashes(self, passage):
        example = make_example(passage, "where", "harbor")
        dataset = emit_squad([example], {passage.id: passage})
        qa = dataset.articles[0].paragraphs[0].qas[0]
        assert qa.id == qa_content_id("p1", "where", "harbor")

    def test_unknown_passage_rejected(self, passage):
        example = make_example(passage, "where", "harbor")
        with pytest.raises(EmissionError, match="unknown passage"):
            emit_squad([example], {})

    def test_bad_offset_rejected_with_example_named(self, passage):
        broken = SyntheticExample(
            passage_id="p1",
            question="where is it",
            answer="harbor",
            answer_start=0,
            lm_score=-1.0,
            language="en",
        )
        with pytest.raises(EmissionError, match="where is it"):
            emit_squad([broken], {passage.id: passage})

    def test_duplicate_example_rejected(self, passage):
        example = make_example(passage, "where", "harbor")
        with pytest.raises(EmissionError, match="duplicate"):
            emit_squad([example, example], {passage.id: passage})


class TestReadSquad:
    def test_reads_dev_style_document_with_zero_violations(self, fixtures_dir):
        payload = (fixtures_dir / "squad_dev_style.json").read_bytes()
        result = read_squad(payload)
        assert result.violations == []
        assert result.dataset.version == "1.1"
        qas = [qa for _, qa in result.dataset.iter_qas()]
        assert len(qas) == 4
        assert all(len(qa.answers) == 3 for qa in qas)

    def test_offset_off_by_one_is_reported_per_qa(self, fixtures_dir):
        document = json.loads((fixtures_dir / "squad_dev_style.json").read_text("utf-8"))
        bad_qa = document["data"][0]["paragraphs"][0]["qas"][1]
        bad_qa["answers"][0]["answer_start"] += 1
        result = read_squad(json.dumps(document))
        assert len(result.violations) == 1
        assert result.violations[0].qa_id == bad_qa["id"]

    def test_truncated_stream_is_a_parse_error(self, fixtures_dir):
        payload = (fixtures_dir / "squad_dev_style.json").read_bytes()[:200]
        with pytest.raises(SquadParseError):
            read_squad(payload)

    def test_missing_field_reports_path(self):
        document = {"version": "1.1", "data": [{"title": "t", "paragraphs": [{"qas": []}]}]}
        with pytest.raises(SquadParseError, match=r"\$\.data\[0\]\.paragraphs\[0\]"):
            read_squad(json.dumps(document))

    def test_duplicate_ids_flagged(self):
        qa = {"id": "x", "question": "q", "answers": [{"text": "c", "answer_start": 0}]}
        document = {
            "version": "1.1",
            "data": [{"title": "t", "paragraphs": [{"context": "c", "qas": [qa, dict(qa)]}]}],
        }
        result = read_squad(json.dumps(document))
        assert any(v.message == "duplicate qa id" for v in result.violations)

    def test_unknown_fields_ignored(self):
        document = {
            "version": "1.1",
            "extra": True,
            "data": [
                {
                    "title": "t",
                    "junk": 1,
                    "paragraphs": [
                        {
                            "context": "c",
                            "qas": [
                                {
                                    "id": "x",
                                    "question": "q",
                                    "answers": [{"text": "c", "answer_start": 0}],
                                    "is_impossible": False,
                                }
                            ],
                        }
                    ],
                }
            ],
        }
        assert read_squad(json.dumps(document)).violations == []

    def test_reads_file_object(self, tmp_path, passage):
        dataset = emit_squad(
            [make_example(passage, "q", "tower")], {passage.id: passage}
        )
        path = tmp_path / "d.json"
        write_squad(dataset, path)
        with open(path, "rb") as handle:
            result = read_squad(handle)
        assert result.violations == []


class TestBuildTrainingMix:
    def test_default_two_stage_manifest(self):
        manifest = build_training_mix(
            ["s.json"], ["squad_en.json", "translate_train_de.json"]
        )
        assert [stage.name for stage in manifest.stages] == ["synthetic", "gold"]
        for stage in manifest.stages:
            assert stage.epochs == 2
            assert stage.batch_size == 64
            assert stage.learning_rate == 3e-5
        assert manifest.stages[1].dataset_paths == ["squad_en.json", "translate_train_de.json"]

    def test_gold_only(self):
        manifest = build_training_mix([], ["g.json"])
        assert [stage.name for stage in manifest.stages] == ["gold"]

    def test_synthetic_only(self):
        manifest = build_training_mix(["s.json"], [])
        assert [stage.name for stage in manifest.stages] == ["synthetic"]

    def test_no_paths_rejected(self):
        with pytest.raises(ConfigurationError):
            build_training_mix([], [])

    def test_per_stage_overrides(self):
        manifest = build_training_mix(
            ["s.json"], ["g.json"], overrides={"gold": {"epochs": 3, "batch_size": 32}}
        )
        synthetic, gold = manifest.stages
        assert synthetic.epochs == 2
        assert gold.epochs == 3
        assert gold.batch_size == 32
        assert gold.learning_rate == 3e-5

    def test_unknown_override_keys_rejected(self):
        with pytest.raises(ConfigurationError):
            build_training_mix(["s.json"], [], overrides={"synthetic": {"optimizer": "x"}})
        with pytest.raises(ConfigurationError):
            build_training_mix(["s.json"], [], overrides={"warmup": {}})

    def test_manifest_json_shape(self, tmp_path):
        manifest = build_training_mix(["s.json"], ["g.json"])
        path = tmp_path / "manifest.json"
        manifest.write(path)
        payload = json.loads(path.read_text("utf-8"))
        assert payload == {
            "stages": [
                {
                    "name": "synthetic",
                    "dataset_paths": ["s.json"],
                    "epochs": 2,
                    "batch_size": 64,
                    "learning_rate": 3e-5,
                },
                {
                    "name": "gold",
                    "dataset_paths": ["g.json"],
                    "epochs": 2,
                    "batch_size": 64,
                    "learning_rate": 3e-5,
                },
            ]
        }


class TestDatasetModel:
    def test_iter_qas_walks_everything(self, fixtures_dir):
        result = read_squad((fixtures_dir / "metric_oracle_dataset.json").read_bytes())
        ids = [qa.id for _, qa in result.dataset.iter_qas()]
        assert ids == ["en-1", "en-2", "es-1", "es-2", "zh-1", "zh-2"]

    def test_to_json_dict_round_trips(self, fixtures_dir):
        raw = (fixtures_dir / "metric_oracle_dataset.json").read_text("utf-8")
        dataset = read_squad(raw).dataset
        assert dataset.to_json_dict() == json.loads(raw)

    def test_version_preserved(self):
        dataset = SquadDataset(version="1.1", articles=[])
        assert json.loads(dumps_squad(dataset))["version"] == "1.1"
