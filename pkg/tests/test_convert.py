import importlib.util
import json
from pathlib import Path

import pytest

from spatialprompt.evaluation import load_qa_items


@pytest.fixture(scope="module")
def converter():
    spec = importlib.util.spec_from_file_location(
        "convert_benchmarks",
        Path(__file__).parent.parent / "scripts" / "convert_benchmarks.py",
    )
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def test_scanqa_conversion(converter, tmp_path):
    raw = [
        {"question_id": "train-0000", "scene_id": "scene0000_00",
         "question": "What is on the desk?", "answers": ["monitor", "a monitor"],
         "object_ids": [5], "object_names": ["monitor"]},
        {"question_id": "train-0001", "scene_id": "scene0000_00",
         "question": "Unanswerable?", "answers": []},
    ]
    src = tmp_path / "scanqa.json"
    src.write_text(json.dumps(raw))
    out = tmp_path / "out.jsonl"
    converter.main(["scanqa", "--input", str(src), "--out", str(out)])
    items = load_qa_items(out)
    assert len(items) == 1  # answerless rows dropped
    assert items[0].question_id == "train-0000"
    assert items[0].references == ("monitor", "a monitor")
    assert items[0].situation is None


def test_sqa3d_conversion(converter, tmp_path):
    questions = {"questions": [
        {"question_id": 100, "scene_id": "scene0011_00",
         "situation": "I am facing the desk.", "question": "Which side is the door?"},
        {"question_id": 101, "scene_id": "scene0011_00",
         "situation": "I stand by the bed.", "question": "Can I see the sink?"},
    ]}
    annotations = {"annotations": [
        {"question_id": 100, "answers": [{"answer": "left", "answer_confidence": "yes"}]},
        {"question_id": 101, "answers": []},
    ]}
    qf = tmp_path / "q.json"
    af = tmp_path / "a.json"
    qf.write_text(json.dumps(questions))
    af.write_text(json.dumps(annotations))
    out = tmp_path / "out.jsonl"
    converter.main(["sqa3d", "--questions", str(qf), "--annotations", str(af),
                    "--out", str(out)])
    items = load_qa_items(out)
    assert len(items) == 1
    assert items[0].question_id == "100"
    assert items[0].situation == "I am facing the desk."
    assert items[0].references == ("left",)
