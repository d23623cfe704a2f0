#!/usr/bin/env python3
"""Regenerate the committed golden files under tests/goldens/.

Golden prompts depend on Pillow's JPEG encoder; regenerate after a Pillow
upgrade if the byte-comparison tests start failing.
"""

import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "tests"))

from scene_fixtures import GOLDEN_QUERY, GOLDEN_SCENES  # noqa: E402

from spatialprompt.evaluation import (  # noqa: E402
    QaItem,
    build_answer_bank,
    render_benchmark_annotation,
)
from spatialprompt.prompting import (  # noqa: E402
    ZERO_SHOT_ANNOTATION,
    build_prompt,
    bundle_to_json,
)
from spatialprompt.scene import load_manifest  # noqa: E402
from spatialprompt.selection import uniform_selection  # noqa: E402

GOLDENS = REPO / "tests" / "goldens"


def bank_training_items():
    """Synthetic training set with known answer frequencies (criterion:
    frequency ordering, tie by first occurrence, truncation to 20)."""
    items = []

    def add(question, answer, times, start):
        for k in range(times):
            items.append(
                QaItem(question_id=f"t{start + k}", scene_id="s", question=question,
                       references=(answer,))
            )

    add("How many chairs are there?", "2", 5, 0)
    add("How many tables are there?", "3", 3, 100)
    add("How many lamps are there?", "4", 1, 200)
    add("Where is the trash can?", "left", 2, 300)
    add("Where is the plant?", "right", 2, 400)  # tie: left first
    add("What color is the sofa?", "brown", 4, 500)
    add("What is the color of the wall?", "white", 1, 600)
    add("What shape is the table?", "round", 2, 700)
    add("What kind of room is this?", "office", 1, 800)
    add("What is on the desk?", "monitor", 3, 900)
    add("Is the door open?", "yes", 2, 1000)  # classified "others" in scanqa
    # 22 distinct answers for "how many" to exercise top-20 truncation
    for k in range(22):
        add("How many windows are there?", str(k + 10), 1, 1100 + 10 * k)
    return items


def metric_fixture_rows():
    """50 scored QA rows: handcrafted edge cases plus seeded vocabulary draws
    covering clipping, brevity, multi-reference, and normalization paths."""
    import random

    rows = [
        {"prediction": "brown", "answers": ["brown"]},
        {"prediction": " Brown ", "answers": ["brown"]},
        {"prediction": "dark brown", "answers": ["brown"]},
        {"prediction": "2", "answers": ["two", "2"]},
        {"prediction": "the the the", "answers": ["the cat"]},
        {"prediction": "the cat", "answers": ["the cat sat"]},
        {"prediction": "the cat sat", "answers": ["the cat"]},
        {"prediction": "", "answers": ["anything"]},
        {"prediction": "completely disjoint words", "answers": ["nothing shared here"]},
        {"prediction": "on  the   desk", "answers": ["on the desk"]},
        {"prediction": "A B C D E", "answers": ["a b c d e", "a b"]},
        {"prediction": "left", "answers": ["right", "left"]},
    ]
    rng = random.Random(20240501)
    vocab = ("chair table window door trash can desk lamp sofa left right "
             "white brown black two three on under beside the a is of").split()
    while len(rows) < 50:
        pred = " ".join(rng.choices(vocab, k=rng.randint(1, 7)))
        answers = [
            " ".join(rng.choices(vocab, k=rng.randint(1, 6)))
            for _ in range(rng.randint(1, 3))
        ]
        if rng.random() < 0.2:
            pred = answers[0]  # force some exact matches
        rows.append({"prediction": pred, "answers": answers})
    return rows


def main():
    GOLDENS.mkdir(parents=True, exist_ok=True)

    with tempfile.TemporaryDirectory() as tmp:
        for name, builder in GOLDEN_SCENES.items():
            manifest_path = builder(Path(tmp) / name)
            scene = load_manifest(manifest_path)
            bundle = build_prompt(scene, scene.frame_ids, GOLDEN_QUERY)
            (GOLDENS / f"prompt_{name}.json").write_text(
                bundle_to_json(bundle), encoding="utf-8"
            )

        # ablation arms
        scene = load_manifest(Path(tmp) / "simple" / "scene.json")
        no_pose = build_prompt(scene, scene.frame_ids, GOLDEN_QUERY, include_pose=False)
        (GOLDENS / "prompt_simple_no_pose.json").write_text(
            bundle_to_json(no_pose), encoding="utf-8"
        )

    (GOLDENS / "zero_shot_annotation.txt").write_text(ZERO_SHOT_ANNOTATION, encoding="utf-8")
    (GOLDENS / "uniform_kept_100_10.json").write_text(
        str(uniform_selection(list(range(100)), 10)) + "\n", encoding="utf-8"
    )

    bank = build_answer_bank(bank_training_items(), "scanqa")
    (GOLDENS / "annotation_scanqa.txt").write_text(
        render_benchmark_annotation(bank, "scanqa"), encoding="utf-8"
    )
    bank_sqa = build_answer_bank(
        [QaItem("q1", "s", "What is behind me?", ("window",)),
         QaItem("q2", "s", "Is the chair left of me?", ("yes",)),
         QaItem("q3", "s", "How many doors can I see?", ("two",)),
         QaItem("q4", "s", "Can I reach the sink?", ("no",)),
         QaItem("q5", "s", "Which direction is the couch?", ("left",)),
         QaItem("q6", "s", "Am I facing the window?", ("yes",))],
        "sqa3d",
    )
    (GOLDENS / "annotation_sqa3d.txt").write_text(
        render_benchmark_annotation(bank_sqa, "sqa3d"), encoding="utf-8"
    )

    import json

    with (GOLDENS / "metric_fixture_50.jsonl").open("w", encoding="utf-8") as fh:
        for k, row in enumerate(metric_fixture_rows()):
            fh.write(json.dumps({"question_id": f"m{k:02d}", **row}) + "\n")

    for p in sorted(GOLDENS.iterdir()):
        print(f"wrote {p.relative_to(REPO)} ({p.stat().st_size} bytes)")


if __name__ == "__main__":
    main()
