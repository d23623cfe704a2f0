#!/usr/bin/env python3
"""Convert public benchmark releases into the JSON-lines QA format consumed
by `spatialprompt eval` (one object per line: question_id, scene_id,
situation?, question, answers).

ScanQA ships a single JSON array per split:
    [{"question_id", "scene_id", "question", "answers": [...]}, ...]

SQA3D ships a questions file and an annotations file per split:
    {"questions": [{"question_id", "scene_id", "situation", "question"}, ...]}
    {"annotations": [{"question_id", "answers": [{"answer": ...}, ...]}, ...]}

Usage:
    convert_benchmarks.py scanqa --input ScanQA_v1.0_val.json --out scanqa_val.jsonl
    convert_benchmarks.py sqa3d --questions <questions.json> \
        --annotations <annotations.json> --out sqa3d_test.jsonl
"""

import argparse
import json
import sys
from pathlib import Path


def write_items(items, out_path):
    with Path(out_path).open("w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(item, ensure_ascii=False) + "\n")
    print(f"wrote {len(items)} items to {out_path}", file=sys.stderr)


def convert_scanqa(input_path, out_path):
    rows = json.loads(Path(input_path).read_text(encoding="utf-8"))
    items = []
    for row in rows:
        answers = row.get("answers") or []
        if not answers:
            continue  # test split holds no ground truth; nothing to score
        items.append(
            {
                "question_id": str(row["question_id"]),
                "scene_id": str(row["scene_id"]),
                "question": row["question"],
                "answers": [str(a) for a in answers],
            }
        )
    write_items(items, out_path)


def convert_sqa3d(questions_path, annotations_path, out_path):
    questions = json.loads(Path(questions_path).read_text(encoding="utf-8"))["questions"]
    annotations = json.loads(Path(annotations_path).read_text(encoding="utf-8"))["annotations"]
    answers_by_id = {}
    for ann in annotations:
        answers = [a["answer"] if isinstance(a, dict) else a for a in ann.get("answers", [])]
        answers_by_id[str(ann["question_id"])] = [str(a) for a in answers if a]
    items = []
    for q in questions:
        qid = str(q["question_id"])
        answers = answers_by_id.get(qid) or []
        if not answers:
            continue
        items.append(
            {
                "question_id": qid,
                "scene_id": str(q["scene_id"]),
                "situation": q.get("situation", ""),
                "question": q["question"],
                "answers": answers,
            }
        )
    write_items(items, out_path)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="dataset", required=True)

    p_scanqa = sub.add_parser("scanqa")
    p_scanqa.add_argument("--input", required=True)
    p_scanqa.add_argument("--out", required=True)

    p_sqa = sub.add_parser("sqa3d")
    p_sqa.add_argument("--questions", required=True)
    p_sqa.add_argument("--annotations", required=True)
    p_sqa.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    if args.dataset == "scanqa":
        convert_scanqa(args.input, args.out)
    else:
        convert_sqa3d(args.questions, args.annotations, args.out)


if __name__ == "__main__":
    main()
