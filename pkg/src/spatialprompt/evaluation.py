"""Benchmark evaluation: question typing, few-shot answer banks, the
benchmark annotation, QA metrics (EM@1, BLEU-1..4, ROUGE-L), and the batch
runner that drives selection -> prompt -> chat -> scoring per item.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .errors import BackendUnavailable, EmptyBank, ProviderError, ReplayMiss, SpatialPromptError
from .prompting import assemble_bundle
from .client import to_chat_request

ROUGE_BETA = 1.2

# Question-type prefix rules, tested in order; display labels mirror the
# few-shot prompt blocks.
SCANQA_TYPES = [
    ("where", ("where",), "Where"),
    ("how many", ("how many",), "How many"),
    ("what color", ("what color", "what is the color"), "What color, What is the color"),
    ("what shape", ("what shape", "what type", "what kind"), "What shape, What type, What kind"),
    ("what is", ("what is",), "What is"),
]
SCANQA_OTHERS = ("others", "others")

SQA3D_TYPES = ["what", "is", "how", "can", "which"]
SQA3D_LABELS = {"what": "What", "is": "Is", "how": "How", "can": "Can",
                "which": "Which", "others": "Others"}
SQA3D_ORDER = ["what", "is", "how", "can", "which", "others"]

BANK_OPENING = {
    "scanqa": "Note that the answer for the question is as short as possible such as:",
    "sqa3d": "Note that the answer for the question based on the situation is as short as possible such as:",
}

TOP_ANSWERS = 20


@dataclass(frozen=True)
class QaItem:
    question_id: str
    scene_id: str
    question: str
    references: tuple[str, ...]
    situation: str | None = None


@dataclass(frozen=True)
class AnswerBank:
    dataset: str
    answers: dict[str, tuple[str, ...]]  # type -> up to 20 strings, most frequent first


def classify_question(question: str, dataset: str) -> str:
    """Map a question to its type by case-insensitive prefix matching."""
    q = question.strip().lower()
    if dataset == "scanqa":
        for qtype, prefixes, _ in SCANQA_TYPES:
            if any(q.startswith(p) for p in prefixes):
                return qtype
        return SCANQA_OTHERS[0]
    if dataset == "sqa3d":
        first = q.split()[0] if q.split() else ""
        return first if first in SQA3D_TYPES else "others"
    raise ValueError(f"unknown dataset {dataset!r}")


def question_types(dataset: str) -> list[str]:
    if dataset == "scanqa":
        return [t for t, _, _ in SCANQA_TYPES] + [SCANQA_OTHERS[0]]
    return list(SQA3D_ORDER)


def type_label(qtype: str, dataset: str) -> str:
    if dataset == "scanqa":
        for t, _, label in SCANQA_TYPES:
            if t == qtype:
                return label
        return SCANQA_OTHERS[1]
    return SQA3D_LABELS[qtype]


def build_answer_bank(training_items: list[QaItem], dataset: str) -> AnswerBank:
    """Top answers per question type, frequency-ordered, first occurrence
    breaking ties, truncated to 20. Answers are trimmed, nothing else."""
    counts: dict[str, Counter] = {t: Counter() for t in question_types(dataset)}
    first_seen: dict[str, dict[str, int]] = {t: {} for t in question_types(dataset)}
    tick = 0
    for item in training_items:
        qtype = classify_question(item.question, dataset)
        for ref in item.references:
            ans = ref.strip()
            if not ans:
                continue
            counts[qtype][ans] += 1
            first_seen[qtype].setdefault(ans, tick)
            tick += 1
    answers = {}
    for qtype in question_types(dataset):
        ranked = sorted(
            counts[qtype].items(), key=lambda kv: (-kv[1], first_seen[qtype][kv[0]])
        )
        answers[qtype] = tuple(a for a, _ in ranked[:TOP_ANSWERS])
    return AnswerBank(dataset=dataset, answers=answers)


def render_benchmark_annotation(bank: AnswerBank, dataset: str) -> str:
    """Few-shot annotation: opening line, then one block per question type
    with its example answers comma-joined and trailing a comma."""
    blocks = []
    for qtype in question_types(dataset):
        entries = bank.answers.get(qtype, ())
        if not entries:
            continue
        label = type_label(qtype, dataset)
        blocks.append(
            f"If question is start with {label}\nExample of answers: {', '.join(entries)},"
        )
    if not blocks:
        raise EmptyBank("answer bank holds no answers for any question type")
    return BANK_OPENING[dataset] + "\n\n" + "\n\n".join(blocks)


# -- metrics -------------------------------------------------------------------

def _normalize(text: str) -> str:
    return " ".join(text.lower().split())


def _tokens(text: str) -> list[str]:
    return text.lower().split()


def em_at_1(prediction: str, references: list[str]) -> int:
    """1 iff the normalized prediction equals any normalized reference."""
    pred = _normalize(prediction)
    return int(any(pred == _normalize(ref) for ref in references))


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(prediction: str, references: list[str]) -> float:
    """LCS F-measure with beta = 1.2; best reference wins."""
    pred = _tokens(prediction)
    best = 0.0
    for ref_text in references:
        ref = _tokens(ref_text)
        lcs = _lcs_length(pred, ref)
        p = lcs / len(pred) if pred else 0.0
        r = lcs / len(ref) if ref else 0.0
        if p + r == 0.0:
            continue
        b2 = ROUGE_BETA ** 2
        f = (1 + b2) * p * r / (r + b2 * p)
        best = max(best, f)
    return best


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_n(prediction: str, references: list[str], n: int) -> float:
    """BLEU with modified (clipped) n-gram precision, geometric mean over
    orders 1..n, and the standard brevity penalty against the closest
    reference length. No smoothing: a zero precision at any order zeroes
    the score. A prediction that equals a reference after normalization
    scores exactly 1.0 even when it is shorter than n tokens."""
    if not 1 <= n <= 4:
        raise ValueError("n must be in 1..4")
    pred_norm = _normalize(prediction)
    if any(pred_norm == _normalize(ref) for ref in references):
        return 1.0
    pred = _tokens(prediction)
    refs = [_tokens(r) for r in references]
    c = len(pred)
    if c == 0:
        return 0.0

    log_sum = 0.0
    for order in range(1, n + 1):
        pred_ngrams = _ngrams(pred, order)
        total = sum(pred_ngrams.values())
        if total == 0:
            return 0.0
        clipped = 0
        for gram, cnt in pred_ngrams.items():
            max_ref = max((_ngrams(ref, order)[gram] for ref in refs), default=0)
            clipped += min(cnt, max_ref)
        if clipped == 0:
            return 0.0
        log_sum += math.log(clipped / total)

    # closest reference length; ties resolved toward the shorter reference
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum / n)


# -- batch evaluation ------------------------------------------------------------

@dataclass
class ItemResult:
    item: QaItem
    qtype: str
    prediction: str | None
    scores: dict[str, float] = field(default_factory=dict)
    error: str | None = None


@dataclass
class EvalReport:
    dataset: str
    items: list[ItemResult]
    aggregates: dict[str, float]
    sqa3d_categories: dict[str, float] | None
    sqa3d_average: float | None
    scored: int
    unscored: int

    @property
    def partial(self) -> bool:
        return self.unscored > 0


METRIC_KEYS = ["em_at_1", "bleu_1", "bleu_2", "bleu_3", "bleu_4", "rouge_l"]


def score_item(prediction: str, references: list[str]) -> dict[str, float]:
    refs = list(references)
    return {
        "em_at_1": float(em_at_1(prediction, refs)),
        "bleu_1": bleu_n(prediction, refs, 1),
        "bleu_2": bleu_n(prediction, refs, 2),
        "bleu_3": bleu_n(prediction, refs, 3),
        "bleu_4": bleu_n(prediction, refs, 4),
        "rouge_l": rouge_l(prediction, refs),
    }


def aggregate(results: list[ItemResult], dataset: str) -> EvalReport:
    scored = [r for r in results if r.error is None]
    aggregates = {
        key: (sum(r.scores[key] for r in scored) / len(scored)) if scored else 0.0
        for key in METRIC_KEYS
    }
    categories = None
    average = None
    if dataset == "sqa3d":
        categories = {}
        for qtype in SQA3D_ORDER:
            in_type = [r for r in scored if r.qtype == qtype]
            categories[qtype] = (
                sum(r.scores["em_at_1"] for r in in_type) / len(in_type) if in_type else 0.0
            )
        average = sum(categories.values()) / len(SQA3D_ORDER)
    return EvalReport(
        dataset=dataset,
        items=results,
        aggregates=aggregates,
        sqa3d_categories=categories,
        sqa3d_average=average,
        scored=len(scored),
        unscored=len(results) - len(scored),
    )


def load_qa_items(path) -> list[QaItem]:
    """Read the JSON-lines dataset format, one item per line."""
    items = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        row = json.loads(line)
        try:
            items.append(
                QaItem(
                    question_id=str(row["question_id"]),
                    scene_id=str(row["scene_id"]),
                    question=str(row["question"]),
                    references=tuple(str(a) for a in row["answers"]),
                    situation=row.get("situation"),
                )
            )
        except KeyError as e:
            raise SpatialPromptError(f"{path}:{lineno}: missing field {e}")
        if not items[-1].references:
            raise SpatialPromptError(f"{path}:{lineno}: empty answers list")
    return items


def query_text(item: QaItem) -> str:
    """SQA3D situations ride inside the user-query part."""
    if item.situation:
        return f"Situation: {item.situation}\nQuestion: {item.question}"
    return item.question


def run_eval(
    items: list[QaItem],
    scenes,
    backend,
    dataset: str,
    annotation: str,
    *,
    model_tag: str = "",
    include_pose: bool = True,
    uniform_keyframes: bool = False,
    target_height: int = 336,
    inflight: int = 4,
) -> EvalReport:
    """Evaluate every item: select keyframes and render their prompt blocks
    (both cached per scene), append the item's annotation and query, dispatch,
    score. Items whose backend call fails are reported unscored and excluded
    from the aggregates.

    `scenes` must expose blocks(scene_id, uniform=..., include_pose=...,
    target_height=...); see SceneStore in the CLI module.
    """
    def evaluate(item: QaItem) -> ItemResult:
        qtype = classify_question(item.question, dataset)
        try:
            blocks = scenes.blocks(
                item.scene_id, uniform=uniform_keyframes,
                include_pose=include_pose, target_height=target_height,
            )
            bundle = assemble_bundle(blocks, query_text(item), annotation)
            request = to_chat_request(bundle, model_tag)
            response = backend.send(request)
        except (BackendUnavailable, ReplayMiss, ProviderError) as e:
            return ItemResult(item=item, qtype=qtype, prediction=None, error=str(e))
        return ItemResult(
            item=item, qtype=qtype, prediction=response.answer_text,
            scores=score_item(response.answer_text, list(item.references)),
        )

    if inflight > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=inflight) as pool:
            results = list(pool.map(evaluate, items))
    else:
        results = [evaluate(item) for item in items]
    return aggregate(results, dataset)


def report_to_dict(report: EvalReport) -> dict:
    doc = {
        "version": 1,
        "dataset": report.dataset,
        "aggregates": report.aggregates,
        "scored": report.scored,
        "unscored": report.unscored,
        "partial": report.partial,
        "items": [
            {
                "question_id": r.item.question_id,
                "scene_id": r.item.scene_id,
                "type": r.qtype,
                "question": r.item.question,
                "situation": r.item.situation,
                "references": list(r.item.references),
                "prediction": r.prediction,
                "scores": r.scores,
                "error": r.error,
            }
            for r in report.items
        ],
    }
    if report.dataset == "sqa3d":
        doc["sqa3d_categories"] = report.sqa3d_categories
        doc["sqa3d_average"] = report.sqa3d_average
    return doc


def aggregate_csv(report: EvalReport) -> str:
    """One aggregate row. ScanQA: EM@1 and BLEU/ROUGE columns; SQA3D: the six
    category accuracies and their average."""
    if report.dataset == "sqa3d":
        header = ["What", "Is", "How", "Can", "Which", "Others", "Avg"]
        values = [report.sqa3d_categories[t] for t in SQA3D_ORDER] + [report.sqa3d_average]
    else:
        header = ["EM@1", "B-1", "B-2", "B-3", "B-4", "ROUGE-L"]
        values = [report.aggregates[k] for k in METRIC_KEYS]
    row = ",".join(f"{v:.4f}" for v in values)
    return ",".join(header) + "\n" + row + "\n"
