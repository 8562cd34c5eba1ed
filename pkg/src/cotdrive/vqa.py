"""VQA record types and JSONL import/export for fine-tuning pipelines."""

from __future__ import annotations

import json
from dataclasses import dataclass

from .cot import CoTExchange, STAGES


class JsonlError(ValueError):
    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True)
class VqaRecord:
    id: int
    visual: str  # image path or embedded scene reference
    stage: str
    question: str
    answer: str

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        if not self.question or not self.answer:
            raise ValueError("question and answer must be non-empty")


def build_vqa_records(exchange: CoTExchange, visual: str, id_base: int) -> list[VqaRecord]:
    """One record per pipeline stage, ids id_base..id_base+2, fixed stage order."""
    records = []
    for i, (stage, (question, answer)) in enumerate(zip(STAGES, exchange.stages)):
        records.append(VqaRecord(id=id_base + i, visual=visual, stage=stage,
                                 question=question, answer=answer))
    return records


def export_jsonl(records) -> bytes:
    """UTF-8 JSONL, LF line endings, one object per record; stable formatting."""
    lines = []
    for r in records:
        lines.append(json.dumps(
            {"id": r.id, "visual": r.visual, "stage": r.stage,
             "question": r.question, "answer": r.answer},
            ensure_ascii=False, separators=(", ", ": ")))
    return ("".join(line + "\n" for line in lines)).encode("utf-8")


def parse_jsonl(data: bytes) -> list[VqaRecord]:
    records = []
    for i, line in enumerate(data.decode("utf-8").split("\n"), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            records.append(VqaRecord(
                id=int(obj["id"]), visual=str(obj["visual"]),
                stage=str(obj["stage"]), question=str(obj["question"]),
                answer=str(obj["answer"])))
        except (ValueError, KeyError, TypeError) as exc:
            raise JsonlError(str(exc), i) from exc
    return records
