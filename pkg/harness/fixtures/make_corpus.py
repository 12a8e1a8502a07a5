"""Regenerate corpus_200.jsonl with the layout toolkit's CLI.

The harness consumes the toolkit only through its external surfaces, so this
script shells out to `layoutgen` rather than importing it: synthesize raw
slide annotations, ingest them into a canonical store, then emit 200
completion-task training pairs. Element counts are kept small (2-4) so the
joined sequences stay short enough for single-core training.

Run from this directory: python3 make_corpus.py
"""

import json
import random
import subprocess
import sys
import tempfile
from pathlib import Path

LABELS = ("title", "text", "image", "list")
OUT = Path(__file__).parent / "corpus_200.jsonl"


def raw_slides(seed: int, count: int) -> list[dict]:
    rng = random.Random(seed)
    records = []
    for _ in range(count):
        elements = []
        for _ in range(rng.randint(2, 4)):
            w = rng.randint(80, 400)
            h = rng.randint(60, 240)
            x = rng.randint(0, 960 - w)
            y = rng.randint(0, 720 - h)
            elements.append({"label": rng.choice(LABELS),
                             "bbox": [x, y, w, h]})
        records.append({"page": {"w": 960, "h": 720}, "elements": elements})
    return records


def main() -> int:
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        raw = tmp / "raw.jsonl"
        with open(raw, "w", encoding="utf-8") as fh:
            for record in raw_slides(seed=71, count=60):
                fh.write(json.dumps(record) + "\n")
        subprocess.run(
            ["layoutgen", "ingest", "--preset", "slide", "--in", str(raw),
             "--out-dir", str(tmp / "store"), "--seed", "0"], check=True)
        subprocess.run(
            ["layoutgen", "emit-train",
             "--corpus", f"slide={tmp / 'store' / 'train.jsonl'}",
             "--only-task", "completion", "--n", "200", "--seed", "7",
             "--out", str(tmp / "pairs.jsonl")], check=True)
        lines = (tmp / "pairs.jsonl").read_text(encoding="utf-8").splitlines()

    by_prompt = {}
    for line in lines:
        record = json.loads(line)
        prior = by_prompt.setdefault(record["prompt"], record["completion"])
        if prior != record["completion"]:
            raise SystemExit("a prompt maps to two different completions")
    OUT.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"{len(lines)} records ({len(by_prompt)} distinct prompts) -> {OUT}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
