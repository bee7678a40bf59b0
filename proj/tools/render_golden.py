#!/usr/bin/env python3
"""Renders the golden prompt files with jinja2, independently of the C++ engine."""
import json
import pathlib

import jinja2

ROOT = pathlib.Path(__file__).resolve().parent.parent
ASSETS = ROOT / "assets" / "prompts"
GOLDEN = ROOT / "tests" / "golden"
TASK = json.loads((ROOT / "tests" / "fixtures" / "task.json").read_text())

PLAN = """## Training Data
[
    {"dataset_id": "arith_qa", "split": "train", "name": "default", "sample_num": "40", "reason": "numeric drills"}
]

## Data Processing Workflow
1. Map question and answer."""


def examples(source):
    lines = ["Fields: " + ", ".join(source["field_names"])]
    for record in source.get("preview", []):
        lines.append(json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False))
    return "\n".join(lines)


def datasets():
    return [{"dataset_id": s["id"], "examples": examples(s)} for s in TASK["sources"]]


def render(name, **context):
    env = jinja2.Environment(undefined=jinja2.StrictUndefined, keep_trailing_newline=True)
    return env.from_string((ASSETS / name).read_text()).render(**context)


def main():
    plan = render("plan_v1.txt", task_description=TASK["instruction"], datasets=datasets(),
                  benchmark={"name": TASK["benchmark"]["id"], "description": TASK["benchmark"]["description"]})
    (GOLDEN / "plan_prompt.txt").write_text(plan)

    tool_info = (ASSETS / "tool_info_v1.txt").read_text().strip()
    code = render("code_v1.txt", datasets=datasets(), plan=PLAN, tool_info=tool_info)
    (GOLDEN / "code_prompt.txt").write_text(code)
    (GOLDEN / "code_prompt_plan.txt").write_text(PLAN)

    # placeholders here are plain {{ name }} substitutions
    verifier = (ASSETS / "verifier_v1.txt").read_text()
    verifier = verifier.replace("{{ task_description }}", "Answer with one letter.")
    verifier = verifier.replace("{{ question }}", "Pick A or B.\n\nA) yes B) no")
    verifier = verifier.replace("{{ llm_response }}", "A")
    (GOLDEN / "verifier_prompt.txt").write_text(verifier)

if __name__ == "__main__":
    main()
