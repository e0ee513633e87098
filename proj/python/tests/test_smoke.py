import json
from fractions import Fraction

import pytest

import codecot


TRACE = {
    "problem_id": "p1",
    "segments": [
        {"kind": "thinking", "steps": ["A", "B"]},
        {"kind": "reflection", "steps": ["check n = 0"]},
        {"kind": "thinking", "steps": ["C"]},
    ],
    "final_code": "print(1)",
}


def problem(pid="plus", statement="Read n and print n + 1."):
    return {
        "id": pid,
        "statement": statement,
        "test_cases": [{"kind": "stdin_stdout", "input": "1\n", "expected_output": "2\n"}],
    }


def test_cot_round_trip():
    text = codecot.serialize_cot(TRACE)
    assert text.startswith("<ChainOfThought><thinking>A<step>B</thinking>")
    assert text.endswith("```python\nprint(1)\n```")
    back = codecot.parse_cot(text, "p1")
    assert [s["steps"] for s in back["segments"]] == [s["steps"] for s in TRACE["segments"]]
    assert back["final_code"] == "print(1)"
    assert codecot.serialize_cot(back) == text


def test_parse_error_is_a_value_error():
    with pytest.raises(codecot.CotParseError):
        codecot.parse_cot("<ChainOfThought><thinking>unclosed")
    with pytest.raises(ValueError):
        codecot.parse_cot("no tags at all")


def test_tokens_and_budget():
    assert codecot.count_tokens("a  b\tc\n") == 3
    assert not codecot.exceeds_budget("w " * 25000)
    assert codecot.exceeds_budget("w " * 25001)


def test_code_block_extraction():
    assert codecot.extract_last_code_block("x\n```python\n1\n```\n```\n2\n```") == "2"
    assert codecot.extract_last_code_block("nothing") is None


def test_decontamination():
    shared = " ".join(f"w{i}" for i in range(12))
    problems = [problem("hit", "Intro " + shared), problem("clean", "Entirely different words here")]
    holdout = [{"id": "h", "text": shared.upper()}]
    res = codecot.decontaminate(problems, holdout, 10)
    assert [p["id"] for p in res["kept"]] == ["clean"]
    assert res["removed"][0]["problem"]["id"] == "hit"
    assert codecot.ngram_overlap("a b c d", "x b c d", 3)


def test_pass_at_1_is_exact():
    assert codecot.pass_at_1(3, 10) == Fraction(3, 10)
    with pytest.raises(ValueError):
        codecot.pass_at_1(11, 10)


def test_training_constants():
    t = codecot.training_constants()
    assert t["sft"]["learning_rate"] == 5e-6
    assert t["step_dpo"]["beta"] == 0.1
    assert t["sampling"]["max_path_num"] == 5


def _tree_jsonl():
    # root -> plan -> {good: 1 of 2 paths pass, bad: 0 of 5}
    rows = [
        (None, "root", "s", 0, 7, 1, "accepted"),
        (0, "thinking", "plan", 1, 7, 1, "accepted"),
        (1, "thinking", "good", 2, 2, 1, "accepted"),
        (2, "answer", "print('PASS')", 3, 1, 1, "accepted"),
        (2, "answer", "print('FAIL')", 3, 1, 0, "open"),
        (1, "thinking", "bad", 2, 5, 0, "rejected"),
        (5, "answer", "print('FAIL')", 3, 5, 0, "rejected"),
    ]
    lines = [{"type": "manifest", "format_version": 1, "problem": problem()}]
    for i, (parent, kind, text, depth, paths, correct, status) in enumerate(rows):
        lines.append({"type": "node", "id": i, "parent": parent, "kind": kind, "step_text": text, "depth": depth,
                      "path_count": paths, "correct_count": correct, "status": status})
    return "".join(json.dumps(x) + "\n" for x in lines)


def test_pairs_from_tree_jsonl():
    pairs = codecot.extract_pairs(_tree_jsonl())
    assert [(p["parent_id"], p["chosen_id"], p["rejected_id"]) for p in pairs] == [(1, 2, 5)]
    assert pairs[0]["prefix"] == "Read n and print n + 1.\n\n<ChainOfThought><thinking>plan"
    assert pairs[0]["chosen_step"] == "<step>good"
    assert codecot.extract_pairs(_tree_jsonl(), gap=0.4) == pairs


def test_verify_runs_the_sandbox():
    good = codecot.verify(problem(), "print(int(input()) + 1)")
    assert good["status"] == "passed"
    bad = codecot.verify(problem(), "print(int(input()))")
    assert bad["status"] == "failed"
    assert bad["failures"][0]["expected"] == "2\n"
