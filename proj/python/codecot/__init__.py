"""Python access to the codecot pipeline core.

Structured values are plain dicts using the same JSON schema as the CLI's
JSONL files.
"""

import json
import os
from importlib import resources

from . import _codecot
from ._codecot import (
    CotParseError,
    SandboxUnavailable,
    ValidationError,
    count_tokens,
    exceeds_budget,
    extract_last_code_block,
    ngram_overlap,
)

__version__ = _codecot.__version__

__all__ = [
    "CotParseError",
    "SandboxUnavailable",
    "ValidationError",
    "count_tokens",
    "decontaminate",
    "exceeds_budget",
    "extract_last_code_block",
    "extract_pairs",
    "ngram_overlap",
    "parse_cot",
    "pass_at_1",
    "serialize_cot",
    "shim_path",
    "training_constants",
    "verify",
]


def shim_path():
    """The sandbox shim shipped next to the module, or $CODECOT_SHIM if set."""
    override = os.environ.get("CODECOT_SHIM")
    if override:
        return override
    candidate = resources.files(__package__) / "sandbox_shim.py"
    return str(candidate) if candidate.is_file() else None


def serialize_cot(trace):
    return _codecot.serialize_cot(json.dumps(trace))


def parse_cot(text, problem_id=""):
    return json.loads(_codecot.parse_cot(text, problem_id))


def decontaminate(problems, holdout, n=10):
    """Returns {"kept": [...], "removed": [{"problem", "witness_gram", "holdout_id"}, ...]}."""
    return json.loads(_codecot.decontaminate(json.dumps(problems), json.dumps(holdout), n))


def pass_at_1(c, n):
    """Exact c/n as a fractions.Fraction."""
    from fractions import Fraction

    num, den = _codecot.pass_at_1(c, n)
    return Fraction(num, den)


def extract_pairs(tree_jsonl, gap=None):
    return json.loads(_codecot.extract_pairs(tree_jsonl, gap))


def training_constants():
    return json.loads(_codecot.training_constants())


def verify(problem, code, limits=None, python="python3"):
    """Runs `code` against the problem's tests in the sandbox; returns the verdict dict."""
    shim = shim_path()
    if shim is None:
        raise SandboxUnavailable("sandbox shim not found")
    raw = _codecot.verify(json.dumps(problem), code, json.dumps(limits) if limits else "", shim, python)
    return json.loads(raw)
