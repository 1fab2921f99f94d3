"""Shared test fixtures: a small corpus, working reference solutions, and
scripted model transports.

Transcripts are produced by running pipelines against ScriptedTransport in
record mode once, then replayed; this mirrors the record-once/replay-forever
workflow used against live endpoints. Test I/O strings are chosen so that no
public/private test input or expected output ever appears in a pipeline
prompt (the zero-example audit scans for them verbatim).
"""

from __future__ import annotations

import json
from pathlib import Path

from dryrun_bench.corpus import ProblemSpec, RawProblem, TestCase
from dryrun_bench.gateway import LlmGateway, ModelEndpoint, TokenUsage, Transcript

SCRIPTED_MODEL = "scripted-model"

SCRIPTED_ENDPOINT = ModelEndpoint(
    provider="openai-compatible",
    model_name=SCRIPTED_MODEL,
    base_url="http://localhost:1",
    credential_env_var="SCRIPTED_UNUSED_KEY",
)

# Statement in the classic shape: narrative, sample examples, constraints.
BEAUTY_RAW_STATEMENT = """You are given two positive integers, l and r. A positive integer is called beautiful if the product of its digits is divisible by the sum of its digits.
Return the count of beautiful numbers between l and r, inclusive.
Example 1:
Input: l = 10, r = 20
Output: 2
Explanation: The beautiful numbers in the range are 10 and 20.
Example 2:
Input: l = 1, r = 15
Output: 10
Explanation: The beautiful numbers in the range are 1, 2, 3, 4, 5, 6, 7, 8, 9, and 10.
Constraints:
1 <= l <= r < 10^9"""

BEAUTY_STD_STATEMENT = """You are given two positive integers, l and r. A positive integer is called beautiful if the product of its digits is divisible by the sum of its digits.
Return the count of beautiful numbers between l and r, inclusive.
Input Format:
- Two space-separated integers l and r.
Output Format:
- A single integer: the count of beautiful numbers x such that l <= x <= r.
Constraints:
1 <= l <= r < 10^9"""

BEAUTY_SOLUTION = """def beautiful(x):
    s = 0
    p = 1
    while x:
        d = x % 10
        s += d
        p *= d
        x //= 10
    return p % s == 0

l, r = map(int, input().split())
print(sum(1 for v in range(l, r + 1) if beautiful(v)))
"""

# Problem fixtures. sim_input/sim_output feed the scripted dry-run stage and
# deliberately differ from every test string.
FIVE_PROBLEMS = {
    "rev-string": {
        "difficulty": "easy",
        "release_date": "2025-04-02",
        "statement": (
            "Read one word and output it reversed.\n"
            "Example 1:\nInput: abc\nOutput: cba\n"
            "Constraints:\n1 <= length <= 100"
        ),
        "standardized": (
            "Read one word and output it reversed.\n"
            "Input Format:\n- One line containing a single lowercase word.\n"
            "Output Format:\n- One line containing the reversed word.\n"
            "Constraints:\n1 <= length <= 100"
        ),
        "io_note": "Input is one word on one line; output is that word reversed.",
        "public": [("quartzite", "etiztrauq")],
        "private": [("lighthouse", "esuohthgil")],
        "code": "print(input()[::-1])\n",
        "sim_input": "violet",
        "sim_output": "teloiv",
    },
    "sum-two": {
        "difficulty": "easy",
        "release_date": "2025-04-05",
        "statement": (
            "Read two integers and print their sum.\n"
            "Example 1:\nInput: 1 2\nOutput: 3\n"
            "Constraints:\n0 <= a, b <= 10^9"
        ),
        "standardized": (
            "Read two integers and print their sum.\n"
            "Input Format:\n- One line with two space-separated integers.\n"
            "Output Format:\n- A single integer, their sum.\n"
            "Constraints:\n0 <= a, b <= 10^9"
        ),
        "io_note": "Two integers on one line in; one integer out.",
        "public": [("1007 2018", "3025")],
        "private": [("400 556", "956")],
        "code": "a, b = map(int, input().split())\nprint(a + b)\n",
        "sim_input": "12 30",
        "sim_output": "42",
    },
    "max-list": {
        "difficulty": "medium",
        "release_date": "2025-04-09",
        "statement": (
            "Read n, then n integers; print the maximum.\n"
            "Example 1:\nInput: 2\\n5 8\nOutput: 8\n"
            "Constraints:\n1 <= n <= 10^5"
        ),
        "standardized": (
            "Read n, then n integers; print the maximum.\n"
            "Input Format:\n- First line: the count n. Second line: n space-separated integers.\n"
            "Output Format:\n- The maximum value.\n"
            "Constraints:\n1 <= n <= 10^5"
        ),
        "io_note": "A count then that many integers in; the maximum out.",
        "public": [("3\n7006 7012 7003", "7012")],
        "private": [("4\n901 905 903 904", "905")],
        "code": "n = int(input())\nvalues = list(map(int, input().split()))\nprint(max(values))\n",
        "sim_input": "2\n64 31",
        "sim_output": "64",
    },
    "concat-words": {
        "difficulty": "medium",
        "release_date": "2025-04-12",
        "mode": "functional",
        "entry_point": "concat_words",
        "statement": (
            "Implement concat_words(a, b) returning the concatenation of the two words.\n"
            "Example 1:\nInput: a = \"ab\", b = \"cd\"\nOutput: \"abcd\"\n"
            "Constraints:\n1 <= length <= 50"
        ),
        "standardized": (
            "Implement concat_words(a, b) returning the concatenation of the two words.\n"
            "Input Format:\n- Two words a and b passed as arguments.\n"
            "Output Format:\n- The concatenated word, returned.\n"
            "Constraints:\n1 <= length <= 50"
        ),
        "io_note": "Two word arguments in; one concatenated word returned.",
        "public": [('["sky", "lark"]', '"skylark"')],
        "private": [('["moon", "beam"]', '"moonbeam"')],
        "code": "def concat_words(a, b):\n    return a + b\n",
        "sim_input": '["door", "bell"]',
        "sim_output": '"doorbell"',
    },
    "product-two": {
        "difficulty": "hard",
        "release_date": "2025-04-20",
        "statement": (
            "Read two integers and print their product.\n"
            "Example 1:\nInput: 2 3\nOutput: 6\n"
            "Constraints:\n0 <= a, b <= 10^6"
        ),
        "standardized": (
            "Read two integers and print their product.\n"
            "Input Format:\n- One line with two space-separated integers.\n"
            "Output Format:\n- A single integer, their product.\n"
            "Constraints:\n0 <= a, b <= 10^6"
        ),
        "io_note": "Two integers in; their product out.",
        "public": [("123 457", "56211")],
        "private": [("89 91", "8099")],
        "code": "a, b = map(int, input().split())\nprint(a * b)\n",
        "sim_input": "6 7",
        "sim_output": "42",
    },
}

ORACLE_PROBLEMS = {
    "digit-beauty": {
        "difficulty": "hard",
        "release_date": "2025-05-01",
        "statement": BEAUTY_RAW_STATEMENT,
        "standardized": BEAUTY_STD_STATEMENT,
        "io_note": "Two integers l and r in; the count of beautiful numbers out.",
        "public": [("10 20", "2"), ("1 15", "10")],
        "private": [("1 9", "9")],
        "code": BEAUTY_SOLUTION,
    },
    "abs-diff": {
        "difficulty": "easy",
        "release_date": "2025-05-02",
        "statement": (
            "Read two integers a and b and print |a - b|.\n"
            "Example 1:\nInput: 7 3\nOutput: 4\n"
            "Constraints:\n0 <= a, b <= 10^9"
        ),
        "standardized": (
            "Read two integers a and b and print |a - b|.\n"
            "Input Format:\n- One line with two space-separated integers.\n"
            "Output Format:\n- A single integer, the absolute difference.\n"
            "Constraints:\n0 <= a, b <= 10^9"
        ),
        "io_note": "Two integers in; their absolute difference out.",
        "public": [("7 3", "4"), ("10 4", "6")],
        "private": [("3 9", "6")],
        "code": "a, b = map(int, input().split())\nprint(abs(a - b))\n",
    },
    "count-up": {
        "difficulty": "medium",
        "release_date": "2025-05-03",
        "statement": (
            "Read n and print the sum of the integers from 1 to n.\n"
            "Example 1:\nInput: 3\nOutput: 6\n"
            "Constraints:\n1 <= n <= 10^6"
        ),
        "standardized": (
            "Read n and print the sum of the integers from 1 to n.\n"
            "Input Format:\n- A single integer n.\n"
            "Output Format:\n- A single integer, the sum 1..n.\n"
            "Constraints:\n1 <= n <= 10^6"
        ),
        "io_note": "One integer in; one integer out.",
        "public": [("10", "55")],
        "private": [("100", "5050")],
        "code": "n = int(input())\nprint(n * (n + 1) // 2)\n",
    },
}

# Solution passing both public tests of abs-diff (a > b there) but failing
# the private edge case where b > a.
OVERCONFIDENT_ABS_DIFF = "a, b = map(int, input().split())\nprint(a - b)\n"
TIMEOUT_SOLUTION = "while True:\n    pass\n"


def corpus_record(problem_id: str, spec: dict) -> dict:
    return {
        "id": problem_id,
        "title": problem_id.replace("-", " "),
        "statement": spec["statement"],
        "difficulty": spec["difficulty"],
        "release_date": spec["release_date"],
        "public_tests": [{"input": i, "output": o} for i, o in spec["public"]],
        "private_tests": [{"input": i, "output": o} for i, o in spec["private"]],
        "mode": spec.get("mode", "stdio"),
        **({"entry_point": spec["entry_point"]} if "entry_point" in spec else {}),
    }


def write_corpus(path: Path, problems: dict) -> Path:
    lines = [json.dumps(corpus_record(pid, spec)) for pid, spec in problems.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_specs(path: Path, problems: dict) -> Path:
    lines = []
    for pid, spec in problems.items():
        lines.append(
            json.dumps(
                {
                    "id": pid,
                    "standardized_statement": spec["standardized"],
                    "io_format_note": spec["io_note"],
                    "redaction_findings": [],
                },
                sort_keys=True,
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def make_problem(problem_id: str, spec: dict) -> RawProblem:
    return RawProblem(
        id=problem_id,
        title=problem_id,
        statement=spec["statement"],
        difficulty=spec["difficulty"],
        release_date=None,
        public_tests=tuple(TestCase(i, o, "public") for i, o in spec["public"]),
        private_tests=tuple(TestCase(i, o, "private") for i, o in spec["private"]),
        execution_mode=spec.get("mode", "stdio"),
        entry_point=spec.get("entry_point"),
    )


def make_spec(problem_id: str, spec: dict) -> ProblemSpec:
    return ProblemSpec(
        source=make_problem(problem_id, spec),
        standardized_statement=spec["standardized"],
        io_format_note=spec["io_note"],
        redaction_verified=True,
    )


# ---------------------------------------------------------------------------
# Scripted transports
# ---------------------------------------------------------------------------

# Leading phrases of the v1 templates, used to recognize the stage a prompt
# belongs to. Keeps scripted runs honest about which template was rendered.
_STAGE_MARKERS = [
    ("standardize", "Rewrite the problem statement below"),
    ("plan", "Read the problem specification and produce a step-by-step implementation plan"),
    ("refine", "Review the implementation plan below"),
    ("trace_refine", "A dry-run simulation of the current solution produced the trace below"),
    ("synth", "Write a complete Python 3 program that implements the plan below"),
    ("simulate", "Perform a mental dry run"),
    ("polish", "Review the final plan and the program below"),
    ("direct", "Solve this programming problem"),
    ("codesim_plan_sim", "Check the plan below by mentally simulating"),
    ("codesim_plan_refine", "The plan simulation exposed a logical flaw"),
    ("codesim_plan", "Read the problem and produce a step-by-step implementation plan"),
    ("codesim_debug", "The program below fails a public test"),
]


def sniff_stage(user_text: str) -> str:
    for stage, marker in _STAGE_MARKERS:
        if user_text.startswith(marker):
            return stage
    raise AssertionError(f"unrecognized prompt: {user_text[:80]!r}")


def simulation_response(sim_input: str, sim_output: str, verdict_line: str = "CONSISTENT") -> str:
    return (
        "### Synthesized Input\n"
        f"{sim_input}\n\n"
        "### Execution Trace\n"
        "Read the values, then apply the operation step by step, tracking each variable.\n"
        f"The trace works through the chosen input {sim_input} to completion.\n\n"
        "### Predicted Output\n"
        f"{sim_output}\n\n"
        "### Verdict\n"
        f"{verdict_line}"
    )


class ScriptedTransport:
    """Deterministic stand-in for a model: stage-aware canned responses.

    `overrides` maps a stage name to a fixed response string or to a callable
    (user_text, call_index) -> response.
    """

    def __init__(self, problem_id: str, spec: dict, overrides: dict | None = None):
        self.problem_id = problem_id
        self.spec = spec
        self.overrides = overrides or {}
        self.calls: list[tuple[str, str, str]] = []

    def _respond(self, stage: str, user_text: str) -> str:
        code = self.spec["code"]
        if stage in ("plan", "codesim_plan"):
            return (
                f"1. Parse the input for {self.problem_id}.\n"
                "2. Apply the operation the statement asks for.\n"
                "3. Print or return the result."
            )
        if stage in ("refine", "trace_refine", "codesim_plan_refine"):
            revision = sum(1 for s, _, _ in self.calls if s in ("refine", "trace_refine", "codesim_plan_refine"))
            return (
                f"1. Parse the input for {self.problem_id} carefully (revision {revision}).\n"
                "2. Apply the operation; mind boundary values.\n"
                "3. Emit the result exactly once."
            )
        if stage in ("synth", "direct"):
            return f"Here is the program.\n```python\n{code}```"
        if stage == "polish":
            return f"```python\n{code}```"
        if stage == "simulate":
            return simulation_response(self.spec["sim_input"], self.spec["sim_output"])
        if stage == "codesim_plan_sim":
            return "Walking through the plan on the sample input gives the expected value.\nVERDICT: OK"
        if stage == "codesim_debug":
            return f"The loop bound was wrong; repaired.\n```python\n{code}```"
        if stage == "standardize":
            return (
                "<<<STATEMENT>>>\n"
                f"{self.spec['standardized']}\n"
                "<<<END STATEMENT>>>\n"
                "<<<IO_NOTE>>>\n"
                f"{self.spec['io_note']}\n"
                "<<<END IO_NOTE>>>"
            )
        raise AssertionError(f"no scripted response for stage {stage}")

    def __call__(self, system_text: str, user_text: str):
        stage = sniff_stage(user_text)
        index = len(self.calls)
        self.calls.append((stage, system_text, user_text))
        override = self.overrides.get(stage)
        if override is None:
            text = self._respond(stage, user_text)
        elif callable(override):
            text = override(user_text, index)
        else:
            text = override
        return text, TokenUsage.of(len(user_text) // 4, len(text) // 4)


def scripted_gateway(problem_id: str, spec: dict, overrides: dict | None = None) -> LlmGateway:
    transport = ScriptedTransport(problem_id, spec, overrides)
    gateway = LlmGateway(SCRIPTED_ENDPOINT, mode="live", transport=transport)
    gateway.scripted = transport
    return gateway


def scripted_gateway_factory(problems: dict, overrides_by_problem: dict | None = None):
    """gateway_factory for execute_manifest: scripted transport + record mode,
    so transcripts land in each cell directory for later replay."""

    def factory(manifest, endpoint, cell_dir: Path) -> LlmGateway:
        problem_id = cell_dir.parent.name
        spec = problems[problem_id]
        overrides = (overrides_by_problem or {}).get(problem_id)
        cell_dir.mkdir(parents=True, exist_ok=True)
        transcript_file = cell_dir / "transcript.jsonl"
        transcript_file.write_text("", encoding="utf-8")
        return LlmGateway(
            endpoint,
            mode="record",
            transcript=Transcript(run_id=cell_dir.name),
            transcript_file=transcript_file,
            transport=ScriptedTransport(problem_id, spec, overrides),
        )

    return factory


def all_test_strings(problems: dict) -> list[str]:
    strings = []
    for spec in problems.values():
        for i, o in spec["public"] + spec["private"]:
            strings.extend([i, o])
    return strings


def mirror_transcripts(src_root: Path, dst_root: Path) -> int:
    """Copy only the transcript.jsonl files, preserving the cell layout."""
    import shutil

    count = 0
    for transcript in sorted(Path(src_root).rglob("transcript.jsonl")):
        target = dst_root / transcript.relative_to(src_root)
        target.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy2(transcript, target)
        count += 1
    return count


def record_transcripts(manifest, endpoints, problems: dict, overrides_by_problem: dict | None = None):
    """Run the manifest once against scripted transports in record mode, then
    drop everything except the transcripts so a later replay recomputes all
    artifacts from them."""
    from dataclasses import replace

    from dryrun_bench.manifest import execute_manifest

    recording = replace(manifest, mode="record")
    results = execute_manifest(
        recording, endpoints, gateway_factory=scripted_gateway_factory(problems, overrides_by_problem)
    )
    assert all(r.status != "aborted" for r in results), results
    root = Path(manifest.artifact_root)
    for leftover in list(root.rglob("record.json")) + list(root.rglob("eval.json")):
        leftover.unlink()
    return results
