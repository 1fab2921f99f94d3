from __future__ import annotations

import json
from pathlib import Path

import pytest

import fixtures as fx
from dryrun_bench.manifest import RunManifest, load_endpoints


def write_endpoints(path: Path) -> Path:
    path.write_text(
        json.dumps(
            {
                "endpoints": {
                    "scripted": {
                        "provider": "openai-compatible",
                        "model_name": fx.SCRIPTED_MODEL,
                        "base_url": "http://localhost:1",
                        "credential_env_var": "SCRIPTED_UNUSED_KEY",
                    }
                }
            }
        ),
        encoding="utf-8",
    )
    return path


@pytest.fixture(scope="session")
def five_workspace(tmp_path_factory):
    """Corpus + spec + endpoint files for the five-problem fixture set."""
    root = tmp_path_factory.mktemp("five")
    corpus = fx.write_corpus(root / "corpus.jsonl", fx.FIVE_PROBLEMS)
    specs = fx.write_specs(root / "specs.jsonl", fx.FIVE_PROBLEMS)
    endpoints = write_endpoints(root / "endpoints.json")
    return {"root": root, "corpus": corpus, "specs": specs, "endpoints": endpoints}


@pytest.fixture(scope="session")
def dryrun_replay(five_workspace, tmp_path_factory):
    """A replay-ready DryRUN manifest: transcripts recorded once from the
    scripted transports, one replicate over the five problems."""
    artifact_root = tmp_path_factory.mktemp("dryrun-artifacts")
    manifest = RunManifest(
        corpus=str(five_workspace["corpus"]),
        specs=str(five_workspace["specs"]),
        method="dryrun",
        endpoint="scripted",
        artifact_root=str(artifact_root),
        n_plan=2,
        n_sim=2,
        replicates=1,
        concurrency=2,
        mode="replay",
    )
    endpoints = load_endpoints(five_workspace["endpoints"])
    fx.record_transcripts(manifest, endpoints, fx.FIVE_PROBLEMS)
    manifest_path = artifact_root / "manifest.json"
    manifest_path.write_text(
        json.dumps(
            {
                "corpus": manifest.corpus,
                "specs": manifest.specs,
                "method": "dryrun",
                "endpoint": "scripted",
                "artifact_root": manifest.artifact_root,
                "n_plan": 2,
                "n_sim": 2,
                "replicates": 1,
                "concurrency": 2,
                "mode": "replay",
            }
        ),
        encoding="utf-8",
    )
    return {
        "manifest": manifest,
        "manifest_path": manifest_path,
        "endpoints": endpoints,
        "endpoints_path": five_workspace["endpoints"],
        "workspace": five_workspace,
    }


@pytest.fixture(scope="session")
def codesim_replay(five_workspace, tmp_path_factory):
    """Replay-ready CodeSIM manifest over the five problems (all candidates
    pass their public suite on the first attempt)."""
    artifact_root = tmp_path_factory.mktemp("codesim-artifacts")
    manifest = RunManifest(
        corpus=str(five_workspace["corpus"]),
        specs=None,
        method="codesim",
        endpoint="scripted",
        artifact_root=str(artifact_root),
        replicates=1,
        concurrency=2,
        mode="replay",
    )
    endpoints = load_endpoints(five_workspace["endpoints"])
    fx.record_transcripts(manifest, endpoints, fx.FIVE_PROBLEMS)
    return {"manifest": manifest, "endpoints": endpoints, "workspace": five_workspace}


@pytest.fixture(scope="session")
def oracle_workspace(tmp_path_factory):
    """Corpus files for the three-problem sandbox oracle set."""
    root = tmp_path_factory.mktemp("oracle")
    corpus = fx.write_corpus(root / "corpus.jsonl", fx.ORACLE_PROBLEMS)
    return {"root": root, "corpus": corpus}
