"""File-backed experiment store.

Layout under the store root::

    plans/<plan_id>.json            split plans, immutable
    checkpoints/<aa>/<hash>.bin     weight blobs, content-addressed by SHA-256
    checkpoints/<aa>/<hash>.json    provenance sidecar (list of provenances seen)
    manifests/<run_id>.json         run manifests, append-only
    tags/<name>.json                mutable name -> checkpoint_id pointers
    scores/<name>.scm               score-matrix files

Plans and checkpoint blobs are immutable once written; manifests grow by
appending iteration records under a writer lock (single writer, many
readers).
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from pathlib import Path

from filelock import FileLock

from .errors import BenchError
from .splits import SplitPlan, plan_from_json, plan_to_json

MANIFEST_SCHEMA_VERSION = 1

# Fields of an iteration record that may legitimately differ between two
# deterministic re-runs of the same configuration.
_VOLATILE_RECORD_FIELDS = ("wall_seconds",)


class ExperimentStore:
    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        for sub in ("plans", "checkpoints", "manifests", "tags", "scores"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        self._manifest_lock = FileLock(str(self.root / "manifests" / ".writer.lock"))

    # ------------------------------------------------------------------ plans

    def put_plan(self, plan: SplitPlan) -> str:
        plan_id = plan.plan_id
        path = self.root / "plans" / f"{plan_id}.json"
        if not path.exists():
            _atomic_write_text(path, plan_to_json(plan))
        return plan_id

    def get_plan(self, plan_id: str) -> SplitPlan:
        path = self.root / "plans" / f"{plan_id}.json"
        if not path.exists():
            raise BenchError("NOT_FOUND", f"no plan {plan_id} in {self.root}")
        return plan_from_json(path.read_text())

    # ------------------------------------------------------------ checkpoints

    def register_checkpoint(self, blob: bytes, provenance: dict) -> str:
        """Store a weight blob; returns its content-hash checkpoint id.

        Registering the same bytes twice is a no-op returning the same id.
        Distinct provenances for identical bytes are all recorded in the
        sidecar.
        """
        _check_provenance(provenance)
        digest = hashlib.sha256(blob).hexdigest()
        blob_path = self._blob_path(digest)
        blob_path.parent.mkdir(parents=True, exist_ok=True)
        if not blob_path.exists():
            _atomic_write_bytes(blob_path, blob)
        meta_path = blob_path.with_suffix(".json")
        if meta_path.exists():
            meta = json.loads(meta_path.read_text())
        else:
            meta = {"checkpoint_id": digest, "provenances": []}
        if provenance not in meta["provenances"]:
            meta["provenances"].append(provenance)
            _atomic_write_text(meta_path, json.dumps(meta, sort_keys=True, indent=1))
        return digest

    def load_checkpoint(self, checkpoint_id: str) -> bytes:
        blob_path = self._blob_path(checkpoint_id)
        if not blob_path.exists():
            raise BenchError("NOT_FOUND", f"no checkpoint {checkpoint_id} in {self.root}")
        blob = blob_path.read_bytes()
        if hashlib.sha256(blob).hexdigest() != checkpoint_id:
            raise BenchError("HASH_MISMATCH", f"checkpoint {checkpoint_id} blob is corrupted")
        return blob

    def checkpoint_provenances(self, checkpoint_id: str) -> list[dict]:
        meta_path = self._blob_path(checkpoint_id).with_suffix(".json")
        if not meta_path.exists():
            raise BenchError("NOT_FOUND", f"no checkpoint {checkpoint_id} in {self.root}")
        return json.loads(meta_path.read_text())["provenances"]

    def has_checkpoint(self, checkpoint_id: str) -> bool:
        return self._blob_path(checkpoint_id).exists()

    def _blob_path(self, digest: str) -> Path:
        return self.root / "checkpoints" / digest[:2] / f"{digest}.bin"

    # -------------------------------------------------------------------- tags

    def set_tag(self, name: str, checkpoint_id: str) -> None:
        if not self.has_checkpoint(checkpoint_id):
            raise BenchError("NOT_FOUND", f"cannot tag unknown checkpoint {checkpoint_id}")
        _atomic_write_text(
            self.root / "tags" / f"{name}.json", json.dumps({"checkpoint_id": checkpoint_id})
        )

    def get_tag(self, name: str) -> str:
        path = self.root / "tags" / f"{name}.json"
        if not path.exists():
            raise BenchError("NOT_FOUND", f"no tag {name!r} in {self.root}")
        return json.loads(path.read_text())["checkpoint_id"]

    # --------------------------------------------------------------- manifests

    def create_manifest(
        self, run_id: str, plan_id: str, algorithm: str, hyperparams: dict, seeds: dict
    ) -> dict:
        """Create (or return) the manifest for ``run_id``.

        Re-creating an existing manifest is allowed only when the identifying
        fields match, so deterministic re-runs are idempotent.
        """
        with self._manifest_lock:
            path = self._manifest_path(run_id)
            if path.exists():
                manifest = json.loads(path.read_text())
                head = {k: manifest[k] for k in ("plan_id", "algorithm", "hyperparams", "seeds")}
                want = {
                    "plan_id": plan_id,
                    "algorithm": algorithm,
                    "hyperparams": hyperparams,
                    "seeds": seeds,
                }
                if head != want:
                    raise BenchError(
                        "MANIFEST_CONFLICT", f"run {run_id} exists with different parameters"
                    )
                return manifest
            manifest = {
                "schema_version": MANIFEST_SCHEMA_VERSION,
                "run_id": run_id,
                "plan_id": plan_id,
                "algorithm": algorithm,
                "hyperparams": hyperparams,
                "seeds": seeds,
                "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                "status": "running",
                "iterations": [],
            }
            _atomic_write_text(path, json.dumps(manifest, sort_keys=True, indent=1))
            return manifest

    def append_iteration(self, run_id: str, record: dict) -> None:
        """Append one iteration record; existing records are never rewritten.

        Appending an index that is already present succeeds only if every
        non-volatile field matches the stored record (idempotent re-run); the
        stored record wins.
        """
        with self._manifest_lock:
            manifest = self._read_manifest(run_id)
            idx = record["iteration"]
            have = {r["iteration"]: r for r in manifest["iterations"]}
            if idx in have:
                if _stable_view(have[idx]) != _stable_view(record):
                    raise BenchError(
                        "MANIFEST_CONFLICT",
                        f"iteration {idx} of run {run_id} already recorded with different values",
                    )
                return
            if idx != len(manifest["iterations"]):
                raise BenchError(
                    "MANIFEST_CONFLICT",
                    f"iteration {idx} appended out of order for run {run_id}",
                )
            manifest["iterations"].append(record)
            _atomic_write_text(
                self._manifest_path(run_id), json.dumps(manifest, sort_keys=True, indent=1)
            )

    def finish_manifest(self, run_id: str, status: str) -> None:
        with self._manifest_lock:
            manifest = self._read_manifest(run_id)
            manifest["status"] = status
            _atomic_write_text(
                self._manifest_path(run_id), json.dumps(manifest, sort_keys=True, indent=1)
            )

    def get_manifest(self, run_id: str) -> dict:
        return self._read_manifest(run_id)

    def _read_manifest(self, run_id: str) -> dict:
        path = self._manifest_path(run_id)
        if not path.exists():
            raise BenchError("NOT_FOUND", f"no run manifest {run_id} in {self.root}")
        return json.loads(path.read_text())

    def _manifest_path(self, run_id: str) -> Path:
        return self.root / "manifests" / f"{run_id}.json"

    # ------------------------------------------------------------------ scores

    def score_path(self, name: str) -> Path:
        return self.root / "scores" / f"{name}.scm"

    # ---------------------------------------------------------- attack output

    def save_attack_result(self, run_id: str, name: str, payload: dict) -> Path:
        path = self.root / "attacks" / run_id / f"{name}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write_text(path, json.dumps(payload, sort_keys=True))
        return path

    def load_attack_results(self, run_id: str) -> dict[str, dict]:
        base = self.root / "attacks" / run_id
        if not base.is_dir():
            return {}
        return {p.stem: json.loads(p.read_text()) for p in sorted(base.glob("*.json"))}


def _stable_view(record: dict) -> dict:
    out = {k: v for k, v in record.items() if k not in _VOLATILE_RECORD_FIELDS}
    cost = out.get("cost")
    if isinstance(cost, dict):
        out["cost"] = {k: v for k, v in cost.items() if k not in _VOLATILE_RECORD_FIELDS}
    return out


def _check_provenance(provenance: dict) -> None:
    required = ("architecture", "data_hash", "epochs", "seed")
    missing = [k for k in required if k not in provenance]
    if missing:
        raise BenchError("BAD_PROVENANCE", f"provenance missing fields: {missing}")


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _atomic_write_bytes(path: Path, blob: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)
