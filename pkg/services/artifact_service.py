"""
Run configuration, manifests and artifact writers
Result files are canonical JSON so repeated runs stay byte-identical
"""

import hashlib
import json
import logging
import os
from datetime import datetime, timezone

import numpy as np
import pandas as pd

from config import Config
from core.errors import ValidationError
from services.plan_service import STOP, TestPlan

logger = logging.getLogger(__name__)


def read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except FileNotFoundError:
        raise ValidationError(f"File not found: {path}")
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path} is not valid JSON: {e}")


def resolve_config(doc, base_dir=None):
    """Inline referenced files ("model", "design") relative to base_dir"""
    if not isinstance(doc, dict):
        raise ValidationError("Run configuration must be a JSON object")
    resolved = dict(doc)
    for key in ("model", "design"):
        value = resolved.get(key)
        if isinstance(value, str):
            if base_dir is None:
                raise ValidationError(f"'{key}' must be given inline here, not as a path")
            resolved[key] = read_json(os.path.join(base_dir, value))
    if "model" not in resolved:
        raise ValidationError("Run configuration needs a 'model'")
    return resolved


def load_config(path):
    doc = read_json(path)
    return resolve_config(doc, os.path.dirname(os.path.abspath(path)))


def canonical_json(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), default=_default)


def _default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Not JSON serialisable: {type(value).__name__}")


def digest(doc):
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()


def manifest_hash(command, config, params, seeds=None):
    """Hash of everything that determines a result; wall-clock and paths stay out"""
    return digest({
        "command": command,
        "config_digest": digest(config),
        "params": params,
        "tool_version": Config.TOOL_VERSION,
        "seeds": seeds or [],
    })


def build_manifest(command, config, params, seeds=None, outputs=None, config_path=None, started=None):
    now = datetime.now(timezone.utc)
    return {
        "schema": Config.SCHEMA_VERSION,
        "command": command,
        "config_path": os.path.abspath(config_path) if config_path else None,
        "config_digest": digest(config),
        "params": params,
        "tool_version": Config.TOOL_VERSION,
        "seeds": seeds or [],
        "outputs": sorted(outputs or []),
        "wall_clock": {
            "finished": now.isoformat(),
            "elapsed_s": (now - started).total_seconds() if started else None,
        },
        "hash": manifest_hash(command, config, params, seeds),
    }


def to_jsonable(doc):
    return json.loads(canonical_json(doc))


def write_json(path, doc):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(to_jsonable(doc), handle, indent=2, sort_keys=True)
        handle.write("\n")


def write_text(path, text):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(text)


def write_csv(path, frame, manifest_id=None):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        if manifest_id:
            handle.write(f"# manifest {manifest_id}\n")
        frame.to_csv(handle, index=False, float_format="%.17g")


def prepare_out_dir(out_dir, names, force=False):
    """Refuse to clobber earlier results unless forced"""
    os.makedirs(out_dir, exist_ok=True)
    existing = [n for n in names if os.path.exists(os.path.join(out_dir, n))]
    if existing and not force:
        raise ValidationError(f"Output files already exist in {out_dir}: {existing} (use --force)")


def load_plan(doc):
    """Plan from a design artifact or a bare plan document"""
    if not isinstance(doc, dict):
        raise ValidationError("Design must be a JSON object")
    return TestPlan.from_dict(doc.get("plan", doc))


def value_tables_frame(tables, plan):
    rows = []
    for values, stage in zip(tables.stages, plan.stages):
        for idx, label in enumerate(stage.labels):
            rows.append({
                "stage": values.n,
                "state": label,
                "l": values.l[idx],
                "R": values.R[idx],
                "V": values.V[idx],
                "f_asn": values.f_asn[idx],
                "action": "stop" if stage.actions[idx] == STOP else "continue",
                "boundary_tie": bool(stage.boundary_tie[idx]),
                "accept": int(stage.accept[idx]) + 1,
            })
    return pd.DataFrame(rows, columns=["stage", "state", "l", "R", "V", "f_asn", "action", "boundary_tie", "accept"])


def trace_frame(trace):
    frame = pd.DataFrame(trace)
    for column in ("sweep", "N"):
        if column in frame.columns:
            frame = frame.sort_values(column, kind="stable")
    return frame


def stopping_distribution_frame(oc):
    frame = pd.DataFrame(oc.stopping_distribution.T, columns=oc.parameters)
    frame.insert(0, "stage", np.arange(oc.horizon + 1))
    return frame


def _runs(stage):
    """Consecutive count-of-symbol-1 runs sharing action and decision (A = 2 count states)"""
    ones = [int(label.split(",")[1]) for label in stage.labels]
    # continue states carry a provisional decision that the text ignores
    keys = [
        (int(a), int(d) if a == STOP else -1, bool(t))
        for a, d, t in zip(stage.actions, stage.accept, stage.boundary_tie)
    ]
    runs = []
    start = 0
    for idx in range(1, len(keys) + 1):
        if idx == len(keys) or keys[idx] != keys[start]:
            runs.append((ones[start], ones[idx - 1], keys[start]))
            start = idx
    return runs


def describe_stage(plan, n):
    stage = plan.stage(n)
    if plan.model_kind == "iid" and plan.alphabet_size == 2:
        parts = []
        for first, last, (action, accept, tie) in _runs(stage):
            span = f"{first}" if first == last else f"{first}..{last}"
            text = f"#1 in {span}: " + (f"stop, accept H{accept + 1}" if action == STOP else "continue")
            parts.append(text + (" (tie)" if tie else ""))
        return "; ".join(parts)
    stops = int(np.count_nonzero(stage.actions == STOP))
    ties = int(np.count_nonzero(stage.boundary_tie))
    return f"{stops} stop / {stage.size - stops} continue / {ties} boundary ties"


def design_summary(plan, value, triviality, converged=True, stop_reason=None, oc=None, manifest_id=None):
    lines = [
        "seqopt design summary",
        f"plan: {plan.plan_kind}, model {plan.model_kind}, A={plan.alphabet_size}, k={plan.k}, horizon {plan.horizon}",
        f"value: {value:.12g}",
        f"no-observation risk l0: {triviality.l0:.12g}",
    ]
    if manifest_id:
        lines.insert(1, f"manifest: {manifest_id}")
    if not converged:
        lines.append(f"limit passage did not converge ({stop_reason})")
    if triviality.take_observations:
        stop_stages = [s.n for s in plan.stages if np.any(s.actions == STOP)]
        if stop_stages:
            lines.append(f"earliest stop: stops at stage {stop_stages[0]}")
    else:
        accept = triviality.decision.accept + 1
        lines.append(f"trivial test: decide immediately without observations, accept H{accept}, risk {triviality.l0:.12g}")
    if oc is not None:
        lines.append(f"ASN under the mixture: {oc.asn_weighted:.12g}")
    for stage in plan.stages:
        lines.append(f"stage {stage.n}: {describe_stage(plan, stage.n)}")
    return "\n".join(lines) + "\n"


def emit_artifacts(out_dir, files, manifest, force=False):
    """Write result files plus manifest.json; returns the written paths"""
    names = sorted(list(files) + ["manifest.json"])
    prepare_out_dir(out_dir, names, force)
    for name, content in sorted(files.items()):
        path = os.path.join(out_dir, name)
        if isinstance(content, pd.DataFrame):
            write_csv(path, content, manifest.get("hash"))
        elif isinstance(content, str):
            write_text(path, content)
        else:
            write_json(path, content)
    write_json(os.path.join(out_dir, "manifest.json"), manifest)
    logger.info(f"Wrote {len(names)} artifacts to {out_dir}")
    return [os.path.join(out_dir, n) for n in names]
