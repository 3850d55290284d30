"""Manifests, evaluation conditions and report generation.

File formats:
  manifest    TSV  utterance_id <TAB> speaker_id <TAB> wav_path [<TAB> transcript]
  trials      text <enroll_speaker_id> <trial_utterance_id> target|nontarget
  scores      text <enroll_speaker_id> <trial_utterance_id> <score>
  report      JSON, schema shipped in voiceanon/schemas/report.schema.json
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .errors import ProtocolError

log = logging.getLogger(__name__)

PITCH_GATE_THRESHOLD = 0.3
STANDARD_CONDITION_EERS = (0.15, 0.20, 0.25, 0.30)
TOOL_VERSION = "0.1.0"


@dataclass(frozen=True)
class ManifestEntry:
    utterance_id: str
    speaker_id: str
    wav_path: Path
    transcript: str | None = None


@dataclass(frozen=True)
class Manifest:
    entries: tuple[ManifestEntry, ...]
    dataset_name: str

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        seen = set()
        for e in self.entries:
            if not e.speaker_id:
                raise ProtocolError(f"empty speaker_id for utterance {e.utterance_id!r}")
            if e.utterance_id in seen:
                raise ProtocolError(f"duplicate utterance_id {e.utterance_id!r}")
            seen.add(e.utterance_id)

    def __len__(self) -> int:
        return len(self.entries)

    def by_utterance(self) -> dict[str, ManifestEntry]:
        return {e.utterance_id: e for e in self.entries}

    def speakers(self) -> list[str]:
        out = []
        for e in self.entries:
            if e.speaker_id not in out:
                out.append(e.speaker_id)
        return out


def load_manifest(path, dataset_name: str | None = None) -> Manifest:
    """Read a manifest TSV. Paths are resolved against the manifest's directory."""
    path = Path(path)
    if not path.exists():
        raise ProtocolError(f"manifest not found: {path}")
    base = path.parent
    entries = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) < 3:
                raise ProtocolError(f"{path}:{lineno}: expected >= 3 tab-separated "
                                    f"columns, got {len(cols)}")
            utt, spk, wav = cols[0], cols[1], cols[2]
            if utt in seen:
                raise ProtocolError(f"{path}:{lineno}: duplicate utterance_id "
                                    f"{utt!r} (first seen on line {seen[utt]})")
            if not spk:
                raise ProtocolError(f"{path}:{lineno}: empty speaker_id")
            seen[utt] = lineno
            wav_path = Path(wav)
            if not wav_path.is_absolute():
                wav_path = base / wav_path
            transcript = cols[3] if len(cols) > 3 and cols[3] != "" else None
            entries.append(ManifestEntry(utt, spk, wav_path, transcript))
    if not entries:
        log.warning("manifest %s is empty", path)
    return Manifest(tuple(entries), dataset_name or path.stem)


def save_manifest(manifest: Manifest, path) -> None:
    """Write a manifest TSV; wav paths are made relative to the file if possible."""
    path = Path(path)
    base = path.parent.resolve()
    with open(path, "w", encoding="utf-8") as fh:
        for e in manifest.entries:
            wav = e.wav_path.resolve()
            try:
                wav_str = str(wav.relative_to(base))
            except ValueError:
                wav_str = str(wav)
            cols = [e.utterance_id, e.speaker_id, wav_str]
            if e.transcript is not None:
                cols.append(e.transcript)
            fh.write("\t".join(cols) + "\n")


@dataclass(frozen=True)
class EvaluationCondition:
    """One of the four minimum-privacy evaluation conditions."""

    min_target_eer: float
    index: int

    def __post_init__(self):
        if not any(abs(self.min_target_eer - v) < 1e-12
                   for v in STANDARD_CONDITION_EERS):
            raise ProtocolError(f"min_target_eer must be one of "
                                f"{STANDARD_CONDITION_EERS}, got {self.min_target_eer}")
        if not (1 <= self.index <= 4):
            raise ProtocolError(f"condition index must be 1..4, got {self.index}")


STANDARD_CONDITIONS = tuple(
    EvaluationCondition(eer, i + 1) for i, eer in enumerate(STANDARD_CONDITION_EERS))


@dataclass(frozen=True)
class ConditionResult:
    index: int
    min_target_eer: float
    passed: bool
    ranking_wer: float | None


def aggregate(per_dataset_eers, per_dataset_wers):
    """Equal-importance averages across datasets -> (weighted_eer, weighted_wer).

    ``per_dataset_wers`` values may be None (no transcripts supplied), in
    which case the weighted WER is None as well.
    """
    eers = list(per_dataset_eers.values()) if isinstance(per_dataset_eers, dict) \
        else list(per_dataset_eers)
    wers = list(per_dataset_wers.values()) if isinstance(per_dataset_wers, dict) \
        else list(per_dataset_wers)
    if not eers:
        raise ProtocolError("aggregate needs at least one dataset")
    weighted_eer = sum(eers) / len(eers)
    weighted_wer = None if any(v is None for v in wers) or not wers \
        else sum(wers) / len(wers)
    return weighted_eer, weighted_wer


def evaluate_condition(weighted_eer: float, pitch_gate_passed: bool,
                       condition: EvaluationCondition,
                       weighted_wer: float | None = None) -> ConditionResult:
    """A condition passes iff weighted EER strictly exceeds its minimum
    target and the pitch gate holds. Ranking key is the weighted WER."""
    passed = bool(weighted_eer > condition.min_target_eer and pitch_gate_passed)
    return ConditionResult(condition.index, condition.min_target_eer, passed,
                           weighted_wer if passed else None)


def pitch_gate(per_dataset_rho) -> bool:
    """True iff mean pitch correlation exceeds the 0.3 gate for every dataset."""
    values = per_dataset_rho.values() if isinstance(per_dataset_rho, dict) \
        else per_dataset_rho
    values = list(values)
    if not values:
        return False
    return all(v is not None and v > PITCH_GATE_THRESHOLD for v in values)


_REQUIRED_METRICS = ("eer", "wer", "rho_f0", "g_vd")


def _round_floats(obj, ndigits: int = 6):
    if isinstance(obj, float):
        if obj != obj or obj in (float("inf"), float("-inf")):
            return None
        return float(f"{obj:.{ndigits}f}")
    if isinstance(obj, dict):
        return {k: _round_floats(v, ndigits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v, ndigits) for v in obj]
    return obj


def generate_report(dataset_metrics: dict, config_echo: dict,
                    conditions=STANDARD_CONDITIONS,
                    sidecars: dict | None = None) -> dict:
    """Assemble the evaluation report.

    ``dataset_metrics`` maps dataset name to a dict that must carry the
    keys eer, wer, rho_f0 and g_vd (values may be None when a metric was
    not computed / is undefined). Raises ProtocolError listing any gaps.
    """
    if not dataset_metrics:
        raise ProtocolError("no dataset metrics supplied")
    gaps = []
    for name, metrics in dataset_metrics.items():
        for key in _REQUIRED_METRICS:
            if key not in metrics:
                gaps.append(f"{name}.{key}")
    if gaps:
        raise ProtocolError(f"missing metrics: {', '.join(sorted(gaps))}")

    eers = {n: m["eer"] for n, m in dataset_metrics.items()}
    wers = {n: m["wer"] for n, m in dataset_metrics.items()}
    rhos = {n: m["rho_f0"] for n, m in dataset_metrics.items()}
    weighted_eer, weighted_wer = aggregate(eers, wers)
    gate = pitch_gate(rhos)
    condition_results = [
        evaluate_condition(weighted_eer, gate, c, weighted_wer) for c in conditions]

    report = {
        "tool": {"name": "voiceanon", "version": TOOL_VERSION},
        "config": config_echo,
        "datasets": {
            name: {k: metrics.get(k) for k in
                   ("eer", "eer_unprotected", "wer", "rho_f0", "rho_f0_dtw",
                    "g_vd", "n_utterances") if k in metrics}
            for name, metrics in dataset_metrics.items()
        },
        "weighted": {"eer": weighted_eer, "wer": weighted_wer},
        "pitch_gate_passed": gate,
        "conditions": [
            {"index": r.index, "min_target_eer": r.min_target_eer,
             "passed": r.passed, "ranking_wer": r.ranking_wer}
            for r in condition_results
        ],
        "sidecars": dict(sidecars or {}),
    }
    return _round_floats(report)


def report_to_json(report: dict) -> str:
    """Deterministic JSON rendering (sorted keys, fixed float formatting)."""
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def write_report(report: dict, path) -> None:
    Path(path).write_text(report_to_json(report), encoding="utf-8")
