"""Word error rate between reference and hypothesis transcripts.

Decoding is out of scope: hypotheses come from transcript files produced
by any external recognizer. Normalization (uppercase, punctuation
stripped except in-word apostrophes) is fixed and applied to both sides.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import InputError, ProtocolError


@dataclass(frozen=True)
class WerBreakdown:
    n_sub: int
    n_del: int
    n_ins: int
    n_ref: int

    @property
    def n_errors(self) -> int:
        return self.n_sub + self.n_del + self.n_ins

    @property
    def wer(self) -> float:
        if self.n_ref == 0:
            raise InputError("WER undefined for an empty reference")
        return self.n_errors / self.n_ref


def normalize_text(s: str) -> list[str]:
    """Uppercase, drop punctuation except in-word apostrophes, split."""
    kept = [c if c.isalnum() or c == "'" else " " for c in s.upper()]
    return [t for t in (tok.strip("'") for tok in "".join(kept).split()) if t]


def wer(ref, hyp) -> WerBreakdown:
    """Minimum-edit-distance alignment with unit costs.

    Ties between optimal alignments are broken in favor of substitutions
    (over deletion/insertion pairs), which pins a unique count
    decomposition: given the distance and the length difference, the
    deletion and insertion counts follow. This keeps counts deterministic
    and makes swapping the arguments swap deletions with insertions.
    """
    ref = list(ref)
    hyp = list(hyp)
    n, m = len(ref), len(hyp)
    if n == 0:
        raise InputError("empty reference")
    # per cell: minimal cost and, among minimal-cost paths, maximal
    # substitution count
    cost_prev = list(range(m + 1))
    subs_prev = [0] * (m + 1)
    for i in range(1, n + 1):
        cost_cur = [i] + [0] * m
        subs_cur = [0] * (m + 1)
        ri = ref[i - 1]
        for j in range(1, m + 1):
            mismatch = ri != hyp[j - 1]
            best = cost_prev[j - 1] + mismatch
            best_subs = subs_prev[j - 1] + mismatch
            c = cost_prev[j] + 1
            if c < best or (c == best and subs_prev[j] > best_subs):
                best, best_subs = c, subs_prev[j]
            c = cost_cur[j - 1] + 1
            if c < best or (c == best and subs_cur[j - 1] > best_subs):
                best, best_subs = c, subs_cur[j - 1]
            cost_cur[j] = best
            subs_cur[j] = best_subs
        cost_prev, subs_prev = cost_cur, subs_cur

    distance = cost_prev[m]
    n_sub = subs_prev[m]
    n_del = (distance - n_sub + (n - m)) // 2
    n_ins = distance - n_sub - n_del
    return WerBreakdown(n_sub, n_del, n_ins, n)


def load_transcripts(path) -> dict:
    """Read `utterance_id <TAB> text` lines into a mapping."""
    path = Path(path)
    if not path.exists():
        raise ProtocolError(f"transcript file not found: {path}")
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t", 1)
            if len(cols) != 2:
                raise ProtocolError(f"{path}:{lineno}: expected "
                                    "'utterance_id<TAB>text'")
            if cols[0] in out:
                raise ProtocolError(f"{path}:{lineno}: duplicate utterance_id "
                                    f"{cols[0]!r}")
            out[cols[0]] = cols[1]
    return out


@dataclass(frozen=True)
class CorpusWerResult:
    breakdown: WerBreakdown
    missing: tuple
    per_utterance: tuple

    @property
    def wer(self) -> float:
        return self.breakdown.wer


def corpus_wer(ref_map: dict, hyp_map: dict) -> CorpusWerResult:
    """Pooled-count WER for one dataset.

    A missing hypothesis counts as full deletion of its reference and is
    flagged; a hypothesis for an unknown utterance id is a protocol error.
    """
    unknown = sorted(set(hyp_map) - set(ref_map))
    if unknown:
        raise ProtocolError(f"hypotheses for unknown utterances: "
                            f"{', '.join(unknown)}")
    n_sub = n_del = n_ins = n_ref = 0
    missing = []
    per_utt = []
    for utt_id in ref_map:
        ref_tokens = normalize_text(ref_map[utt_id])
        if not ref_tokens:
            raise InputError(f"empty reference transcript for {utt_id!r}")
        if utt_id not in hyp_map:
            missing.append(utt_id)
            breakdown = WerBreakdown(0, len(ref_tokens), 0, len(ref_tokens))
        else:
            breakdown = wer(ref_tokens, normalize_text(hyp_map[utt_id]))
        n_sub += breakdown.n_sub
        n_del += breakdown.n_del
        n_ins += breakdown.n_ins
        n_ref += breakdown.n_ref
        per_utt.append((utt_id, breakdown))
    if n_ref == 0:
        raise InputError("no reference words")
    return CorpusWerResult(WerBreakdown(n_sub, n_del, n_ins, n_ref),
                           tuple(missing), tuple(per_utt))
