"""Command-line front end for anonymization and evaluation runs.

Subcommands: synth-corpus, anonymize, evaluate, eer, wer, pitch-corr,
gvd, report. Options can come from a TOML config file (flat keys named
like the long options, underscores instead of dashes); explicit
command-line flags win over the config file.

Exit codes: 0 success, 1 processing/metric failure, 2 configuration or
protocol error (including usage errors).
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

try:
    import tomllib
except ModuleNotFoundError:                     # Python < 3.11
    import tomli as tomllib

from . import asr, asv, pitch, protocol, synth
from .anonymize import DEFAULT_SEED, AnonymizationConfig, anonymize_corpus
from .audio_io import read_wav
from .errors import (ConfigError, CorpusProcessingError, MetricUndefinedError,
                     ParameterError, ProtocolError, VoiceAnonError)

DEFAULT_ATTACKER_SEED = 4321

_CONFIG_KEYS = ("method", "level", "seed", "alpha_min", "alpha_max",
                "shift_min", "shift_max", "frame_ms", "hop_ms", "lpc_order",
                "threads", "attacker_seed", "dataset_name")


def _load_config_file(path) -> dict:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}")
    unknown = set(data) - set(_CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys: {', '.join(sorted(unknown))}")
    return data


def _resolve(cli_values: dict, config_path, defaults: dict) -> dict:
    """Merge explicit CLI flags over config-file values over defaults."""
    from_file = _load_config_file(config_path) if config_path else {}
    merged = dict(defaults)
    merged.update({k: v for k, v in from_file.items() if k in defaults})
    merged.update({k: v for k, v in cli_values.items()
                   if v is not None and k in defaults})
    return merged


def _anon_config(opts: dict) -> AnonymizationConfig:
    try:
        return AnonymizationConfig(
            method=opts["method"], level=opts["level"], seed=int(opts["seed"]),
            alpha_min=float(opts["alpha_min"]), alpha_max=float(opts["alpha_max"]),
            shift_min=float(opts["shift_min"]), shift_max=float(opts["shift_max"]),
            frame_ms=float(opts["frame_ms"]), hop_ms=float(opts["hop_ms"]),
            lpc_order=int(opts["lpc_order"]))
    except ParameterError as exc:
        raise ConfigError(str(exc))


_ANON_DEFAULTS = {
    "method": "mcadams", "level": "speaker", "seed": DEFAULT_SEED,
    "alpha_min": 0.75, "alpha_max": 0.90, "shift_min": -8.0, "shift_max": 8.0,
    "frame_ms": 20.0, "hop_ms": 10.0, "lpc_order": 20, "threads": 1,
}


def _anon_options(fn):
    decorators = [
        click.option("--method", type=click.Choice(["mcadams", "pitch_shift"]),
                     default=None, help="Anonymization method [mcadams]."),
        click.option("--level", type=click.Choice(["speaker", "utterance"]),
                     default=None, help="Pseudo-speaker assignment level [speaker]."),
        click.option("--seed", type=int, default=None,
                     help=f"Run seed [{DEFAULT_SEED}]."),
        click.option("--alpha-min", type=float, default=None,
                     help="Lower bound of the formant-shift coefficient [0.75]."),
        click.option("--alpha-max", type=float, default=None,
                     help="Upper bound of the formant-shift coefficient [0.90]."),
        click.option("--shift-min", type=float, default=None,
                     help="Lower bound of the pitch shift in semitones [-8]."),
        click.option("--shift-max", type=float, default=None,
                     help="Upper bound of the pitch shift in semitones [8]."),
        click.option("--frame-ms", type=float, default=None,
                     help="Analysis frame length in ms [20]."),
        click.option("--hop-ms", type=float, default=None,
                     help="Analysis hop in ms [10]."),
        click.option("--lpc-order", type=int, default=None,
                     help="LPC order [20]."),
        click.option("--threads", type=int, default=None,
                     envvar="VOICEANON_THREADS",
                     help="Worker threads [1; env VOICEANON_THREADS]."),
        click.option("--config", "config_path",
                     type=click.Path(dir_okay=False), default=None,
                     help="TOML config file; flags override its values."),
    ]
    for dec in reversed(decorators):
        fn = dec(fn)
    return fn


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, ProtocolError, ParameterError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except VoiceAnonError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
    return wrapper


@click.group()
@click.version_option(version=protocol.TOOL_VERSION, prog_name="voiceanon")
def main():
    """Voice anonymization and objective privacy/utility evaluation."""


@main.command("synth-corpus")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--speakers", type=int, default=8, show_default=True)
@click.option("--utts-per-speaker", type=int, default=4, show_default=True)
@click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True)
@click.option("--sample-rate", type=int, default=16000, show_default=True)
@click.option("--scramble-contours", is_flag=True,
              help="Replace every pitch contour with an unrelated random one.")
@_handle_errors
def cmd_synth_corpus(out_dir, speakers, utts_per_speaker, seed, sample_rate,
                     scramble_contours):
    """Generate a deterministic synthetic corpus with manifest and trials."""
    try:
        manifest = synth.synthesize_corpus(out_dir, speakers, utts_per_speaker,
                                           seed, sample_rate, scramble_contours)
    except VoiceAnonError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(f"wrote {len(manifest)} utterances for {speakers} speakers "
               f"to {out_dir} (seed {seed})")


@main.command("anonymize")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@_anon_options
@_handle_errors
def cmd_anonymize(manifest_path, out_dir, config_path, **cli_values):
    """Anonymize every utterance of a manifest into OUT/."""
    opts = _resolve(cli_values, config_path, _ANON_DEFAULTS)
    cfg = _anon_config(opts)
    manifest = protocol.load_manifest(manifest_path)
    try:
        result = anonymize_corpus(manifest, cfg, out_dir,
                                  threads=int(opts["threads"]))
    except CorpusProcessingError as exc:
        for utt_id, err in exc.failures:
            click.echo(f"failed: {utt_id}: {err}", err=True)
        sys.exit(1)
    out_manifest = Path(out_dir) / "manifest.tsv"
    protocol.save_manifest(result, out_manifest)
    click.echo(f"anonymized {len(result)} utterances "
               f"(method={cfg.method}, level={cfg.level}, seed={cfg.seed}) "
               f"-> {out_manifest}")


def _similarity_pair(orig_manifest, anon_manifest, embedding_cfg):
    def by_speaker(manifest):
        groups = {}
        for e in manifest.entries:
            emb = asv.extract_embedding(read_wav(e.wav_path), embedding_cfg)
            groups.setdefault(e.speaker_id, []).append(emb)
        return groups

    m_oo = asv.similarity_matrix(by_speaker(orig_manifest))
    m_aa = asv.similarity_matrix(by_speaker(anon_manifest))
    return m_oo, m_aa


@main.command("evaluate")
@click.option("--orig-manifest", "orig_path", required=True,
              type=click.Path(dir_okay=False),
              help="Original (unprotected) trial audio.")
@click.option("--anon-manifest", "anon_path", required=True,
              type=click.Path(dir_okay=False),
              help="Anonymized trial audio (output of `voiceanon anonymize` "
                   "or an external system).")
@click.option("--enroll-manifest", "enroll_path",
              type=click.Path(dir_okay=False), default=None,
              help="Enrollment audio; defaults to the original manifest "
                   "(only sensible for quick smoke runs).")
@click.option("--trials", "trials_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--hyp", "hyp_path", type=click.Path(dir_okay=False), default=None,
              help="Hypothesis transcripts (TSV) from an external ASR; "
                   "enables the WER metric.")
@click.option("--scores", "scores_path", type=click.Path(dir_okay=False),
              default=None,
              help="External score file for the anonymized scenario; "
                   "skips the built-in attack simulation.")
@click.option("--scores-unprotected", "scores_unprot_path",
              type=click.Path(dir_okay=False), default=None,
              help="External score file for the unprotected scenario.")
@click.option("--train-manifest", "train_path", type=click.Path(dir_okay=False),
              default=None,
              help="Attacker adaptation data (defaults to the original manifest).")
@click.option("--attacker-seed", type=int, default=None,
              help=f"Attacker anonymization seed [{DEFAULT_ATTACKER_SEED}].")
@click.option("--dataset-name", default=None,
              help="Dataset label in the report [manifest stem].")
@_anon_options
@_handle_errors
def cmd_evaluate(orig_path, anon_path, enroll_path, trials_path, out_dir,
                 hyp_path, scores_path, scores_unprot_path, train_path,
                 attacker_seed, dataset_name, config_path, **cli_values):
    """Run the full objective metric suite and write report.json."""
    defaults = dict(_ANON_DEFAULTS, attacker_seed=DEFAULT_ATTACKER_SEED,
                    dataset_name=None)
    cli_values.update(attacker_seed=attacker_seed, dataset_name=dataset_name)
    opts = _resolve(cli_values, config_path, defaults)
    cfg = _anon_config(opts)
    attacker_seed = int(opts["attacker_seed"])
    if attacker_seed == cfg.seed:
        raise ConfigError(f"attacker seed equals the user seed ({cfg.seed}); "
                          "pick a different --attacker-seed")
    threads = int(opts["threads"])

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = opts["dataset_name"] or Path(orig_path).stem
    orig_manifest = protocol.load_manifest(orig_path, dataset)
    anon_manifest = protocol.load_manifest(anon_path, dataset)
    enroll_manifest = protocol.load_manifest(enroll_path) if enroll_path \
        else orig_manifest
    trials = asv.load_trials(trials_path)
    sidecars = {}

    # privacy: unprotected baseline and semi-informed attack
    if scores_unprot_path:
        unprot_scores = asv.join_scores(trials, asv.load_score_file(scores_unprot_path))
        eer_unprot = unprot_scores.eer()
    else:
        eer_unprot, unprot_scores = asv.run_attack(
            "unprotected", enroll_manifest, orig_manifest, trials)
    asv.save_scores(unprot_scores, out_dir / "scores_unprotected.txt")
    sidecars["scores_unprotected"] = "scores_unprotected.txt"

    if scores_path:
        attack_scores = asv.join_scores(trials, asv.load_score_file(scores_path))
        eer_attack = attack_scores.eer()
    else:
        train_manifest = protocol.load_manifest(train_path) if train_path else None
        eer_attack, attack_scores = asv.run_attack(
            "semi_informed", enroll_manifest, anon_manifest, trials, cfg=cfg,
            attacker_seed=attacker_seed, train_manifest=train_manifest,
            work_dir=out_dir / "attack_work", trial_pre_anonymized=True,
            threads=threads)
    asv.save_scores(attack_scores, out_dir / "scores_semi_informed.txt")
    sidecars["scores_semi_informed"] = "scores_semi_informed.txt"

    # pitch correlation (with DTW realignment)
    pitch_result = pitch.corpus_pitch_correlation(orig_manifest, anon_manifest,
                                                  with_dtw=True)
    pitch.write_pitch_csv(pitch_result, out_dir / "pitch_per_utterance.csv")
    sidecars["pitch_per_utterance"] = "pitch_per_utterance.csv"

    # voice distinctiveness
    m_oo, m_aa = _similarity_pair(orig_manifest, anon_manifest, asv.EmbeddingConfig())
    asv.save_similarity_matrix(m_oo, out_dir / "similarity_original.csv")
    asv.save_similarity_matrix(m_aa, out_dir / "similarity_anonymized.csv")
    sidecars["similarity_original"] = "similarity_original.csv"
    sidecars["similarity_anonymized"] = "similarity_anonymized.csv"
    try:
        g_vd = asv.gain_voice_distinctiveness(m_oo, m_aa)
    except MetricUndefinedError:
        g_vd = None

    # utility: WER from supplied hypotheses
    wer_value = None
    if hyp_path:
        refs = {e.utterance_id: e.transcript for e in orig_manifest.entries}
        if any(v is None for v in refs.values()):
            raise ConfigError("original manifest has no transcript column; "
                              "cannot score WER")
        wer_result = asr.corpus_wer(refs, asr.load_transcripts(hyp_path))
        wer_value = wer_result.wer
        if wer_result.missing:
            click.echo(f"warning: {len(wer_result.missing)} utterance(s) had no "
                       f"hypothesis and were scored as deletions", err=True)

    metrics = {dataset: {
        "eer": eer_attack.eer,
        "eer_unprotected": eer_unprot.eer,
        "wer": wer_value,
        "rho_f0": pitch_result.mean_rho,
        "rho_f0_dtw": pitch_result.mean_rho_dtw,
        "g_vd": g_vd,
        "n_utterances": len(orig_manifest),
    }}
    config_echo = {
        "method": cfg.method, "level": cfg.level, "seed": cfg.seed,
        "alpha_min": cfg.alpha_min, "alpha_max": cfg.alpha_max,
        "shift_min": cfg.shift_min, "shift_max": cfg.shift_max,
        "frame_ms": cfg.frame_ms, "hop_ms": cfg.hop_ms,
        "lpc_order": cfg.lpc_order, "attacker_seed": attacker_seed,
    }
    report = protocol.generate_report(metrics, config_echo, sidecars=sidecars)
    protocol.write_report(report, out_dir / "report.json")

    click.echo(f"dataset {dataset}: EER(unprotected)={eer_unprot.eer:.4f} "
               f"EER(semi-informed)={eer_attack.eer:.4f}")
    rho = pitch_result.mean_rho
    rho_dtw = pitch_result.mean_rho_dtw
    click.echo(f"rho_f0={'n/a' if rho is None else f'{rho:.4f}'} "
               f"(dtw {'n/a' if rho_dtw is None else f'{rho_dtw:.4f}'}) "
               f"g_vd={'n/a' if g_vd is None else f'{g_vd:.4f} dB'} "
               f"wer={'n/a' if wer_value is None else f'{wer_value:.4f}'}")
    for cond in report["conditions"]:
        click.echo(f"condition {cond['index']} (EER > {cond['min_target_eer']:.0%}): "
                   f"{'pass' if cond['passed'] else 'fail'}")
    click.echo(f"report: {out_dir / 'report.json'}")


@main.command("eer")
@click.option("--scores", "scores_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--trials", "trials_path", required=True,
              type=click.Path(dir_okay=False))
@_handle_errors
def cmd_eer(scores_path, trials_path):
    """EER from a scores file joined against a trials file."""
    trials = asv.load_trials(trials_path)
    result = asv.join_scores(trials, asv.load_score_file(scores_path)).eer()
    click.echo(f"EER {result.eer:.6f} at threshold {result.threshold:.6f} "
               f"({result.n_target} target / {result.n_nontarget} nontarget)")


@main.command("wer")
@click.option("--ref", "ref_path", required=True, type=click.Path(dir_okay=False))
@click.option("--hyp", "hyp_path", required=True, type=click.Path(dir_okay=False))
@_handle_errors
def cmd_wer(ref_path, hyp_path):
    """Corpus WER between two transcript TSV files."""
    result = asr.corpus_wer(asr.load_transcripts(ref_path),
                            asr.load_transcripts(hyp_path))
    b = result.breakdown
    click.echo(f"WER {b.wer:.6f} (sub {b.n_sub}, del {b.n_del}, ins {b.n_ins}, "
               f"ref words {b.n_ref}, missing hyps {len(result.missing)})")


@main.command("pitch-corr")
@click.option("--orig-manifest", "orig_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--anon-manifest", "anon_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--dtw/--no-dtw", "with_dtw", default=False, show_default=True,
              help="Also report the correlation after DTW realignment.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None,
              help="Write the per-utterance sidecar CSV here.")
@_handle_errors
def cmd_pitch_corr(orig_path, anon_path, with_dtw, csv_path):
    """Mean pitch correlation between paired manifests."""
    result = pitch.corpus_pitch_correlation(protocol.load_manifest(orig_path),
                                            protocol.load_manifest(anon_path),
                                            with_dtw=with_dtw)
    if csv_path:
        pitch.write_pitch_csv(result, csv_path)
    mean = "undefined" if result.mean_rho is None else f"{result.mean_rho:.6f}"
    click.echo(f"mean rho_f0 {mean} ({result.n_undefined} undefined utterances)")
    if with_dtw and result.mean_rho_dtw is not None:
        click.echo(f"mean rho_f0 with DTW {result.mean_rho_dtw:.6f}")


@main.command("gvd")
@click.option("--orig-manifest", "orig_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--anon-manifest", "anon_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--matrix-out", "matrix_dir", type=click.Path(file_okay=False),
              default=None, help="Dump both similarity matrices as CSV here.")
@_handle_errors
def cmd_gvd(orig_path, anon_path, matrix_dir):
    """Gain of voice distinctiveness between paired manifests."""
    m_oo, m_aa = _similarity_pair(protocol.load_manifest(orig_path),
                                  protocol.load_manifest(anon_path),
                                  asv.EmbeddingConfig())
    if matrix_dir:
        matrix_dir = Path(matrix_dir)
        matrix_dir.mkdir(parents=True, exist_ok=True)
        asv.save_similarity_matrix(m_oo, matrix_dir / "similarity_original.csv")
        asv.save_similarity_matrix(m_aa, matrix_dir / "similarity_anonymized.csv")
    value = asv.gain_voice_distinctiveness(m_oo, m_aa)
    click.echo(f"G_VD {value:.6f} dB")


@main.command("report")
@click.option("--metrics", "metrics_path", required=True,
              type=click.Path(dir_okay=False),
              help="JSON file with 'datasets' (per-dataset metric dicts) and "
                   "optional 'config' / 'sidecars' objects.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@_handle_errors
def cmd_report(metrics_path, out_path):
    """Assemble a report from precomputed per-dataset metrics."""
    try:
        payload = json.loads(Path(metrics_path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ProtocolError(f"metrics file not found: {metrics_path}")
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"{metrics_path}: {exc}")
    if "datasets" not in payload:
        raise ProtocolError(f"{metrics_path}: missing 'datasets' object")
    report = protocol.generate_report(payload["datasets"],
                                      payload.get("config", {}),
                                      sidecars=payload.get("sidecars"))
    protocol.write_report(report, out_path)
    click.echo(f"report: {out_path}")


if __name__ == "__main__":
    main()
