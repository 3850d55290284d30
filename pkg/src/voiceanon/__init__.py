"""Voice anonymization toolkit with an objective privacy/utility harness."""

from .anonymize import (AnonymizationConfig, PseudoSpeakerParams,
                        anonymize_corpus, assign_pseudo_speaker,
                        mcadams_anonymize, pitch_shift_anonymize)
from .asr import WerBreakdown, corpus_wer, normalize_text, wer
from .asv import (EerResult, Embedding, ScoreSet, SimilarityMatrix, Trial,
                  TrialSet, compute_eer, diagonal_dominance, enroll_speaker,
                  extract_embedding, gain_voice_distinctiveness, run_attack,
                  score_trial, similarity_matrix)
from .audio_io import (FrameConfig, Waveform, frame_signal, read_wav, resample,
                       write_wav)
from .dsp import (LpcModel, PoleSet, inverse_filter, lpc_coefficients,
                  overlap_add, poly_from_roots, polynomial_roots, pv_tsm,
                  rotate_poles, synthesis_filter)
from .pitch import (PitchContour, WarpPath, corpus_pitch_correlation, dtw_align,
                    estimate_f0, pitch_correlation)
from .protocol import (EvaluationCondition, Manifest, ManifestEntry,
                       STANDARD_CONDITIONS, aggregate, evaluate_condition,
                       generate_report, load_manifest, pitch_gate, save_manifest)
from .synth import synthesize_corpus

__version__ = "0.1.0"
