"""Direct-path relative transfer function (DP-RTF) estimation and sound source localization."""
from .baselines import estimate_rtf_mtf, rtf_mtf_estimate, srp_phat_localize
from .classify import (FrameClasses, MinMaxModel, classify_frames, classification_thresholds,
                       equivalent_sequence_length, erlang_pdf_cdf, min_max_statistics,
                       thresholds_for_sequence)
from .estimate import (DpRtfFeature, SubtractedSystem, UnderdeterminedError, bidirectional_dprtf,
                       estimate_dprtf, normalize_feature, pair_frames, q_from_t60, solve_g,
                       spectral_subtract)
from .localize import (TrainingSet, anechoic_training_set, build_training_set, load_training_set,
                       nearest_neighbor, save_training_set)
from .psd import PsdSeries, PsdSystem, assemble_noise_free_system, build_zy_vector, estimate_auto_psd
from .sim import (Brir, GeometryError, SceneConfig, ground_truth_dprtf, mix_scene, simulate_brir,
                  truncate_to_direct_path)
from .stft import (CtfFilter, StftConfig, TimeFrequencyTensor, band_bins, cross_window_kernel,
                   ctf_convolve, ctf_from_impulse_response, stft_analyze, stft_synthesize)

__version__ = "0.1.0"
