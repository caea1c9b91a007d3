"""Partial FFT demodulation for differential OFDM over time-varying channels."""

__version__ = "0.1.0"

from .ofdm_core import (OfdmBlock, PilotLayout, PskConstellation, detect_ml, detect_ratio,
                        differential_decode, differential_encode, make_block)
from .transform import (PartialDemodMatrix, combine, combine_all, dft_unitary, idft_unitary,
                        partial_fft_demodulate)
from .channel import (ChannelRealization, LinkGeometry, draw_channel, freq_response,
                      noise_variance_for_snr, synthesize_received)
from .weights import (ConvergenceError, DetectionErrorSet, RankDeficientWarning, WeightSolution,
                      build_error_set, build_pilot_error_matrix, detect_block, hermitian_eig,
                      solve_weights_adaptive, solve_weights_eigen, solve_weights_wideband)
from .harness import (BerRecord, ExperimentSpec, SystemConfig, coherent_oracle_ber, run_point,
                      run_sweep)
