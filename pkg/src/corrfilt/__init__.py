"""Correlation filters (ASEF, MOSSE, MCCF, DBCF) for detection and tracking."""
from .dataset import (DetectionSetConfig, LabeledImage, Sequence, SequenceConfig, load_sequence,
                      synth_detection_set, synth_sequence)
from .dbcf import (ReconstructionSpace, SolverState, SubsetSchedule, dbcf_train, initialize,
                   reconstruct_projection, sigma_step, update_filter)
from .detection import SolverConfig, cross_validate, detect, localization_rate, make_solver
from .dijkstra import DistanceField, dijkstra_distance, euclidean_distance, knn_graph
from .features import (DesiredResponse, FeatureMap, extract_hog, extract_intensity,
                       gaussian_response, power_normalize)
from .solvers import SpectralFilter, TrainConfig, train_asef, train_mccf, train_mosse
from .spectral import Spectrum2D, correlate, forward_fft, inverse_fft
from .tracking import (TrackConfig, init_track, model_update, precision_curve, run_tracker,
                       success_curve, track_step)

__version__ = "0.1.0"
