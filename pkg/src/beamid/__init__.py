"""beamid: synthetic V2I beam-sweep simulation and user identification.

A basestation with a camera and a phased array watches a street.  The
package simulates the scene, sweeps a beam codebook over a line-of-sight
channel, models an imperfect object detector, learns a power-to-image-center
predictor, picks the detected object nearest the prediction, and majority-
votes that choice over tracked sequences.  An evaluation harness measures
top-1 identification accuracy across scenarios, sequence lengths, training
fractions, object counts, and user speeds.
"""
from .channel import (
    ArrayConfig,
    BeamCodebook,
    ChannelVector,
    NoiseConfig,
    PowerVector,
    best_beam,
    dft_codebook,
    los_channel,
    receive_power,
    steering_vector,
)
from .detect import (
    Detection,
    DetectorConfig,
    RelevantObjectMatrix,
    build_relevant_object_matrix,
    occlusion_filter,
    synth_detect,
)
from .errors import ConfigError, DataError, NoCandidatesError, NumericError
from .evaluate import (
    EpisodeDataset,
    ExperimentConfig,
    MetricsReport,
    SequenceSample,
    SplitSpec,
    association_accuracy,
    run_experiment,
    sliding_windows,
    speed_buckets,
    split,
    split_into_episodes,
    top1_accuracy,
)
from .identify import (
    FrameVote,
    SequenceDecision,
    TrackAssignment,
    associate,
    identify_frame,
    identify_sequence,
    select_nearest,
    track_sequence,
)
from .predictor import (
    CenterPredictor,
    GridSpec,
    MlpParams,
    PowerNormalizer,
    TrainConfig,
    adam_step,
    fit_normalizer,
    forward,
    loss_and_grad,
    predict_center,
    train,
)
from .scene import (
    CameraModel,
    GroundTruthFrame,
    ScenarioConfig,
    VehicleState,
    WorldSnapshot,
    default_scenario,
    ground_truth_frame,
    project,
    six_lane_scenario,
    spawn_world,
    step_world,
    two_lane_scenario,
)
from .simulate import FrameRecord, SimConfig, default_sim_config, generate_frames

__version__ = "0.1.0"
