"""Spiking network training with surrogate-gradient BPTT and send-on-delta coding."""

from .dynamics import CellState, LifConfig, beta_from_tau, lif_discrete_step, lif_exact_solve
from .events import (
    DirectionBank,
    EventStream,
    if_sod_encode,
    multidim_sod_encode,
    reference_trajectory,
    sod_reconstruct,
    sod_sample,
)
from .features import (
    LabeledExample,
    MelConfig,
    SplitDataset,
    build_speech_dataset,
    delta_features,
    log_mel_features,
    synthetic_dataset,
)
from .learn import (
    LossSpec,
    SurrogateConfig,
    TrainConfig,
    bptt_gradients,
    classification_loss,
    optimizer_step,
    run_gradcheck,
    spike_count_loss,
    surrogate_grad,
    train_loop,
)
from .net import (
    ConvLayerParams,
    FcLayerParams,
    ModelConfig,
    Network,
    ReadoutParams,
    build_network,
    conv_spiking_forward,
    fc_spiking_forward,
    load_checkpoint,
    network_forward,
    readout_forward,
    save_checkpoint,
)

__version__ = "0.1.0"
