"""Deep k-subspace clustering with a convolutional autoencoder embedding."""

from .autoencoder import (
    CaeArch,
    CaeParams,
    adam_step,
    backward,
    decode,
    encode,
    init_params,
    latent_ksc_grad,
    recon_loss,
    total_loss,
)
from .baselines import kmeans, pca_ks, run_baselines
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, SynthSpec, gen_synth, load_dataset, load_idx, write_idx
from .errors import DimensionError, DomainError, EmptyClusterError, FormatError, KscError, RankError
from .grassmann import SubspaceBasis, retract, riemannian_step, tangent_project
from .ksc import KscConfig, assign, euclidean_subspace_grad, objective, residual, run_plain_ksc, svd_update
from .linalg import thin_qr_q, top_p_left_singular_vectors
from .metrics import ClusterMetrics, evaluate
from .trainer import TrainConfig, TrainReport, init_subspaces, pretrain, train, train_kscn_grassmann, train_kscn_svd

__version__ = "0.1.0"
