"""Granular-rectangle image-to-graph federated learning sandbox."""

from .datasets import (Image, LabeledDataset, load_cifar10, load_mnist,
                       save_idx, to_grayscale, write_pgm)
from .granulation import (GradientMap, GranularRectangle, GranulationConfig,
                          granulate, grow_rectangle, purity, region_stats,
                          sobel_gradient)
from .graphs import (GranularGraph, build_graph, deserialize_graph,
                     load_graphs, save_graphs, serialize_graph)
from .nn import (GCNModel, MLPModel, ParamLayout, ParamSegment, ParamVector,
                 gcn_forward, gcn_loss_and_grad, load_checkpoint,
                 mlp_forward, mlp_loss_and_grad, normalized_adjacency,
                 save_checkpoint, sgd_step, softmax_cross_entropy, xavier_init)
from .lbfgs import LBFGSResult, lbfgs_minimize
from .federation import (ClientState, FederationConfig, RoundLog, aggregate,
                         centralized_train, graph_samples, image_samples,
                         local_train, make_model, partition, run_federation)
from .attack import (AttackConfig, AttackObservation, ReconstructionResult,
                     gradient_match_loss, observe_graph_gradient,
                     observe_pixel_gradient, reconstruct_graph_features,
                     reconstruct_pixels, render_rectangles)
from .metrics import (MetricConfig, MetricReport, accuracy, build_report,
                      communication_efficiency, mse, peum, privacy_score)
from .synth import make_digit_dataset, render_digit

__version__ = "0.1.0"
