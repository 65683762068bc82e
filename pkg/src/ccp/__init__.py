"""Correlated clustering and projection for dimensionality reduction."""

from .centrality import centrality_project
from .clustering import (FeaturePartition, equal_variance_partition, kmedoids_partition,
                         partition_loss, random_equal_partition)
from .dataset import (DataError, DataMatrix, LabelVector, SplitPlan, load_csv, make_folds,
                      subsample)
from .evaluation import (CvReport, Pipeline, cross_validate, knn_classify,
                         pca_baseline_fit_transform, subsample_tune)
from .feature_metrics import (DistanceMatrix, correlation_distance, covariance_distance,
                              feature_distance_matrix)
from .projection import (CcpModel, KernelConfig, cluster_cutoff, cluster_scale_eta, fit,
                         kernel_eval, transform)
from .rs_scores import RsReport, rs_chart_export, rs_indices, rs_scores
from .shape import DensityGrid, IsoMesh, extract_isosurface, rigidity_density

__version__ = "0.1.0"
