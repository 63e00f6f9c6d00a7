"""Texture retrieval with RCT-Plus subband features and classify-then-rank search."""

__version__ = "0.1.0"

from .classify import (ConfusionCounts, KnnModel, LinearSvmModel, accuracy, cross_validate,
                       multiclass_accuracy, predict_knn, predict_svm, train_knn, train_svm_linear)
from .evaluation import EvalReport, compare_schemes, evaluate, retrieval_rate
from .features import (FeatureVector, LabeledIndex, build_index, extract_energy_features,
                       extract_ggd_features, load_index, save_index)
from .ggd import GgdParams, fit_mle, fit_mme, kld_ggd, mme_ratio, skld
from .ingest import (Dataset, DatasetManifest, GrayImage, build_dataset, generate_synthetic_dataset,
                     load_image, tile_image)
from .retrieval import RetrievalResult, query_ml, query_traditional
from .similarity import distance
from .transform import (RctPlusConfig, RctPlusDecomposition, dfb_decompose, pseudo_gaussian_kernel,
                        rct_plus, rlp_decompose)
