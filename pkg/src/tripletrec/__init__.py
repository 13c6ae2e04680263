"""Triplet-loss matrix factorization for recommendation, with bias-aware evaluation."""

from .dataset import (
    FoldSplit,
    Gender,
    InteractionStore,
    Track,
    User,
    generate_planted,
    load_store,
    make_folds,
    write_store,
)
from .embeddings import EmbeddingTable, cosine_distance
from .metrics import (
    consistency,
    gini_impurity,
    hit_rate_at_k,
    mred,
    mrr,
    variance_agreement,
)
from .recommender import rank_items, recommend, recommend_all
from .sampler import build_neighbor_index, sample_batch, sample_negative
from .skipgram import build_corpus, extract_init, train_skipgram
from .trainer import TrainConfig, loss_on_batch, sgd_step, train
from .weighting import fit_weight_model, row_weight

__version__ = "0.1.0"
