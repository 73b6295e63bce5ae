"""bitextmine: bilingual dual-encoder embeddings and parallel corpus mining.

Train bag-of-n-grams dual encoders with in-batch softmax ranking and mined
hard negatives, calibrate pair confidences, and mine parallel sentences and
documents from unpaired corpora via nearest-neighbor search.
"""

from .annindex import ExactIndex, PartitionedIndex, build_exact, build_partitioned, search, search_batch
from .confidence import (
    ConfidenceHead,
    calibrate,
    calibrate_scores,
    confidence_features,
    confidence_loss,
    sigmoid,
)
from .encoder import (
    DualEncoderModel,
    ModelConfig,
    TowerConfig,
    TowerParams,
    default_model_config,
    encode_corpus,
    encode_sentence,
    forward,
    init_model,
    input_embedding,
    score,
)
from .evalkit import (
    EvalResult,
    SynthCorpus,
    SynthCorpusConfig,
    doc_match_accuracy,
    extreme_agreement,
    make_synthetic_corpus,
    pearson_r,
    precision_at_n,
)
from .miner import (
    DocMatchConfig,
    Document,
    MinedPair,
    RetrievalEntry,
    alignment_count_baseline,
    doc_score,
    dp_align,
    match_documents,
    mine_sentence_pairs,
    retrieve,
)
from .serialization import read_checkpoint, read_embeddings, write_checkpoint, write_embeddings
from .textpipe import FeatureIds, FeaturizerConfig, featurize, featurize_text, normalize, tokenize
from .trainer import (
    TrainingConfig,
    batch_scores,
    mine_hard_negatives,
    ranking_loss,
    train,
)

__version__ = "0.1.0"
