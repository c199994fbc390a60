"""Semantic search over tabular text: embeddings, ANN index, evaluation."""

__version__ = "0.1.0"

from .ann import (
    AnnIndex,
    IndexConfig,
    ItemMap,
    angular_distance,
    build_index,
    load_index,
    save_index,
)
from .corpus import (
    Record,
    RecordSet,
    Vocabulary,
    build_vocab,
    encode_sentences,
    load_csv,
    load_records,
    save_records,
    tokenize,
)
from .embeddings import (
    EmbeddingModel,
    TrainConfig,
    cosine,
    load_model,
    save_model,
    train,
)
from .errors import (
    ConfigError,
    CsvFormatError,
    DimensionMismatchError,
    EmptyVocabularyError,
    ProvenanceError,
    SemSearchError,
    StoreFormatError,
    StoreVersionError,
    TruncatedFileError,
    UnresolvableQueryError,
)
from .evaluate import (
    ExactOracle,
    bench,
    exact_knn,
    gen_synthetic,
    precision_recall_f1,
    recall_at_k,
)
from .search import (
    SearchEngine,
    SearchResult,
    build_engine,
    embed_query,
    index_records,
    open_engine,
)

__all__ = [
    "AnnIndex",
    "ConfigError",
    "CsvFormatError",
    "DimensionMismatchError",
    "EmbeddingModel",
    "EmptyVocabularyError",
    "ExactOracle",
    "IndexConfig",
    "ItemMap",
    "ProvenanceError",
    "Record",
    "RecordSet",
    "SearchEngine",
    "SearchResult",
    "SemSearchError",
    "StoreFormatError",
    "StoreVersionError",
    "TrainConfig",
    "TruncatedFileError",
    "UnresolvableQueryError",
    "Vocabulary",
    "angular_distance",
    "bench",
    "build_engine",
    "build_index",
    "build_vocab",
    "cosine",
    "embed_query",
    "encode_sentences",
    "exact_knn",
    "gen_synthetic",
    "index_records",
    "load_csv",
    "load_index",
    "load_model",
    "load_records",
    "open_engine",
    "precision_recall_f1",
    "recall_at_k",
    "save_index",
    "save_model",
    "save_records",
    "tokenize",
    "train",
]
