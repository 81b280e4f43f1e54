"""Topic models, image-to-topic embedders, KL retrieval and linear probes."""

from ._core import (
    BowDocument,
    DimensionError,
    DivergenceError,
    EmbedderNet,
    EmptyDocumentError,
    EmptyVocabularyError,
    Error,
    FormatError,
    TopicIndex,
    TopicModel,
    Vocabulary,
    average_precision,
    default_stopwords,
    infer_topics,
    kl_divergence,
    mean_average_precision,
    normalize_text,
    perplexity,
    porter_stem,
    project_image,
    project_logits,
    run_cli,
    sigmoid_ce_gradient,
    sigmoid_ce_loss,
    smooth,
    tokenize,
    top_words,
    train_embedder,
    train_lda,
    train_linear_probe,
    vectorize,
)

__all__ = [name for name in dir() if not name.startswith("_")]
