"""Resource-mention tagging for course forum threads.

Corpus tools, dual-annotation reconciliation, BLSTM-CRF taggers with
character and context encoders on a small reverse-mode autodiff core, a
feature CRF baseline, evaluation with a mention-level error taxonomy, and a
synthetic corpus generator.
"""

__version__ = "0.1.0"

from .agreement import (  # noqa: F401
    AgreementCounts,
    ComparisonCase,
    MergePolicy,
    build_dataset,
    match_annotations,
    positive_specific_agreement,
)
from .corpus import (  # noqa: F401
    AnnotatedMention,
    ResourceType,
    ResourceTypeFine,
    Sentence,
    Span,
    Tag,
    TaggedSentence,
    Thread,
    Token,
    bio_decode,
    bio_encode,
    collapse_type,
    split_sentences,
    tokenize,
    unfold_thread,
)
from .evaluation import (  # noqa: F401
    ErrorCategory,
    categorize_prediction,
    evaluate,
    micro_prf,
    per_tag_f1,
)
from .synth import SynthSpec, generate  # noqa: F401
from .tagger import (  # noqa: F401
    VARIANTS,
    TaggerConfig,
    TaggerModel,
    TagPrediction,
    train,
    train_variant,
)
