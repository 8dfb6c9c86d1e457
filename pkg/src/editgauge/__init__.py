"""Edit-based article quality assessment with auxiliary edit-message generation."""

__version__ = "0.1.0"

from .corpus import CorpusRecord, QualityDistribution, Revision, build_corpus, parse_dump, split_corpus
from .diff import Alignment, Hunk, line_diff, token_diff
from .errors import CheckpointMismatchError, DataError, DumpParseError, EditGaugeError, NumericalError, OresError
from .estimator import EditQualityModel
from .extraction import Edit, EditExtractor, EditSentence, ExtractionConfig, extract_edit, match_pairs, tokenize
from .metrics import bleu4_sentence, classification_report
from .ores import OresClient
from .training import TrainConfig, evaluate, sweep_lambda, train

__all__ = [
    "Alignment", "CheckpointMismatchError", "CorpusRecord", "DataError", "DumpParseError", "Edit",
    "EditExtractor", "EditGaugeError", "EditQualityModel", "EditSentence", "ExtractionConfig", "Hunk",
    "NumericalError", "OresClient", "OresError", "QualityDistribution", "Revision", "TrainConfig",
    "bleu4_sentence", "build_corpus", "classification_report", "evaluate", "extract_edit", "line_diff",
    "match_pairs", "parse_dump", "split_corpus", "sweep_lambda", "token_diff", "tokenize", "train",
]
