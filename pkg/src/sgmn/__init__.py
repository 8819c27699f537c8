"""Video-to-shop product retrieval with graph-guided cross-domain interaction and hard-example fusion."""

from .config import ConfigError, EncoderConfig, LossWeights, TrainConfig, load_config
from .data import CorpusSpec, generate_corpus, load_corpus
from .encoders import GlobalAlignment
from .evaluate import evaluate_recall, rank, score_gallery
from .model import SGMN, Batch
from .train import train

__all__ = ["ConfigError", "EncoderConfig", "LossWeights", "TrainConfig", "load_config", "CorpusSpec",
           "generate_corpus", "load_corpus", "GlobalAlignment", "evaluate_recall", "rank",
           "score_gallery", "SGMN", "Batch", "train"]
