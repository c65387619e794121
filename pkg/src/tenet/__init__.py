"""Joint multi-label image classification and explanation-word prediction.

One shared backbone feeds two linear heads: a classification head over the
COCO category slots and a caption head over a frequency-ranked vocabulary
of caption words. Training sums a binary cross-entropy loss per head;
prediction ranks each head's logits and keeps the top few entries.
"""

from .config import ExperimentConfig, HyperParams, load_config, save_config
from .dataset import (CLASS_IDS, CLASS_NAMES, COCO_CATEGORIES, EncodedSample,
                      MultiLabelDataset, RawSample, class_index_map, encode,
                      encode_targets, index_coco, load_image)
from .metrics import (EvalReport, evaluate, explanation_accuracy, summary_line,
                      task_accuracy)
from .model import (BackboneSpec, TENet, available_backbones, build_model,
                    load_checkpoint, probe_feature_dim, save_checkpoint)
from .predictor import Prediction, decode, predict, predict_batch, top_k
from .training import (LossRecord, NonFiniteLossError, bce_loss, set_seed,
                       total_loss, train)
from .vocab import (FrequencyTable, Vocabulary, build_vocabulary, corpus_stats,
                    count_corpus, merge_tables, read_captions, tokenize)

__version__ = "0.1.0"

__all__ = [
    "BackboneSpec", "CLASS_IDS", "CLASS_NAMES", "COCO_CATEGORIES",
    "EncodedSample", "EvalReport", "ExperimentConfig", "FrequencyTable",
    "HyperParams", "LossRecord", "MultiLabelDataset", "NonFiniteLossError",
    "Prediction", "RawSample", "TENet", "Vocabulary", "available_backbones",
    "bce_loss", "build_model", "build_vocabulary", "class_index_map",
    "corpus_stats", "count_corpus", "decode", "encode", "encode_targets",
    "evaluate", "explanation_accuracy", "index_coco", "load_checkpoint",
    "load_config", "load_image", "merge_tables", "predict", "predict_batch",
    "probe_feature_dim", "read_captions", "save_checkpoint", "save_config",
    "set_seed", "summary_line", "task_accuracy", "tokenize", "top_k",
    "total_loss", "train",
]
