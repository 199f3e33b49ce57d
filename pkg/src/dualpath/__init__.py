"""Dual-path multimodal fusion networks for VQA-style answer classification.

A small numpy library: a tape-based reverse-mode autodiff core, an LSTM
question encoder, fusion networks that combine image features and questions
through parallel multiplicative and additive embedding paths, feature-coding
utilities (L2/PCA/VLAD/region softmax), an RMSProp trainer with VQA-style
evaluation, weighted ensembling, and a synthetic planted-teacher benchmark.
"""

from .autograd import (
    NonFiniteError,
    ShapeError,
    Tape,
    Tensor,
    add_bias,
    backward,
    concat,
    embedding_lookup,
    ew_add,
    ew_mul,
    grad_check,
    matmul,
    reshape,
    scale,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    sum_all,
    tanh,
    transpose,
)
from .lstm import (
    LstmConfig,
    LstmParams,
    embed,
    encode_question,
    encode_question_batch,
    init_lstm_params,
    lstm_step,
    load_vocabulary,
    save_vocabulary,
    tokenize,
    tokens_to_ids,
)
from .model import (
    DualPathConfig,
    DualPathModel,
    DualPathParams,
    forward,
    fused_features,
    init_dualpath_params,
    load_checkpoint,
    mul_path,
    predict,
    save_checkpoint,
    sum_path,
)
from .features import (
    PcaModel,
    QuestionType,
    RegionDescriptor,
    avg_region_softmax,
    classify_question,
    coordinate_vector,
    l2_normalize,
    pca_fit,
    pca_transform,
    route_features,
    vlad_center,
    vlad_one_cluster,
)
from .training import (
    AnswerVocab,
    TrainConfig,
    TrainResult,
    build_answer_vocab,
    evaluate,
    normalize_answer,
    predict_dataset,
    rmsprop_step,
    score_predictions,
    train,
    vqa_accuracy,
)
from .ensemble import (
    EnsembleSpec,
    EnsembleUnit,
    LoadedEnsemble,
    ensemble_predict,
    load_ensemble_spec,
    save_ensemble_spec,
    tune_ensemble_weights,
)
from .data import (
    DatasetSchema,
    TeacherSpec,
    VqaExample,
    build_teacher,
    generate_synthetic,
    load_dataset,
    save_dataset,
)

__version__ = "0.1.0"
