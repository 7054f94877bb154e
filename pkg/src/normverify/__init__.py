"""Machine verification of semantic feature norms and its evaluation."""
from .norms import (
    BinaryFeatureMatrix,
    CellLabelMatrix,
    Concept,
    Domain,
    Feature,
    NormDataset,
    binarize_human,
    label_cells,
    load_norms,
)
from .probe import (
    AnswerCache,
    HttpOracle,
    MockOracle,
    PromptTemplate,
    build_probe_plan,
    mock_oracle,
    parse_answer,
    render_prompt,
    run_verification,
)
from .sdt import dprime, probit, rates, score_scope, sensitivity_sweep, tally, top_disagreements
from .space import combine, cosine_distance_matrix
from .triplets import classify_condition, generate_triplets, predict_choice, score_agreement

__version__ = "0.1.0"
