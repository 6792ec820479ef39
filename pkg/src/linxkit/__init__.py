"""Conversational web-navigation toolkit: demonstrations, action parsing,
dense element ranking, budgeted state rendering and turn-level metrics."""

from .actions import (
    EVALUATED_INTENTS,
    Action,
    Intent,
    UrlSegments,
    make_action,
    parse_action_string,
    resolve_element_arg,
    segment_url,
    serialize_action,
)
from .demos import (
    Demonstration,
    SplitManifest,
    State,
    StateRef,
    Turn,
    ValidationIssue,
    iter_eval_turns,
    list_demo_ids,
    load_demonstration,
    load_splits,
    validate_demonstration,
    write_demonstration,
)
from .dmr import (
    CandidateDoc,
    ExternalEmbedder,
    HashingEmbedder,
    ProjectionModel,
    Query,
    RankResult,
    TrainConfig,
    TrainExample,
    build_candidate_doc,
    build_query,
    cosine_sim,
    embed_hashed,
    pair_loss,
    rank_candidates,
    recall_at_k,
    train_projection,
)
from .dom import (
    BoundingBox,
    DomElement,
    DomSnapshot,
    Viewport,
    element_at_point,
    parse_snapshot,
    prune_to_candidates,
    xpath_of,
)
from .metrics import (
    ScoreReport,
    TurnScore,
    aggregate,
    chrf,
    element_score,
    intent_match,
    iou,
    text_score,
    turn_score,
    urlf,
)
from .otr import (
    HistoryWindow,
    OtrInput,
    TokenBudget,
    TokenCounter,
    build_otr_input,
    render_candidate_line,
    truncate_to_budget,
    window_history,
)

__version__ = "0.1.0"
