//! Downstream evaluation: typing, linking, omission and ablations.

mod ablation;
mod linking;
mod metrics;
mod omission;
mod report;
mod typing;

pub use ablation::{length_ablation, spatial_embedding_ablation, LengthRow, SpatialAblation};
pub use linking::{cosine, embed_entities, link, link_pair, rank_candidates, LinkOutcome, LinkRow, LinkingConfig};
pub use metrics::{f1_metrics, mean_link_metrics, rank_metrics, F1Report, LinkMetrics};
pub use omission::{find_elbow, mean_curve, omission_experiment, OmissionConfig, OmissionCurve, METRIC_LABEL};
pub use report::{EvalReport, TypingReport};
pub use typing::{
    finetune_typing, name_baseline, predict_typing, split_indices, FinetuneConfig, NameBaseline, Split, TypingOutcome,
};
