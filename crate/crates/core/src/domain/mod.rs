//! Step-level data model shared by every pipeline stage.

mod commentary;
mod context;
mod record;
mod time;

pub use commentary::{parse_commentary, render_commentary, Commentary, CommentaryError, Section};
pub use context::{ClipEmbeddingSet, EmbeddingError, GenerationContext};
pub use record::{
    load_dataset, read_dataset, save_dataset, validate_video, write_dataset, DatasetError,
    Discipline, StepRecord, VideoReport,
};
pub use time::{Timestamp, TimestampError};
