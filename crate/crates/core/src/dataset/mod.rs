//! Dataset loading, Puzzle Split generation, multiple-choice filtering of
//! external records, and synthetic puzzle generation.

mod external;
mod manifest;
mod split;
mod synth;

pub use external::{filter_multiple_choice, is_multiple_choice, load_external, load_record_image, ExternalRecord};
pub use manifest::{
    load_puzzles, write_puzzles, LoadOutcome, ManifestRecord, RecordError, MANIFEST_FILE,
};
pub use split::{make_puzzle_split, SplitSpec};
pub use synth::{generate_synthetic_puzzles, ROOTS_PER_CATEGORY};
