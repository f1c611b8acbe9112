//! File formats, synthetic generation and sequence slicing.

mod formats;
mod generate;
mod slice;

pub use formats::{
    detect_kind, distribution_from_text, format_distribution, format_trails, mixture_from_json, mixture_to_json,
    parse_distribution, parse_trails, read_distribution, read_mixture, write_distribution, write_mixture, InputKind,
};
pub use generate::{generate_mixture, GeneratorSpec, MAX_GENERATION_ATTEMPTS, RECOVERABILITY_TOL};
pub use slice::{cooccurrence, slice_sequences, window3, SliceMode, Sliced};
