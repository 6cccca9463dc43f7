//! Building blocks for scrutinizing policy-related political ads.
//!
//! The crate covers the full batch workflow: parsing and normalizing
//! Ad-Library-style records ([`ingest`]), a data-driven policy category
//! registry ([`codebook`]), turning crowd annotation votes into label
//! matrices ([`labeling`]), annotator agreement analysis ([`agreement`]),
//! text features and back-translation augmentation ([`textfeat`]), a
//! multi-label sigmoid classifier head with threshold calibration
//! ([`model`]), classification metrics ([`evaluation`]), and
//! impression-exposure analytics ([`attention`]).
//!
//! Everything that involves randomness goes through the seeded generator in
//! [`rng`], so identical seeds reproduce identical artifacts.

pub mod agreement;
pub mod attention;
pub mod codebook;
pub mod evaluation;
pub mod ingest;
pub mod labeling;
pub mod model;
pub mod rng;
pub mod textfeat;

pub use codebook::Codebook;
pub use ingest::{AdRecord, ValueRange};
pub use labeling::{LabelMatrix, LabelMode};
pub use rng::SeededRng;
