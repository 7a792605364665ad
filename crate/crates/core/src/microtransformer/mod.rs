//! A small decoder block with a fully traced forward pass, product-of-experts
//! head aggregation, the log-partition gap, and the context energy measure.

mod bundle;
mod energy;
mod forward;
mod gap;
mod spec;

pub use bundle::{format_mat, load_bundle, parse_mat, save_bundle};
pub use energy::{block_energy, emergence_states, layer_energies, semantic_energy};
pub use forward::{Attention, BlockTrace, FeatureMap, ForwardTrace, HeadStep, HeadTrace, LogitSplit};
pub use gap::{centered, lse_gap, lse_gap_from_logits, poe_distribution, LseGapReport};
pub use spec::{BlockWeights, Dims, FfnWeights, HeadWeights, TransformerSpec};
