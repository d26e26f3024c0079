pub mod eval;
pub mod refine;
pub mod stats;
pub mod synth;
