pub mod csvio;
pub mod experiment;
pub mod report;
pub mod synth;
