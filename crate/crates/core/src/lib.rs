pub mod cli;
pub mod codec;
pub mod dataset;
pub mod generation;
pub mod metrics;
pub mod neural;
pub mod score;
pub mod tables;
pub mod toy;
pub mod vocab;
