pub mod grid;
pub mod solver;
pub mod stochastics;
pub mod gram_charlier;
pub mod metrics;
pub mod plf;
pub mod mcs;
pub mod case_file;
pub mod comparison;
pub mod report;
pub mod cli;

#[cfg(test)]
mod fixtures;
