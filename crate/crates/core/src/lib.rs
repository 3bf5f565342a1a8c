//! Home-country inference for tweets with a counting Naive Bayes classifier
//! over tweet and user metadata.

pub mod bayes;
pub mod cli;
pub mod config;
pub mod eval;
pub mod features;
pub mod geocode;
pub mod tweet;
