//! Corruption-risk classification of public procurement contracts with a
//! hyper-forest: an ensemble of random forests, each trained on a balanced
//! sub-sample of an imbalanced training set.

pub mod contracts;
pub mod dataset;
pub mod evaluation;
pub mod features;
pub mod forest;
pub mod hyper_forest;
pub mod ingestion;
pub mod rfe;
pub mod splitter;
