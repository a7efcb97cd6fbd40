//! Reasoning-path generation, unpaired learning/forgetting fine-tuning and
//! evaluation for arithmetic puzzles.

pub mod classic;
pub mod data;
pub mod evaluation;
pub mod objectives;
pub mod policy;
pub mod puzzle;
pub mod search;
pub mod trainer;
