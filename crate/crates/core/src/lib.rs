//! Natural-language task description to MDP formulation, training code and
//! scored policy, through a staged agent pipeline.
pub mod codegen;
pub mod config;
pub mod evaluation;
pub mod gateway;
pub mod ir;
pub mod pipeline;
pub mod record;
pub mod registry;
pub mod stage;
pub mod tasks;
pub mod trial;
