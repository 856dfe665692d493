//! Run configuration, file formats, plotting and the batch pipelines of the
//! `marangoni` command-line driver, on top of [`marangoni_core`].

pub mod commands;
pub mod config;
pub mod io;
pub mod plot;

pub use marangoni_core as core;
