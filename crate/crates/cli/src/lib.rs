//! Experiment driver for the InfoQGAN core: configuration, file formats,
//! checkpoints and the commands behind the `infoqgan` binary.

pub mod checkpoint;
pub mod config;
pub mod io;
pub mod run;
