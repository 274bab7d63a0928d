pub mod dataset;
pub mod evalkit;
pub mod exec;
pub mod kg;
pub mod matcher;
pub mod pipeline;
pub mod pylf;
pub mod sparql;
pub mod synth;
