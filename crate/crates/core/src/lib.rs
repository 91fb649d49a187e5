pub mod clustering;
pub mod dataset;
pub mod embedding;
pub mod metrics;
pub mod neuralnet;
pub mod pipeline;
