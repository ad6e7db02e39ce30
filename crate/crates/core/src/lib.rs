pub mod benchmarks;
pub mod error;
pub mod evaluation;
pub mod gcp;
pub mod io;
pub mod lbfgs;
pub mod loss;
pub mod metrics;
pub mod pipeline;
pub mod seed;
pub mod synth;
pub mod tensor;
