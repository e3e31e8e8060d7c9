//! Differentiable-computation kernel: dense layers, MLPs with analytic
//! backpropagation, Adam, seeded randomness and finite-difference checks.

pub mod gradcheck;
pub mod mlp;
pub mod ops;
pub mod optim;
pub mod rng;

pub use gradcheck::{check_gradients, relative_error, GradCheckReport, FD_STEP};
pub use mlp::{Activation, DenseLayer, Mlp, MlpTape, Parameterized};
pub use ops::softmax;
pub use optim::OptimizerState;
pub use rng::Rng;
