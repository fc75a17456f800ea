//! Low-rank factorization benchmark for 1D1V Vlasov–Poisson phase-space data.
//!
//! * [`linalg`]: dense/Krylov SVD, least squares, factored derivatives.
//! * [`vlasov`]: semi-Lagrangian solver producing snapshot time series.
//! * [`convmf`]: convolutional factorization network with hand-written
//!   gradients and optimizers.
//! * [`eval`]: normalized losses, splits, error decomposition and timing.

pub mod convmf;
pub mod eval;
pub mod linalg;
pub mod vlasov;
