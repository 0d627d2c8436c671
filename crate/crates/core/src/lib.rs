//! Stochastic unified momentum (SUM): one update rule covering stochastic
//! heavy-ball (`s = 0`), stochastic Nesterov (`s = 1`), plain SGD
//! (`s = 1/(1−β)`) and everything in between, plus the machinery to check its
//! algebraic identities and compare runs against the convergence bounds.

pub mod error;
pub mod identity;
pub mod metrics;
pub mod optimizer;
pub mod oracle;
pub mod problems;
pub mod theory;
pub mod vector;

pub use error::{Error, Result};
pub use vector::{axpy, norm2, ParamVector};
