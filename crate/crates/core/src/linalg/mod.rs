mod krylov;
mod saddle;
mod sparse;

pub use krylov::{minres, pcg, KrylovStats};
pub use saddle::{SaddleMethod, SaddleSolution, SaddleSolver};
pub use sparse::{Cholesky, Csr, Triplets};
