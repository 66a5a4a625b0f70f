//! Self-contained special functions and small dense linear algebra.

mod matrix;
mod special;

pub use matrix::{invert_spd, solve_spd, SpdInverse, SpdSolution, SquareMatrix};
pub use special::{
    chisq_cdf, chisq_quantile, chisq_sf, std_normal_cdf, std_normal_pdf, std_normal_quantile,
};
