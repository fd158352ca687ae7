//! Dense linear-algebra kernels and exact assignment shared by all other
//! modules. Everything is pure and immutable after construction.

mod assign;
mod factor;
mod matrix;

pub use assign::{assignment_score, best_assignment};
pub use factor::{
    cholesky, condition_number, inverse, invert_lower_triangular, pinv, pivoted_columns,
    singular_values, sym_eig,
};
pub use matrix::Matrix;
