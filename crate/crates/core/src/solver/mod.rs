//! Linear and 0/1 programming used by the matching modules.

pub mod bnb;
pub mod simplex;

pub use bnb::{solve_binary_program, Incumbent, MipOptions, MipOutcome};
pub use simplex::{LpError, LpProblem, LpStatus, Sense, Simplex};
