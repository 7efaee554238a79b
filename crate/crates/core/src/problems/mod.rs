//! Test problems with closed-form or cheaply certified optima.

mod barycenter;
mod entropic;
mod quadratic;

pub use barycenter::{barycenter_problem, BarycenterInstance};
pub use entropic::{
    entropic_ot_dual_grad, entropic_ot_dual_value, entropic_ot_stoch_grad, entropic_wasserstein, project_simplex,
    EntropicOt, Transport,
};
pub use quadratic::{QuadraticProblem, WorstCaseChain};
