//! Second-order probabilistic solver for decoupled forward-backward SDEs
//! driven by Brownian motion and a finite-activity compensated Poisson random
//! measure.
//!
//! ```
//! use jumpfbsde::{example1, solve, computational_mesh, ProblemParams, SolverConfig, TimePartition};
//!
//! let problem = example1(&ProblemParams::default()).unwrap();
//! let partition = TimePartition::new(1.0, 4).unwrap();
//! let config = SolverConfig { padding: Some(4.0), ..SolverConfig::default() };
//! let mesh = computational_mesh(&problem, &partition, &config, 0.1).unwrap();
//! let sol = solve(&problem, &mesh, &partition, &config).unwrap();
//! assert_eq!(sol.layer.y.len(), mesh.len());
//! ```

pub mod cli;
pub mod error;
pub mod harness;
pub mod interp;
pub mod oracle;
pub mod problem;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};
pub use harness::{error_linf, fit_rate, preset, run_study, ConvergenceReport, LinfErrors, StudyAxis, StudySpec};
pub use interp::{stencil, ExtrapolationPolicy, PiecewiseLagrangeInterpolant};
pub use oracle::{mc_expectation, mc_functional, McEstimate, OneStepSample, WeightKind};
pub use problem::{
    example1, example2, exact_layer, registry_get, ExactSolution, FbsdeProblem, FiniteActivityLevyMeasure,
    ProblemParams, SolutionLayer, SpatialMesh, TimePartition,
};
pub use quadrature::{build_atom_grid, AtomGrid, AtomGridBuilder, QuadratureRule1D};
pub use solver::{backward_step, computational_mesh, solve, BoundaryPolicy, Diagnostics, Solution, SolverConfig};

// The guide's snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/problems.md")]
    mod problems {}
    #[doc = include_str!("../../../book/src/quadrature.md")]
    mod quadrature {}
    #[doc = include_str!("../../../book/src/interpolation.md")]
    mod interpolation {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/convergence.md")]
    mod convergence {}
}
