//! Vehicle routing with vector profits under a max-min criterion.
//!
//! Every site carries one profit value per stakeholder. The solver picks a set
//! of depot-anchored routes that maximizes the smallest per-stakeholder profit
//! total. The pipeline has three stages:
//!
//! 1. the LP relaxation of the route-selection master problem is solved to
//!    optimality by column generation ([`colgen`]), pricing candidate routes
//!    with an exact Held-Karp TSP oracle ([`routing`]);
//! 2. the integer master restricted to the generated columns is solved by best
//!    bound branch and bound ([`mip`]);
//! 3. the LP bound and the integer objective give a worst-case optimality gap
//!    ([`driver::optimality_gap`]).

pub mod colgen;
pub mod cost;
pub mod driver;
pub mod error;
pub mod lp;
pub mod mip;
pub mod model;
pub mod routing;
pub mod svg;

pub use cost::{CostMatrix, CostUnit};
pub use driver::{solve_vrpvp, ObjectiveMode, SolveOptions, SolveReport};
pub use error::{Error, Result};
pub use model::{Instance, Metric, Point, ProfitSums, ResourceModel, Site};
pub use routing::{Column, SiteSet, TspCache};
