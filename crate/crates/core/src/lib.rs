//! Martingale invariants and optional stopping for polynomial probabilistic
//! transition systems.

pub mod linalg;
pub mod linear;
pub mod models;
pub mod moments;
pub mod poly;
pub mod preexp;
pub mod pts;
pub mod report;
pub mod sdp;
pub mod sim;
pub mod sos;

pub use moments::{Distribution, InitialDistribution};
pub use poly::{parse_rational, Monomial, Polynomial, Vars, Q};
pub use preexp::{LocPoly, PiecewisePoly};
pub use pts::{load_pts, load_pts_with_params, save_pts, Pts, PtsError};
pub use report::{Evidence, InvariantReport, Method};
pub use sim::{Estimate, RunConfig};
pub use sos::{SosCertificate, SosOptions, Tolerances};
