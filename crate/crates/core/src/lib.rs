//! Resistor networks: forward voltage problems and recovery of currents and
//! conductivities from current magnitudes by weighted least-gradient minimization.

pub mod bench;
pub mod codec;
pub mod error;
pub mod forward;
pub mod graph;
pub mod io;
pub mod inverse;
pub mod linalg;
pub mod multi;
pub mod rng;
pub mod scalar;
pub mod walk;

pub use codec::{
    decode, decode_batch, encode, keyspace_size, sample_admissible, validate_admissible, AdmissibleFlow, Ciphertext,
    CodecError, Keyspace,
};
pub use error::{Error, Result};
pub use forward::{
    conductivity_from_pair, current_from_potential, solve_dirichlet_forward, solve_neumann_forward,
    Conductivity, DirichletData, NeumannData,
};
pub use graph::{
    classify_vertices, divergence, energy, gradient, inner_e, inner_v, vertex_flux, Current, EdgeFunction,
    EdgeKind, Graph, MeasurementMatrix, VertexFunction,
};
pub use inverse::{
    build_lift_neumann, lift_dirichlet, rescale_to_unit_flux, shrink_d, shrink_scalar, solve_inverse_dirichlet,
    solve_inverse_neumann, step_u_dirichlet, step_u_neumann, AdmmConfig, InverseError, InverseSolution, NeumannLift,
    SolveReport, StopRule,
};
pub use multi::{
    coupling_phi, consistency_check, phi_tolerance, total_functional, BoundaryData, ConsistencyReport, Dataset,
    MeasurementSet,
};
pub use io::{network_from_json, network_to_json, parse_network, write_network, BoundaryMode, FormatError, NetworkFile, Weights};
pub use linalg::{solve_linear, LaplacianSystem, LinearSystemSpec, SystemRole};
pub use scalar::Scalar;
pub use walk::{
    design_transitions, expected_net_passages, simulate_net_passages, transitions_from_conductivity, NetPassage,
    PassageEstimate, Terminals, TransitionMatrix, WalkDesign,
};

pub type Current64 = Current<f64>;
pub type Current32 = Current<f32>;
pub type Conductivity64 = Conductivity<f64>;
pub type Conductivity32 = Conductivity<f32>;
pub type Measurement64 = MeasurementMatrix<f64>;
pub type Measurement32 = MeasurementMatrix<f32>;
