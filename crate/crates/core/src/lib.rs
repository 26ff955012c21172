//! Random compositions of two Liverani–Saussol–Vaienti maps: backward
//! orbits and the Young tower, Ulam approximations of the annealed transfer
//! operator, correlation decay, and numerical checks of the supporting
//! lemmas.

pub mod cli;
pub mod error;
pub mod maps;
pub mod random_system;
pub mod tower;
pub mod transfer;
pub mod verify;

pub use error::{Error, Result};
pub use maps::{Branch, LsvMap};
pub use random_system::{Symbol, SymbolString, SkewPoint, SystemParams};
pub use tower::{BackwardOrbit, ExpectationProfile, TailTable, TowerCell};
pub use transfer::{DensityVector, Observable, PartitionGrid, UlamMatrix};
pub use verify::{DistortionReport, HoeffdingReport, Ledger, PowerLawFit};
