//! Numerical toolkit for amoebas and coamoebas of parametrized subvarieties
//! of the complex algebraic torus: pullback-density volume estimation,
//! Log/Arg fiber counting, logarithmic limit sets, affine-plane certificates,
//! and raster images.

pub mod config;
pub mod expr;
pub mod fibers;
pub mod gallery;
pub mod limitset;
pub mod maps;
pub mod measure;
pub mod planes;
pub mod raster;
pub mod rng;
pub mod variety;

pub use expr::{ComplexExpr, Jet};
pub use maps::{arg_map, bergman_r, log_map, DensitySample, LogPoint, TorusMap, TorusPoint};
pub use variety::VarietySpec;
