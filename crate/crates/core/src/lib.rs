pub mod assembly;
pub mod cli;
pub mod dispersion;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod polybasis;
pub mod projectors;
pub mod timestep;
