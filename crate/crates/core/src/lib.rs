pub mod analysis;
pub mod boundary;
pub mod ising;
pub mod lattice;
pub mod measure;
pub mod mps;
pub mod oracle;
pub mod stabilizer;
