pub mod analysis;
pub mod backend;
pub mod extraction;
pub mod orchestrator;
pub mod persona;
pub mod scenario;
pub mod text;
