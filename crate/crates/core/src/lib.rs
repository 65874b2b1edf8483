pub mod error;
pub mod exec;
pub mod experiments;
pub mod models;
pub mod lanczos;
pub mod operators;
pub mod sensitivity;
pub mod slq;
pub mod surgery;
pub mod vecspace;

pub use error::{Error, Result};
