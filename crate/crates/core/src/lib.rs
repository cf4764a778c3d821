pub mod classic;
pub mod config;
pub mod container;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod features;
pub mod kinds;
pub mod neural;
pub mod preprocess;
pub mod rmdl;
pub mod seeding;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, Result};
