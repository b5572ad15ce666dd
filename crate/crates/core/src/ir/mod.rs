//! Front end for the LoopNav-IR language: parsing, CFG construction and
//! assignment normalization.

pub mod ast;
pub mod cfg;
pub mod normalize;
pub mod parser;

pub use ast::Program;
pub use cfg::Cfg;
pub use parser::parse_program;
