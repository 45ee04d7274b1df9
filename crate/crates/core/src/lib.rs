//! MELA: a stochastic process algebra for spatial population models.
//!
//! The crate parses models written in a concrete MELA syntax, derives their
//! labelled-transition-system semantics over congruence-normal population
//! states, simulates the underlying continuous-time Markov chain exactly,
//! and extracts and integrates the fluid ODE approximation
//! `dP/dt = M x v`.
//!
//! Pipeline: [`parser::parse_model`] -> [`validate::validate`] ->
//! [`semantics::CompiledModel`] -> simulation ([`stochastic`]) or ODE
//! analysis ([`fluid`]).

pub mod ast;
pub mod diag;
pub mod expr;
pub mod lexer;
pub mod parser;
pub mod space;
pub mod validate;

pub mod semantics;

pub mod fluid;
pub mod stochastic;

pub use ast::ModelDef;
pub use diag::{Diagnostic, Severity};
pub use parser::parse_model;
pub use validate::validate;
