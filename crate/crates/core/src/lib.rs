//! DC-ProbLog: a compiler and inference engine for hybrid (discrete and
//! continuous) probabilistic logic programs.
//!
//! The pipeline parses a program, grounds it relative to the queries and
//! evidence, desugars probabilistic facts, annotated disjunctions and
//! distributional clauses down to distributional facts plus normal clauses,
//! encodes the logic as a propositional formula via Clark's completion,
//! compiles that formula to a smooth deterministic decomposable circuit, and
//! evaluates the circuit in the infinitesimal-number semiring under ancestral
//! sampling with forced observations (infinitesimal algebraic likelihood
//! weighting). Conditioning on zero-probability observations such as
//! `size ≐ 0.4` is expressed with `observation/2` and handled exactly through
//! the order component of the infinitesimal numbers.

pub mod ast;
pub mod circuit;
pub mod formula;
pub mod ground;
pub mod infer;
pub mod sampler;
pub mod semiring;
pub mod transform;
