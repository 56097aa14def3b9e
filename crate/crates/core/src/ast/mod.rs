//! Concrete syntax, abstract syntax tree and parser for DC-ProbLog programs.
//!
//! A program is a sequence of `.`-terminated statements: probabilistic facts
//! (`0.5::large.`), annotated disjunctions, distributional facts and clauses
//! (`x ~ normal(5,2) :- body.`), normal clauses, and the query directives
//! `query/1`, `evidence/2` and `observation/2`.

mod lexer;
mod parser;
mod pretty;
mod validate;

pub use parser::{parse_program, ParseError};
pub use validate::{validate_syntax, Diagnostic, DiagnosticKind};

/// A numeric literal. Rationals written `a/b` keep their exact form so that
/// printing round-trips; evaluation is double precision throughout.
#[derive(Debug, Clone, Copy)]
pub enum Num {
    Int(i64),
    Ratio(i64, i64),
    Float(f64),
}

impl Num {
    pub fn value(&self) -> f64 {
        match *self {
            Num::Int(i) => i as f64,
            Num::Ratio(n, d) => n as f64 / d as f64,
            Num::Float(f) => f,
        }
    }
}

impl PartialEq for Num {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Num::Int(a), Num::Int(b)) => a == b,
            (Num::Ratio(a, b), Num::Ratio(c, d)) => a == c && b == d,
            (Num::Float(a), Num::Float(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }
}

impl Eq for Num {}

impl std::hash::Hash for Num {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        match self {
            Num::Int(i) => {
                0u8.hash(state);
                i.hash(state);
            }
            Num::Ratio(n, d) => {
                1u8.hash(state);
                n.hash(state);
                d.hash(state);
            }
            Num::Float(f) => {
                2u8.hash(state);
                f.to_bits().hash(state);
            }
        }
    }
}

/// A logic term: variable, constant, number, or compound.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Var(String),
    Const(String),
    Num(Num),
    Compound(String, Vec<Term>),
}

impl Term {
    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Const(_) | Term::Num(_) => true,
            Term::Compound(_, args) => args.iter().all(Term::is_ground),
        }
    }

    pub fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Term::Var(v) => out.push(v),
            Term::Compound(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
            _ => {}
        }
    }
}

/// A predicate applied to terms, e.g. `works(1)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub functor: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(functor: impl Into<String>, args: Vec<Term>) -> Self {
        Atom {
            functor: functor.into(),
            args,
        }
    }

    pub fn propositional(functor: impl Into<String>) -> Self {
        Atom::new(functor, Vec::new())
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_ground)
    }
}

/// Binary arithmetic operators allowed in expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Arithmetic functions from the reserved vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithFn {
    Abs,
    Max,
    Min,
}

/// Arithmetic expression over terms. Terms embedded in an expression are
/// numbers, interned constants, logic variables, or random terms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Term(Term),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(ArithFn, Vec<Expr>),
}

impl Expr {
    pub fn num(n: f64) -> Expr {
        Expr::Term(Term::Num(Num::Float(n)))
    }

    /// The expression as a bare term, if it is one.
    pub fn as_term(&self) -> Option<&Term> {
        match self {
            Expr::Term(t) => Some(t),
            _ => None,
        }
    }

    pub fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Term(t) => t.collect_vars(out),
            Expr::Neg(e) => e.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    /// Evaluates a constant expression; `None` when it mentions any
    /// non-numeric term.
    pub fn const_value(&self) -> Option<f64> {
        match self {
            Expr::Term(Term::Num(n)) => Some(n.value()),
            Expr::Term(_) => None,
            Expr::Neg(e) => Some(-e.const_value()?),
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.const_value()?, b.const_value()?);
                Some(match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                })
            }
            Expr::Call(f, args) => {
                let vals: Option<Vec<f64>> = args.iter().map(Expr::const_value).collect();
                let vals = vals?;
                Some(match f {
                    ArithFn::Abs => vals[0].abs(),
                    ArithFn::Max => vals[0].max(vals[1]),
                    ArithFn::Min => vals[0].min(vals[1]),
                })
            }
        }
    }
}

/// Comparison predicates, including the infinitesimal-interval observation
/// predicate `delta_interval/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Gt,
    Leq,
    Geq,
    EqArith,
    NeqArith,
    DeltaInterval,
}

impl CmpOp {
    /// Evaluates the comparison on plain numbers. `delta_interval` on
    /// countable supports is equality; on samples it is handled upstream.
    pub fn eval(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Leq => lhs <= rhs,
            CmpOp::Geq => lhs >= rhs,
            CmpOp::EqArith | CmpOp::DeltaInterval => lhs == rhs,
            CmpOp::NeqArith => !(lhs == rhs),
        }
    }
}

/// A Boolean comparison atom, e.g. `b + c < 15`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Comparison {
    pub op: CmpOp,
    pub lhs: Expr,
    pub rhs: Expr,
}

/// Either a regular atom or a comparison atom, as found in clause bodies.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BodyAtom {
    Atom(Atom),
    Cmp(Comparison),
}

/// A possibly negated body atom.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Literal {
    pub positive: bool,
    pub atom: BodyAtom,
}

impl Literal {
    pub fn pos(atom: BodyAtom) -> Self {
        Literal {
            positive: true,
            atom,
        }
    }

    pub fn neg(atom: BodyAtom) -> Self {
        Literal {
            positive: false,
            atom,
        }
    }
}

/// A distribution term. `uniform/2` is the continuous uniform; `uniform/1`
/// takes a list and denotes a user-defined finite sample space.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Distribution {
    Flip(Expr),
    Finite(Vec<(Expr, Term)>),
    Normal(Expr, Expr),
    Beta(Expr, Expr),
    Poisson(Expr),
    UniformCont(Expr, Expr),
    UniformList(Vec<Term>),
    Delta(Expr),
}

impl Distribution {
    pub fn functor_name(&self) -> &'static str {
        match self {
            Distribution::Flip(_) => "flip",
            Distribution::Finite(_) => "finite",
            Distribution::Normal(..) => "normal",
            Distribution::Beta(..) => "beta",
            Distribution::Poisson(_) => "poisson",
            Distribution::UniformCont(..) => "uniform",
            Distribution::UniformList(_) => "uniform",
            Distribution::Delta(_) => "delta",
        }
    }

    pub fn param_exprs(&self) -> Vec<&Expr> {
        match self {
            Distribution::Flip(p) | Distribution::Poisson(p) | Distribution::Delta(p) => {
                vec![p]
            }
            Distribution::Normal(a, b)
            | Distribution::Beta(a, b)
            | Distribution::UniformCont(a, b) => vec![a, b],
            Distribution::Finite(pairs) => pairs.iter().map(|(p, _)| p).collect(),
            Distribution::UniformList(_) => Vec::new(),
        }
    }
}

/// A single program statement.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Statement {
    /// `term ~ dist.`
    DistFact { term: Term, dist: Distribution },
    /// `term ~ dist :- body.`
    DistClause {
        term: Term,
        dist: Distribution,
        body: Vec<Literal>,
    },
    /// `p::atom.`
    ProbFact { prob: Expr, atom: Atom },
    /// `p1::a1; ...; pn::an :- body.`
    AnnotatedDisjunction {
        heads: Vec<(Expr, Atom)>,
        body: Vec<Literal>,
    },
    /// `head :- body.` or a plain fact.
    Clause { head: Atom, body: Vec<Literal> },
}

/// A query target: a ground atom, or a bare comparison (answered through an
/// auxiliary atom defined by the engine).
#[derive(Debug, Clone, PartialEq)]
pub enum QueryTarget {
    Atom(Atom),
    Cmp(Comparison),
}

impl QueryTarget {
    pub fn display_name(&self) -> String {
        match self {
            QueryTarget::Atom(a) => a.to_string(),
            QueryTarget::Cmp(c) => c.to_string(),
        }
    }
}

/// Queries, Boolean evidence and delta-interval observations for one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryTask {
    pub queries: Vec<QueryTarget>,
    pub evidence: Vec<(Atom, bool)>,
    pub observations: Vec<(Term, Num)>,
}

impl QueryTask {
    pub fn is_empty(&self) -> bool {
        self.queries.is_empty() && self.evidence.is_empty() && self.observations.is_empty()
    }

    pub fn merge(&mut self, other: QueryTask) {
        self.queries.extend(other.queries);
        self.evidence.extend(other.evidence);
        self.observations.extend(other.observations);
    }
}

/// A parsed program together with the query task collected from directives.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Program {
    pub statements: Vec<Statement>,
    pub task: QueryTask,
}

/// Distribution functors of the reserved vocabulary, as (name, arity).
pub const DISTRIBUTION_FUNCTORS: &[(&str, usize)] = &[
    ("flip", 1),
    ("finite", 1),
    ("normal", 2),
    ("beta", 2),
    ("poisson", 1),
    ("uniform", 1),
    ("uniform", 2),
    ("delta", 1),
];

/// Directive predicates recognized by the parser.
pub const DIRECTIVE_PREDICATES: &[&str] = &["query", "evidence", "observation"];

/// Built-in functors that can never head a clause; rejected at parse time.
pub fn is_builtin_head(functor: &str, arity: usize) -> bool {
    functor == "~"
        || functor == "delta_interval"
        || matches!((functor, arity), ("abs", 1) | ("max", 2) | ("min", 2))
        || DISTRIBUTION_FUNCTORS
            .iter()
            .any(|&(f, a)| f == functor && a == arity)
}

/// Engine-reserved predicates; heads using them are flagged as diagnostics.
pub fn is_engine_reserved_head(functor: &str, arity: usize) -> bool {
    (functor == "rv" && arity == 2) || DIRECTIVE_PREDICATES.contains(&functor)
}
