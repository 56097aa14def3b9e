//! Sugar elimination down to the DF-PLP core: probabilistic facts and
//! annotated disjunctions become `flip`/`finite` random variables with
//! guarded rules; distributional clauses become one fresh random variable
//! per clause instance and parent combination, linked by `rv/2` context
//! rules; interpreted occurrences of random terms in rule bodies are
//! contextualized and the `rv/2` indirection is then unfolded away.

use crate::ast::*;
use crate::ground::GroundProgram;
use std::collections::{HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("invalid probability label: {0}")]
    InvalidProbability(String),
    #[error("cyclic dependency between random terms: {0}")]
    CyclicRandomTermDependency(String),
    #[error("distributional-clause expansion exceeds {0} fresh random variables")]
    UnboundedExpansion(usize),
    #[error("rv/2 unfolding did not terminate: {0}")]
    RvCycle(String),
    #[error("cyclic dependency between random variables: {0}")]
    CyclicRandomVariableDependency(String),
    #[error("term {0} cannot be used in arithmetic (not a number, interned constant, or random term)")]
    UnresolvedTerm(String),
    #[error("malformed observation: {0}")]
    MalformedObservation(String),
    #[error("statement must be ground before desugaring: {0}")]
    NonGroundStatement(String),
}

/// Cap on fresh random variables created by distributional-clause expansion.
pub const EXPANSION_CAP: usize = 1_000_000;

/// Identifier of a random variable in the desugared core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RvId(pub u32);

impl RvId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Arithmetic over random variables and constants (parameters of core
/// distributions and sides of core comparisons).
#[derive(Debug, Clone)]
pub enum CExpr {
    Const(f64),
    Var(RvId),
    Neg(Box<CExpr>),
    Bin(BinOp, Box<CExpr>, Box<CExpr>),
    Call(ArithFn, Vec<CExpr>),
}

impl PartialEq for CExpr {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (CExpr::Const(a), CExpr::Const(b)) => a.to_bits() == b.to_bits(),
            (CExpr::Var(a), CExpr::Var(b)) => a == b,
            (CExpr::Neg(a), CExpr::Neg(b)) => a == b,
            (CExpr::Bin(o1, a1, b1), CExpr::Bin(o2, a2, b2)) => {
                o1 == o2 && a1 == a2 && b1 == b2
            }
            (CExpr::Call(f1, a1), CExpr::Call(f2, a2)) => f1 == f2 && a1 == a2,
            _ => false,
        }
    }
}

impl Eq for CExpr {}

impl std::hash::Hash for CExpr {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        match self {
            CExpr::Const(c) => {
                0u8.hash(state);
                c.to_bits().hash(state);
            }
            CExpr::Var(v) => {
                1u8.hash(state);
                v.hash(state);
            }
            CExpr::Neg(e) => {
                2u8.hash(state);
                e.hash(state);
            }
            CExpr::Bin(op, a, b) => {
                3u8.hash(state);
                op.hash(state);
                a.hash(state);
                b.hash(state);
            }
            CExpr::Call(f, args) => {
                4u8.hash(state);
                f.hash(state);
                args.hash(state);
            }
        }
    }
}

impl CExpr {
    pub fn collect_vars(&self, out: &mut Vec<RvId>) {
        match self {
            CExpr::Const(_) => {}
            CExpr::Var(v) => out.push(*v),
            CExpr::Neg(e) => e.collect_vars(out),
            CExpr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            CExpr::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    /// Evaluates with variable values taken from `lookup`.
    pub fn eval(&self, lookup: &impl Fn(RvId) -> f64) -> f64 {
        match self {
            CExpr::Const(c) => *c,
            CExpr::Var(v) => lookup(*v),
            CExpr::Neg(e) => -e.eval(lookup),
            CExpr::Bin(op, a, b) => {
                let (a, b) = (a.eval(lookup), b.eval(lookup));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            CExpr::Call(f, args) => {
                let vals: Vec<f64> = args.iter().map(|a| a.eval(lookup)).collect();
                match f {
                    ArithFn::Abs => vals[0].abs(),
                    ArithFn::Max => vals[0].max(vals[1]),
                    ArithFn::Min => vals[0].min(vals[1]),
                }
            }
        }
    }

    pub fn const_value(&self) -> Option<f64> {
        let mut vars = Vec::new();
        self.collect_vars(&mut vars);
        if vars.is_empty() {
            Some(self.eval(&|_| unreachable!()))
        } else {
            None
        }
    }

    pub fn render(&self, names: &impl Fn(RvId) -> String) -> String {
        fn prec(e: &CExpr) -> u8 {
            match e {
                CExpr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
                CExpr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
                CExpr::Neg(_) => 3,
                _ => 4,
            }
        }
        fn go(e: &CExpr, names: &impl Fn(RvId) -> String, min: u8, out: &mut String) {
            let me = prec(e);
            if me < min {
                out.push('(');
            }
            match e {
                CExpr::Const(c) => out.push_str(&fmt_f64(*c)),
                CExpr::Var(v) => out.push_str(&names(*v)),
                CExpr::Neg(inner) => {
                    out.push('-');
                    go(inner, names, 3, out);
                }
                CExpr::Bin(op, a, b) => {
                    let sym = match op {
                        BinOp::Add => "+",
                        BinOp::Sub => "-",
                        BinOp::Mul => "*",
                        BinOp::Div => "/",
                    };
                    go(a, names, me, out);
                    out.push_str(sym);
                    go(b, names, me + 1, out);
                }
                CExpr::Call(f, args) => {
                    out.push_str(match f {
                        ArithFn::Abs => "abs",
                        ArithFn::Max => "max",
                        ArithFn::Min => "min",
                    });
                    out.push('(');
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            out.push(',');
                        }
                        go(a, names, 0, out);
                    }
                    out.push(')');
                }
            }
            if me < min {
                out.push(')');
            }
        }
        let mut s = String::new();
        go(self, names, 0, &mut s);
        s
    }
}

/// Prints a float like the concrete syntax would (integers without `.0`).
pub fn fmt_f64(x: f64) -> String {
    if x.fract() == 0.0 && x.is_finite() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

/// Core distribution with parameters over random variables and constants.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreDist {
    Flip(CExpr),
    Finite(Vec<(CExpr, f64)>),
    Normal(CExpr, CExpr),
    Beta(CExpr, CExpr),
    Poisson(CExpr),
    UniformCont(CExpr, CExpr),
    UniformList(Vec<f64>),
    Delta(CExpr),
}

impl CoreDist {
    pub fn params(&self) -> Vec<&CExpr> {
        match self {
            CoreDist::Flip(p) | CoreDist::Poisson(p) | CoreDist::Delta(p) => vec![p],
            CoreDist::Normal(a, b) | CoreDist::Beta(a, b) | CoreDist::UniformCont(a, b) => {
                vec![a, b]
            }
            CoreDist::Finite(pairs) => pairs.iter().map(|(p, _)| p).collect(),
            CoreDist::UniformList(_) => Vec::new(),
        }
    }

    pub fn parent_vars(&self) -> Vec<RvId> {
        let mut vars = Vec::new();
        for p in self.params() {
            p.collect_vars(&mut vars);
        }
        vars.sort();
        vars.dedup();
        vars
    }

    pub fn render(&self, names: &impl Fn(RvId) -> String) -> String {
        match self {
            CoreDist::Flip(p) => format!("flip({})", p.render(names)),
            CoreDist::Normal(a, b) => {
                format!("normal({},{})", a.render(names), b.render(names))
            }
            CoreDist::Beta(a, b) => format!("beta({},{})", a.render(names), b.render(names)),
            CoreDist::Poisson(l) => format!("poisson({})", l.render(names)),
            CoreDist::UniformCont(a, b) => {
                format!("uniform({},{})", a.render(names), b.render(names))
            }
            CoreDist::Delta(v) => format!("delta({})", v.render(names)),
            CoreDist::UniformList(vals) => format!(
                "uniform([{}])",
                vals.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",")
            ),
            CoreDist::Finite(pairs) => format!(
                "finite([{}])",
                pairs
                    .iter()
                    .map(|(p, v)| format!("{}:{}", p.render(names), fmt_f64(*v)))
                    .collect::<Vec<_>>()
                    .join(",")
            ),
        }
    }
}

/// Statically known support structure of a core distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum SupportKind {
    /// Real interval support with a density (normal, beta, uniform/2).
    Continuous,
    /// Countable support not known statically (poisson, delta with a
    /// non-constant argument).
    CountableOther,
    /// Finite list of known values.
    Finite(FiniteSupport),
}

/// Finite support: listed `(weight, value)` entries plus what happens to the
/// leftover mass. `rest: None` means the listed entries are exhaustive;
/// `Some(v)` is the value taken with the remaining probability (NaN encodes
/// the anonymous "none of the listed outcomes" of a sub-normalized
/// annotated disjunction).
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSupport {
    pub entries: Vec<(CExpr, f64)>,
    pub rest: Option<f64>,
}

impl SupportKind {
    pub fn of(dist: &CoreDist) -> SupportKind {
        match dist {
            CoreDist::Normal(..) | CoreDist::Beta(..) | CoreDist::UniformCont(..) => {
                SupportKind::Continuous
            }
            CoreDist::Poisson(_) => SupportKind::CountableOther,
            CoreDist::Delta(v) => match v.const_value() {
                Some(c) => SupportKind::Finite(FiniteSupport {
                    entries: vec![(CExpr::Const(1.0), c)],
                    rest: None,
                }),
                None => SupportKind::CountableOther,
            },
            CoreDist::Flip(p) => SupportKind::Finite(FiniteSupport {
                entries: vec![(p.clone(), 1.0)],
                rest: Some(0.0),
            }),
            CoreDist::UniformList(vals) => {
                let n = vals.len() as f64;
                SupportKind::Finite(FiniteSupport {
                    entries: vals
                        .iter()
                        .map(|v| (CExpr::Const(1.0 / n), *v))
                        .collect(),
                    rest: None,
                })
            }
            CoreDist::Finite(pairs) => {
                let sum: Option<f64> = pairs
                    .iter()
                    .try_fold(0.0, |acc, (p, _)| p.const_value().map(|v| acc + v));
                let exhaustive = matches!(sum, Some(s) if (s - 1.0).abs() <= 1e-9);
                SupportKind::Finite(FiniteSupport {
                    entries: pairs.clone(),
                    rest: if exhaustive { None } else { Some(f64::NAN) },
                })
            }
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self, SupportKind::Continuous)
    }
}

/// One random variable of the desugared core.
#[derive(Debug, Clone)]
pub struct VarInfo {
    pub id: RvId,
    pub name: String,
    pub dist: CoreDist,
    pub support: SupportKind,
    /// Random term this variable realizes and the index of the originating
    /// ground statement.
    pub origin: (Term, usize),
}

/// A comparison over random variables and constants.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CoreCmp {
    pub op: CmpOp,
    pub lhs: CExpr,
    pub rhs: CExpr,
}

impl CoreCmp {
    pub fn vars(&self) -> Vec<RvId> {
        let mut vars = Vec::new();
        self.lhs.collect_vars(&mut vars);
        self.rhs.collect_vars(&mut vars);
        vars.sort();
        vars.dedup();
        vars
    }

    pub fn render(&self, names: &impl Fn(RvId) -> String) -> String {
        if self.op == CmpOp::DeltaInterval {
            format!(
                "delta_interval({},{})",
                self.lhs.render(names),
                self.rhs.render(names)
            )
        } else {
            format!(
                "{}{}{}",
                self.lhs.render(names),
                self.op,
                self.rhs.render(names)
            )
        }
    }

    /// Truth value under a variable assignment. `delta_interval` evaluates
    /// as arithmetic equality (countable-support reading).
    pub fn eval(&self, lookup: &impl Fn(RvId) -> f64) -> bool {
        self.op.eval(self.lhs.eval(lookup), self.rhs.eval(lookup))
    }
}

/// Literal of a core rule body.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CoreLit {
    Atom { positive: bool, atom: Atom },
    Cmp { positive: bool, cmp: CoreCmp },
}

impl CoreLit {
    pub fn complement(&self) -> CoreLit {
        match self {
            CoreLit::Atom { positive, atom } => CoreLit::Atom {
                positive: !positive,
                atom: atom.clone(),
            },
            CoreLit::Cmp { positive, cmp } => CoreLit::Cmp {
                positive: !positive,
                cmp: cmp.clone(),
            },
        }
    }

    pub fn render(&self, names: &impl Fn(RvId) -> String) -> String {
        let (positive, body) = match self {
            CoreLit::Atom { positive, atom } => (*positive, atom.to_string()),
            CoreLit::Cmp { positive, cmp } => (*positive, cmp.render(names)),
        };
        if positive {
            body
        } else {
            format!("not {body}")
        }
    }
}

/// A normal clause of the DF-PLP core.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CoreRule {
    pub head: Atom,
    pub body: Vec<CoreLit>,
}

/// Interning table mapping user-defined sample-space constants to natural
/// numbers (1-based, in first-occurrence order).
#[derive(Debug, Clone, Default)]
pub struct InternTable {
    names: Vec<String>,
    map: HashMap<String, usize>,
}

impl InternTable {
    pub fn intern(&mut self, name: &str) -> f64 {
        if let Some(&i) = self.map.get(name) {
            return (i + 1) as f64;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.map.insert(name.to_string(), i);
        (i + 1) as f64
    }

    pub fn lookup(&self, name: &str) -> Option<f64> {
        self.map.get(name).map(|&i| (i + 1) as f64)
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, f64)> {
        self.names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), (i + 1) as f64))
    }
}

/// Parent graph over random variables with a topological order.
#[derive(Debug, Clone)]
pub struct DependencyGraph {
    pub parents: Vec<Vec<RvId>>,
    pub topo: Vec<RvId>,
}

#[derive(Debug, Clone)]
pub struct DomainDiagnostic {
    pub var: RvId,
    pub message: String,
}

/// The desugared core: distributional facts plus normal clauses over
/// comparison atoms and regular atoms.
#[derive(Debug, Clone)]
pub struct GroundDfplpProgram {
    pub vars: Vec<VarInfo>,
    pub rules: Vec<CoreRule>,
    pub intern: InternTable,
    /// `V(tau)`: the random variables each random term may refer to.
    pub var_sets: Vec<(Term, Vec<RvId>)>,
    /// Unfolded context-rule guards `(term, variable, guard body)`, kept for
    /// the mutual-exclusivity (DC1) sampling check.
    pub context_guards: Vec<(Term, RvId, Vec<CoreLit>)>,
}

impl GroundDfplpProgram {
    pub fn var_name(&self, id: RvId) -> &str {
        &self.vars[id.index()].name
    }

    pub fn namer(&self) -> impl Fn(RvId) -> String + '_ {
        move |id: RvId| self.vars[id.index()].name.clone()
    }

    pub fn var_set(&self, term: &Term) -> &[RvId] {
        self.var_sets
            .iter()
            .find(|(t, _)| t == term)
            .map(|(_, vs)| vs.as_slice())
            .unwrap_or(&[])
    }

    pub fn to_source(&self) -> String {
        let names = self.namer();
        let mut out = String::new();
        for v in &self.vars {
            out.push_str(&format!("{} ~ {}.\n", v.name, v.dist.render(&names)));
        }
        for r in &self.rules {
            if r.body.is_empty() {
                out.push_str(&format!("{}.\n", r.head));
            } else {
                let body: Vec<String> = r.body.iter().map(|l| l.render(&names)).collect();
                out.push_str(&format!("{} :- {}.\n", r.head, body.join(", ")));
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Stage 1: eliminating probabilistic facts and annotated disjunctions
// ---------------------------------------------------------------------------

/// A program without probabilistic facts or annotated disjunctions.
#[derive(Debug, Clone)]
pub struct AdFreeProgram {
    pub statements: Vec<Statement>,
}

fn program_symbols(statements: &[Statement]) -> HashSet<String> {
    fn term_syms(t: &Term, out: &mut HashSet<String>) {
        match t {
            Term::Const(c) => {
                out.insert(c.clone());
            }
            Term::Compound(f, args) => {
                out.insert(f.clone());
                args.iter().for_each(|a| term_syms(a, out));
            }
            _ => {}
        }
    }
    fn expr_syms(e: &Expr, out: &mut HashSet<String>) {
        match e {
            Expr::Term(t) => term_syms(t, out),
            Expr::Neg(inner) => expr_syms(inner, out),
            Expr::Binary(_, a, b) => {
                expr_syms(a, out);
                expr_syms(b, out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| expr_syms(a, out)),
        }
    }
    fn atom_syms(a: &Atom, out: &mut HashSet<String>) {
        out.insert(a.functor.clone());
        a.args.iter().for_each(|t| term_syms(t, out));
    }
    fn body_syms(body: &[Literal], out: &mut HashSet<String>) {
        for l in body {
            match &l.atom {
                BodyAtom::Atom(a) => atom_syms(a, out),
                BodyAtom::Cmp(c) => {
                    expr_syms(&c.lhs, out);
                    expr_syms(&c.rhs, out);
                }
            }
        }
    }
    let mut out = HashSet::new();
    for s in statements {
        match s {
            Statement::Clause { head, body } => {
                atom_syms(head, &mut out);
                body_syms(body, &mut out);
            }
            Statement::ProbFact { prob, atom } => {
                expr_syms(prob, &mut out);
                atom_syms(atom, &mut out);
            }
            Statement::AnnotatedDisjunction { heads, body } => {
                for (p, a) in heads {
                    expr_syms(p, &mut out);
                    atom_syms(a, &mut out);
                }
                body_syms(body, &mut out);
            }
            Statement::DistFact { term, dist } | Statement::DistClause { term, dist, .. } => {
                term_syms(term, &mut out);
                for p in dist.param_exprs() {
                    expr_syms(p, &mut out);
                }
                if let Statement::DistClause { body, .. } = s {
                    body_syms(body, &mut out);
                }
            }
        }
    }
    out
}

fn fresh_name(base: &str, counter: &mut u32, taken: &HashSet<String>) -> String {
    loop {
        let name = format!("{base}{counter}");
        *counter += 1;
        if !taken.contains(&name) {
            return name;
        }
    }
}

/// Replaces each probabilistic fact `p::mu` by `x ~ flip(p). mu :- x=:=1.`
/// and each annotated disjunction by a `finite`-distributed selector plus one
/// guarded rule per disjunct (selector comparison appended last).
pub fn eliminate_ads(gp: &GroundProgram) -> Result<AdFreeProgram, TransformError> {
    let taken = program_symbols(&gp.statements);
    let mut counter = 0u32;
    let mut out = Vec::new();

    let check_label = |p: &Expr| -> Result<(), TransformError> {
        if let Some(v) = p.const_value() {
            if !(0.0..=1.0).contains(&v) {
                return Err(TransformError::InvalidProbability(format!(
                    "label {v} outside [0,1]"
                )));
            }
        }
        Ok(())
    };

    for stmt in &gp.statements {
        match stmt {
            Statement::ProbFact { prob, atom } => {
                check_label(prob)?;
                let name = fresh_name("x", &mut counter, &taken);
                let rv = Term::Const(name);
                out.push(Statement::DistFact {
                    term: rv.clone(),
                    dist: Distribution::Flip(prob.clone()),
                });
                out.push(Statement::Clause {
                    head: atom.clone(),
                    body: vec![Literal::pos(BodyAtom::Cmp(Comparison {
                        op: CmpOp::EqArith,
                        lhs: Expr::Term(rv),
                        rhs: Expr::Term(Term::Num(Num::Int(1))),
                    }))],
                });
            }
            Statement::AnnotatedDisjunction { heads, body } => {
                let mut sum = Some(0.0);
                for (p, _) in heads {
                    check_label(p)?;
                    sum = match (sum, p.const_value()) {
                        (Some(s), Some(v)) => Some(s + v),
                        _ => None,
                    };
                }
                if let Some(s) = sum {
                    if s > 1.0 + 1e-9 {
                        return Err(TransformError::InvalidProbability(format!(
                            "annotated disjunction labels sum to {s}"
                        )));
                    }
                }
                let name = fresh_name("x", &mut counter, &taken);
                let rv = Term::Const(name);
                let pairs = heads
                    .iter()
                    .enumerate()
                    .map(|(i, (p, _))| (p.clone(), Term::Num(Num::Int(i as i64 + 1))))
                    .collect();
                out.push(Statement::DistFact {
                    term: rv.clone(),
                    dist: Distribution::Finite(pairs),
                });
                for (i, (_, atom)) in heads.iter().enumerate() {
                    let mut rule_body = body.clone();
                    rule_body.push(Literal::pos(BodyAtom::Cmp(Comparison {
                        op: CmpOp::EqArith,
                        lhs: Expr::Term(rv.clone()),
                        rhs: Expr::Term(Term::Num(Num::Int(i as i64 + 1))),
                    })));
                    out.push(Statement::Clause {
                        head: atom.clone(),
                        body: rule_body,
                    });
                }
            }
            other => out.push(other.clone()),
        }
    }
    Ok(AdFreeProgram { statements: out })
}

// ---------------------------------------------------------------------------
// Stage 2: eliminating distributional clauses
// ---------------------------------------------------------------------------

/// Intermediate literal used between DC elimination and unfolding: a regular
/// literal, an `rv/2` guard, or an already-resolved core comparison.
#[derive(Debug, Clone, PartialEq)]
pub enum MidLit {
    Lit(Literal),
    Rv(Term, RvId),
    Cmp { positive: bool, cmp: CoreCmp },
}

#[derive(Debug, Clone)]
pub struct ContextRule {
    pub term: Term,
    pub var: RvId,
    pub body: Vec<MidLit>,
}

#[derive(Debug, Clone)]
pub struct MidRule {
    pub head: Atom,
    pub body: Vec<MidLit>,
}

/// Output of distributional-clause elimination.
#[derive(Debug, Clone)]
pub struct DcElimination {
    pub vars: Vec<VarInfo>,
    pub var_sets: Vec<(Term, Vec<RvId>)>,
    pub context_rules: Vec<ContextRule>,
    pub logic_rules: Vec<MidRule>,
    pub intern: InternTable,
}

struct DistStmt {
    term: Term,
    dist: Distribution,
    body: Vec<Literal>,
    stmt_idx: usize,
}

fn random_term_leaves<'a>(e: &'a Expr, terms: &HashSet<Term>, out: &mut Vec<&'a Term>) {
    match e {
        Expr::Term(t) => {
            if terms.contains(t) {
                out.push(t);
            }
        }
        Expr::Neg(inner) => random_term_leaves(inner, terms, out),
        Expr::Binary(_, a, b) => {
            random_term_leaves(a, terms, out);
            random_term_leaves(b, terms, out);
        }
        Expr::Call(_, args) => args
            .iter()
            .for_each(|a| random_term_leaves(a, terms, out)),
    }
}

/// Resolves a ground arithmetic expression into a [`CExpr`], mapping random
/// terms through `subst` and interning sample-space constants.
fn resolve_expr(
    e: &Expr,
    subst: &HashMap<Term, RvId>,
    intern: &mut InternTable,
) -> Result<CExpr, TransformError> {
    Ok(match e {
        Expr::Term(t) => match t {
            Term::Num(n) => CExpr::Const(n.value()),
            _ if subst.contains_key(t) => CExpr::Var(subst[t]),
            Term::Const(c) => CExpr::Const(intern.intern(c)),
            other => return Err(TransformError::UnresolvedTerm(other.to_string())),
        },
        Expr::Neg(inner) => CExpr::Neg(Box::new(resolve_expr(inner, subst, intern)?)),
        Expr::Binary(op, a, b) => CExpr::Bin(
            *op,
            Box::new(resolve_expr(a, subst, intern)?),
            Box::new(resolve_expr(b, subst, intern)?),
        ),
        Expr::Call(f, args) => CExpr::Call(
            *f,
            args.iter()
                .map(|a| resolve_expr(a, subst, intern))
                .collect::<Result<_, _>>()?,
        ),
    })
}

fn resolve_value_term(t: &Term, intern: &mut InternTable) -> Result<f64, TransformError> {
    match t {
        Term::Num(n) => Ok(n.value()),
        Term::Const(c) => Ok(intern.intern(c)),
        other => Err(TransformError::UnresolvedTerm(other.to_string())),
    }
}

fn resolve_dist(
    dist: &Distribution,
    subst: &HashMap<Term, RvId>,
    intern: &mut InternTable,
) -> Result<CoreDist, TransformError> {
    Ok(match dist {
        Distribution::Flip(p) => CoreDist::Flip(resolve_expr(p, subst, intern)?),
        Distribution::Normal(a, b) => CoreDist::Normal(
            resolve_expr(a, subst, intern)?,
            resolve_expr(b, subst, intern)?,
        ),
        Distribution::Beta(a, b) => CoreDist::Beta(
            resolve_expr(a, subst, intern)?,
            resolve_expr(b, subst, intern)?,
        ),
        Distribution::Poisson(l) => CoreDist::Poisson(resolve_expr(l, subst, intern)?),
        Distribution::UniformCont(a, b) => CoreDist::UniformCont(
            resolve_expr(a, subst, intern)?,
            resolve_expr(b, subst, intern)?,
        ),
        Distribution::Delta(v) => CoreDist::Delta(resolve_expr(v, subst, intern)?),
        Distribution::UniformList(items) => CoreDist::UniformList(
            items
                .iter()
                .map(|t| resolve_value_term(t, intern))
                .collect::<Result<_, _>>()?,
        ),
        Distribution::Finite(pairs) => CoreDist::Finite(
            pairs
                .iter()
                .map(|(p, v)| {
                    Ok((
                        resolve_expr(p, subst, intern)?,
                        resolve_value_term(v, intern)?,
                    ))
                })
                .collect::<Result<Vec<_>, TransformError>>()?,
        ),
    })
}

/// Eliminates distributional clauses: for each clause `tau ~ d(rho_1..rho_k)
/// :- beta` and each combination of variables realizing the parent terms, a
/// fresh random variable is introduced together with the context rule
/// `rv(tau, fresh) :- rv(rho_1, v_1), ..., rv(rho_k, v_k), beta`.
pub fn eliminate_dcs(p: &AdFreeProgram) -> Result<DcElimination, TransformError> {
    let mut dist_stmts: Vec<DistStmt> = Vec::new();
    let mut logic_rules: Vec<MidRule> = Vec::new();
    for (idx, stmt) in p.statements.iter().enumerate() {
        match stmt {
            Statement::DistFact { term, dist } => {
                if !term.is_ground() {
                    return Err(TransformError::NonGroundStatement(term.to_string()));
                }
                dist_stmts.push(DistStmt {
                    term: term.clone(),
                    dist: dist.clone(),
                    body: Vec::new(),
                    stmt_idx: idx,
                });
            }
            Statement::DistClause { term, dist, body } => {
                if !term.is_ground() {
                    return Err(TransformError::NonGroundStatement(term.to_string()));
                }
                dist_stmts.push(DistStmt {
                    term: term.clone(),
                    dist: dist.clone(),
                    body: body.clone(),
                    stmt_idx: idx,
                });
            }
            Statement::Clause { head, body } => logic_rules.push(MidRule {
                head: head.clone(),
                body: body.iter().cloned().map(MidLit::Lit).collect(),
            }),
            Statement::ProbFact { .. } | Statement::AnnotatedDisjunction { .. } => {
                unreachable!("eliminate_ads must run first")
            }
        }
    }

    let terms: HashSet<Term> = dist_stmts.iter().map(|d| d.term.clone()).collect();
    let term_order: Vec<Term> = {
        let mut seen = HashSet::new();
        dist_stmts
            .iter()
            .filter(|d| seen.insert(d.term.clone()))
            .map(|d| d.term.clone())
            .collect()
    };

    // Parent relation between random terms (occurrence in distribution
    // parameters), then a topological order (DC4: acyclic).
    let mut term_parents: HashMap<Term, Vec<Term>> = HashMap::new();
    for d in &dist_stmts {
        let entry = term_parents.entry(d.term.clone()).or_default();
        for e in d.dist.param_exprs() {
            let mut leaves = Vec::new();
            random_term_leaves(e, &terms, &mut leaves);
            for l in leaves {
                if !entry.contains(l) {
                    entry.push(l.clone());
                }
            }
        }
    }
    let topo = topo_sort_terms(&term_order, &term_parents)?;

    let mut intern = InternTable::default();
    // Pre-intern sample-space constants in statement order so that their
    // numbering follows the program text.
    for d in &dist_stmts {
        match &d.dist {
            Distribution::UniformList(items) => {
                for t in items {
                    if let Term::Const(c) = t {
                        intern.intern(c);
                    }
                }
            }
            Distribution::Finite(pairs) => {
                for (_, t) in pairs {
                    if let Term::Const(c) = t {
                        intern.intern(c);
                    }
                }
            }
            _ => {}
        }
    }

    let taken_names = program_symbols(&p.statements);
    let mut counter = 1u32;
    let mut vars: Vec<VarInfo> = Vec::new();
    let mut var_sets: Vec<(Term, Vec<RvId>)> = term_order
        .iter()
        .map(|t| (t.clone(), Vec::new()))
        .collect();
    let mut context_rules: Vec<ContextRule> = Vec::new();

    let set_of = |var_sets: &[(Term, Vec<RvId>)], t: &Term| -> Vec<RvId> {
        var_sets
            .iter()
            .find(|(s, _)| s == t)
            .map(|(_, v)| v.clone())
            .unwrap_or_default()
    };

    for term in &topo {
        for d in dist_stmts.iter().filter(|d| &d.term == term) {
            // Distinct parent random terms, in order of first occurrence in
            // the parameters.
            let mut parents: Vec<Term> = Vec::new();
            for e in d.dist.param_exprs() {
                let mut leaves = Vec::new();
                random_term_leaves(e, &terms, &mut leaves);
                for l in leaves {
                    if !parents.contains(l) {
                        parents.push(l.clone());
                    }
                }
            }
            let parent_sets: Vec<Vec<RvId>> =
                parents.iter().map(|p| set_of(&var_sets, p)).collect();
            let combos = parent_sets
                .iter()
                .fold(1usize, |acc, s| acc.saturating_mul(s.len()));
            if vars.len().saturating_add(combos) > EXPANSION_CAP {
                return Err(TransformError::UnboundedExpansion(EXPANSION_CAP));
            }
            let mut new_vars: Vec<(VarInfo, ContextRule)> = Vec::new();
            cartesian(&parent_sets, |combo| {
                let subst: HashMap<Term, RvId> = parents
                    .iter()
                    .cloned()
                    .zip(combo.iter().copied())
                    .collect();
                let id = RvId((vars.len() + new_vars.len()) as u32);
                let name = fresh_name("v", &mut counter, &taken_names);
                let dist = resolve_dist(&d.dist, &subst, &mut intern)?;
                let support = SupportKind::of(&dist);
                let mut body: Vec<MidLit> = parents
                    .iter()
                    .zip(combo)
                    .map(|(p, &v)| MidLit::Rv(p.clone(), v))
                    .collect();
                body.extend(d.body.iter().cloned().map(MidLit::Lit));
                new_vars.push((
                    VarInfo {
                        id,
                        name,
                        dist,
                        support,
                        origin: (term.clone(), d.stmt_idx),
                    },
                    ContextRule {
                        term: term.clone(),
                        var: id,
                        body,
                    },
                ));
                Ok::<(), TransformError>(())
            })?;
            for (info, rule) in new_vars {
                var_sets
                    .iter_mut()
                    .find(|(t, _)| t == term)
                    .expect("term registered")
                    .1
                    .push(info.id);
                vars.push(info);
                context_rules.push(rule);
            }
        }
    }

    Ok(DcElimination {
        vars,
        var_sets,
        context_rules,
        logic_rules,
        intern,
    })
}

/// Calls `f` for every element of the cartesian product of `sets`, rightmost
/// index fastest. No combinations when any set is empty; exactly one (empty)
/// combination when `sets` is empty.
fn cartesian<E>(
    sets: &[Vec<RvId>],
    mut f: impl FnMut(&[RvId]) -> Result<(), E>,
) -> Result<(), E> {
    if sets.iter().any(|s| s.is_empty()) {
        return Ok(());
    }
    let mut idx = vec![0usize; sets.len()];
    loop {
        let combo: Vec<RvId> = idx.iter().zip(sets).map(|(&i, s)| s[i]).collect();
        f(&combo)?;
        let mut k = sets.len();
        loop {
            if k == 0 {
                return Ok(());
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < sets[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

fn topo_sort_terms(
    order: &[Term],
    parents: &HashMap<Term, Vec<Term>>,
) -> Result<Vec<Term>, TransformError> {
    let mut result = Vec::new();
    let mut state: HashMap<&Term, u8> = HashMap::new(); // 0 unseen, 1 visiting, 2 done
    fn visit<'a>(
        t: &'a Term,
        parents: &'a HashMap<Term, Vec<Term>>,
        state: &mut HashMap<&'a Term, u8>,
        result: &mut Vec<Term>,
    ) -> Result<(), TransformError> {
        match state.get(t) {
            Some(1) => {
                return Err(TransformError::CyclicRandomTermDependency(t.to_string()))
            }
            Some(2) => return Ok(()),
            _ => {}
        }
        state.insert(t, 1);
        if let Some(ps) = parents.get(t) {
            for p in ps {
                visit(p, parents, state, result)?;
            }
        }
        state.insert(t, 2);
        result.push(t.clone());
        Ok(())
    }
    for t in order {
        visit(t, parents, &mut state, &mut result)?;
    }
    Ok(result)
}

// ---------------------------------------------------------------------------
// Stage 3: contextualization
// ---------------------------------------------------------------------------

/// Rules whose comparison literals are fully resolved over random variables;
/// `rv/2` guards still present.
#[derive(Debug, Clone)]
pub struct ContextualizedProgram {
    pub vars: Vec<VarInfo>,
    pub var_sets: Vec<(Term, Vec<RvId>)>,
    pub rules: Vec<MidRule>,
    pub context_rules: Vec<ContextRule>,
    pub intern: InternTable,
}

/// Replaces every interpreted occurrence of a random term in a body with a
/// placeholder, prepends the matching `rv/2` guards, and instantiates the
/// placeholders over the term's variable set in all combinations.
pub fn contextualize(dc: DcElimination) -> Result<ContextualizedProgram, TransformError> {
    let DcElimination {
        vars,
        var_sets,
        context_rules,
        logic_rules,
        mut intern,
    } = dc;
    let terms: HashSet<Term> = var_sets.iter().map(|(t, _)| t.clone()).collect();
    let set_of = |t: &Term| -> Vec<RvId> {
        var_sets
            .iter()
            .find(|(s, _)| s == t)
            .map(|(_, v)| v.clone())
            .unwrap_or_default()
    };

    let mut out_rules: Vec<MidRule> = Vec::new();
    let mut out_context: Vec<ContextRule> = Vec::new();

    let mut instantiate = |body: &[MidLit]| -> Result<Vec<Vec<MidLit>>, TransformError> {
        // Random terms interpreted by this body's comparison literals, in
        // order of first occurrence; one placeholder per term.
        let mut interpreted: Vec<Term> = Vec::new();
        for lit in body {
            if let MidLit::Lit(Literal {
                atom: BodyAtom::Cmp(c),
                ..
            }) = lit
            {
                let mut leaves = Vec::new();
                random_term_leaves(&c.lhs, &terms, &mut leaves);
                random_term_leaves(&c.rhs, &terms, &mut leaves);
                for l in leaves {
                    if !interpreted.contains(l) {
                        interpreted.push(l.clone());
                    }
                }
            }
        }
        let sets: Vec<Vec<RvId>> = interpreted.iter().map(&set_of).collect();
        let mut results = Vec::new();
        cartesian(&sets, |combo| {
            let subst: HashMap<Term, RvId> = interpreted
                .iter()
                .cloned()
                .zip(combo.iter().copied())
                .collect();
            let mut new_body: Vec<MidLit> = interpreted
                .iter()
                .map(|t| MidLit::Rv(t.clone(), subst[t]))
                .collect();
            for lit in body {
                match lit {
                    MidLit::Lit(Literal {
                        positive,
                        atom: BodyAtom::Cmp(c),
                    }) => {
                        if c.op == CmpOp::DeltaInterval {
                            validate_delta_interval(c, &terms)?;
                        }
                        let cmp = CoreCmp {
                            op: c.op,
                            lhs: resolve_expr(&c.lhs, &subst, &mut intern)?,
                            rhs: resolve_expr(&c.rhs, &subst, &mut intern)?,
                        };
                        new_body.push(MidLit::Cmp {
                            positive: *positive,
                            cmp,
                        });
                    }
                    other => new_body.push(other.clone()),
                }
            }
            results.push(new_body);
            Ok::<(), TransformError>(())
        })?;
        Ok(results)
    };

    for rule in &logic_rules {
        for body in instantiate(&rule.body)? {
            out_rules.push(MidRule {
                head: rule.head.clone(),
                body,
            });
        }
    }
    for cr in &context_rules {
        for body in instantiate(&cr.body)? {
            out_context.push(ContextRule {
                term: cr.term.clone(),
                var: cr.var,
                body,
            });
        }
    }

    Ok(ContextualizedProgram {
        vars,
        var_sets,
        rules: out_rules,
        context_rules: out_context,
        intern,
    })
}

fn validate_delta_interval(c: &Comparison, terms: &HashSet<Term>) -> Result<(), TransformError> {
    let lhs_ok = matches!(c.lhs.as_term(), Some(t) if terms.contains(t));
    let rhs_ok = c.rhs.const_value().is_some();
    if !lhs_ok {
        return Err(TransformError::MalformedObservation(format!(
            "left side of delta_interval must be a random term, got {}",
            c.lhs
        )));
    }
    if !rhs_ok {
        return Err(TransformError::MalformedObservation(format!(
            "right side of delta_interval must be a number, got {}",
            c.rhs
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Stage 4: unfolding the rv/2 indirection
// ---------------------------------------------------------------------------

/// Replaces every `rv/2` atom by the body of its unique defining context
/// rule, recursively; rule instances whose bodies contain complementary
/// literals are dropped.
pub fn unfold_rv(ctx: ContextualizedProgram) -> Result<GroundDfplpProgram, TransformError> {
    let ContextualizedProgram {
        vars,
        var_sets,
        rules,
        context_rules,
        intern,
    } = ctx;

    let mut defs: HashMap<(Term, RvId), &Vec<MidLit>> = HashMap::new();
    for cr in &context_rules {
        if defs.insert((cr.term.clone(), cr.var), &cr.body).is_some() {
            return Err(TransformError::RvCycle(format!(
                "rv({}, {}) has more than one defining rule",
                cr.term,
                vars[cr.var.index()].name
            )));
        }
    }

    let depth_cap = context_rules.len() + 1;
    let mut memo: HashMap<(Term, RvId), Vec<CoreLit>> = HashMap::new();

    fn expand(
        key: &(Term, RvId),
        defs: &HashMap<(Term, RvId), &Vec<MidLit>>,
        memo: &mut HashMap<(Term, RvId), Vec<CoreLit>>,
        depth: usize,
        cap: usize,
    ) -> Result<Vec<CoreLit>, TransformError> {
        if let Some(done) = memo.get(key) {
            return Ok(done.clone());
        }
        if depth > cap {
            return Err(TransformError::RvCycle(format!(
                "expansion of rv({}, ...) exceeds depth {cap}",
                key.0
            )));
        }
        let body = match defs.get(key) {
            Some(b) => *b,
            None => {
                return Err(TransformError::RvCycle(format!(
                    "rv({}, ...) has no defining rule",
                    key.0
                )))
            }
        };
        let mut out = Vec::new();
        for lit in body {
            match lit {
                MidLit::Rv(t, v) => {
                    out.extend(expand(&(t.clone(), *v), defs, memo, depth + 1, cap)?)
                }
                MidLit::Cmp { positive, cmp } => out.push(CoreLit::Cmp {
                    positive: *positive,
                    cmp: cmp.clone(),
                }),
                MidLit::Lit(Literal {
                    positive,
                    atom: BodyAtom::Atom(a),
                }) => out.push(CoreLit::Atom {
                    positive: *positive,
                    atom: a.clone(),
                }),
                MidLit::Lit(_) => unreachable!("contextualize resolves comparisons"),
            }
        }
        memo.insert(key.clone(), out.clone());
        Ok(out)
    }

    let mut core_rules = Vec::new();
    'rules: for rule in &rules {
        let mut body: Vec<CoreLit> = Vec::new();
        for lit in &rule.body {
            match lit {
                MidLit::Rv(t, v) => body.extend(expand(
                    &(t.clone(), *v),
                    &defs,
                    &mut memo,
                    0,
                    depth_cap,
                )?),
                MidLit::Cmp { positive, cmp } => body.push(CoreLit::Cmp {
                    positive: *positive,
                    cmp: cmp.clone(),
                }),
                MidLit::Lit(Literal {
                    positive,
                    atom: BodyAtom::Atom(a),
                }) => body.push(CoreLit::Atom {
                    positive: *positive,
                    atom: a.clone(),
                }),
                MidLit::Lit(_) => unreachable!("contextualize resolves comparisons"),
            }
        }
        // Deduplicate, keeping first occurrences; drop statically false
        // bodies (complementary literal pair).
        let mut seen: HashSet<CoreLit> = HashSet::new();
        let mut deduped = Vec::new();
        for lit in body {
            if seen.contains(&lit.complement()) {
                continue 'rules;
            }
            if seen.insert(lit.clone()) {
                deduped.push(lit);
            }
        }
        core_rules.push(CoreRule {
            head: rule.head.clone(),
            body: deduped,
        });
    }

    // Unfolded context guards, for the DC1 sampling check.
    let mut context_guards = Vec::new();
    for cr in &context_rules {
        let guard = expand(&(cr.term.clone(), cr.var), &defs, &mut memo, 0, depth_cap)?;
        context_guards.push((cr.term.clone(), cr.var, guard));
    }

    Ok(GroundDfplpProgram {
        vars,
        rules: core_rules,
        intern,
        var_sets,
        context_guards,
    })
}

// ---------------------------------------------------------------------------
// Stage 5: core validation
// ---------------------------------------------------------------------------

/// Builds the parent graph over random variables, asserts acyclicity and
/// finiteness, and reports statically checkable parameter-domain issues.
pub fn validate_core(
    core: &GroundDfplpProgram,
) -> Result<(DependencyGraph, Vec<DomainDiagnostic>), TransformError> {
    let n = core.vars.len();
    let mut parents: Vec<Vec<RvId>> = Vec::with_capacity(n);
    for v in &core.vars {
        parents.push(v.dist.parent_vars());
    }

    // Kahn topological order; deterministic by id.
    let mut indegree = vec![0usize; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, ps) in parents.iter().enumerate() {
        indegree[i] = ps.len();
        for p in ps {
            children[p.index()].push(i);
        }
    }
    let mut queue: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut topo = Vec::with_capacity(n);
    let mut head = 0;
    while head < queue.len() {
        let i = queue[head];
        head += 1;
        topo.push(RvId(i as u32));
        for &c in &children[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                queue.push(c);
            }
        }
    }
    if topo.len() != n {
        let stuck = (0..n)
            .find(|&i| indegree[i] > 0)
            .map(|i| core.vars[i].name.clone())
            .unwrap_or_default();
        return Err(TransformError::CyclicRandomVariableDependency(stuck));
    }

    let mut diags = Vec::new();
    for v in &core.vars {
        let check = |param: &CExpr, what: &str, diags: &mut Vec<DomainDiagnostic>| {
            let mut vars = Vec::new();
            param.collect_vars(&mut vars);
            for p in vars {
                if core.vars[p.index()].support.is_continuous() {
                    diags.push(DomainDiagnostic {
                        var: v.id,
                        message: format!(
                            "{} parameter of {} is fed by continuous variable {}; \
                             not all real numbers are valid here",
                            what,
                            v.name,
                            core.vars[p.index()].name
                        ),
                    });
                }
            }
        };
        match &v.dist {
            CoreDist::Poisson(l) => check(l, "poisson", &mut diags),
            CoreDist::Flip(p) => {
                let mut vars = Vec::new();
                p.collect_vars(&mut vars);
                for q in vars {
                    if matches!(
                        core.vars[q.index()].dist,
                        CoreDist::Normal(..) | CoreDist::UniformCont(..)
                    ) {
                        diags.push(DomainDiagnostic {
                            var: v.id,
                            message: format!(
                                "flip parameter of {} may leave [0,1] (fed by {})",
                                v.name,
                                core.vars[q.index()].name
                            ),
                        });
                    }
                }
            }
            _ => {}
        }
    }

    Ok((DependencyGraph { parents, topo }, diags))
}

/// Runs the whole desugaring pipeline on a ground program.
pub fn desugar(gp: &GroundProgram) -> Result<GroundDfplpProgram, TransformError> {
    let adfree = eliminate_ads(gp)?;
    let dc = eliminate_dcs(&adfree)?;
    let ctx = contextualize(dc)?;
    unfold_rv(ctx)
}
