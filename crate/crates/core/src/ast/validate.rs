//! Structural validation of parsed programs. Problems are reported as
//! diagnostics, never thrown.

use super::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    /// Clause head uses an engine-reserved predicate (`rv/2`, directives).
    ReservedHead,
    /// A head variable does not occur in the body.
    RangeRestriction,
    /// A constant probability label lies outside `[0,1]`, or AD labels sum
    /// above one.
    InvalidProbability,
    /// Sample-space values must be numbers or plain constants.
    InvalidSampleSpace,
    /// A sample space mixes symbolic constants and numbers; interned
    /// constants may collide with the numeric values.
    MixedSampleSpace,
}

#[derive(Debug, Clone)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub statement: usize,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "statement {}: {}", self.statement + 1, self.message)
    }
}

/// Checks heads for regularity, statements for range-restrictedness, and
/// probability labels for well-formedness.
pub fn validate_syntax(program: &Program) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for (idx, stmt) in program.statements.iter().enumerate() {
        match stmt {
            Statement::Clause { head, body } => {
                check_head(head, idx, &mut out);
                check_range(&head_vars_atom(head), body, idx, &head.to_string(), &mut out);
            }
            Statement::ProbFact { prob, atom } => {
                check_head(atom, idx, &mut out);
                check_range(&head_vars_atom(atom), &[], idx, &atom.to_string(), &mut out);
                check_label(prob, idx, &mut out);
            }
            Statement::AnnotatedDisjunction { heads, body } => {
                let mut sum = Some(0.0);
                for (p, a) in heads {
                    check_head(a, idx, &mut out);
                    check_range(&head_vars_atom(a), body, idx, &a.to_string(), &mut out);
                    check_label(p, idx, &mut out);
                    sum = match (sum, p.const_value()) {
                        (Some(s), Some(v)) => Some(s + v),
                        _ => None,
                    };
                }
                if let Some(s) = sum {
                    if s > 1.0 + 1e-9 {
                        out.push(Diagnostic {
                            kind: DiagnosticKind::InvalidProbability,
                            statement: idx,
                            message: format!(
                                "annotated disjunction labels sum to {s}, above 1"
                            ),
                        });
                    }
                }
            }
            Statement::DistFact { term, dist } | Statement::DistClause { term, dist, .. } => {
                let mut vars = Vec::new();
                term.collect_vars(&mut vars);
                let body: &[Literal] = match stmt {
                    Statement::DistClause { body, .. } => body,
                    _ => &[],
                };
                check_range(&vars, body, idx, &term.to_string(), &mut out);
                check_dist(dist, idx, &mut out);
            }
        }
    }
    out
}

fn check_head(head: &Atom, idx: usize, out: &mut Vec<Diagnostic>) {
    if is_engine_reserved_head(&head.functor, head.args.len()) {
        out.push(Diagnostic {
            kind: DiagnosticKind::ReservedHead,
            statement: idx,
            message: format!(
                "head predicate {}/{} is reserved",
                head.functor,
                head.args.len()
            ),
        });
    }
}

fn head_vars_atom(a: &Atom) -> Vec<&str> {
    let mut vars = Vec::new();
    for t in &a.args {
        t.collect_vars(&mut vars);
    }
    vars
}

fn body_vars(body: &[Literal]) -> Vec<&str> {
    let mut vars = Vec::new();
    for lit in body {
        match &lit.atom {
            BodyAtom::Atom(a) => {
                for t in &a.args {
                    t.collect_vars(&mut vars);
                }
            }
            BodyAtom::Cmp(c) => {
                c.lhs.collect_vars(&mut vars);
                c.rhs.collect_vars(&mut vars);
            }
        }
    }
    vars
}

fn check_range(
    head_vars: &[&str],
    body: &[Literal],
    idx: usize,
    head_desc: &str,
    out: &mut Vec<Diagnostic>,
) {
    let bvars = body_vars(body);
    for v in head_vars {
        if !bvars.contains(v) {
            out.push(Diagnostic {
                kind: DiagnosticKind::RangeRestriction,
                statement: idx,
                message: format!(
                    "variable {v} in head {head_desc} does not occur in the body"
                ),
            });
        }
    }
}

fn check_label(p: &Expr, idx: usize, out: &mut Vec<Diagnostic>) {
    if let Some(v) = p.const_value() {
        if !(0.0..=1.0).contains(&v) {
            out.push(Diagnostic {
                kind: DiagnosticKind::InvalidProbability,
                statement: idx,
                message: format!("probability label {v} outside [0,1]"),
            });
        }
    }
}

fn check_dist(dist: &Distribution, idx: usize, out: &mut Vec<Diagnostic>) {
    let check_values = |values: &[&Term], out: &mut Vec<Diagnostic>| {
        let mut has_const = false;
        let mut has_num = false;
        for v in values {
            match v {
                Term::Const(_) => has_const = true,
                Term::Num(_) => has_num = true,
                other => out.push(Diagnostic {
                    kind: DiagnosticKind::InvalidSampleSpace,
                    statement: idx,
                    message: format!(
                        "sample-space element {other} must be a number or constant"
                    ),
                }),
            }
        }
        if has_const && has_num {
            out.push(Diagnostic {
                kind: DiagnosticKind::MixedSampleSpace,
                statement: idx,
                message: "sample space mixes symbolic constants and numbers".into(),
            });
        }
    };
    match dist {
        Distribution::Finite(pairs) => {
            let values: Vec<&Term> = pairs.iter().map(|(_, v)| v).collect();
            check_values(&values, out);
            let mut sum = Some(0.0);
            for (p, _) in pairs {
                if let Some(v) = p.const_value() {
                    if !(0.0..=1.0).contains(&v) {
                        out.push(Diagnostic {
                            kind: DiagnosticKind::InvalidProbability,
                            statement: idx,
                            message: format!("finite weight {v} outside [0,1]"),
                        });
                    }
                    sum = sum.map(|s| s + v);
                } else {
                    sum = None;
                }
            }
            if let Some(s) = sum {
                if s > 1.0 + 1e-9 {
                    out.push(Diagnostic {
                        kind: DiagnosticKind::InvalidProbability,
                        statement: idx,
                        message: format!("finite weights sum to {s}, above 1"),
                    });
                }
            }
        }
        Distribution::UniformList(items) => {
            let values: Vec<&Term> = items.iter().collect();
            check_values(&values, out);
        }
        _ => {}
    }
}
