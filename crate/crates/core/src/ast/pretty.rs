//! Canonical concrete-syntax rendering. `parse(print(p))` reproduces `p`,
//! so printing is a fixed point on its own output.

use super::*;
use std::fmt;

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num::Int(i) => write!(f, "{i}"),
            Num::Ratio(n, d) => write!(f, "{n}/{d}"),
            Num::Float(x) => {
                if x.fract() == 0.0 && x.abs() < 1e15 {
                    write!(f, "{x:.1}")
                } else {
                    write!(f, "{x}")
                }
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Const(c) => write!(f, "{c}"),
            Term::Num(n) => write!(f, "{n}"),
            Term::Compound(functor, args) => {
                write!(f, "{functor}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for QueryTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryTarget::Atom(a) => write!(f, "{a}"),
            QueryTarget::Cmp(c) => write!(f, "{c}"),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.args.is_empty() {
            write!(f, "{}", self.functor)
        } else {
            write!(f, "{}(", self.functor)?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{a}")?;
            }
            write!(f, ")")
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Leq => "=<",
            CmpOp::Geq => ">=",
            CmpOp::EqArith => "=:=",
            CmpOp::NeqArith => "=\\=",
            CmpOp::DeltaInterval => "delta_interval",
        };
        write!(f, "{s}")
    }
}

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Term(_) | Expr::Call(..) => 4,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let me = self.precedence();
        if me < min {
            write!(f, "(")?;
        }
        match self {
            Expr::Term(t) => write!(f, "{t}")?,
            Expr::Neg(e) => {
                write!(f, "-")?;
                e.fmt_prec(f, 3)?;
            }
            Expr::Binary(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                a.fmt_prec(f, me)?;
                write!(f, "{sym}")?;
                b.fmt_prec(f, me + 1)?;
            }
            Expr::Call(func, args) => {
                let name = match func {
                    ArithFn::Abs => "abs",
                    ArithFn::Max => "max",
                    ArithFn::Min => "min",
                };
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    a.fmt_prec(f, 0)?;
                }
                write!(f, ")")?;
            }
        }
        if me < min {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.op == CmpOp::DeltaInterval {
            write!(f, "delta_interval({},{})", self.lhs, self.rhs)
        } else {
            write!(f, "{}{}{}", self.lhs, self.op, self.rhs)
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.positive {
            write!(f, "not ")?;
        }
        match &self.atom {
            BodyAtom::Atom(a) => write!(f, "{a}"),
            BodyAtom::Cmp(c) => write!(f, "{c}"),
        }
    }
}

fn fmt_body(f: &mut fmt::Formatter<'_>, body: &[Literal]) -> fmt::Result {
    for (i, lit) in body.iter().enumerate() {
        if i > 0 {
            write!(f, ", ")?;
        }
        write!(f, "{lit}")?;
    }
    Ok(())
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Flip(p) => write!(f, "flip({p})"),
            Distribution::Normal(a, b) => write!(f, "normal({a},{b})"),
            Distribution::Beta(a, b) => write!(f, "beta({a},{b})"),
            Distribution::Poisson(l) => write!(f, "poisson({l})"),
            Distribution::UniformCont(a, b) => write!(f, "uniform({a},{b})"),
            Distribution::Delta(v) => write!(f, "delta({v})"),
            Distribution::UniformList(items) => {
                write!(f, "uniform([")?;
                for (i, t) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, "])")
            }
            Distribution::Finite(pairs) => {
                write!(f, "finite([")?;
                for (i, (p, v)) in pairs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{p}:{v}")?;
                }
                write!(f, "])")
            }
        }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statement::DistFact { term, dist } => write!(f, "{term} ~ {dist}."),
            Statement::DistClause { term, dist, body } => {
                write!(f, "{term} ~ {dist} :- ")?;
                fmt_body(f, body)?;
                write!(f, ".")
            }
            Statement::ProbFact { prob, atom } => write!(f, "{prob}::{atom}."),
            Statement::AnnotatedDisjunction { heads, body } => {
                for (i, (p, a)) in heads.iter().enumerate() {
                    if i > 0 {
                        write!(f, "; ")?;
                    }
                    write!(f, "{p}::{a}")?;
                }
                if !body.is_empty() {
                    write!(f, " :- ")?;
                    fmt_body(f, body)?;
                }
                write!(f, ".")
            }
            Statement::Clause { head, body } => {
                write!(f, "{head}")?;
                if !body.is_empty() {
                    write!(f, " :- ")?;
                    fmt_body(f, body)?;
                }
                write!(f, ".")
            }
        }
    }
}

impl Program {
    /// Renders the program (statements and directives) as parseable source.
    pub fn to_source(&self) -> String {
        let mut out = String::new();
        for s in &self.statements {
            out.push_str(&s.to_string());
            out.push('\n');
        }
        for q in &self.task.queries {
            match q {
                QueryTarget::Atom(a) => out.push_str(&format!("query({a}).\n")),
                QueryTarget::Cmp(c) => out.push_str(&format!("% query: {c}\n")),
            }
        }
        for (a, v) in &self.task.evidence {
            out.push_str(&format!("evidence({a},{v}).\n"));
        }
        for (t, n) in &self.task.observations {
            out.push_str(&format!("observation({t},{n}).\n"));
        }
        out
    }
}
