//! Recursive-descent parser over the token stream.

use super::lexer::{tokenize, Spanned, Tok};
use super::*;
use thiserror::Error;

#[derive(Debug, Error)]
#[error("syntax error at {line}:{col}: found `{found}`, expected {}", expected.join(" or "))]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub found: String,
    pub expected: Vec<String>,
}

impl ParseError {
    fn new(at: &Spanned, expected: &[&str]) -> Self {
        ParseError {
            line: at.line,
            col: at.col,
            found: at.tok.to_string(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

/// Parses a full program; `%` comments are stripped by the lexer and the
/// `query/1`, `evidence/2`, `observation/2` directives populate the embedded
/// [`QueryTask`].
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let toks = tokenize(text).map_err(|e| ParseError {
        line: e.line,
        col: e.col,
        found: e.message,
        expected: vec!["a token".into()],
    })?;
    let mut p = Parser { toks, pos: 0 };
    let mut program = Program::default();
    while !p.at_eof() {
        p.parse_statement(&mut program)?;
    }
    Ok(program)
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn peek_tok(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek_tok(), Tok::Eof)
    }

    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<()> {
        if *self.peek_tok() == tok {
            self.bump();
            Ok(())
        } else {
            Err(ParseError::new(self.peek(), &[what]))
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek_tok() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn parse_statement(&mut self, program: &mut Program) -> PResult<()> {
        let first = self.parse_expr()?;
        match self.peek_tok() {
            Tok::DoubleColon => {
                self.bump();
                self.parse_annotated(first, program)?;
            }
            Tok::Tilde => {
                self.bump();
                let term = self.expr_to_term(first)?;
                let dist = self.parse_distribution()?;
                let body = if self.eat(&Tok::ColonDash) {
                    self.parse_body()?
                } else {
                    Vec::new()
                };
                self.expect(Tok::Dot, "`.`")?;
                if body.is_empty() {
                    program.statements.push(Statement::DistFact { term, dist });
                } else {
                    program
                        .statements
                        .push(Statement::DistClause { term, dist, body });
                }
            }
            Tok::ColonDash => {
                self.bump();
                let head = self.head_atom(first)?;
                let body = self.parse_body()?;
                self.expect(Tok::Dot, "`.`")?;
                program.statements.push(Statement::Clause { head, body });
            }
            Tok::Dot => {
                self.bump();
                let atom = self.head_atom_allow_directive(first)?;
                if DIRECTIVE_PREDICATES.contains(&atom.functor.as_str()) {
                    self.directive(atom, program)?;
                } else {
                    program.statements.push(Statement::Clause {
                        head: atom,
                        body: Vec::new(),
                    });
                }
            }
            _ => {
                return Err(ParseError::new(
                    self.peek(),
                    &["`::`", "`~`", "`:-`", "`.`"],
                ))
            }
        }
        Ok(())
    }

    /// Probabilistic fact or annotated disjunction, after the first `p::`.
    fn parse_annotated(&mut self, first_prob: Expr, program: &mut Program) -> PResult<()> {
        let mut heads = Vec::new();
        let atom = self.parse_head_atom_term()?;
        heads.push((first_prob, atom));
        while self.eat(&Tok::Semicolon) {
            let prob = self.parse_expr()?;
            self.expect(Tok::DoubleColon, "`::`")?;
            let atom = self.parse_head_atom_term()?;
            heads.push((prob, atom));
        }
        let body = if self.eat(&Tok::ColonDash) {
            self.parse_body()?
        } else {
            Vec::new()
        };
        self.expect(Tok::Dot, "`.`")?;
        if heads.len() == 1 && body.is_empty() {
            let (prob, atom) = heads.pop().unwrap();
            program.statements.push(Statement::ProbFact { prob, atom });
        } else {
            program
                .statements
                .push(Statement::AnnotatedDisjunction { heads, body });
        }
        Ok(())
    }

    fn parse_head_atom_term(&mut self) -> PResult<Atom> {
        let t = self.parse_term()?;
        self.term_to_head_atom(t)
    }

    fn directive(&mut self, atom: Atom, program: &mut Program) -> PResult<()> {
        let err = |msg: &str, at: &Spanned| ParseError {
            line: at.line,
            col: at.col,
            found: msg.to_string(),
            expected: vec!["a well-formed directive".into()],
        };
        let at = self.peek().clone();
        match (atom.functor.as_str(), atom.args.len()) {
            ("query", 1) => {
                let q = term_as_atom(&atom.args[0])
                    .ok_or_else(|| err("query argument must be an atom", &at))?;
                program.task.queries.push(QueryTarget::Atom(q));
            }
            ("evidence", 1) => {
                let e = term_as_atom(&atom.args[0])
                    .ok_or_else(|| err("evidence argument must be an atom", &at))?;
                program.task.evidence.push((e, true));
            }
            ("evidence", 2) => {
                let e = term_as_atom(&atom.args[0])
                    .ok_or_else(|| err("evidence argument must be an atom", &at))?;
                let value = match &atom.args[1] {
                    Term::Const(c) if c == "true" => true,
                    Term::Const(c) if c == "false" => false,
                    _ => return Err(err("evidence value must be `true` or `false`", &at)),
                };
                program.task.evidence.push((e, value));
            }
            ("observation", 2) => {
                let value = match &atom.args[1] {
                    Term::Num(n) => *n,
                    _ => return Err(err("observed value must be a number", &at)),
                };
                program
                    .task
                    .observations
                    .push((atom.args[0].clone(), value));
            }
            (f, n) => return Err(err(&format!("malformed directive {f}/{n}"), &at)),
        }
        Ok(())
    }

    fn parse_distribution(&mut self) -> PResult<Distribution> {
        let at = self.peek().clone();
        let name = match self.bump().tok {
            Tok::LowerIdent(s) => s,
            _ => return Err(ParseError::new(&at, &["a distribution functor"])),
        };
        self.expect(Tok::LParen, "`(`")?;
        let dist = match name.as_str() {
            "flip" => Distribution::Flip(self.parse_expr()?),
            "normal" => {
                let a = self.parse_expr()?;
                self.expect(Tok::Comma, "`,`")?;
                Distribution::Normal(a, self.parse_expr()?)
            }
            "beta" => {
                let a = self.parse_expr()?;
                self.expect(Tok::Comma, "`,`")?;
                Distribution::Beta(a, self.parse_expr()?)
            }
            "poisson" => Distribution::Poisson(self.parse_expr()?),
            "delta" => Distribution::Delta(self.parse_expr()?),
            "uniform" => {
                if *self.peek_tok() == Tok::LBracket {
                    Distribution::UniformList(self.parse_term_list()?)
                } else {
                    let a = self.parse_expr()?;
                    self.expect(Tok::Comma, "`,`")?;
                    Distribution::UniformCont(a, self.parse_expr()?)
                }
            }
            "finite" => {
                self.expect(Tok::LBracket, "`[`")?;
                let mut pairs = Vec::new();
                loop {
                    let p = self.parse_expr()?;
                    self.expect(Tok::Colon, "`:`")?;
                    let v = self.parse_term()?;
                    pairs.push((p, v));
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                self.expect(Tok::RBracket, "`]`")?;
                Distribution::Finite(pairs)
            }
            other => {
                return Err(ParseError {
                    line: at.line,
                    col: at.col,
                    found: other.to_string(),
                    expected: vec![
                        "one of the distribution functors flip, finite, normal, beta, \
                         poisson, uniform, delta"
                            .into(),
                    ],
                })
            }
        };
        self.expect(Tok::RParen, "`)`")?;
        Ok(dist)
    }

    fn parse_term_list(&mut self) -> PResult<Vec<Term>> {
        self.expect(Tok::LBracket, "`[`")?;
        let mut items = Vec::new();
        loop {
            items.push(self.parse_term()?);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::RBracket, "`]`")?;
        Ok(items)
    }

    fn parse_body(&mut self) -> PResult<Vec<Literal>> {
        let mut body = vec![self.parse_literal()?];
        while self.eat(&Tok::Comma) {
            body.push(self.parse_literal()?);
        }
        Ok(body)
    }

    fn parse_literal(&mut self) -> PResult<Literal> {
        if matches!(self.peek_tok(), Tok::LowerIdent(s) if s == "not") {
            self.bump();
            let inner = self.parse_literal()?;
            return Ok(Literal {
                positive: !inner.positive,
                atom: inner.atom,
            });
        }
        // `( literal )` — try it with backtracking so parenthesized
        // arithmetic like `(x+y)*2 < 5` still parses as an expression.
        if *self.peek_tok() == Tok::LParen {
            let save = self.pos;
            self.bump();
            if let Ok(lit) = self.parse_literal() {
                if self.eat(&Tok::RParen) && !self.starts_arith_or_cmp() {
                    return Ok(lit);
                }
            }
            self.pos = save;
        }
        let lhs = self.parse_expr()?;
        if let Some(op) = self.peek_cmp_op() {
            self.bump();
            let rhs = self.parse_expr()?;
            return Ok(Literal::pos(BodyAtom::Cmp(Comparison { op, lhs, rhs })));
        }
        let at = self.peek().clone();
        let term = self.expr_to_term(lhs)?;
        if let Term::Compound(f, args) = &term {
            if f == "delta_interval" && args.len() == 2 {
                return Ok(Literal::pos(BodyAtom::Cmp(Comparison {
                    op: CmpOp::DeltaInterval,
                    lhs: Expr::Term(args[0].clone()),
                    rhs: Expr::Term(args[1].clone()),
                })));
            }
        }
        let atom = term_as_atom(&term).ok_or_else(|| {
            ParseError::new(&at, &["an atom, a comparison, or `not`"])
        })?;
        Ok(Literal::pos(BodyAtom::Atom(atom)))
    }

    fn starts_arith_or_cmp(&self) -> bool {
        matches!(
            self.peek_tok(),
            Tok::Plus
                | Tok::Minus
                | Tok::Star
                | Tok::Slash
                | Tok::Lt
                | Tok::Gt
                | Tok::Leq
                | Tok::Geq
                | Tok::EqArith
                | Tok::NeqArith
        )
    }

    fn peek_cmp_op(&self) -> Option<CmpOp> {
        Some(match self.peek_tok() {
            Tok::Lt => CmpOp::Lt,
            Tok::Gt => CmpOp::Gt,
            Tok::Leq => CmpOp::Leq,
            Tok::Geq => CmpOp::Geq,
            Tok::EqArith => CmpOp::EqArith,
            Tok::NeqArith => CmpOp::NeqArith,
            _ => return None,
        })
    }

    fn parse_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.parse_mul_expr()?;
        loop {
            let op = match self.peek_tok() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.parse_mul_expr()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_mul_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.parse_unary()?;
        loop {
            let op = match self.peek_tok() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.parse_unary()?;
            // `a/b` over integer literals is kept as an exact rational.
            if op == BinOp::Div {
                if let (Expr::Term(Term::Num(Num::Int(n))), Expr::Term(Term::Num(Num::Int(d)))) =
                    (&lhs, &rhs)
                {
                    if *d != 0 {
                        lhs = Expr::Term(Term::Num(Num::Ratio(*n, *d)));
                        continue;
                    }
                }
            }
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> PResult<Expr> {
        if self.eat(&Tok::Minus) {
            let inner = self.parse_unary()?;
            if let Expr::Term(Term::Num(n)) = &inner {
                let folded = match *n {
                    Num::Int(i) => Num::Int(-i),
                    Num::Ratio(a, b) => Num::Ratio(-a, b),
                    Num::Float(f) => Num::Float(-f),
                };
                return Ok(Expr::Term(Term::Num(folded)));
            }
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.parse_primary()
    }

    fn parse_primary(&mut self) -> PResult<Expr> {
        let at = self.peek().clone();
        match self.peek_tok().clone() {
            Tok::Number(n) => {
                self.bump();
                Ok(Expr::Term(Term::Num(n)))
            }
            Tok::UpperIdent(v) => {
                self.bump();
                Ok(Expr::Term(Term::Var(v)))
            }
            Tok::LParen => {
                self.bump();
                let e = self.parse_expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::LowerIdent(name) => {
                self.bump();
                let arith = match name.as_str() {
                    "abs" => Some((ArithFn::Abs, 1)),
                    "max" => Some((ArithFn::Max, 2)),
                    "min" => Some((ArithFn::Min, 2)),
                    _ => None,
                };
                if let Some((f, arity)) = arith {
                    if *self.peek_tok() == Tok::LParen {
                        self.bump();
                        let mut args = vec![self.parse_expr()?];
                        while self.eat(&Tok::Comma) {
                            args.push(self.parse_expr()?);
                        }
                        self.expect(Tok::RParen, "`)`")?;
                        if args.len() != arity {
                            return Err(ParseError::new(
                                &at,
                                &[&format!("{name}/{arity} arguments")],
                            ));
                        }
                        return Ok(Expr::Call(f, args));
                    }
                }
                if *self.peek_tok() == Tok::LParen {
                    self.bump();
                    let mut args = vec![self.parse_term()?];
                    while self.eat(&Tok::Comma) {
                        args.push(self.parse_term()?);
                    }
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(Expr::Term(Term::Compound(name, args)))
                } else {
                    Ok(Expr::Term(Term::Const(name)))
                }
            }
            _ => Err(ParseError::new(
                &at,
                &["a number", "an identifier", "a variable", "`(`"],
            )),
        }
    }

    fn parse_term(&mut self) -> PResult<Term> {
        let at = self.peek().clone();
        if self.eat(&Tok::Minus) {
            return match self.bump().tok {
                Tok::Number(Num::Int(i)) => Ok(Term::Num(Num::Int(-i))),
                Tok::Number(Num::Ratio(a, b)) => Ok(Term::Num(Num::Ratio(-a, b))),
                Tok::Number(Num::Float(f)) => Ok(Term::Num(Num::Float(-f))),
                _ => Err(ParseError::new(&at, &["a number after `-`"])),
            };
        }
        match self.bump().tok {
            Tok::Number(n) => Ok(Term::Num(n)),
            Tok::UpperIdent(v) => Ok(Term::Var(v)),
            Tok::LowerIdent(name) => {
                if *self.peek_tok() == Tok::LParen {
                    self.bump();
                    let mut args = vec![self.parse_term()?];
                    while self.eat(&Tok::Comma) {
                        args.push(self.parse_term()?);
                    }
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(Term::Compound(name, args))
                } else {
                    Ok(Term::Const(name))
                }
            }
            _ => Err(ParseError::new(&at, &["a term"])),
        }
    }

    fn expr_to_term(&self, e: Expr) -> PResult<Term> {
        match e {
            Expr::Term(t) => Ok(t),
            _ => Err(ParseError::new(self.peek(), &["a term, not an expression"])),
        }
    }

    fn head_atom(&self, e: Expr) -> PResult<Atom> {
        let atom = self.head_atom_allow_directive(e)?;
        if DIRECTIVE_PREDICATES.contains(&atom.functor.as_str()) {
            return Err(ParseError::new(
                self.peek(),
                &["a clause head (directives take no body)"],
            ));
        }
        Ok(atom)
    }

    fn head_atom_allow_directive(&self, e: Expr) -> PResult<Atom> {
        let term = self.expr_to_term(e)?;
        let atom = term_as_atom(&term)
            .ok_or_else(|| ParseError::new(self.peek(), &["an atom as clause head"]))?;
        if is_builtin_head(&atom.functor, atom.args.len()) {
            return Err(ParseError {
                line: self.peek().line,
                col: self.peek().col,
                found: format!("reserved predicate {}/{}", atom.functor, atom.args.len()),
                expected: vec!["a regular (non-reserved) clause head".into()],
            });
        }
        Ok(atom)
    }

    fn term_to_head_atom(&self, t: Term) -> PResult<Atom> {
        let atom = term_as_atom(&t)
            .ok_or_else(|| ParseError::new(self.peek(), &["an atom"]))?;
        if is_builtin_head(&atom.functor, atom.args.len()) {
            return Err(ParseError {
                line: self.peek().line,
                col: self.peek().col,
                found: format!("reserved predicate {}/{}", atom.functor, atom.args.len()),
                expected: vec!["a regular (non-reserved) head".into()],
            });
        }
        Ok(atom)
    }
}

fn term_as_atom(t: &Term) -> Option<Atom> {
    match t {
        Term::Const(c) => Some(Atom::propositional(c.clone())),
        Term::Compound(f, args) => Some(Atom::new(f.clone(), args.clone())),
        _ => None,
    }
}
