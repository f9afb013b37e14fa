//! Arithmetic expressions over `t`, `x1..xn`, `u1..um`.
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := base ('^' factor)?
//! base   := number | 't' | 'x'INT | 'u'INT | func '(' expr ')' | '(' expr ')' | '-' base
//! ```

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },

    #[error("`{name}` at byte {offset} is out of range (declared {declared})")]
    IndexOutOfRange { offset: usize, name: String, declared: usize },

    #[error("domain error in `{expr}`: {message}")]
    Domain { expr: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Exp,
    Log,
    Sin,
    Cos,
    Tanh,
    Atanh,
    Sqrt,
    Abs,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 9] = [
        UnaryOp::Neg,
        UnaryOp::Exp,
        UnaryOp::Log,
        UnaryOp::Sin,
        UnaryOp::Cos,
        UnaryOp::Tanh,
        UnaryOp::Atanh,
        UnaryOp::Sqrt,
        UnaryOp::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Atanh => "atanh",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }
}

/// Expression tree. State and control indices are zero-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Time,
    State(usize),
    Control(usize),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn unary(op: UnaryOp, e: Expr) -> Self {
        Expr::Unary(op, Box::new(e))
    }

    pub fn binary(op: BinaryOp, l: Expr, r: Expr) -> Self {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    /// Evaluates the expression; any non-finite intermediate is a domain error.
    pub fn eval(&self, t: f64, x: &[f64], u: &[f64]) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Time => t,
            Expr::State(i) => *x.get(*i).ok_or_else(|| self.domain("state index beyond the supplied vector"))?,
            Expr::Control(j) => {
                *u.get(*j).ok_or_else(|| self.domain("control index beyond the supplied vector"))?
            }
            Expr::Unary(op, e) => {
                let z = e.eval(t, x, u)?;
                match op {
                    UnaryOp::Neg => -z,
                    UnaryOp::Exp => z.exp(),
                    UnaryOp::Log if z <= 0.0 => return Err(self.domain("log of a non-positive number")),
                    UnaryOp::Log => z.ln(),
                    UnaryOp::Sin => z.sin(),
                    UnaryOp::Cos => z.cos(),
                    UnaryOp::Tanh => z.tanh(),
                    UnaryOp::Atanh if z.abs() >= 1.0 => {
                        return Err(self.domain(&format!("atanh argument {z} outside (-1, 1)")))
                    }
                    UnaryOp::Atanh => z.atanh(),
                    UnaryOp::Sqrt if z < 0.0 => return Err(self.domain("sqrt of a negative number")),
                    UnaryOp::Sqrt => z.sqrt(),
                    UnaryOp::Abs => z.abs(),
                }
            }
            Expr::Binary(op, l, r) => {
                let a = l.eval(t, x, u)?;
                let b = r.eval(t, x, u)?;
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div if b == 0.0 => return Err(self.domain("division by zero")),
                    BinaryOp::Div => a / b,
                    BinaryOp::Pow => a.powf(b),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.domain("non-finite result"))
        }
    }

    fn domain(&self, message: &str) -> ExprError {
        ExprError::Domain { expr: self.to_string(), message: message.to_string() }
    }

    /// Largest state index used plus one (0 when no state appears).
    pub fn state_arity(&self) -> usize {
        self.fold(&|e| if let Expr::State(i) = e { i + 1 } else { 0 })
    }

    /// Largest control index used plus one (0 when no control appears).
    pub fn control_arity(&self) -> usize {
        self.fold(&|e| if let Expr::Control(j) = e { j + 1 } else { 0 })
    }

    pub fn depends_on_time(&self) -> bool {
        self.fold(&|e| usize::from(matches!(e, Expr::Time))) > 0
    }

    fn fold(&self, leaf: &dyn Fn(&Expr) -> usize) -> usize {
        match self {
            Expr::Unary(_, e) => e.fold(leaf),
            Expr::Binary(_, l, r) => l.fold(leaf).max(r.fold(leaf)),
            e => leaf(e),
        }
    }
}

/// Fully parenthesized form that parses back to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => write!(f, "-({:?})", -c),
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Time => write!(f, "t"),
            Expr::State(i) => write!(f, "x{}", i + 1),
            Expr::Control(j) => write!(f, "u{}", j + 1),
            Expr::Unary(UnaryOp::Neg, e) => write!(f, "-({e})"),
            Expr::Unary(op, e) => write!(f, "{}({e})", op.name()),
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
        }
    }
}

/// Parses `src` with `n` states and `m` controls declared.
pub fn parse_expression(src: &str, n: usize, m: usize) -> Result<Expr, ExprError> {
    let mut p = Parser { src, pos: 0, n, m };
    p.skip_ws();
    if p.pos == src.len() {
        return Err(p.syntax("empty expression"));
    }
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != src.len() {
        return Err(p.syntax("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    n: usize,
    m: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn syntax(&self, message: &str) -> ExprError {
        ExprError::Syntax { offset: self.pos, message: message.to_string() }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinaryOp::Add
            } else if self.eat('-') {
                BinaryOp::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Expr::binary(op, lhs, self.term()?);
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            let op = if self.eat('*') {
                BinaryOp::Mul
            } else if self.eat('/') {
                BinaryOp::Div
            } else {
                return Ok(lhs);
            };
            lhs = Expr::binary(op, lhs, self.factor()?);
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        let base = self.base()?;
        if self.eat('^') {
            Ok(Expr::binary(BinaryOp::Pow, base, self.factor()?))
        } else {
            Ok(base)
        }
    }

    fn base(&mut self) -> Result<Expr, ExprError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            None => Err(self.syntax("unexpected end of input")),
            Some('-') => {
                self.pos += 1;
                Ok(Expr::unary(UnaryOp::Neg, self.base()?))
            }
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.syntax("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let name = self.identifier();
                self.resolve(name, start)
            }
            Some(c) => Err(self.syntax(&format!("unexpected character `{c}`"))),
        }
    }

    fn identifier(&mut self) -> String {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        self.src[start..self.pos].to_string()
    }

    fn resolve(&mut self, name: String, start: usize) -> Result<Expr, ExprError> {
        if name == "t" {
            return Ok(Expr::Time);
        }
        if let Some(op) = UnaryOp::from_name(&name) {
            if !self.eat('(') {
                return Err(self.syntax(&format!("expected `(` after `{name}`")));
            }
            let e = self.expr()?;
            if !self.eat(')') {
                return Err(self.syntax("expected `)`"));
            }
            return Ok(Expr::unary(op, e));
        }
        let indexed = |prefix: &str| {
            name.strip_prefix(prefix)
                .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
                .and_then(|d| d.parse::<usize>().ok())
        };
        for (prefix, declared, make) in [
            ("x", self.n, Expr::State as fn(usize) -> Expr),
            ("u", self.m, Expr::Control as fn(usize) -> Expr),
        ] {
            if let Some(i) = indexed(prefix) {
                if i == 0 || i > declared {
                    return Err(ExprError::IndexOutOfRange { offset: start, name, declared });
                }
                return Ok(make(i - 1));
            }
        }
        Err(ExprError::UnknownIdentifier { offset: start, name })
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let digits = |p: &mut usize| {
            let s = *p;
            while *p < bytes.len() && bytes[*p].is_ascii_digit() {
                *p += 1;
            }
            *p - s
        };
        let mut p = self.pos;
        let mut count = digits(&mut p);
        if p < bytes.len() && bytes[p] == b'.' {
            p += 1;
            count += digits(&mut p);
        }
        if count == 0 {
            return Err(self.syntax("malformed number"));
        }
        if p < bytes.len() && (bytes[p] == b'e' || bytes[p] == b'E') {
            let mut q = p + 1;
            if q < bytes.len() && (bytes[q] == b'+' || bytes[q] == b'-') {
                q += 1;
            }
            if digits(&mut q) == 0 {
                self.pos = q;
                return Err(self.syntax("malformed exponent"));
            }
            p = q;
        }
        self.pos = p;
        let v: f64 = self.src[start..p]
            .parse()
            .map_err(|_| ExprError::Syntax { offset: start, message: "malformed number".into() })?;
        if !v.is_finite() {
            return Err(ExprError::Syntax { offset: start, message: "number overflows".into() });
        }
        Ok(Expr::Const(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Expr {
        parse_expression(s, 2, 1).unwrap()
    }

    #[test]
    fn running_cost_shape() {
        let e = parse("1+exp(2*u1)");
        let expected = Expr::binary(
            BinaryOp::Add,
            Expr::Const(1.0),
            Expr::unary(UnaryOp::Exp, Expr::binary(BinaryOp::Mul, Expr::Const(2.0), Expr::Control(0))),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn power_is_right_associative() {
        assert_eq!(parse("2^3^2").eval(0.0, &[0.0; 2], &[0.0]).unwrap(), 512.0);
    }

    #[test]
    fn unary_minus_binds_to_base() {
        assert_eq!(parse("-2^2").eval(0.0, &[0.0; 2], &[0.0]).unwrap(), 4.0);
        assert_eq!(parse("-(2^2)").eval(0.0, &[0.0; 2], &[0.0]).unwrap(), -4.0);
        assert_eq!(parse("1 - -1").eval(0.0, &[0.0; 2], &[0.0]).unwrap(), 2.0);
    }

    #[test]
    fn dynamics_at_zero_control() {
        let e = parse("1-exp(2*u1)");
        assert_eq!(e.eval(0.0, &[0.0; 2], &[0.0]).unwrap(), 0.0);
        assert_eq!(parse("exp(0)").eval(0.0, &[], &[]).unwrap(), 1.0);
    }

    #[test]
    fn index_errors() {
        assert!(matches!(
            parse_expression("x1", 0, 0),
            Err(ExprError::IndexOutOfRange { offset: 0, .. })
        ));
        assert!(matches!(
            parse_expression("1 + u2", 1, 1),
            Err(ExprError::IndexOutOfRange { offset: 4, .. })
        ));
        assert!(matches!(parse_expression("x0", 1, 0), Err(ExprError::IndexOutOfRange { .. })));
        assert!(matches!(parse_expression("y", 1, 0), Err(ExprError::UnknownIdentifier { .. })));
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        let cases = [("", 0), ("1 +", 3), ("(1", 2), ("2 3", 2), ("exp 2", 4), ("1e", 2), ("#", 0), ("x1 * * 2", 5)];
        for (src, offset) in cases {
            match parse_expression(src, 1, 0) {
                Err(ExprError::Syntax { offset: o, .. }) => assert_eq!(o, offset, "{src:?}"),
                other => panic!("{src:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let e = parse("1 + atanh(u1)");
        match e.eval(0.0, &[0.0; 2], &[1.5]) {
            Err(ExprError::Domain { expr, .. }) => assert_eq!(expr, "atanh(u1)"),
            other => panic!("{other:?}"),
        }
        assert!(parse("log(x1)").eval(0.0, &[0.0, 0.0], &[0.0]).is_err());
        assert!(parse("1/x1").eval(0.0, &[0.0, 0.0], &[0.0]).is_err());
        assert!(parse("sqrt(x1)").eval(0.0, &[-1.0, 0.0], &[0.0]).is_err());
        assert!(parse("x1^0.5").eval(0.0, &[-1.0, 0.0], &[0.0]).is_err());
        assert!(parse("exp(x1)").eval(0.0, &[1e4, 0.0], &[0.0]).is_err());
    }

    #[test]
    fn print_parse_round_trip() {
        for src in ["1+exp(2*u1)", "-x1^-2.5e-3/t", "neg(x2) - abs(-(3))", "((t))*sin(cos(tanh(x1)))"] {
            let e = parse(src);
            assert_eq!(parse(&e.to_string()), e, "{src}");
        }
        assert_eq!(parse("neg(x1)"), parse("-x1"));
    }

    #[test]
    fn arities() {
        let e = parse("x2 * u1 + t");
        assert_eq!(e.state_arity(), 2);
        assert_eq!(e.control_arity(), 1);
        assert!(e.depends_on_time());
        assert!(!parse("3").depends_on_time());
    }
}
