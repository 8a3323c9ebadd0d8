//! A small expression language for rule-derived variables.
//!
//! ```text
//! expr    := 'if' expr 'then' expr 'else' expr | or
//! or      := and ('or' and)*
//! and     := not ('and' not)*
//! not     := 'not' not | cmp
//! cmp     := sum (('<' | '<=' | '>' | '>=' | '==' | '!=') sum)?
//! sum     := product (('+' | '-') product)*
//! product := unary ('*' unary)*
//! unary   := '-' unary | primary
//! primary := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')' | if-expr
//! ```
//!
//! Values are reals. Comparisons and boolean operators yield 1 or 0, and any
//! non-zero value is true. Functions: `min`, `max`, `abs`, `clamp(x, lo, hi)`
//! and `lookup(key, k1, v1, ..., kn, vn, default)`. `clamp` applies the lower
//! bound first, so an inverted range yields `hi`. There is no division, so
//! evaluation is total once every referenced variable has a value.

use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RuleError {
    #[error("rule parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("missing dependency {0}")]
    MissingDependency(String),
    #[error("dependency {0} is not numeric")]
    NonNumeric(String),
    #[error("rule result {value} outside declared range {lo}..={hi}")]
    Range { value: f64, lo: i64, hi: i64 },
    #[error("rule result {0} is not an integer")]
    NotIntegral(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Min,
    Max,
    Abs,
    Clamp,
    Lookup,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "min" => Func::Min,
            "max" => Func::Max,
            "abs" => Func::Abs,
            "clamp" => Func::Clamp,
            "lookup" => Func::Lookup,
            _ => return None,
        })
    }

    fn check_arity(self, n: usize) -> Result<(), String> {
        let ok = match self {
            Func::Min | Func::Max => n >= 1,
            Func::Abs => n == 1,
            Func::Clamp => n == 3,
            Func::Lookup => n >= 4 && n.is_multiple_of(2),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("wrong number of arguments ({n}) for {self:?}"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Ref(String),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
}

/// A parsed rule expression together with its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleExpr {
    source: String,
    root: Expr,
}

impl fmt::Display for RuleExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

fn truth(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

impl RuleExpr {
    pub fn parse(source: &str) -> Result<RuleExpr, RuleError> {
        let tokens = lex(source)?;
        let mut p = Parser { tokens, pos: 0 };
        let root = p.expr()?;
        if let Some(t) = p.tokens.get(p.pos) {
            return Err(RuleError::Parse {
                offset: t.offset,
                message: format!("unexpected trailing token {:?}", t.kind),
            });
        }
        Ok(RuleExpr {
            source: source.to_string(),
            root,
        })
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    /// Variable ids referenced anywhere in the expression.
    pub fn references(&self) -> BTreeSet<String> {
        fn walk(e: &Expr, out: &mut BTreeSet<String>) {
            match e {
                Expr::Num(_) => {}
                Expr::Ref(r) => {
                    out.insert(r.clone());
                }
                Expr::Neg(a) | Expr::Not(a) => walk(a, out),
                Expr::Bin(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                Expr::Call(_, args) => args.iter().for_each(|a| walk(a, out)),
                Expr::If(c, t, e) => {
                    walk(c, out);
                    walk(t, out);
                    walk(e, out);
                }
            }
        }
        let mut out = BTreeSet::new();
        walk(&self.root, &mut out);
        out
    }

    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64, RuleError> {
        eval(&self.root, lookup)
    }
}

fn eval(e: &Expr, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64, RuleError> {
    Ok(match e {
        Expr::Num(v) => *v,
        Expr::Ref(name) => lookup(name).ok_or_else(|| RuleError::MissingDependency(name.clone()))?,
        Expr::Neg(a) => -eval(a, lookup)?,
        Expr::Not(a) => truth(eval(a, lookup)? == 0.0),
        Expr::Bin(op, a, b) => {
            let x = eval(a, lookup)?;
            let y = eval(b, lookup)?;
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Lt => truth(x < y),
                BinOp::Le => truth(x <= y),
                BinOp::Gt => truth(x > y),
                BinOp::Ge => truth(x >= y),
                BinOp::Eq => truth(x == y),
                BinOp::Ne => truth(x != y),
                BinOp::And => truth(x != 0.0 && y != 0.0),
                BinOp::Or => truth(x != 0.0 || y != 0.0),
            }
        }
        Expr::Call(func, args) => {
            let vals = args.iter().map(|a| eval(a, lookup)).collect::<Result<Vec<_>, _>>()?;
            match func {
                Func::Min => vals.iter().copied().fold(f64::INFINITY, f64::min),
                Func::Max => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                Func::Abs => vals[0].abs(),
                Func::Clamp => vals[0].max(vals[1]).min(vals[2]),
                Func::Lookup => {
                    let key = vals[0];
                    let pairs = &vals[1..vals.len() - 1];
                    pairs
                        .chunks(2)
                        .find(|kv| kv[0] == key)
                        .map(|kv| kv[1])
                        .unwrap_or(vals[vals.len() - 1])
                }
            }
        }
        Expr::If(c, t, f) => {
            if eval(c, lookup)? != 0.0 {
                eval(t, lookup)?
            } else {
                eval(f, lookup)?
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(&'static str),
}

#[derive(Debug, Clone)]
struct Token {
    kind: Tok,
    offset: usize,
}

const SYMBOLS: [&str; 13] = ["<=", ">=", "==", "!=", "<", ">", "+", "-", "*", "(", ")", ",", "="];

fn lex(src: &str) -> Result<Vec<Token>, RuleError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            let text = &src[start..i];
            let v = text.parse::<f64>().map_err(|_| RuleError::Parse {
                offset: start,
                message: format!("bad number {text:?}"),
            })?;
            out.push(Token {
                kind: Tok::Num(v),
                offset: start,
            });
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                kind: Tok::Ident(src[start..i].to_string()),
                offset: start,
            });
        } else {
            let rest = &src[i..];
            let sym = SYMBOLS
                .iter()
                .find(|s| rest.starts_with(**s))
                .ok_or_else(|| RuleError::Parse {
                    offset: i,
                    message: format!("unexpected character {:?}", rest.chars().next().unwrap_or(' ')),
                })?;
            if *sym == "=" {
                return Err(RuleError::Parse {
                    offset: i,
                    message: "use '==' for equality".into(),
                });
            }
            out.push(Token {
                kind: Tok::Sym(sym),
                offset: i,
            });
            i += sym.len();
        }
    }
    Ok(out)
}

const KEYWORDS: [&str; 6] = ["if", "then", "else", "and", "or", "not"];

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn offset(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|t| t.offset)
            .unwrap_or_else(|| self.tokens.last().map(|t| t.offset + 1).unwrap_or(0))
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, RuleError> {
        Err(RuleError::Parse {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn at_sym(&self, sym: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym)
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), RuleError> {
        if self.at_keyword(kw) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected '{kw}'"))
        }
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), RuleError> {
        if self.at_sym(sym) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected '{sym}'"))
        }
    }

    fn expr(&mut self) -> Result<Expr, RuleError> {
        if self.at_keyword("if") {
            return self.if_expr();
        }
        self.or()
    }

    fn if_expr(&mut self) -> Result<Expr, RuleError> {
        self.expect_keyword("if")?;
        let c = self.expr()?;
        self.expect_keyword("then")?;
        let t = self.expr()?;
        self.expect_keyword("else")?;
        let f = self.expr()?;
        Ok(Expr::If(Box::new(c), Box::new(t), Box::new(f)))
    }

    fn or(&mut self) -> Result<Expr, RuleError> {
        let mut lhs = self.and()?;
        while self.at_keyword("or") {
            self.pos += 1;
            let rhs = self.and()?;
            lhs = Expr::Bin(BinOp::Or, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, RuleError> {
        let mut lhs = self.not()?;
        while self.at_keyword("and") {
            self.pos += 1;
            let rhs = self.not()?;
            lhs = Expr::Bin(BinOp::And, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<Expr, RuleError> {
        if self.at_keyword("not") {
            self.pos += 1;
            return Ok(Expr::Not(Box::new(self.not()?)));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Expr, RuleError> {
        let lhs = self.sum()?;
        let op = match self.peek() {
            Some(Tok::Sym("<")) => BinOp::Lt,
            Some(Tok::Sym("<=")) => BinOp::Le,
            Some(Tok::Sym(">")) => BinOp::Gt,
            Some(Tok::Sym(">=")) => BinOp::Ge,
            Some(Tok::Sym("==")) => BinOp::Eq,
            Some(Tok::Sym("!=")) => BinOp::Ne,
            _ => return Ok(lhs),
        };
        self.pos += 1;
        let rhs = self.sum()?;
        Ok(Expr::Bin(op, Box::new(lhs), Box::new(rhs)))
    }

    fn sum(&mut self) -> Result<Expr, RuleError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Sym("+")) => BinOp::Add,
                Some(Tok::Sym("-")) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Expr, RuleError> {
        let mut lhs = self.unary()?;
        while self.at_sym("*") {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(BinOp::Mul, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, RuleError> {
        if self.at_sym("-") {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, RuleError> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::Sym("(")) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) if name == "if" => self.if_expr(),
            Some(Tok::Ident(name)) if KEYWORDS.contains(&name.as_str()) => {
                self.err(format!("unexpected keyword '{name}'"))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if !self.at_sym("(") {
                    return Ok(Expr::Ref(name));
                }
                let Some(func) = Func::from_name(&name) else {
                    return self.err(format!("unknown function '{name}'"));
                };
                self.pos += 1;
                let mut args = vec![self.expr()?];
                while self.at_sym(",") {
                    self.pos += 1;
                    args.push(self.expr()?);
                }
                self.expect_sym(")")?;
                if let Err(message) = func.check_arity(args.len()) {
                    return self.err(message);
                }
                Ok(Expr::Call(func, args))
            }
            Some(other) => self.err(format!("unexpected token {other:?}")),
            None => self.err("unexpected end of expression"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn run(src: &str, vars: &[(&str, f64)]) -> Result<f64, RuleError> {
        let env: HashMap<String, f64> = vars.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        RuleExpr::parse(src)?.eval(&|name| env.get(name).copied())
    }

    #[test]
    fn max_of_two() {
        assert_eq!(run("max(a,b)", &[("a", 2.0), ("b", 3.0)]).unwrap(), 3.0);
    }

    #[test]
    fn conditional_with_conjunction() {
        let src = "if num >= 2 and distress >= 1 then distress else 0";
        assert_eq!(run(src, &[("num", 1.0), ("distress", 3.0)]).unwrap(), 0.0);
        assert_eq!(run(src, &[("num", 2.0), ("distress", 3.0)]).unwrap(), 3.0);
    }

    #[test]
    fn precedence_and_unary() {
        assert_eq!(run("1 + 2 * 3", &[]).unwrap(), 7.0);
        assert_eq!(run("(1 + 2) * 3", &[]).unwrap(), 9.0);
        assert_eq!(run("-2 * -3", &[]).unwrap(), 6.0);
        assert_eq!(run("1 - 2 - 3", &[]).unwrap(), -4.0);
        assert_eq!(run("not 1 < 2 or 0", &[]).unwrap(), 0.0);
    }

    #[test]
    fn lookup_and_clamp() {
        assert_eq!(run("lookup(x, 1, 10, 2, 20, -1)", &[("x", 2.0)]).unwrap(), 20.0);
        assert_eq!(run("lookup(x, 1, 10, 2, 20, -1)", &[("x", 5.0)]).unwrap(), -1.0);
        assert_eq!(run("clamp(x, 0, 4)", &[("x", 7.0)]).unwrap(), 4.0);
    }

    #[test]
    fn missing_reference_is_reported() {
        assert_eq!(
            run("a + b", &[("a", 1.0)]),
            Err(RuleError::MissingDependency("b".into()))
        );
    }

    #[test]
    fn parse_errors() {
        for bad in [
            "",
            "1 +",
            "max()",
            "lookup(x, 1)",
            "a = b",
            "foo(1)",
            "if a then b",
            "(1",
            "1 2",
            "and",
        ] {
            assert!(RuleExpr::parse(bad).is_err(), "{bad:?} should not parse");
        }
    }

    #[test]
    fn references_are_collected() {
        let e = RuleExpr::parse("if x > 1 then max(y, z) else lookup(w, 1, 2, 0)").unwrap();
        let refs: Vec<_> = e.references().into_iter().collect();
        assert_eq!(refs, ["w", "x", "y", "z"]);
    }
}
