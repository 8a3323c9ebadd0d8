//! Slow, obviously-correct reference implementations.

use std::collections::HashMap;

use interview_assess::segment::Gap;
use interview_assess::textsim::SimilarityMatrix;

/// Best objective over every ascending matching of kept edges, found by
/// enumerating all of them.
pub fn exhaustive_bipartite(gap: &Gap<'_>, coeffs: &[f64; 9]) -> (f64, Vec<(usize, usize)>) {
    fn rec(
        gap: &Gap<'_>,
        coeffs: &[f64; 9],
        u0: usize,
        q0: usize,
        cur: &mut Vec<(usize, usize)>,
        best: &mut (f64, Vec<(usize, usize)>),
    ) {
        let y = gap.objective(cur, coeffs);
        if y > best.0 {
            *best = (y, cur.clone());
        }
        for u in u0..gap.emb.rows {
            for q in q0..gap.emb.cols {
                if gap.emb.get(u, q) > gap.edge {
                    cur.push((u, q));
                    rec(gap, coeffs, u + 1, q + 1, cur, best);
                    cur.pop();
                }
            }
        }
    }
    let mut best = (gap.objective(&[], coeffs), Vec::new());
    rec(gap, coeffs, 0, 0, &mut Vec::new(), &mut best);
    best
}

/// Number of ascending matchings over kept edges, the empty one included.
pub fn count_matchings(gap: &Gap<'_>) -> u64 {
    fn rec(gap: &Gap<'_>, u0: usize, q0: usize) -> u64 {
        let mut n = 1;
        for u in u0..gap.emb.rows {
            for q in q0..gap.emb.cols {
                if gap.emb.get(u, q) > gap.edge {
                    n += rec(gap, u + 1, q + 1);
                }
            }
        }
        n
    }
    rec(gap, 0, 0)
}

/// Maximum total over all strictly monotone partial assignments of columns
/// to rows, each total summed in column order.
pub fn brute_alignment(s: &SimilarityMatrix) -> f64 {
    fn rec(s: &SimilarityMatrix, col: usize, row0: usize, acc: f64, best: &mut f64) {
        if col == s.cols {
            if acc > *best {
                *best = acc;
            }
            return;
        }
        rec(s, col + 1, row0, acc, best);
        for r in row0..s.rows {
            rec(s, col + 1, r + 1, acc + s.get(r, col), best);
        }
    }
    let mut best = 0.0;
    rec(s, 0, 0, 0.0, &mut best);
    best
}

/// Direct-evaluating precedence-climbing interpreter for the rule language.
/// It shares no code with the library parser: it tokenizes by hand and
/// computes values while it parses.
pub fn eval_rule(src: &str, env: &HashMap<&str, f64>) -> Option<f64> {
    let toks = tokens(src)?;
    let mut p = Interp { toks, pos: 0, env };
    let v = p.expr()?;
    (p.pos == p.toks.len()).then_some(v)
}

#[derive(Debug, Clone, PartialEq)]
enum T {
    N(f64),
    Id(String),
    Op(String),
}

fn tokens(src: &str) -> Option<Vec<T>> {
    let cs: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < cs.len() {
        let c = cs[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let s: String = cs[i..]
                .iter()
                .take_while(|c| c.is_ascii_digit() || **c == '.')
                .collect();
            i += s.len();
            out.push(T::N(s.parse().ok()?));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let s: String = cs[i..]
                .iter()
                .take_while(|c| c.is_ascii_alphanumeric() || **c == '_')
                .collect();
            i += s.len();
            out.push(T::Id(s));
        } else {
            let two: String = cs[i..cs.len().min(i + 2)].iter().collect();
            if ["<=", ">=", "==", "!="].contains(&two.as_str()) {
                out.push(T::Op(two));
                i += 2;
            } else if "<>+-*(),".contains(c) {
                out.push(T::Op(c.to_string()));
                i += 1;
            } else {
                return None;
            }
        }
    }
    Some(out)
}

struct Interp<'a> {
    toks: Vec<T>,
    pos: usize,
    env: &'a HashMap<&'a str, f64>,
}

fn b(x: bool) -> f64 {
    if x {
        1.0
    } else {
        0.0
    }
}

impl Interp<'_> {
    fn peek(&self) -> Option<&T> {
        self.toks.get(self.pos)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(T::Id(s)) if s == w)
    }

    fn is_op(&self, o: &str) -> bool {
        matches!(self.peek(), Some(T::Op(s)) if s == o)
    }

    fn eat_word(&mut self, w: &str) -> Option<()> {
        self.is_word(w).then(|| self.pos += 1)
    }

    fn eat_op(&mut self, o: &str) -> Option<()> {
        self.is_op(o).then(|| self.pos += 1)
    }

    fn expr(&mut self) -> Option<f64> {
        if self.eat_word("if").is_some() {
            let c = self.expr()?;
            self.eat_word("then")?;
            let t = self.expr()?;
            self.eat_word("else")?;
            let f = self.expr()?;
            return Some(if c != 0.0 { t } else { f });
        }
        self.binary(0)
    }

    /// Levels: 0 or, 1 and, 2 not/comparison, 3 sum, 4 product.
    fn binary(&mut self, level: u8) -> Option<f64> {
        match level {
            0 | 1 => {
                let word = if level == 0 { "or" } else { "and" };
                let mut acc = self.binary(level + 1)?;
                while self.eat_word(word).is_some() {
                    let rhs = self.binary(level + 1)?;
                    acc = if level == 0 {
                        b(acc != 0.0 || rhs != 0.0)
                    } else {
                        b(acc != 0.0 && rhs != 0.0)
                    };
                }
                Some(acc)
            }
            2 => {
                if self.eat_word("not").is_some() {
                    return Some(b(self.binary(2)? == 0.0));
                }
                let lhs = self.binary(3)?;
                for op in ["<=", ">=", "==", "!=", "<", ">"] {
                    if self.eat_op(op).is_some() {
                        let rhs = self.binary(3)?;
                        return Some(b(match op {
                            "<=" => lhs <= rhs,
                            ">=" => lhs >= rhs,
                            "==" => lhs == rhs,
                            "!=" => lhs != rhs,
                            "<" => lhs < rhs,
                            _ => lhs > rhs,
                        }));
                    }
                }
                Some(lhs)
            }
            3 => {
                let mut acc = self.binary(4)?;
                loop {
                    if self.eat_op("+").is_some() {
                        acc += self.binary(4)?;
                    } else if self.eat_op("-").is_some() {
                        acc -= self.binary(4)?;
                    } else {
                        return Some(acc);
                    }
                }
            }
            _ => {
                let mut acc = self.unary()?;
                while self.eat_op("*").is_some() {
                    acc *= self.unary()?;
                }
                Some(acc)
            }
        }
    }

    fn unary(&mut self) -> Option<f64> {
        if self.eat_op("-").is_some() {
            return Some(-self.unary()?);
        }
        if self.is_word("if") {
            return self.expr();
        }
        match self.peek()?.clone() {
            T::N(v) => {
                self.pos += 1;
                Some(v)
            }
            T::Op(o) if o == "(" => {
                self.pos += 1;
                let v = self.expr()?;
                self.eat_op(")")?;
                Some(v)
            }
            T::Id(name) => {
                self.pos += 1;
                if self.eat_op("(").is_none() {
                    return self.env.get(name.as_str()).copied();
                }
                let mut args = vec![self.expr()?];
                while self.eat_op(",").is_some() {
                    args.push(self.expr()?);
                }
                self.eat_op(")")?;
                call(&name, &args)
            }
            T::Op(_) => None,
        }
    }
}

fn call(name: &str, a: &[f64]) -> Option<f64> {
    match (name, a.len()) {
        ("min", n) if n >= 1 => Some(a.iter().copied().fold(f64::INFINITY, f64::min)),
        ("max", n) if n >= 1 => Some(a.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        ("abs", 1) => Some(a[0].abs()),
        ("clamp", 3) => {
            let up = if a[0] < a[1] { a[1] } else { a[0] };
            Some(if up > a[2] { a[2] } else { up })
        }
        ("lookup", n) if n >= 4 && n % 2 == 0 => {
            let mut i = 1;
            while i + 1 < n {
                if a[i] == a[0] {
                    return Some(a[i + 1]);
                }
                i += 2;
            }
            Some(a[n - 1])
        }
        _ => None,
    }
}
