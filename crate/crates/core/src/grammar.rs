//! Text specifications of manifolds, points, grids, potentials, one-forms
//! and sections, as used in configuration files. The grammar is written out
//! in `docs/grammar.md`.

use std::fmt;

use crate::error::{Error, Result};
use crate::field::{self, KatoClass, OneForm, Potential, ScalarField, Section};
use crate::geometry::{Manifold, Point};
use crate::linalg::{self, CMatrix, CVector, C64};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    /// Imaginary literal `2.5i`.
    Imag(f64),
    Open,
    Close,
    LBracket,
    RBracket,
    Comma,
    Eq,
    Plus,
    Minus,
    Star,
}

fn lex(key: &str, s: &str) -> Result<Vec<Tok>> {
    let b = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '(' => (out.push(Tok::Open), i += 1).1,
            ')' => (out.push(Tok::Close), i += 1).1,
            '[' => (out.push(Tok::LBracket), i += 1).1,
            ']' => (out.push(Tok::RBracket), i += 1).1,
            ',' => (out.push(Tok::Comma), i += 1).1,
            '=' => (out.push(Tok::Eq), i += 1).1,
            '+' => (out.push(Tok::Plus), i += 1).1,
            '-' => (out.push(Tok::Minus), i += 1).1,
            '*' => (out.push(Tok::Star), i += 1).1,
            _ if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
                    i += 1;
                }
                if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                    let mut j = i + 1;
                    if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                        j += 1;
                    }
                    if j < b.len() && b[j].is_ascii_digit() {
                        i = j;
                        while i < b.len() && b[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let v: f64 = s[start..i].parse().map_err(|_| Error::parse(key, format!("bad number `{}`", &s[start..i])))?;
                if i < b.len() && b[i] == b'i' && !(i + 1 < b.len() && (b[i + 1] as char).is_ascii_alphanumeric()) {
                    out.push(Tok::Imag(v));
                    i += 1;
                } else {
                    out.push(Tok::Num(v));
                }
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < b.len() && ((b[i] as char).is_ascii_alphanumeric() || b[i] == b'_') {
                    i += 1;
                }
                out.push(Tok::Ident(s[start..i].to_string()));
            }
            _ => return Err(Error::parse(key, format!("unexpected character `{c}`"))),
        }
    }
    Ok(out)
}

/// Parsed expression tree.
#[derive(Clone, Debug, PartialEq)]
enum Expr {
    Num(C64),
    Ident(String),
    Call(String, Vec<Arg>),
    List(Vec<Expr>),
    /// Sum of signed products.
    Sum(Vec<(f64, Vec<Expr>)>),
}

#[derive(Clone, Debug, PartialEq)]
struct Arg {
    key: Option<String>,
    value: Expr,
}

struct Parser<'a> {
    key: &'a str,
    toks: Vec<Tok>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(key: &'a str, s: &str) -> Result<Self> {
        Ok(Parser { key, toks: lex(key, s)?, pos: 0 })
    }

    fn err(&self, msg: impl fmt::Display) -> Error {
        Error::parse(self.key, msg.to_string())
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, t: Tok) -> Result<()> {
        match self.next() {
            Some(ref u) if *u == t => Ok(()),
            other => Err(self.err(format!("expected {t:?}, found {other:?}"))),
        }
    }

    fn finish(&self) -> Result<()> {
        if self.pos < self.toks.len() {
            return Err(self.err(format!("trailing input at {:?}", self.toks[self.pos])));
        }
        Ok(())
    }

    /// sum = ["-"] product { ("+" | "-") product }
    fn sum(&mut self) -> Result<Expr> {
        let mut terms = Vec::new();
        let mut sign = 1.0;
        if self.peek() == Some(&Tok::Minus) {
            self.next();
            sign = -1.0;
        }
        loop {
            terms.push((sign, self.product()?));
            match self.peek() {
                Some(Tok::Plus) => sign = 1.0,
                Some(Tok::Minus) => sign = -1.0,
                _ => break,
            }
            self.next();
        }
        if terms.len() == 1 && terms[0].0 == 1.0 && terms[0].1.len() == 1 {
            return Ok(terms.pop().unwrap().1.pop().unwrap());
        }
        Ok(Expr::Sum(terms))
    }

    fn product(&mut self) -> Result<Vec<Expr>> {
        let mut f = vec![self.atom()?];
        while self.peek() == Some(&Tok::Star) {
            self.next();
            f.push(self.atom()?);
        }
        Ok(f)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Expr::Num(C64::new(v, 0.0))),
            Some(Tok::Imag(v)) => Ok(Expr::Num(C64::new(0.0, v))),
            Some(Tok::Minus) => match self.atom()? {
                Expr::Num(z) => Ok(Expr::Num(-z)),
                e => Ok(Expr::Sum(vec![(-1.0, vec![e])])),
            },
            Some(Tok::Open) => {
                let e = self.sum()?;
                self.expect(Tok::Close)?;
                Ok(e)
            }
            Some(Tok::LBracket) => {
                let mut items = Vec::new();
                if self.peek() != Some(&Tok::RBracket) {
                    loop {
                        items.push(self.sum()?);
                        if self.peek() == Some(&Tok::Comma) {
                            self.next();
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::RBracket)?;
                Ok(Expr::List(items))
            }
            Some(Tok::Ident(name)) => {
                if self.peek() != Some(&Tok::Open) {
                    return Ok(Expr::Ident(name));
                }
                self.next();
                let mut args = Vec::new();
                if self.peek() != Some(&Tok::Close) {
                    loop {
                        let key = match (self.toks.get(self.pos), self.toks.get(self.pos + 1)) {
                            (Some(Tok::Ident(k)), Some(Tok::Eq)) => {
                                let k = k.clone();
                                self.pos += 2;
                                Some(k)
                            }
                            _ => None,
                        };
                        args.push(Arg { key, value: self.sum()? });
                        if self.peek() == Some(&Tok::Comma) {
                            self.next();
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::Close)?;
                Ok(Expr::Call(name, args))
            }
            other => Err(self.err(format!("unexpected {other:?}"))),
        }
    }
}

fn parse_expr(key: &str, s: &str) -> Result<Expr> {
    let mut p = Parser::new(key, s)?;
    let e = p.sum()?;
    p.finish()?;
    Ok(e)
}

/// Evaluate a constant expression (numbers, sums and products of numbers).
fn constant(key: &str, e: &Expr) -> Result<C64> {
    match e {
        Expr::Num(z) => Ok(*z),
        Expr::Sum(terms) => terms.iter().try_fold(C64::new(0.0, 0.0), |acc, (s, fs)| {
            let p = fs.iter().try_fold(C64::new(1.0, 0.0), |p, f| Ok::<_, Error>(p * constant(key, f)?))?;
            Ok(acc + p * *s)
        }),
        Expr::Ident(n) if n == "pi" => Ok(C64::new(std::f64::consts::PI, 0.0)),
        other => Err(Error::parse(key, format!("expected a number, found {other:?}"))),
    }
}

fn real(key: &str, e: &Expr) -> Result<f64> {
    let z = constant(key, e)?;
    if z.im != 0.0 {
        return Err(Error::parse(key, "expected a real number"));
    }
    Ok(z.re)
}

fn real_list(key: &str, e: &Expr) -> Result<Vec<f64>> {
    match e {
        Expr::List(items) => items.iter().map(|x| real(key, x)).collect(),
        other => Ok(vec![real(key, other)?]),
    }
}

/// Positional and named arguments of one call.
struct Args<'a> {
    key: &'a str,
    name: &'a str,
    args: &'a [Arg],
    used: Vec<bool>,
}

impl<'a> Args<'a> {
    fn new(key: &'a str, name: &'a str, args: &'a [Arg]) -> Self {
        Args { key, name, args, used: vec![false; args.len()] }
    }

    /// Named `k`, else the `pos`-th positional argument.
    fn get(&mut self, k: &str, pos: usize) -> Option<&'a Expr> {
        if let Some(i) = self.args.iter().position(|a| a.key.as_deref() == Some(k)) {
            self.used[i] = true;
            return Some(&self.args[i].value);
        }
        let i = self.args.iter().enumerate().filter(|(_, a)| a.key.is_none()).nth(pos)?.0;
        self.used[i] = true;
        Some(&self.args[i].value)
    }

    fn req(&mut self, k: &str, pos: usize) -> Result<&'a Expr> {
        let (key, name) = (self.key, self.name);
        self.get(k, pos).ok_or_else(|| Error::parse(key, format!("{name}: missing argument `{k}`")))
    }

    fn real(&mut self, k: &str, pos: usize) -> Result<f64> {
        let e = self.req(k, pos)?;
        real(self.key, e)
    }

    fn real_or(&mut self, k: &str, pos: usize, default: f64) -> Result<f64> {
        match self.get(k, pos) {
            Some(e) => real(self.key, e),
            None => Ok(default),
        }
    }

    fn done(&self) -> Result<()> {
        if let Some(i) = self.used.iter().position(|u| !u) {
            return Err(Error::parse(self.key, format!("{}: unexpected argument {:?}", self.name, self.args[i])));
        }
        Ok(())
    }
}

fn whole(key: &str, x: f64) -> Result<usize> {
    if x >= 1.0 && x.fract() == 0.0 && x <= 1e9 {
        Ok(x as usize)
    } else {
        Err(Error::parse(key, format!("expected a positive integer, got {x}")))
    }
}

/// `euclidean(m=3)`, `circle(r=1)`, `torus(L=[1,2])`, `sphere2(r=1)`,
/// `hyperbolic`, `ball(<manifold>, r=1, center=[..])`,
/// `halfspace(<manifold>, normal=[..], offset=0)`.
pub fn parse_manifold(s: &str) -> Result<Manifold> {
    manifold_expr(&parse_expr("manifold", s)?).map_err(|e| match e {
        Error::Invalid { ref key, .. } if key != "manifold" => Error::invalid("manifold", e.to_string()),
        e => e,
    })
}

fn manifold_expr(e: &Expr) -> Result<Manifold> {
    let key = "manifold";
    let (name, args): (&str, &[Arg]) = match e {
        Expr::Ident(n) => (n, &[]),
        Expr::Call(n, a) => (n, a),
        other => return Err(Error::parse(key, format!("expected a manifold, found {other:?}"))),
    };
    let mut a = Args::new(key, name, args);
    let m = match name {
        "euclidean" => Manifold::euclidean(whole(key, a.real("m", 0)?)?)?,
        "circle" => Manifold::circle(a.real_or("r", 0, 1.0)?)?,
        "torus" => Manifold::torus(real_list(key, a.req("L", 0)?)?)?,
        "sphere2" => Manifold::sphere2(a.real_or("r", 0, 1.0)?)?,
        "hyperbolic" => Manifold::hyperbolic(),
        "ball" => {
            let base = manifold_expr(a.req("base", 0)?)?;
            let r = a.real("r", 1)?;
            let center = match a.get("center", 2) {
                Some(c) => base.point(&real_list(key, c)?)?,
                None => base.origin(),
            };
            Manifold::ball(base, center, r)?
        }
        "halfspace" => {
            let base = manifold_expr(a.req("base", 0)?)?;
            let normal = real_list(key, a.req("normal", 1)?)?;
            let offset = a.real_or("offset", 2, 0.0)?;
            Manifold::half_space(base, normal, offset)?
        }
        other => return Err(Error::parse(key, format!("unknown manifold `{other}`"))),
    };
    a.done()?;
    Ok(m)
}

/// A point: a number or a coordinate list (ambient coordinates on the sphere).
pub fn parse_point(model: &Manifold, key: &str, s: &str) -> Result<Point> {
    let e = parse_expr(key, s)?;
    let p = model.point(&real_list(key, &e)?).map_err(|err| Error::invalid(key, err.to_string()))?;
    if !model.contains(&p) {
        return Err(Error::invalid(key, format!("point {p} lies outside {model}")));
    }
    Ok(p)
}

/// `[p, q, ...]` (each a number or list) or `segment(a, b, n)`.
pub fn parse_points(model: &Manifold, key: &str, s: &str) -> Result<Vec<Point>> {
    let e = parse_expr(key, s)?;
    let pts = match &e {
        Expr::Call(n, args) if n == "segment" => {
            let mut a = Args::new(key, n, args);
            let p = model.point(&real_list(key, a.req("a", 0)?)?)?;
            let q = model.point(&real_list(key, a.req("b", 1)?)?)?;
            let count = whole(key, a.real("n", 2)?)?;
            a.done()?;
            if count < 2 {
                return Err(Error::invalid(key, "segment needs at least 2 points"));
            }
            (0..count).map(|j| model.geodesic_point(&p, &q, j as f64 / (count - 1) as f64)).collect()
        }
        Expr::List(items) if items.iter().all(|i| matches!(i, Expr::List(_))) => items
            .iter()
            .map(|i| model.point(&real_list(key, i)?))
            .collect::<Result<Vec<_>>>()?,
        Expr::List(items) if model.coord_len() == 1 => {
            items.iter().map(|i| model.point(&[real(key, i)?])).collect::<Result<Vec<_>>>()?
        }
        other => return Err(Error::parse(key, format!("expected a point list or segment(a, b, n), found {other:?}"))),
    };
    if pts.is_empty() {
        return Err(Error::invalid(key, "empty point list"));
    }
    if let Some(p) = pts.iter().find(|p| !model.contains(p)) {
        return Err(Error::invalid(key, format!("point {p} lies outside {model}")));
    }
    Ok(pts)
}

/// `[t1, t2, ...]`, `linspace(a, b, n)` or `geomspace(a, b, n)`.
pub fn parse_times(key: &str, s: &str) -> Result<Vec<f64>> {
    let e = parse_expr(key, s)?;
    let v = match &e {
        Expr::Call(n, args) if n == "linspace" || n == "geomspace" => {
            let mut a = Args::new(key, n, args);
            let (lo, hi) = (a.real("a", 0)?, a.real("b", 1)?);
            let count = whole(key, a.real("n", 2)?)?;
            a.done()?;
            if count < 2 {
                return Err(Error::invalid(key, "need at least 2 points"));
            }
            let u = |j: usize| j as f64 / (count - 1) as f64;
            if n == "linspace" {
                (0..count).map(|j| lo + (hi - lo) * u(j)).collect()
            } else {
                if !(lo > 0.0 && hi > 0.0) {
                    return Err(Error::invalid(key, "geomspace needs positive ends"));
                }
                (0..count).map(|j| (lo.ln() + (hi.ln() - lo.ln()) * u(j)).exp()).collect()
            }
        }
        other => real_list(key, other)?,
    };
    if v.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid(key, "times must be finite"));
    }
    Ok(v)
}

/// One scalar builder with its sign structure and integrability class.
struct Builder {
    field: ScalarField,
    /// May take positive / negative values.
    signs: (bool, bool),
    class: KatoClass,
}

fn power_class(m: usize, p: f64) -> KatoClass {
    let kato_limit = if m == 1 { 1.0 } else { 2.0 };
    if p <= 0.0 {
        KatoClass::LocallyKato
    } else if p < kato_limit {
        KatoClass::Kato
    } else {
        KatoClass::LocallyIntegrable
    }
}

fn builder(model: &Manifold, name: &str, args: &[Arg]) -> Result<Builder> {
    let key = "potential";
    let mut a = Args::new(key, name, args);
    let base = model.base();
    let euclid = |what: &str| -> Result<usize> {
        match base {
            Manifold::Euclidean { m } => Ok(*m),
            _ => Err(Error::invalid(key, format!("{what} is defined on Euclidean models only"))),
        }
    };
    let center = |a: &mut Args, pos: usize| -> Result<Point> {
        match a.get("center", pos) {
            Some(c) => base.point(&real_list(key, c)?).map_err(|e| Error::invalid(key, e.to_string())),
            None => Ok(base.origin()),
        }
    };
    let sign = |c: f64| (c > 0.0, c < 0.0);
    let b = match name {
        "coulomb" => {
            let m = euclid("coulomb")?;
            let alpha = a.real("alpha", 0)?;
            let c = center(&mut a, 1)?;
            Builder { field: field::coulomb(alpha, c), signs: sign(alpha), class: power_class(m, 1.0) }
        }
        "invpow" => {
            let m = euclid("invpow")?;
            let alpha = a.real("alpha", 0)?;
            let p = a.real("p", 1)?;
            let c = center(&mut a, 2)?;
            Builder { field: field::inverse_power(alpha, p, c), signs: sign(alpha), class: power_class(m, p) }
        }
        "coulombball" => {
            let m = euclid("coulombball")?;
            let alpha = a.real("alpha", 0)?;
            let r0 = a.real("r", 1)?;
            let c = center(&mut a, 2)?;
            Builder { field: field::coulomb_in_ball(alpha, c, r0), signs: sign(alpha), class: power_class(m, 1.0) }
        }
        "harmonic" => {
            euclid("harmonic")?;
            let w = a.real("omega", 0)?;
            Builder { field: field::harmonic(w), signs: (w != 0.0, false), class: KatoClass::LocallyKato }
        }
        "constant" => {
            let c = a.real("c", 0)?;
            Builder { field: ScalarField::constant(c), signs: sign(c), class: KatoClass::Bounded }
        }
        "well" => {
            euclid("well")?;
            let depth = a.real("depth", 0)?;
            let r = a.real("r", 1)?;
            let c = center(&mut a, 2)?;
            Builder { field: field::well(depth, r, c), signs: sign(-depth), class: KatoClass::Bounded }
        }
        "coord" => {
            let i = whole(key, a.real("i", 0)? + 1.0)? - 1;
            if i >= base.coord_len() {
                return Err(Error::invalid(key, format!("coordinate index {i} out of range")));
            }
            let class = if base.is_compact() { KatoClass::Bounded } else { KatoClass::LocallyKato };
            Builder {
                field: ScalarField::new(format!("coord({i})"), move |y: &Point| y.coords()[i]),
                signs: (true, true),
                class,
            }
        }
        other => return Err(Error::parse(key, format!("unknown potential builder `{other}`"))),
    };
    a.done()?;
    Ok(b)
}

fn matrix_literal(key: &str, e: &Expr) -> Result<CMatrix> {
    let Expr::List(rows) = e else {
        return Err(Error::parse(key, "expected a matrix [[..],[..]]"));
    };
    let d = rows.len();
    let mut m = CMatrix::zeros(d, d);
    for (i, r) in rows.iter().enumerate() {
        let Expr::List(cols) = r else {
            return Err(Error::parse(key, "matrix rows must be lists"));
        };
        if cols.len() != d {
            return Err(Error::parse(key, "matrix must be square"));
        }
        for (j, c) in cols.iter().enumerate() {
            m[(i, j)] = constant(key, c)?;
        }
    }
    if linalg::hermitian_defect(&m) > 1e-12 {
        return Err(Error::invalid(key, "matrix must be Hermitian"));
    }
    Ok(m)
}

struct Term {
    coef: f64,
    scalar: Option<Builder>,
    matrix: Option<CMatrix>,
}

fn terms(model: &Manifold, e: &Expr) -> Result<Vec<Term>> {
    let key = "potential";
    let products: Vec<(f64, Vec<Expr>)> = match e {
        Expr::Sum(t) => t.clone(),
        other => vec![(1.0, vec![other.clone()])],
    };
    let mut out = Vec::new();
    for (sign, factors) in products {
        let is_sum = |f: &Expr| matches!(f, Expr::Sum(_)) && constant(key, f).is_err();
        if let Some(inner) = factors.iter().find(|f| is_sum(f)) {
            // c * (a + b): only constant factors may multiply a parenthesised sum
            let mut c = sign;
            for f in factors.iter().filter(|f| !is_sum(f)) {
                c *= real(key, f).map_err(|_| Error::parse(key, "parenthesised sums may only be scaled by numbers"))?;
            }
            if factors.iter().filter(|f| is_sum(f)).count() > 1 {
                return Err(Error::parse(key, "products of sums are not supported"));
            }
            for mut t in terms(model, inner)? {
                t.coef *= c;
                out.push(t);
            }
            continue;
        }
        let mut t = Term { coef: sign, scalar: None, matrix: None };
        for f in &factors {
            match f {
                _ if constant(key, f).is_ok() => t.coef *= real(key, f)?,
                Expr::Ident(n) if n == "I" => {}
                Expr::Call(n, args) => {
                    if t.scalar.is_some() {
                        return Err(Error::parse(key, "at most one scalar builder per term"));
                    }
                    t.scalar = Some(builder(model, n, args)?);
                }
                Expr::List(_) => {
                    if t.matrix.is_some() {
                        return Err(Error::parse(key, "at most one matrix per term"));
                    }
                    t.matrix = Some(matrix_literal(key, f)?);
                }
                other => return Err(Error::parse(key, format!("unexpected factor {other:?}"))),
            }
        }
        out.push(t);
    }
    Ok(out)
}

/// Potential of rank `rank` on `model`: a sum of terms
/// `c · builder · P`, where the scalar builder and the constant Hermitian
/// matrix `P` (or `I`) are optional. Integrability classes of the positive
/// and negative parts are inferred from the builders.
pub fn parse_potential(model: &Manifold, rank: usize, s: &str) -> Result<Potential> {
    let key = "potential";
    if s.trim() == "0" || s.trim() == "zero" {
        return Ok(Potential::zero(rank));
    }
    let ts = terms(model, &parse_expr(key, s)?)?;
    let (mut neg, mut pos) = (KatoClass::Bounded, KatoClass::Bounded);
    let mut matrix_rank = None;
    for t in &ts {
        let (mut can_pos, mut can_neg) = match &t.scalar {
            Some(b) => b.signs,
            None => (true, false),
        };
        if t.coef < 0.0 {
            std::mem::swap(&mut can_pos, &mut can_neg);
        }
        if t.coef == 0.0 {
            continue;
        }
        if let Some(m) = &t.matrix {
            if matrix_rank.is_some_and(|r| r != m.nrows()) {
                return Err(Error::invalid(key, "matrices of different sizes"));
            }
            matrix_rank = Some(m.nrows());
            let (ev, _) = linalg::hermitian_eigen(m);
            let has_pos = ev.iter().any(|&l| l > 0.0);
            let has_neg = ev.iter().any(|&l| l < 0.0);
            let (p, n) = (can_pos, can_neg);
            can_pos = (p && has_pos) || (n && has_neg);
            can_neg = (p && has_neg) || (n && has_pos);
        }
        let class = t.scalar.as_ref().map_or(KatoClass::Bounded, |b| b.class);
        if can_pos {
            pos = pos.max(class);
        }
        if can_neg {
            neg = neg.max(class);
        }
    }
    if let Some(r) = matrix_rank {
        if r != rank {
            return Err(Error::invalid("bundle-rank", format!("potential matrices have size {r}, bundle rank is {rank}")));
        }
    }
    let description = s.trim().to_string();
    if matrix_rank.is_none() {
        let fields: Vec<ScalarField> = ts
            .iter()
            .map(|t| match &t.scalar {
                Some(b) => b.field.scaled(t.coef),
                None => ScalarField::constant(t.coef),
            })
            .collect();
        let v = if fields.len() == 1 { fields.into_iter().next().unwrap() } else { ScalarField::sum(description.clone(), &fields) };
        return Ok(Potential::scalar(v, rank, neg, pos));
    }
    let singular: Vec<Point> = ts.iter().filter_map(|t| t.scalar.as_ref()).flat_map(|b| b.field.singular_points().to_vec()).collect();
    let parts: Vec<(f64, Option<ScalarField>, CMatrix)> = ts
        .into_iter()
        .map(|t| {
            let p = t.matrix.unwrap_or_else(|| linalg::identity(rank));
            (t.coef, t.scalar.map(|b| b.field), p)
        })
        .collect();
    Potential::matrix(
        description,
        rank,
        move |y: &Point| {
            let mut acc = CMatrix::zeros(rank, rank);
            for (c, f, p) in &parts {
                let s = c * f.as_ref().map_or(1.0, |f| f.eval(y));
                acc += p * C64::new(s, 0.0);
            }
            acc
        },
        neg,
        pos,
        singular,
    )
}

/// `zero`, `constant([b1, ..])`, `area(lambda)`, or `flux(a)` on a circle
/// of radius `R` (the constant form `a/R`, total flux `2πa`).
pub fn parse_beta(model: &Manifold, s: &str) -> Result<OneForm> {
    let key = "beta";
    let e = parse_expr(key, s)?;
    let (name, args): (&str, &[Arg]) = match &e {
        Expr::Ident(n) => (n, &[]),
        Expr::Call(n, a) => (n, a),
        other => return Err(Error::parse(key, format!("expected a one-form, found {other:?}"))),
    };
    let mut a = Args::new(key, name, args);
    let form = match name {
        "zero" => OneForm::zero(),
        "constant" => {
            let c = real_list(key, a.req("b", 0)?)?;
            if c.len() != model.dim() {
                return Err(Error::invalid(key, format!("need {} components", model.dim())));
            }
            OneForm::constant(&c)
        }
        "area" => {
            if !matches!(model.base(), Manifold::Euclidean { m: 2 }) {
                return Err(Error::invalid(key, "area form lives on the plane"));
            }
            OneForm::area(a.real("lambda", 0)?)
        }
        "flux" => {
            let Manifold::Circle { radius } = model else {
                return Err(Error::invalid(key, "flux(a) is defined on the circle"));
            };
            OneForm::constant(&[a.real("a", 0)? / radius])
        }
        other => return Err(Error::parse(key, format!("unknown one-form `{other}`"))),
    };
    a.done()?;
    Ok(form)
}

/// `one`, `constant([z1, ..])`, `gaussian(scale, center=[..])` (times the
/// all-ones fiber vector), `ground` (oscillator ground state, rank 1), or
/// `mode(k)` on the circle (`e^{ikθ}`).
pub fn parse_section(model: &Manifold, rank: usize, s: &str) -> Result<Section> {
    let key = "f";
    let e = parse_expr(key, s)?;
    let (name, args): (&str, &[Arg]) = match &e {
        Expr::Ident(n) => (n, &[]),
        Expr::Call(n, a) => (n, a),
        other => return Err(Error::parse(key, format!("expected a section, found {other:?}"))),
    };
    let mut a = Args::new(key, name, args);
    let base = model.base();
    let sec = match name {
        "one" => Section::constant(vec![C64::new(1.0, 0.0); rank]).with_sup_norm((rank as f64).sqrt()),
        "constant" => {
            let items = match a.req("z", 0)? {
                Expr::List(items) => items.iter().map(|x| constant(key, x)).collect::<Result<Vec<_>>>()?,
                other => vec![constant(key, other)?],
            };
            if items.len() != rank {
                return Err(Error::invalid(key, format!("need {rank} components")));
            }
            let norm = items.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            Section::constant(items).with_sup_norm(norm)
        }
        "gaussian" => {
            if !matches!(base, Manifold::Euclidean { .. }) {
                return Err(Error::invalid(key, "gaussian sections are defined on Euclidean models"));
            }
            let scale = a.real_or("scale", 0, 1.0)?;
            let center = match a.get("center", 1) {
                Some(c) => base.point(&real_list(key, c)?)?,
                None => base.origin(),
            };
            let g = field::gaussian_section(center, scale);
            widen(g, rank)
        }
        "ground" => {
            let Manifold::Euclidean { m } = base else {
                return Err(Error::invalid(key, "ground state is defined on Euclidean models"));
            };
            widen(field::oscillator_ground_state(*m), rank)
        }
        "mode" => {
            let Manifold::Circle { .. } = model else {
                return Err(Error::invalid(key, "mode(k) is defined on the circle"));
            };
            let k = a.real("k", 0)?;
            widen(Section::scalar(format!("mode({k})"), move |y: &Point| C64::from_polar(1.0, k * y.coords()[0])).with_sup_norm(1.0), rank)
        }
        other => return Err(Error::parse(key, format!("unknown section `{other}`"))),
    };
    a.done()?;
    Ok(sec)
}

/// Repeat a scalar section in every fiber component, normalised by `√d`.
fn widen(f: Section, rank: usize) -> Section {
    if rank == 1 {
        return f;
    }
    let sup = f.sup_norm();
    let l2 = f.l2_norm();
    let s = 1.0 / (rank as f64).sqrt();
    let name = f.name().to_string();
    let mut out = Section::new(name, rank, move |y: &Point| CVector::from_element(rank, f.eval(y)[0] * s));
    if let Some(v) = sup {
        out = out.with_sup_norm(v);
    }
    if let Some(v) = l2 {
        out = out.with_l2_norm(v);
    }
    out
}

#[cfg(test)]
mod tests;
