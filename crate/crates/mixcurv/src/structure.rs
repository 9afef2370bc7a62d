//! Almost-product structures on a chart: metric, distinguished distribution,
//! domain box, adapted frames.
//!
//! Spec file format (one key per line, `#` comments, optional `[section]`
//! headers which only group lines):
//!
//! ```text
//! name = r3_contact
//! dim = 3
//! dtilde_dim = 1
//! params = c = 1.0, k = 0.5
//! metric 0 0 = (1 + x1^2 + x2^2)/4
//! metric 0 1 = x2/4
//! dtilde 0 = 0, 0, 2
//! domain = [-1, 1] x [-1, 1] x [-1, 1]
//! signature = + / + +
//! ```
//!
//! Only the upper triangle of the metric is given; omitted entries are 0.
//! `signature` is optional and, when present, must match the inferred signs.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::{parse, Expr, ExprError, Params};
use crate::jets::Scalar;
use crate::linalg::{inner, Mat};

/// Relative tolerance separating null directions from round-off.
pub const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StructureError {
    #[error("line {line}: {source}")]
    Expr { line: usize, source: ExprError },
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("metric entry ({0},{1}) is below the diagonal; only the upper triangle is declared")]
    NonSymmetric(usize, usize),
    #[error(transparent)]
    Eval(#[from] ExprError),
    #[error("degenerate {what} at {point:?}")]
    Degenerate { what: String, point: Vec<f64> },
    #[error("declared signature {declared} differs from inferred {inferred}")]
    SignatureMismatch { declared: String, inferred: String },
    #[error("signature changes between {a:?} and {b:?}")]
    SignatureInstability { a: Vec<f64>, b: Vec<f64> },
    #[error("point {point:?} lies outside the domain box")]
    Domain { point: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct ProductStructure {
    pub name: String,
    pub source: String,
    pub dim: usize,
    pub n: usize,
    pub params: Params,
    metric: Vec<Vec<Expr>>,
    dtilde: Vec<Vec<Expr>>,
    pub domain: Vec<(f64, f64)>,
    pub declared_signature: Option<(Vec<f64>, Vec<f64>)>,
}

/// Pointwise adapted orthonormal frame: the first `n` vectors span D̃.
#[derive(Debug, Clone)]
pub struct Frame<S> {
    pub e: Vec<Vec<S>>,
    pub eps: Vec<f64>,
    pub n: usize,
}

impl<S: Scalar> Frame<S> {
    pub fn dim(&self) -> usize {
        self.e.len()
    }
    pub fn p(&self) -> usize {
        self.e.len() - self.n
    }
    pub fn values(&self) -> Frame<f64> {
        Frame {
            e: self.e.iter().map(|v| v.iter().map(|x| x.value()).collect()).collect(),
            eps: self.eps.clone(),
            n: self.n,
        }
    }
}

fn sign_text(eps: &[f64]) -> String {
    eps.iter().map(|e| if *e > 0.0 { "+" } else { "-" }).collect::<Vec<_>>().join(" ")
}

fn parse_signs(s: &str, line: usize) -> Result<Vec<f64>, StructureError> {
    s.split_whitespace()
        .flat_map(|w| w.chars())
        .filter(|c| !c.is_whitespace() && *c != ',')
        .map(|c| match c {
            '+' => Ok(1.0),
            '-' => Ok(-1.0),
            _ => Err(StructureError::Format { line, msg: format!("bad signature sign `{c}`") }),
        })
        .collect()
}

/// Split at commas that are not nested in parentheses or brackets.
fn split_top(s: &str, sep: char) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            c if c == sep && depth == 0 => {
                out.push(&s[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

fn const_expr(text: &str, params: &Params, line: usize) -> Result<f64, StructureError> {
    let names: BTreeSet<String> = params.keys().cloned().collect();
    let e = parse(text.trim(), 0, &names).map_err(|source| StructureError::Expr { line, source })?;
    e.eval::<f64>(&[], params).map_err(|source| StructureError::Expr { line, source })
}

impl ProductStructure {
    /// Parse a structure spec.
    pub fn load(text: &str) -> Result<Self, StructureError> {
        let mut name = String::from("unnamed");
        let mut dim = None;
        let mut n = None;
        let mut params = Params::new();
        let mut metric_src: Vec<(usize, usize, usize, String)> = Vec::new();
        let mut dtilde_src: Vec<(usize, usize, String)> = Vec::new();
        let mut domain_src = None;
        let mut sig_src = None;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap().trim();
            if body.is_empty() || (body.starts_with('[') && body.ends_with(']') && !body.contains('=')) {
                continue;
            }
            let (key, val) = body
                .split_once('=')
                .ok_or(StructureError::Format { line, msg: "expected `key = value`".into() })?;
            let key: Vec<&str> = key.split_whitespace().collect();
            let val = val.trim();
            let int = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| StructureError::Format { line, msg: format!("expected an index, got `{s}`") })
            };
            match key.as_slice() {
                ["name"] => name = val.to_string(),
                ["dim"] => dim = Some(int(val)?),
                ["dtilde_dim"] => n = Some(int(val)?),
                ["params"] => {
                    for item in split_top(val, ',') {
                        let (k, v) = item.split_once('=').ok_or(StructureError::Format {
                            line,
                            msg: format!("parameter `{}` needs `name = value`", item.trim()),
                        })?;
                        let k = k.trim().to_string();
                        if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                            return Err(StructureError::Format { line, msg: format!("bad parameter name `{k}`") });
                        }
                        if crate::expr::var_index(&k).is_some() || k == "pi" {
                            return Err(StructureError::Format { line, msg: format!("`{k}` is reserved") });
                        }
                        let v = const_expr(v, &params, line)?;
                        params.insert(k, v);
                    }
                }
                ["metric", i, j] => metric_src.push((line, int(i)?, int(j)?, val.to_string())),
                ["dtilde", k] => dtilde_src.push((line, int(k)?, val.to_string())),
                ["domain"] => domain_src = Some((line, val.to_string())),
                ["signature"] => sig_src = Some((line, val.to_string())),
                _ => {
                    return Err(StructureError::Format { line, msg: format!("unknown key `{}`", key.join(" ")) })
                }
            }
        }

        let dim = dim.ok_or(StructureError::Dimension("missing `dim`".into()))?;
        let n = n.ok_or(StructureError::Dimension("missing `dtilde_dim`".into()))?;
        if dim == 0 || dim > crate::jets::MAX_VARS {
            return Err(StructureError::Dimension(format!("dim {dim} outside 1..={}", crate::jets::MAX_VARS)));
        }
        if n == 0 || n >= dim {
            return Err(StructureError::Dimension(format!("dtilde_dim {n} must lie in 1..{dim}")));
        }
        let names: BTreeSet<String> = params.keys().cloned().collect();
        let px = |line: usize, s: &str| parse(s.trim(), dim, &names).map_err(|source| StructureError::Expr { line, source });

        let mut metric = vec![vec![Expr::Const(0.0); dim]; dim];
        let mut seen = BTreeSet::new();
        for (line, i, j, s) in metric_src {
            if i >= dim || j >= dim {
                return Err(StructureError::Dimension(format!("line {line}: metric index ({i},{j}) with dim {dim}")));
            }
            if i > j {
                return Err(StructureError::NonSymmetric(i, j));
            }
            if !seen.insert((i, j)) {
                return Err(StructureError::Format { line, msg: format!("metric ({i},{j}) declared twice") });
            }
            let e = px(line, &s)?;
            metric[i][j] = e.clone();
            metric[j][i] = e;
        }

        let mut dtilde: Vec<Option<Vec<Expr>>> = vec![None; n];
        for (line, k, s) in dtilde_src {
            if k >= n {
                return Err(StructureError::Dimension(format!("line {line}: dtilde {k} with dtilde_dim {n}")));
            }
            let comps = split_top(&s, ',');
            if comps.len() != dim {
                return Err(StructureError::Dimension(format!(
                    "line {line}: dtilde {k} has {} components, expected {dim}",
                    comps.len()
                )));
            }
            if dtilde[k].is_some() {
                return Err(StructureError::Format { line, msg: format!("dtilde {k} declared twice") });
            }
            dtilde[k] = Some(comps.iter().map(|c| px(line, c)).collect::<Result<_, _>>()?);
        }
        let dtilde: Vec<Vec<Expr>> = dtilde
            .into_iter()
            .enumerate()
            .map(|(k, v)| v.ok_or(StructureError::Dimension(format!("dtilde {k} missing"))))
            .collect::<Result<_, _>>()?;

        let (dline, dsrc) = domain_src.ok_or(StructureError::Dimension("missing `domain`".into()))?;
        let domain = intervals(&dsrc, &params, dline)?;
        if domain.len() != dim {
            return Err(StructureError::Dimension(format!("domain has {} intervals, expected {dim}", domain.len())));
        }

        let declared_signature = match sig_src {
            None => None,
            Some((line, s)) => {
                let (a, b) = s
                    .split_once('/')
                    .ok_or(StructureError::Format { line, msg: "signature needs `dtilde / complement`".into() })?;
                let (a, b) = (parse_signs(a, line)?, parse_signs(b, line)?);
                if a.len() != n || b.len() != dim - n {
                    return Err(StructureError::Dimension("signature length".into()));
                }
                Some((a, b))
            }
        };

        let s = ProductStructure {
            name,
            source: text.to_string(),
            dim,
            n,
            params,
            metric,
            dtilde,
            domain,
            declared_signature,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), StructureError> {
        let c = self.center();
        let frame = self.frame_at::<f64>(&c)?;
        if let Some((a, b)) = &self.declared_signature {
            if a[..] != frame.eps[..self.n] || b[..] != frame.eps[self.n..] {
                return Err(StructureError::SignatureMismatch {
                    declared: format!("{} / {}", sign_text(a), sign_text(b)),
                    inferred: format!("{} / {}", sign_text(&frame.eps[..self.n]), sign_text(&frame.eps[self.n..])),
                });
            }
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.dim - self.n
    }

    pub fn metric_expr(&self, i: usize, j: usize) -> &Expr {
        &self.metric[i][j]
    }

    pub fn dtilde_exprs(&self) -> &[Vec<Expr>] {
        &self.dtilde
    }

    /// Same metric with a different distinguished distribution.
    pub fn with_dtilde(&self, fields: Vec<Vec<Expr>>) -> Result<Self, StructureError> {
        if fields.is_empty() || fields.len() >= self.dim || fields.iter().any(|f| f.len() != self.dim) {
            return Err(StructureError::Dimension("bad spanning fields".into()));
        }
        let s = ProductStructure { n: fields.len(), dtilde: fields, declared_signature: None, ..self.clone() };
        s.validate()?;
        Ok(s)
    }

    /// Copy with some parameter values replaced.
    pub fn with_params(&self, values: &[(&str, f64)]) -> Self {
        let mut s = self.clone();
        for (k, v) in values {
            s.params.insert(k.to_string(), *v);
        }
        s
    }

    /// Copy with the domain replaced (must be non-empty per axis).
    pub fn with_domain(&self, domain: Vec<(f64, f64)>) -> Self {
        assert_eq!(domain.len(), self.dim);
        ProductStructure { domain, ..self.clone() }
    }

    pub fn center(&self) -> Vec<f64> {
        self.domain.iter().map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && x.iter().zip(&self.domain).all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn check_point(&self, x: &[f64]) -> Result<(), StructureError> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(StructureError::Domain { point: x.to_vec() })
        }
    }

    /// Deterministic random points in the box shrunk by `margin` (fraction per side).
    pub fn sample_points(&self, count: usize, seed: u64, margin: f64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                self.domain
                    .iter()
                    .map(|(a, b)| {
                        let w = b - a;
                        rng.gen_range(a + margin * w..=b - margin * w)
                    })
                    .collect()
            })
            .collect()
    }

    pub fn metric_at<S: Scalar>(&self, x: &[S]) -> Result<Mat<S>, ExprError> {
        let d = self.dim;
        let mut g = vec![vec![S::zero(); d]; d];
        for i in 0..d {
            for j in i..d {
                let v = self.metric[i][j].eval(x, &self.params)?;
                g[i][j] = v;
                g[j][i] = v;
            }
        }
        Ok(g)
    }

    pub fn dtilde_at<S: Scalar>(&self, x: &[S]) -> Result<Vec<Vec<S>>, ExprError> {
        self.dtilde
            .iter()
            .map(|f| f.iter().map(|c| c.eval(x, &self.params)).collect())
            .collect()
    }

    pub fn frame_at<S: Scalar>(&self, x: &[S]) -> Result<Frame<S>, StructureError> {
        let g = self.metric_at(x)?;
        let span = self.dtilde_at(x)?;
        adapted_frame(&g, &span).map_err(|what| StructureError::Degenerate {
            what,
            point: x.iter().map(|v| v.value()).collect(),
        })
    }

    /// Signs (ε_a; ε_i) at a point.
    pub fn signature(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), StructureError> {
        let f = self.frame_at::<f64>(x)?;
        Ok((f.eps[..self.n].to_vec(), f.eps[self.n..].to_vec()))
    }

    /// Signature checked for constancy over a sample set.
    pub fn stable_signature(&self, points: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>), StructureError> {
        let mut first: Option<(Vec<f64>, (Vec<f64>, Vec<f64>))> = None;
        for x in points {
            let s = self.signature(x)?;
            match &first {
                None => first = Some((x.clone(), s)),
                Some((x0, s0)) => {
                    if s0 != &s {
                        return Err(StructureError::SignatureInstability { a: x0.clone(), b: x.clone() });
                    }
                }
            }
        }
        first.map(|(_, s)| s).ok_or(StructureError::Dimension("no sample points".into()))
    }
}

fn euclid2<S: Scalar>(v: &[S]) -> f64 {
    v.iter().map(|x| x.value() * x.value()).sum()
}

/// Parses `[a, b] x [c, d] x ...`; bounds may use constants and parameters.
pub fn parse_box(text: &str, params: &Params) -> Result<Vec<(f64, f64)>, StructureError> {
    intervals(text, params, 0)
}

fn intervals(src: &str, params: &Params, line: usize) -> Result<Vec<(f64, f64)>, StructureError> {
    let mut out = Vec::new();
    for part in split_top(src, 'x') {
        let part = part.trim();
        let bad = |what: &str| StructureError::Format { line, msg: format!("{what} interval `{part}`") };
        let inner = part.strip_prefix('[').and_then(|p| p.strip_suffix(']')).ok_or_else(|| bad("bad"))?;
        let ab = split_top(inner, ',');
        if ab.len() != 2 {
            return Err(bad("bad"));
        }
        let (a, b) = (const_expr(ab[0], params, line)?, const_expr(ab[1], params, line)?);
        if !(a < b) {
            return Err(bad("empty"));
        }
        out.push((a, b));
    }
    Ok(out)
}


/// Pivoted indefinite Gram-Schmidt: the spanning fields in declared order,
/// then coordinate vectors projected to the complement, each step taking the
/// candidate with the largest normalized |g(w,w)|.
pub fn adapted_frame<S: Scalar>(g: &Mat<S>, span: &[Vec<S>]) -> Result<Frame<S>, String> {
    let d = g.len();
    let n = span.len();
    let scale = g.iter().flatten().fold(0.0f64, |m, x| m.max(x.value().abs()));
    if scale == 0.0 || !scale.is_finite() {
        return Err("metric".into());
    }
    let mut e: Vec<Vec<S>> = Vec::with_capacity(d);
    let mut eps: Vec<f64> = Vec::with_capacity(d);

    let project = |v: &[S], e: &[Vec<S>], eps: &[f64]| -> Vec<S> {
        let mut w = v.to_vec();
        for (b, eb) in e.iter().enumerate() {
            let c = inner(g, &w, eb).scale(eps[b]);
            for (wk, ek) in w.iter_mut().zip(eb) {
                *wk -= c * *ek;
            }
        }
        w
    };
    let normalize = |w: Vec<S>, q: S| -> (Vec<S>, f64) {
        let s = if q.value() > 0.0 { 1.0 } else { -1.0 };
        let r = q.scale(s).sqrt().recip();
        (w.into_iter().map(|x| x * r).collect(), s)
    };

    for v in span {
        let w = project(v, &e, &eps);
        let (wn, vn) = (euclid2(&w), euclid2(v));
        if vn == 0.0 || wn <= (DEGENERACY_TOL * DEGENERACY_TOL) * vn {
            return Err("distribution: spanning fields are linearly dependent".into());
        }
        let q = inner(g, &w, &w);
        if q.value().abs() <= DEGENERACY_TOL * scale * wn {
            return Err("distribution: induced metric is degenerate".into());
        }
        let (u, s) = normalize(w, q);
        e.push(u);
        eps.push(s);
    }

    let mut used = vec![false; d];
    for _ in n..d {
        let mut best: Option<(usize, f64, Vec<S>, S)> = None;
        for mu in 0..d {
            if used[mu] {
                continue;
            }
            let mut v = vec![S::zero(); d];
            v[mu] = S::one();
            let w = project(&v, &e, &eps);
            let wn = euclid2(&w);
            if wn <= DEGENERACY_TOL * DEGENERACY_TOL {
                continue;
            }
            let q = inner(g, &w, &w);
            let score = q.value().abs() / (scale * wn);
            if best.as_ref().is_none_or(|b| score > b.1) {
                best = Some((mu, score, w, q));
            }
        }
        match best {
            Some((mu, score, w, q)) if score > DEGENERACY_TOL => {
                used[mu] = true;
                let (u, s) = normalize(w, q);
                e.push(u);
                eps.push(s);
            }
            _ => return Err("complement: no non-null candidate left".into()),
        }
    }
    Ok(Frame { e, eps, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::seed_dual;

    const CONTACT: &str = "name = r3\ndim = 3\ndtilde_dim = 1\n\
        metric 0 0 = (1 + x1^2 + x2^2)/4\nmetric 0 1 = x2/4\nmetric 0 2 = -x1/4\n\
        metric 1 1 = 1/4\nmetric 2 2 = 1/4\ndtilde 0 = 0, 0, 2\n\
        domain = [-1,1] x [-1,1] x [-1,1]\nsignature = + / + +\n";

    fn check_frame(g: &Mat<f64>, f: &Frame<f64>, tol: f64) {
        for a in 0..f.dim() {
            for b in 0..f.dim() {
                let v = inner(g, &f.e[a], &f.e[b]);
                let want = if a == b { f.eps[a] } else { 0.0 };
                assert!((v - want).abs() < tol, "g(e{a},e{b}) = {v}");
            }
        }
    }

    #[test]
    fn loads_contact_example() {
        let s = ProductStructure::load(CONTACT).unwrap();
        assert_eq!((s.dim, s.n), (3, 1));
        let g = s.metric_at(&[0.0, 0.0, 0.0]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g[i][j], if i == j { 0.25 } else { 0.0 });
            }
        }
        let x = [0.0, 1.0, 2.0];
        let f = s.frame_at(&x).unwrap();
        check_frame(&s.metric_at(&x).unwrap(), &f, 1e-12);
        // ξ = 2∂_z is unit here
        assert!((f.e[0][2] - 2.0).abs() < 1e-14 && f.e[0][0].abs() < 1e-14 && f.e[0][1].abs() < 1e-14);
        assert_eq!(s.signature(&x).unwrap(), (vec![1.0], vec![1.0, 1.0]));
    }

    #[test]
    fn flat_product_frame_is_coordinate_basis() {
        let s = ProductStructure::load(
            "dim = 3\ndtilde_dim = 1\nmetric 0 0 = 1\nmetric 1 1 = 1\nmetric 2 2 = 1\n\
             dtilde 0 = 1, 0, 0\ndomain = [0,1] x [0,1] x [0,1]",
        )
        .unwrap();
        let f = s.frame_at(&[0.3, 0.2, 0.1]).unwrap();
        for a in 0..3 {
            for m in 0..3 {
                assert_eq!(f.e[a][m], if a == m { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn lorentzian_two_by_two() {
        let s = ProductStructure::load(
            "dim = 2\ndtilde_dim = 1\nmetric 0 0 = -1\nmetric 1 1 = 1\n\
             dtilde 0 = 1, 0.5\ndomain = [0,1] x [0,1]",
        )
        .unwrap();
        let f = s.frame_at(&[0.5, 0.5]).unwrap();
        assert_eq!(f.eps, vec![-1.0, 1.0]);
        // closed form: v = (1, 1/2), g(v,v) = -3/4, complement (1/2, 1) with g = 3/4
        let k = (0.75f64).sqrt();
        assert!((f.e[0][0] - 1.0 / k).abs() < 1e-12 && (f.e[0][1] - 0.5 / k).abs() < 1e-12);
        assert!((f.e[1][0] - 0.5 / k).abs() < 1e-12 && (f.e[1][1] - 1.0 / k).abs() < 1e-12);
        check_frame(&s.metric_at(&[0.5, 0.5]).unwrap(), &f, 1e-12);
    }

    #[test]
    fn validation_errors() {
        let bad_var = CONTACT.replace("metric 1 1 = 1/4", "metric 1 1 = x9");
        assert!(matches!(
            ProductStructure::load(&bad_var),
            Err(StructureError::Expr { source: ExprError::Name { .. }, .. })
        ));
        let lower = CONTACT.replace("metric 0 1", "metric 1 0");
        assert_eq!(ProductStructure::load(&lower).unwrap_err(), StructureError::NonSymmetric(1, 0));
        let sig = CONTACT.replace("signature = + / + +", "signature = - / + +");
        assert!(matches!(ProductStructure::load(&sig), Err(StructureError::SignatureMismatch { .. })));
        let dimbad = CONTACT.replace("dtilde 0 = 0, 0, 2", "dtilde 0 = 0, 2");
        assert!(matches!(ProductStructure::load(&dimbad), Err(StructureError::Dimension(_))));
        let null = "dim = 2\ndtilde_dim = 1\nmetric 0 0 = -1\nmetric 1 1 = 1\n\
             dtilde 0 = 1, 1\ndomain = [0,1] x [0,1]";
        assert!(matches!(ProductStructure::load(null), Err(StructureError::Degenerate { .. })));
    }

    #[test]
    fn frame_invariants_at_many_points() {
        let s = ProductStructure::load(CONTACT).unwrap();
        for x in s.sample_points(1000, 7, 0.0) {
            check_frame(&s.metric_at(&x).unwrap(), &s.frame_at(&x).unwrap(), 1e-10);
        }
        s.stable_signature(&s.sample_points(50, 1, 0.0)).unwrap();
    }

    #[test]
    fn frame_jets_match_finite_differences() {
        let s = ProductStructure::load(CONTACT).unwrap();
        let x = [0.31, -0.42, 0.17];
        let f = s.frame_at(&seed_dual(&x)).unwrap();
        for mu in 0..3 {
            let h = 1e-5;
            let mut xp = x;
            let mut xm = x;
            xp[mu] += h;
            xm[mu] -= h;
            let (fp, fm) = (s.frame_at(&xp).unwrap(), s.frame_at(&xm).unwrap());
            for a in 0..3 {
                for k in 0..3 {
                    let fd = (fp.e[a][k] - fm.e[a][k]) / (2.0 * h);
                    assert!((fd - f.e[a][k].d[mu]).abs() < 1e-8, "{a} {k} {mu}");
                }
            }
        }
    }

    #[test]
    fn boxes_parse_with_parameters() {
        let mut params = Params::new();
        params.insert("a".into(), 2.0);
        assert_eq!(parse_box("[-1, a] x [0, pi]", &params).unwrap(), vec![(-1.0, 2.0), (0.0, std::f64::consts::PI)]);
        assert!(parse_box("[1, 0]", &params).is_err());
        assert!(parse_box("[0, 1, 2]", &params).is_err());
        assert!(parse_box("(0, 1)", &params).is_err());
    }
}
