//! Sparse multivariate polynomials with real coefficients.
//!
//! Terms are kept in canonical form: exponent vectors are unique and sorted
//! lexicographically, and exact-zero coefficients are dropped. Evaluation
//! sums terms in that canonical order, so two polynomials built from permuted
//! term lists evaluate bit-identically.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    arity: usize,
    /// Row-major exponent table, `arity` entries per term.
    exponents: Vec<u32>,
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// Builds a polynomial from `(exponents, coefficient)` pairs, merging
    /// duplicate monomials.
    pub fn new<I>(arity: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        let mut merged: BTreeMap<Vec<u32>, Vec<f64>> = BTreeMap::new();
        for (exps, c) in terms {
            check_dim(arity, exps.len(), "polynomial term exponents")?;
            if !c.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "non-finite polynomial coefficient {c}"
                )));
            }
            merged.entry(exps).or_default().push(c);
        }
        let mut exponents = Vec::with_capacity(merged.len() * arity);
        let mut coeffs = Vec::with_capacity(merged.len());
        for (exps, mut parts) in merged {
            // duplicate coefficients are summed in sorted order so the result
            // does not depend on the input order
            parts.sort_by(f64::total_cmp);
            let c: f64 = parts.iter().sum();
            if c != 0.0 {
                exponents.extend_from_slice(&exps);
                coeffs.push(c);
            }
        }
        Ok(Self {
            arity,
            exponents,
            coeffs,
        })
    }

    pub fn zero(arity: usize) -> Self {
        Self {
            arity,
            exponents: Vec::new(),
            coeffs: Vec::new(),
        }
    }

    pub fn constant(arity: usize, c: f64) -> Self {
        Self::new(arity, [(vec![0; arity], c)]).expect("constant term is well-formed")
    }

    /// The coordinate polynomial `z_index`.
    pub fn variable(arity: usize, index: usize) -> Self {
        assert!(index < arity, "variable index {index} out of range");
        let mut e = vec![0; arity];
        e[index] = 1;
        Self::new(arity, [(e, 1.0)]).expect("monomial is well-formed")
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn num_terms(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(k, &c)| (&self.exponents[k * self.arity..(k + 1) * self.arity], c))
    }

    pub fn degree(&self) -> u32 {
        self.terms()
            .map(|(e, _)| e.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        check_dim(self.arity, point.len(), "polynomial evaluation point")?;
        Ok(self.eval_unchecked(point))
    }

    /// Evaluation without the arity check; `point` must have `arity` entries.
    #[inline]
    pub fn eval_unchecked(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.arity);
        let mut acc = 0.0;
        for (k, &c) in self.coeffs.iter().enumerate() {
            let exps = &self.exponents[k * self.arity..(k + 1) * self.arity];
            let mut prod = c;
            for (x, &e) in point.iter().zip(exps) {
                match e {
                    0 => {}
                    1 => prod *= x,
                    2 => prod *= x * x,
                    _ => prod *= x.powi(e as i32),
                }
            }
            acc += prod;
        }
        acc
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dim(self.arity, other.arity, "polynomial addition")?;
        let terms = self
            .terms()
            .chain(other.terms())
            .map(|(e, c)| (e.to_vec(), c));
        Self::new(self.arity, terms)
    }

    pub fn scale(&self, factor: f64) -> Self {
        let terms = self.terms().map(|(e, c)| (e.to_vec(), c * factor));
        Self::new(self.arity, terms).expect("scaling keeps terms well-formed")
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        check_dim(self.arity, other.arity, "polynomial multiplication")?;
        let mut terms = Vec::with_capacity(self.num_terms() * other.num_terms());
        for (ea, ca) in self.terms() {
            for (eb, cb) in other.terms() {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                terms.push((e, ca * cb));
            }
        }
        Self::new(self.arity, terms)
    }

    /// Re-expresses the polynomial over a larger variable set: variable `i`
    /// of `self` becomes variable `mapping[i]` of the result.
    pub fn embed(&self, new_arity: usize, mapping: &[usize]) -> Result<Self> {
        check_dim(self.arity, mapping.len(), "embedding map")?;
        if let Some(&bad) = mapping.iter().find(|&&m| m >= new_arity) {
            return Err(Error::Argument(format!(
                "embedding target {bad} exceeds arity {new_arity}"
            )));
        }
        let terms = self.terms().map(|(e, c)| {
            let mut ne = vec![0u32; new_arity];
            for (i, &ei) in e.iter().enumerate() {
                ne[mapping[i]] += ei;
            }
            (ne, c)
        });
        Self::new(new_arity, terms)
    }

    /// Substitutes a univariate polynomial's variable by `inner`:
    /// returns `p(inner(z))` where `self` has arity 1.
    pub fn compose_univariate(&self, inner: &Self) -> Result<Self> {
        check_dim(1, self.arity, "univariate composition")?;
        let deg = self.degree();
        let mut coeff_by_power = vec![0.0; deg as usize + 1];
        for (e, c) in self.terms() {
            coeff_by_power[e[0] as usize] += c;
        }
        // Horner over polynomials.
        let mut acc = Self::zero(inner.arity);
        for &c in coeff_by_power.iter().rev() {
            acc = acc.mul(inner)?.add(&Self::constant(inner.arity, c))?;
        }
        Ok(acc)
    }

    /// Parses the line-oriented term format: each non-blank line holds the
    /// exponent tuple followed by the coefficient, e.g. `2 0 1  -0.5` or
    /// `(2, 0, 1) -0.5`. Lines starting with `#` are comments.
    pub fn parse_terms(text: &str) -> Result<Self> {
        let mut arity = None;
        let mut terms = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cleaned: String = line
                .chars()
                .map(|ch| match ch {
                    '(' | ')' | ',' | ':' | ';' => ' ',
                    other => other,
                })
                .collect();
            let tokens: Vec<&str> = cleaned.split_whitespace().collect();
            if tokens.len() < 2 {
                return Err(Error::Config(format!(
                    "line {}: expected exponents followed by a coefficient",
                    lineno + 1
                )));
            }
            let (exp_tokens, coeff_token) = tokens.split_at(tokens.len() - 1);
            let exps = exp_tokens
                .iter()
                .map(|t| t.parse::<u32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Config(format!("line {}: bad exponent: {e}", lineno + 1)))?;
            let coeff: f64 = coeff_token[0]
                .parse()
                .map_err(|e| Error::Config(format!("line {}: bad coefficient: {e}", lineno + 1)))?;
            match arity {
                None => arity = Some(exps.len()),
                Some(a) if a != exps.len() => {
                    return Err(Error::Config(format!(
                        "line {}: term has {} exponents, expected {a}",
                        lineno + 1,
                        exps.len()
                    )))
                }
                _ => {}
            }
            terms.push((exps, coeff));
        }
        let arity =
            arity.ok_or_else(|| Error::Config("polynomial text contains no terms".into()))?;
        Self::new(arity, terms)
    }

    /// Writes the term format accepted by [`Polynomial::parse_terms`].
    pub fn to_terms_text(&self) -> String {
        let mut out = String::new();
        for (e, c) in self.terms() {
            let exps: Vec<String> = e.iter().map(u32::to_string).collect();
            out.push_str(&exps.join(" "));
            out.push(' ');
            out.push_str(&format!("{c:e}"));
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (k, (e, c)) in self.terms().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}")?;
            for (i, &ei) in e.iter().enumerate() {
                match ei {
                    0 => {}
                    1 => write!(f, "*z{i}")?,
                    _ => write!(f, "*z{i}^{ei}")?,
                }
            }
        }
        Ok(())
    }
}
