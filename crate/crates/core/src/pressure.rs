//! Power-law pressure p(r) = m/(m−1)·r^{m−1} and its bounded C³ cutoff p_λ.
//!
//! p_λ equals p(λ) below λ, p on [2λ, 1/λ] and p(2/λ) above 2/λ. The two
//! gaps are bridged by degree-7 Hermite polynomials matching value and the
//! first three derivatives at both ends; construction rejects any (m, λ)
//! whose bridges are not monotone.

use nalgebra::{Matrix4, Vector4};

use crate::error::{KsError, Result};

/// Samples per bridge in the monotonicity audit.
const AUDIT_SAMPLES: usize = 4000;

fn check(r: f64, m: f64) -> Result<()> {
    if !(m > 1.0) {
        return Err(KsError::Domain(format!("pressure exponent m={m} must exceed 1")));
    }
    if !(r >= 0.0) {
        return Err(KsError::Domain(format!("density r={r} must be ≥ 0")));
    }
    Ok(())
}

#[inline]
fn p_raw(r: f64, m: f64) -> f64 {
    m / (m - 1.0) * r.powf(m - 1.0)
}

/// p and its first three derivatives at r > 0.
fn p_jet(r: f64, m: f64) -> [f64; 4] {
    [
        p_raw(r, m),
        m * r.powf(m - 2.0),
        m * (m - 2.0) * r.powf(m - 3.0),
        m * (m - 2.0) * (m - 3.0) * r.powf(m - 4.0),
    ]
}

pub fn p_eval(r: f64, m: f64) -> Result<f64> {
    check(r, m)?;
    Ok(p_raw(r, m))
}

/// p'(r) = m·r^{m−2}.
pub fn p_prime(r: f64, m: f64) -> Result<f64> {
    check(r, m)?;
    Ok(m * r.powf(m - 2.0))
}

/// Degree-7 polynomial in t = (r − a)/(b − a) between a and b (b may lie
/// below a).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Bridge {
    a: f64,
    width: f64,
    coef: [f64; 8],
}

impl Bridge {
    /// Matches the r-derivative jets `left` at a and `right` at b.
    fn hermite(a: f64, b: f64, left: [f64; 4], right: [f64; 4]) -> Self {
        let w = b - a;
        let mut coef = [0.0; 8];
        let fact = [1.0, 1.0, 2.0, 6.0];
        for j in 0..4 {
            coef[j] = left[j] * w.powi(j as i32) / fact[j];
        }
        // Unknowns c4..c7 from the j-th t-derivative at t = 1.
        let falling = |k: usize, j: usize| (0..j).map(|i| (k - i) as f64).product::<f64>();
        let mut mat = Matrix4::zeros();
        let mut rhs = Vector4::zeros();
        for j in 0..4 {
            let known: f64 = (j..4).map(|k| coef[k] * falling(k, j)).sum();
            rhs[j] = right[j] * w.powi(j as i32) - known;
            for k in 4..8 {
                mat[(j, k - 4)] = falling(k, j);
            }
        }
        let sol = mat.lu().solve(&rhs).expect("Hermite system is nonsingular");
        coef[4..8].copy_from_slice(sol.as_slice());
        Self { a, width: w, coef }
    }

    #[inline]
    fn value(&self, r: f64) -> f64 {
        let t = (r - self.a) / self.width;
        self.coef.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    #[inline]
    fn derivative(&self, r: f64) -> f64 {
        let t = (r - self.a) / self.width;
        let mut acc = 0.0;
        for k in (1..8).rev() {
            acc = acc * t + k as f64 * self.coef[k];
        }
        acc / self.width
    }
}

/// p or its cutoff p_λ (λ = 0 means no cutoff).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureLaw {
    m: f64,
    lambda: f64,
    bridges: Option<[Bridge; 2]>,
}

impl PressureLaw {
    /// The uncut law p.
    pub fn power(m: f64) -> Result<Self> {
        check(0.0, m)?;
        Ok(Self { m, lambda: 0.0, bridges: None })
    }

    /// p_λ; fails if λ ∉ (0, 1/√2) or a bridge is not monotone.
    pub fn cutoff(m: f64, lambda: f64) -> Result<Self> {
        check(0.0, m)?;
        if !(lambda > 0.0 && 2.0 * lambda < 1.0 / lambda) {
            return Err(KsError::Domain(format!("cutoff λ={lambda} needs 0 < λ < 1/√2")));
        }
        let flat = |r: f64| [p_raw(r, m), 0.0, 0.0, 0.0];
        let lo = Bridge::hermite(lambda, 2.0 * lambda, flat(lambda), p_jet(2.0 * lambda, m));
        // anchored at the flat end, so Horner's rule does not cancel there
        let hi = Bridge::hermite(2.0 / lambda, 1.0 / lambda, flat(2.0 / lambda), p_jet(1.0 / lambda, m));
        let law = Self { m, lambda, bridges: Some([lo, hi]) };
        law.audit()?;
        Ok(law)
    }

    /// p_λ when λ > 0, else p.
    pub fn new(m: f64, lambda: f64) -> Result<Self> {
        if lambda == 0.0 {
            Self::power(m)
        } else {
            Self::cutoff(m, lambda)
        }
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Dense-sample check that p_λ' ≥ 0 on both bridges.
    fn audit(&self) -> Result<()> {
        let Some(bridges) = &self.bridges else { return Ok(()) };
        for b in bridges {
            let scale = b.derivative(b.a).abs().max(b.derivative(b.a + b.width).abs()).max(1.0);
            for k in 0..=AUDIT_SAMPLES {
                let r = b.a + b.width * k as f64 / AUDIT_SAMPLES as f64;
                if b.derivative(r) < -1e-12 * scale {
                    return Err(KsError::Domain(format!(
                        "pressure cutoff (m={}, λ={}) is not monotone near r={r}",
                        self.m, self.lambda
                    )));
                }
            }
        }
        Ok(())
    }

    /// p_λ(r). Negative arguments are treated as 0.
    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        let Some([lo, hi]) = &self.bridges else {
            return p_raw(r.max(0.0), self.m);
        };
        let l = self.lambda;
        if r <= l {
            p_raw(l, self.m)
        } else if r < 2.0 * l {
            lo.value(r)
        } else if r <= 1.0 / l {
            p_raw(r, self.m)
        } else if r < 2.0 / l {
            hi.value(r)
        } else {
            p_raw(2.0 / l, self.m)
        }
    }

    /// p_λ'(r), identically 0 on both plateaus.
    #[inline]
    pub fn derivative(&self, r: f64) -> f64 {
        let Some([lo, hi]) = &self.bridges else {
            return self.m * r.max(0.0).powf(self.m - 2.0);
        };
        let l = self.lambda;
        if r <= l || r >= 2.0 / l {
            0.0
        } else if r < 2.0 * l {
            lo.derivative(r)
        } else if r <= 1.0 / l {
            self.m * r.powf(self.m - 2.0)
        } else {
            hi.derivative(r)
        }
    }

    /// The four junctions λ, 2λ, 1/λ, 2/λ (empty without cutoff).
    pub fn junctions(&self) -> Vec<f64> {
        if self.bridges.is_none() {
            return Vec::new();
        }
        let l = self.lambda;
        vec![l, 2.0 * l, 1.0 / l, 2.0 / l]
    }
}

pub fn p_lambda_eval(r: f64, law: &PressureLaw) -> Result<f64> {
    check(r, law.m)?;
    Ok(law.value(r))
}

pub fn p_lambda_prime(r: f64, law: &PressureLaw) -> Result<f64> {
    check(r, law.m)?;
    Ok(law.derivative(r))
}
