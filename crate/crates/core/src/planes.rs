//! Affine k-planes in the complex torus: builders, the reality test, exact
//! expected fiber counts, and the closed-form volume certificate.
//!
//! A plane is parametrized as z = (t_1..t_k, f_1(t)..f_s(t)) with
//! f_j(t) = b_j + sum_i a_ji t_i. Real planes in (C*)^{2k} have Log fibers
//! of 2^k points, Arg fibers of one point, amoeba volume pi^{2k}/2^k, and
//! coamoeba volume pi^{2k}.

use crate::expr::ComplexExpr;
use crate::measure::{self, SamplerMode, VolumeEstimate, VolumeTarget};
use crate::variety::{ExclusionDisc, SpecError, VarRect, VarietySpec};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlaneError {
    #[error("b must have s = {s} entries, got {got}")]
    OffsetCount { s: usize, got: usize },
    #[error("a must be an s x k = {s} x {k} matrix")]
    CoefficientShape { s: usize, k: usize },
    #[error("row {0} of the plane is identically zero")]
    ZeroRow(usize),
    #[error("the volume certificate needs a real plane")]
    NotReal,
    #[error("the volume certificate needs s = k (ambient dimension 2k), got s = {s}, k = {k}")]
    WrongCodimension { s: usize, k: usize },
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("volume estimation failed: {0}")]
    Measure(#[from] measure::MeasureError),
}

/// Affine k-plane in (C*)^{k+s}.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePlaneSpec {
    pub k: usize,
    pub s: usize,
    /// Offsets b_j, one per extra coordinate.
    pub b: Vec<Complex64>,
    /// Coefficients a[j][i] of t_i in f_j.
    pub a: Vec<Vec<Complex64>>,
    /// f_1 = 1 + sum t_i.
    pub normalized: bool,
}

impl AffinePlaneSpec {
    pub fn new(
        k: usize,
        s: usize,
        b: Vec<Complex64>,
        a: Vec<Vec<Complex64>>,
    ) -> Result<Self, PlaneError> {
        if b.len() != s {
            return Err(PlaneError::OffsetCount { s, got: b.len() });
        }
        if a.len() != s || a.iter().any(|row| row.len() != k) {
            return Err(PlaneError::CoefficientShape { s, k });
        }
        for (j, row) in a.iter().enumerate() {
            if b[j] == Complex64::new(0.0, 0.0)
                && row.iter().all(|c| *c == Complex64::new(0.0, 0.0))
            {
                return Err(PlaneError::ZeroRow(j));
            }
        }
        let one = Complex64::new(1.0, 0.0);
        let normalized = b.first() == Some(&one) && a[0].iter().all(|c| *c == one);
        Ok(Self {
            k,
            s,
            b,
            a,
            normalized,
        })
    }

    /// The normalized plane f_1 = 1 + sum t_i plus the given extra rows.
    pub fn normalized(
        k: usize,
        extra_b: Vec<Complex64>,
        extra_a: Vec<Vec<Complex64>>,
    ) -> Result<Self, PlaneError> {
        let one = Complex64::new(1.0, 0.0);
        let mut b = vec![one];
        b.extend(extra_b);
        let mut a = vec![vec![one; k]];
        a.extend(extra_a);
        let s = b.len();
        Self::new(k, s, b, a)
    }

    pub fn n(&self) -> usize {
        self.k + self.s
    }

    /// Build the variety z = (t, f(t)) with exclusion discs around the
    /// zeros of each f_j restricted to the coordinate lines.
    pub fn to_variety(&self, domain_half_width: f64) -> Result<VarietySpec, PlaneError> {
        let k = self.k;
        let mut components = Vec::with_capacity(self.n());
        for i in 0..k {
            components.push(ComplexExpr::Var(i));
        }
        for j in 0..self.s {
            let mut e = ComplexExpr::Literal(self.b[j]);
            for (i, coeff) in self.a[j].iter().enumerate() {
                if *coeff == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let term = if *coeff == Complex64::new(1.0, 0.0) {
                    ComplexExpr::Var(i)
                } else {
                    ComplexExpr::Mul(
                        Box::new(ComplexExpr::Literal(*coeff)),
                        Box::new(ComplexExpr::Var(i)),
                    )
                };
                e = ComplexExpr::Add(Box::new(e), Box::new(term));
            }
            components.push(e);
        }
        let mut exclusions = Vec::new();
        for j in 0..self.s {
            for i in 0..k {
                let c = self.a[j][i];
                if c != Complex64::new(0.0, 0.0) {
                    exclusions.push(ExclusionDisc {
                        var: i,
                        center: -self.b[j] / c,
                        radius: 1e-9,
                    });
                }
            }
        }
        let domain = vec![VarRect::centered(domain_half_width); k];
        let mut tags = vec!["algebraic".to_string(), "plane".to_string()];
        if self.is_real().real {
            tags.push("real".to_string());
        }
        Ok(VarietySpec::new(k, components, domain, exclusions)?.with_tags(tags))
    }

    /// Reality test with per-row unit witnesses: the plane is real when every
    /// row becomes real after division by a common unit scalar.
    pub fn is_real(&self) -> RealityReport {
        let tol = 1e-9;
        let mut witnesses = Vec::with_capacity(self.s);
        for j in 0..self.s {
            let mut entries: Vec<Complex64> = Vec::with_capacity(self.k + 1);
            if self.b[j].norm() > 0.0 {
                entries.push(self.b[j]);
            }
            entries.extend(self.a[j].iter().copied().filter(|c| c.norm() > 0.0));
            let phase = entries[0].arg();
            for e in &entries {
                // All phases must agree modulo pi.
                let d = (e.arg() - phase).rem_euclid(PI);
                if d.min(PI - d) > tol {
                    return RealityReport {
                        real: false,
                        witnesses: Vec::new(),
                        failing_row: Some(j),
                    };
                }
            }
            witnesses.push(Complex64::from_polar(1.0, -phase));
        }
        RealityReport {
            real: true,
            witnesses,
            failing_row: None,
        }
    }

    /// Expected fiber cardinalities over regular values.
    pub fn expected_counts(&self) -> ExpectedCounts {
        let real = self.is_real().real;
        let log = if self.k == 1 {
            // Two conjugate preimages when the line is real, else one.
            CountClaim::Known(if real { 2 } else { 1 })
        } else if self.s == self.k && real {
            CountClaim::Known(1u32 << self.k)
        } else {
            CountClaim::Unknown
        };
        ExpectedCounts { arg: 1, log }
    }

    /// Numerical genericity: all square submatrices of [I_k; a] well
    /// conditioned.
    pub fn is_generic(&self, cond_limit: f64) -> bool {
        let n = self.n();
        let k = self.k;
        let mut rows = vec![vec![Complex64::new(0.0, 0.0); k]; n];
        for (i, row) in rows.iter_mut().enumerate().take(k) {
            row[i] = Complex64::new(1.0, 0.0);
        }
        for j in 0..self.s {
            rows[k + j] = self.a[j].clone();
        }
        // Every k-subset of rows must be invertible with bounded condition
        // number; realify to a 2k x 2k matrix per subset.
        let sets = k_subsets(n, k);
        for set in sets {
            let mut m = DMatrix::zeros(2 * k, 2 * k);
            for (r, &i) in set.iter().enumerate() {
                for c in 0..k {
                    let z = rows[i][c];
                    m[(r, c)] = z.re;
                    m[(r, k + c)] = -z.im;
                    m[(k + r, c)] = z.im;
                    m[(k + r, k + c)] = z.re;
                }
            }
            let svd = m.svd(false, false);
            let max = svd.singular_values.max();
            let min = svd.singular_values.min();
            if min <= 0.0 || max / min > cond_limit {
                return false;
            }
        }
        true
    }

    /// Monte Carlo certificate of the closed-form amoeba and coamoeba
    /// volumes of a real k-plane in (C*)^{2k}.
    pub fn volume_certificate(
        &self,
        samples: u64,
        seed: u64,
    ) -> Result<VolumeCertificate, PlaneError> {
        if !self.is_real().real {
            return Err(PlaneError::NotReal);
        }
        if self.s != self.k {
            return Err(PlaneError::WrongCodimension {
                s: self.s,
                k: self.k,
            });
        }
        // Truncation tails of the pullback integral decay like 1/R; these
        // boxes keep the tail bias a fraction of the Monte Carlo error.
        let half_width = if self.k == 1 { 400.0 } else { 60.0 };
        let spec = self
            .to_variety(half_width)?
            .with_multiplicities(Some(1u32 << self.k), Some(1));
        let amoeba = measure::integrate_pullback(
            &spec,
            VolumeTarget::Amoeba,
            samples,
            seed,
            &spec.domain,
            SamplerMode::PoleAware,
        )?;
        let coamoeba = measure::integrate_pullback(
            &spec,
            VolumeTarget::Coamoeba,
            samples,
            seed.wrapping_add(1),
            &spec.domain,
            SamplerMode::PoleAware,
        )?;
        let target_amoeba = PI.powi(2 * self.k as i32) / 2f64.powi(self.k as i32);
        let target_coamoeba = PI.powi(2 * self.k as i32);
        let amoeba_margin_sigma = (amoeba.value - target_amoeba).abs() / amoeba.stderr;
        let coamoeba_margin_sigma = (coamoeba.value - target_coamoeba).abs() / coamoeba.stderr;
        Ok(VolumeCertificate {
            amoeba_pass: amoeba_margin_sigma <= 3.0,
            coamoeba_pass: coamoeba_margin_sigma <= 3.0,
            target_amoeba,
            target_coamoeba,
            amoeba_margin_sigma,
            coamoeba_margin_sigma,
            amoeba,
            coamoeba,
        })
    }
}

fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RealityReport {
    pub real: bool,
    /// Per-row unit scalars that make the coefficients real.
    #[serde(skip)]
    pub witnesses: Vec<Complex64>,
    pub failing_row: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountClaim {
    Known(u32),
    /// Configuration outside the proven cases; no extrapolation.
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedCounts {
    pub arg: u32,
    pub log: CountClaim,
}

/// Result of `volume_certificate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolumeCertificate {
    pub amoeba: VolumeEstimate,
    pub coamoeba: VolumeEstimate,
    pub target_amoeba: f64,
    pub target_coamoeba: f64,
    pub amoeba_margin_sigma: f64,
    pub coamoeba_margin_sigma: f64,
    pub amoeba_pass: bool,
    pub coamoeba_pass: bool,
}
