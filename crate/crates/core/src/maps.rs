//! The Log, Arg, and Bergman retraction maps, plus the pullback density
//! that all volume computations integrate.
//!
//! For a parametrization t -> z(t) with holomorphic rows w_i = dz_i / z_i,
//! realifying t_j = x_j + i y_j gives per-coordinate real rows
//!
//!   Log row i: (Re w_i1 .. Re w_ik, -Im w_i1 .. -Im w_ik)
//!   Arg row i: (Im w_i1 .. Im w_ik,  Re w_i1 ..  Re w_ik)
//!
//! and the generalized Jacobian sqrt(sum of squared 2k x 2k minors) is the
//! volume-distortion factor of t -> Log(z(t)) (resp. Arg) from parameter
//! Lebesgue measure. The Log and Arg factors agree minor by minor.

use crate::expr::Jet;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("coordinate {index} is zero; Log/Arg undefined")]
    ZeroCoordinate { index: usize },
    #[error("need 2k <= n for the pullback density (k={k}, n={n})")]
    DimensionMismatch { k: usize, n: usize },
}

/// Point on the real n-torus, each angle reduced into [0, 2pi).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub angles: Vec<f64>,
}

/// Log-modulus image point in R^n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogPoint {
    pub coords: Vec<f64>,
}

/// Log and Arg volume-distortion factors at one parameter point.
#[derive(Debug, Clone)]
pub struct DensitySample {
    pub t: Vec<Complex64>,
    pub gen_jac_log: f64,
    pub gen_jac_arg: f64,
}

impl DensitySample {
    /// Relative Log/Arg deviation; zero up to rounding by the Jacobian identity.
    pub fn identity_deviation(&self) -> f64 {
        (self.gen_jac_log - self.gen_jac_arg).abs() / (1.0 + self.gen_jac_log)
    }
}

/// Reduce an angle into [0, 2pi).
#[inline]
pub fn reduce_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Coordinatewise log-modulus map.
pub fn log_map(z: &[Complex64]) -> Result<LogPoint, MapError> {
    let mut coords = Vec::with_capacity(z.len());
    for (i, zi) in z.iter().enumerate() {
        let m = zi.norm();
        if m == 0.0 {
            return Err(MapError::ZeroCoordinate { index: i });
        }
        coords.push(m.ln());
    }
    Ok(LogPoint { coords })
}

/// Coordinatewise argument map into [0, 2pi)^n.
pub fn arg_map(z: &[Complex64]) -> Result<TorusPoint, MapError> {
    let mut angles = Vec::with_capacity(z.len());
    for (i, zi) in z.iter().enumerate() {
        if zi.norm() == 0.0 {
            return Err(MapError::ZeroCoordinate { index: i });
        }
        angles.push(reduce_angle(zi.arg()));
    }
    Ok(TorusPoint { angles })
}

/// Bergman retraction r(x) = x / (1 + |x|) into the open unit ball.
pub fn bergman_r(x: &[f64]) -> Vec<f64> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter().map(|v| v / (1.0 + norm)).collect()
}

/// Inverse of `bergman_r` on the open unit ball: x = y / (1 - |y|).
pub fn bergman_r_inverse(y: &[f64]) -> Vec<f64> {
    let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    y.iter().map(|v| v / (1.0 - norm)).collect()
}

/// Distance on the n-torus: Euclidean over per-coordinate wrapped gaps.
pub fn torus_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (x - y).abs().rem_euclid(TAU);
            let d = d.min(TAU - d);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Which of the two projections a density or residual refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TorusMap {
    Log,
    Arg,
}

/// Real n x 2k Jacobian of the chosen map with respect to the realified
/// parameters (x_1..x_k, y_1..y_k), written row-major into `out`.
///
/// With w_i = dz_i / z_i the rows are (Re w_i, -Im w_i) for Log and
/// (Im w_i, Re w_i) for Arg.
pub fn real_jacobian(jet: &Jet, map: TorusMap, out: &mut Vec<f64>) {
    let (n, k) = (jet.n, jet.k);
    let width = 2 * k;
    out.resize(n * width, 0.0);
    for i in 0..n {
        let z = jet.value[i];
        let row = &mut out[i * width..(i + 1) * width];
        for j in 0..k {
            let w = jet.dz[i * k + j] / z;
            match map {
                TorusMap::Log => {
                    row[j] = w.re;
                    row[k + j] = -w.im;
                }
                TorusMap::Arg => {
                    row[j] = w.im;
                    row[k + j] = w.re;
                }
            }
        }
    }
}

/// Precomputed index sets for the sum over 2k x 2k minors, plus scratch
/// buffers, reusable across samples.
#[derive(Debug, Clone)]
pub struct MinorPlan {
    pub n: usize,
    pub k: usize,
    sets: Vec<Vec<usize>>,
    rows: Vec<f64>,
    sub: Vec<f64>,
}

fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..r).collect();
    if r > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        // Advance the rightmost index that can still move.
        let mut i = r;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - r {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Determinant of a dim x dim matrix stored row-major in `m`, in place,
/// by partial-pivot Gaussian elimination.
fn det_in_place(m: &mut [f64], dim: usize) -> f64 {
    let mut det = 1.0;
    for col in 0..dim {
        let mut piv = col;
        let mut best = m[col * dim + col].abs();
        for r in col + 1..dim {
            let v = m[r * dim + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != col {
            for c in 0..dim {
                m.swap(col * dim + c, piv * dim + c);
            }
            det = -det;
        }
        let d = m[col * dim + col];
        det *= d;
        for r in col + 1..dim {
            let f = m[r * dim + col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..dim {
                m[r * dim + c] -= f * m[col * dim + c];
            }
        }
    }
    det
}

impl MinorPlan {
    pub fn new(n: usize, k: usize) -> Result<Self, MapError> {
        if 2 * k > n {
            return Err(MapError::DimensionMismatch { k, n });
        }
        Ok(Self {
            n,
            k,
            sets: combinations(n, 2 * k),
            rows: vec![0.0; n * 2 * k],
            sub: vec![0.0; 4 * k * k],
        })
    }

    fn fill_rows(&mut self, jet: &Jet, map: TorusMap) {
        real_jacobian(jet, map, &mut self.rows);
    }

    /// Generalized Jacobian of the chosen map at `jet`:
    /// sqrt of the sum over all #I = 2k row subsets of det^2.
    pub fn gen_jac(&mut self, jet: &Jet, map: TorusMap) -> f64 {
        debug_assert_eq!(jet.n, self.n);
        debug_assert_eq!(jet.k, self.k);
        self.fill_rows(jet, map);
        let width = 2 * self.k;
        let mut sum = 0.0;
        for set_idx in 0..self.sets.len() {
            for (r, &i) in self.sets[set_idx].iter().enumerate() {
                self.sub[r * width..(r + 1) * width]
                    .copy_from_slice(&self.rows[i * width..(i + 1) * width]);
            }
            let d = det_in_place(&mut self.sub, width);
            sum += d * d;
        }
        sum.sqrt()
    }

    /// Per-minor |det| values for one map, in the fixed subset order.
    pub fn minor_magnitudes(&mut self, jet: &Jet, map: TorusMap) -> Vec<f64> {
        self.fill_rows(jet, map);
        let width = 2 * self.k;
        let mut out = Vec::with_capacity(self.sets.len());
        for set_idx in 0..self.sets.len() {
            for (r, &i) in self.sets[set_idx].iter().enumerate() {
                self.sub[r * width..(r + 1) * width]
                    .copy_from_slice(&self.rows[i * width..(i + 1) * width]);
            }
            out.push(det_in_place(&mut self.sub, width).abs());
        }
        out
    }
}

/// Log and Arg pullback densities at one point.
pub fn pullback_density(t: &[Complex64], jet: &Jet) -> Result<DensitySample, MapError> {
    let mut plan = MinorPlan::new(jet.n, jet.k)?;
    Ok(DensitySample {
        t: t.to_vec(),
        gen_jac_log: plan.gen_jac(jet, TorusMap::Log),
        gen_jac_arg: plan.gen_jac(jet, TorusMap::Arg),
    })
}
