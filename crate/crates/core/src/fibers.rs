//! Log- and Arg-fiber counting by multistart damped Gauss-Newton, and the
//! covering-ratio estimates p and P.
//!
//! Fibers are only queried at pushforward-generated targets: for n > 2k the
//! residual systems are overdetermined and arbitrary targets have empty
//! fibers. The solver works on the 2k real parameter unknowns with all n
//! residual equations (torus-wrapped for Arg) and the exact Jacobian rows
//! coming from the holomorphic jets.

use crate::expr::{EvalWorkspace, Jet};
use crate::maps::{self, MinorPlan, TorusMap};
use crate::rng::CounterRng;
use crate::variety::VarietySpec;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FiberError {
    #[error("target length {got} does not match ambient dimension {want}")]
    TargetLength { got: usize, want: usize },
    #[error("all {0} probe points were critical; cannot estimate p and P")]
    AllProbesCritical(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularity {
    Regular,
    Critical,
    Undetermined,
}

/// Knobs for the multistart solver.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Number of Newton starts; defaults to 64 * 2^k.
    pub starts: usize,
    pub max_iter: usize,
    /// Residual tolerance (max norm).
    pub tol: f64,
    /// Parameter-space dedup radius between distinct solutions.
    pub dedup_radius: f64,
    /// Below this pullback density a solution counts as critical.
    pub density_floor: f64,
    pub seed: u64,
}

impl SolveOptions {
    pub fn for_spec(spec: &VarietySpec, seed: u64) -> Self {
        Self {
            starts: 64 << spec.k,
            max_iter: 80,
            tol: 1e-10,
            dedup_radius: 1e-6,
            density_floor: 1e-9,
            seed,
        }
    }
}

/// Deduplicated fiber over one target value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiberReport {
    pub map: TorusMap,
    pub target: Vec<f64>,
    pub solutions: Vec<Vec<[f64; 2]>>,
    pub count: usize,
    pub regularity: Regularity,
    /// Max residual defect per reported solution.
    pub residuals: Vec<f64>,
    /// Best residual over all starts; diagnostic when nothing converged.
    pub best_residual: Option<f64>,
    /// Many chained nearby solutions suggest a positive-dimensional fiber.
    pub suspected_positive_dimensional: bool,
}

fn wrap_pi(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

fn residual(jet: &Jet, map: TorusMap, target: &[f64], out: &mut DVector<f64>) {
    for i in 0..jet.n {
        let z = jet.value[i];
        out[i] = match map {
            TorusMap::Log => z.norm().ln() - target[i],
            TorusMap::Arg => wrap_pi(z.arg() - target[i]),
        };
    }
}

struct Solver<'a> {
    spec: &'a VarietySpec,
    map: TorusMap,
    target: &'a [f64],
    opts: SolveOptions,
}

impl Solver<'_> {
    /// Damped Gauss-Newton from one start; returns the parameter point and
    /// its residual max-norm on success.
    fn solve_from(&self, start: &[Complex64]) -> Option<(Vec<Complex64>, f64)> {
        let k = self.spec.k;
        let n = self.spec.n();
        let mut ws = EvalWorkspace::default();
        let mut jet = Jet::default();
        let mut jac_rows = Vec::new();
        let mut t = start.to_vec();
        let mut r = DVector::zeros(n);
        let mut lambda = 1e-3;

        if self.spec.eval_jet_into(&t, &mut ws, &mut jet).is_err() {
            return None;
        }
        residual(&jet, self.map, self.target, &mut r);
        let mut rnorm = r.norm();

        // Iterate well past the acceptance tolerance, stopping only on an
        // exactly-zero residual or a stalled step: polishing collapses the
        // near-solution cloud around critical targets to within the dedup
        // radius and below the criticality density floor.
        for _ in 0..self.opts.max_iter {
            if r.amax() == 0.0 {
                break;
            }
            // Rejected trials leave `jet` at the trial point; refresh at t.
            if self.spec.eval_jet_into(&t, &mut ws, &mut jet).is_err() {
                break;
            }
            maps::real_jacobian(&jet, self.map, &mut jac_rows);
            let jmat = DMatrix::from_row_slice(n, 2 * k, &jac_rows);
            let jtj = jmat.transpose() * &jmat;
            let jtr = jmat.transpose() * &r;
            let mut accepted = false;
            for _ in 0..8 {
                let mut lhs = jtj.clone();
                for d in 0..2 * k {
                    lhs[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
                }
                let Some(chol) = lhs.cholesky() else {
                    lambda *= 10.0;
                    continue;
                };
                let delta = chol.solve(&(-&jtr));
                let mut t_new = t.clone();
                for j in 0..k {
                    t_new[j] += Complex64::new(delta[j], delta[k + j]);
                }
                if self.spec.eval_jet_into(&t_new, &mut ws, &mut jet).is_err() {
                    lambda *= 10.0;
                    continue;
                }
                let mut r_new = DVector::zeros(n);
                residual(&jet, self.map, self.target, &mut r_new);
                let rn = r_new.norm();
                if rn < rnorm {
                    t = t_new;
                    r = r_new;
                    rnorm = rn;
                    lambda = (lambda / 3.0).max(1e-14);
                    accepted = true;
                    break;
                }
                lambda *= 10.0;
            }
            if !accepted {
                break;
            }
        }
        if r.amax() <= self.opts.tol {
            Some((t, r.amax()))
        } else {
            None
        }
    }

    fn starts(&self) -> Vec<Vec<Complex64>> {
        let k = self.spec.k;
        let mut out = Vec::with_capacity(self.opts.starts);
        for s in 0..self.opts.starts {
            let mut rng = CounterRng::for_sample(self.opts.seed, s as u64);
            let mut t = Vec::with_capacity(k);
            // Alternate between log-uniform moduli (reaches every scale)
            // and box-uniform draws (covers off-center domains).
            let log_polar = s % 2 == 0;
            for rect in &self.spec.domain {
                if log_polar {
                    let scale = 0.75 * rect.diameter();
                    let lo = (scale * 1e-4).ln();
                    let hi = (scale * 1.2).ln();
                    let radius = rng.uniform(lo, hi).exp();
                    let theta = rng.uniform(0.0, TAU);
                    t.push(Complex64::from_polar(radius, theta));
                } else {
                    t.push(Complex64::new(
                        rng.uniform(rect.re.0, rect.re.1),
                        rng.uniform(rect.im.0, rect.im.1),
                    ));
                }
            }
            out.push(t);
        }
        out
    }
}

fn param_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Count the fiber of `map` over `target` with a multistart solver.
pub fn fiber_count(
    spec: &VarietySpec,
    map: TorusMap,
    target: &[f64],
    opts: SolveOptions,
) -> Result<FiberReport, FiberError> {
    if target.len() != spec.n() {
        return Err(FiberError::TargetLength {
            got: target.len(),
            want: spec.n(),
        });
    }
    let solver = Solver {
        spec,
        map,
        target,
        opts,
    };
    let starts = solver.starts();
    let found: Vec<(Vec<Complex64>, f64)> = starts
        .par_iter()
        .filter_map(|s| solver.solve_from(s))
        .collect();

    // Reject solutions that escaped the (slightly inflated) search domain.
    let found: Vec<_> = found
        .into_iter()
        .filter(|(t, _)| {
            t.iter().zip(&spec.domain).all(|(z, r)| {
                let cx = (r.re.0 + r.re.1) / 2.0;
                let cy = (r.im.0 + r.im.1) / 2.0;
                let hw = (r.re.1 - r.re.0) / 2.0 * 1.1;
                let hh = (r.im.1 - r.im.0) / 2.0 * 1.1;
                (z.re - cx).abs() <= hw && (z.im - cy).abs() <= hh
            })
        })
        .collect();

    let best_residual = found
        .iter()
        .map(|(_, r)| *r)
        .min_by(|a, b| a.total_cmp(b));

    // Dedup by parameter distance, keeping the best residual per cluster.
    let mut solutions: Vec<(Vec<Complex64>, f64)> = Vec::new();
    for (t, res) in found {
        match solutions
            .iter_mut()
            .find(|(u, _)| param_distance(u, &t) <= opts.dedup_radius)
        {
            Some(slot) => {
                if res < slot.1 {
                    *slot = (t, res);
                }
            }
            None => solutions.push((t, res)),
        }
    }

    if solutions.is_empty() {
        return Ok(FiberReport {
            map,
            target: target.to_vec(),
            solutions: vec![],
            count: 0,
            regularity: Regularity::Undetermined,
            residuals: vec![],
            best_residual,
            suspected_positive_dimensional: false,
        });
    }

    // Criticality via the pullback density at the solutions.
    let mut plan = MinorPlan::new(spec.n(), spec.k).expect("spec dims validated");
    let mut ws = EvalWorkspace::default();
    let mut jet = Jet::default();
    let mut critical = false;
    for (t, _) in &solutions {
        if spec.eval_jet_into(t, &mut ws, &mut jet).is_ok() {
            if plan.gen_jac(&jet, map) < opts.density_floor {
                critical = true;
            }
        } else {
            critical = true;
        }
    }

    // A crowd of distinct solutions chained at small mutual distances is the
    // numerical shadow of a positive-dimensional fiber.
    let suspected_positive_dimensional = solutions.len() >= 8 && {
        let mut nearest = Vec::new();
        for (i, (a, _)) in solutions.iter().enumerate() {
            let d = solutions
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, (b, _))| param_distance(a, b))
                .fold(f64::INFINITY, f64::min);
            nearest.push(d);
        }
        let median = {
            let mut v = nearest.clone();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        median <= 100.0 * opts.dedup_radius
    };

    solutions.sort_by(|a, b| {
        a.0[0]
            .re
            .total_cmp(&b.0[0].re)
            .then(a.0[0].im.total_cmp(&b.0[0].im))
    });
    let residuals: Vec<f64> = solutions.iter().map(|(_, r)| *r).collect();
    let count = solutions.len();
    Ok(FiberReport {
        map,
        target: target.to_vec(),
        solutions: solutions
            .into_iter()
            .map(|(t, _)| t.into_iter().map(|z| [z.re, z.im]).collect())
            .collect(),
        count,
        regularity: if critical {
            Regularity::Critical
        } else {
            Regularity::Regular
        },
        residuals,
        best_residual,
        suspected_positive_dimensional,
    })
}

/// Image of a parameter point under Log (coords) or Arg (angles in [0,2pi)).
pub fn pushforward_target(
    spec: &VarietySpec,
    t: &[Complex64],
    map: TorusMap,
) -> Option<Vec<f64>> {
    let mut ws = EvalWorkspace::default();
    let mut jet = Jet::default();
    spec.eval_jet_into(t, &mut ws, &mut jet).ok()?;
    Some(match map {
        TorusMap::Log => crate::maps::log_map(&jet.value).ok()?.coords,
        TorusMap::Arg => crate::maps::arg_map(&jet.value).ok()?.angles,
    })
}

/// One probe's worth of evidence for the p/P estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub t0: Vec<[f64; 2]>,
    pub log_count: usize,
    pub arg_count: usize,
}

/// Sampled estimate of the covering ratios of the comparison theorem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PpEstimate {
    pub p: Ratio<i64>,
    pub cap_p: Ratio<i64>,
    pub evidence: Vec<ProbeRecord>,
    /// Arg-fiber count kept growing with the search box; `cap_p` is only a
    /// lower bound then.
    pub arg_unbounded_suspected: bool,
}

/// Estimate p = min #Arg / max #Log and P = max #Arg / min #Log over
/// pushforward targets of sampled regular parameter points.
pub fn estimate_p_p(
    spec: &VarietySpec,
    probes: u64,
    opts: SolveOptions,
) -> Result<PpEstimate, FiberError> {
    let mut plan = MinorPlan::new(spec.n(), spec.k).expect("spec dims validated");
    let mut ws = EvalWorkspace::default();
    let mut jet = Jet::default();
    let mut evidence = Vec::new();
    let mut attempts = 0u64;
    let mut tried = 0u64;
    // Probe points need a healthy margin above the criticality floor, both
    // to be regular values and to keep Newton basins clean. Probes are drawn
    // from a unit-scale window of the domain; far-field points carry
    // vanishing density and would all be rejected.
    let probe_floor = 1e-4;
    let probe_rects: Vec<crate::variety::VarRect> = spec
        .domain_clipped(3.0)
        .unwrap_or_else(|| spec.domain.clone());

    while evidence.len() < probes as usize && attempts < probes * 50 {
        attempts += 1;
        let mut rng = CounterRng::for_sample(CounterRng::derive_seed(opts.seed, 0xABCD), attempts);
        let t0: Vec<Complex64> = probe_rects
            .iter()
            .map(|r| {
                // Shrink toward the rect center to keep probes well interior.
                let (cx, cy) = ((r.re.0 + r.re.1) / 2.0, (r.im.0 + r.im.1) / 2.0);
                let (hx, hy) = ((r.re.1 - r.re.0) / 2.0, (r.im.1 - r.im.0) / 2.0);
                Complex64::new(
                    cx + 0.8 * hx * (2.0 * rng.next_f64() - 1.0),
                    cy + 0.8 * hy * (2.0 * rng.next_f64() - 1.0),
                )
            })
            .collect();
        if spec.eval_jet_into(&t0, &mut ws, &mut jet).is_err() {
            continue;
        }
        if plan.gen_jac(&jet, TorusMap::Log) < probe_floor {
            continue;
        }
        tried += 1;
        let log_target = match pushforward_target(spec, &t0, TorusMap::Log) {
            Some(t) => t,
            None => continue,
        };
        let arg_target = match pushforward_target(spec, &t0, TorusMap::Arg) {
            Some(t) => t,
            None => continue,
        };
        let probe_opts = SolveOptions {
            seed: CounterRng::derive_seed(opts.seed, attempts),
            ..opts
        };
        let log_report = fiber_count(spec, TorusMap::Log, &log_target, probe_opts)?;
        let arg_report = fiber_count(spec, TorusMap::Arg, &arg_target, probe_opts)?;
        if log_report.regularity != Regularity::Regular
            || arg_report.regularity != Regularity::Regular
        {
            continue;
        }
        evidence.push(ProbeRecord {
            t0: t0.iter().map(|z| [z.re, z.im]).collect(),
            log_count: log_report.count,
            arg_count: arg_report.count,
        });
    }
    if evidence.is_empty() {
        return Err(FiberError::AllProbesCritical(tried));
    }

    let min_log = evidence.iter().map(|e| e.log_count).min().unwrap() as i64;
    let max_log = evidence.iter().map(|e| e.log_count).max().unwrap() as i64;
    let min_arg = evidence.iter().map(|e| e.arg_count).min().unwrap() as i64;
    let max_arg = evidence.iter().map(|e| e.arg_count).max().unwrap() as i64;

    // Growth check: rerun one Arg fiber on an inflated domain; a growing
    // count means the Arg covering is not finite and P is a lower bound.
    let arg_unbounded_suspected = {
        let probe = &evidence[0];
        let t0: Vec<Complex64> = probe
            .t0
            .iter()
            .map(|p| Complex64::new(p[0], p[1]))
            .collect();
        let mut inflated = spec.clone();
        inflated.domain = spec
            .domain
            .iter()
            .map(|r| crate::variety::VarRect {
                re: (r.re.0 * 1.6, r.re.1 * 1.6),
                im: (r.im.0 * 1.6, r.im.1 * 1.6),
            })
            .collect();
        match pushforward_target(&inflated, &t0, TorusMap::Arg) {
            Some(target) => {
                let grown = fiber_count(
                    &inflated,
                    TorusMap::Arg,
                    &target,
                    SolveOptions {
                        starts: opts.starts * 2,
                        ..opts
                    },
                )?;
                grown.count > probe.arg_count + 1
            }
            None => false,
        }
    };

    Ok(PpEstimate {
        p: Ratio::new(min_arg, max_log),
        cap_p: Ratio::new(max_arg, min_log),
        evidence,
        arg_unbounded_suspected,
    })
}
