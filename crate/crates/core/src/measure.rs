//! Monte Carlo volume estimation for amoebas and coamoebas, divergence
//! classification over a radius ladder, and the volume-comparison
//! certificate.
//!
//! The estimator integrates the pullback density over a truncation box in
//! parameter space and divides by the covering multiplicity. Samples are
//! drawn from a deterministic counter-based stream and accumulated in
//! fixed-size blocks whose partial sums are reduced in index order, so an
//! estimate is bit-identical for a given `(seed, samples, truncation)`
//! regardless of thread count.

use crate::maps::{MinorPlan, TorusMap};
use crate::rng::CounterRng;
pub use crate::variety::SamplerMode;
use crate::variety::{SampleSpace, VarRect, VarietySpec};
use crate::expr::{EvalWorkspace, Jet};
use num_complex::Complex64;
use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Convergence floors for the radius-ladder classifier. An increment below
/// either floor (absolute, or relative to the running total) counts as
/// settled; the gallery's divergent cases overshoot these by orders of
/// magnitude.
pub const EPS_REL: f64 = 0.01;
pub const EPS_ABS: f64 = 1e-3;

const BLOCK: u64 = 16 * 1024;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("covering multiplicity for {0:?} is not declared on the spec")]
    MissingMultiplicity(VolumeTarget),
    #[error("truncation box is empty")]
    EmptyTruncation,
    #[error("need 2k <= n for volumes (k={k}, n={n})")]
    DimensionMismatch { k: usize, n: usize },
    #[error("radius ladder needs at least 4 increasing radii")]
    BadLadder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeTarget {
    Amoeba,
    Coamoeba,
}

impl VolumeTarget {
    pub fn map(self) -> TorusMap {
        match self {
            VolumeTarget::Amoeba => TorusMap::Log,
            VolumeTarget::Coamoeba => TorusMap::Arg,
        }
    }
}

/// Monte Carlo volume estimate with its standard error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: u64,
    pub multiplicity: u32,
    pub target: VolumeTarget,
    #[serde(rename = "box")]
    pub truncation: Vec<VarRect>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Partial {
    sum: f64,
    sum_sq: f64,
    used: u64,
}

impl Partial {
    fn merge(mut self, o: Partial) -> Partial {
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        self.used += o.used;
        self
    }
}

fn integrate_raw(
    spec: &VarietySpec,
    map: TorusMap,
    samples: u64,
    seed: u64,
    truncation: &[VarRect],
    mode: SamplerMode,
) -> Result<(f64, f64), MeasureError> {
    let k = spec.k;
    let n = spec.n();
    if 2 * k > n {
        return Err(MeasureError::DimensionMismatch { k, n });
    }
    if truncation.len() != k || truncation.iter().any(|r| !r.is_valid()) {
        return Err(MeasureError::EmptyTruncation);
    }
    let space = SampleSpace::build(spec, truncation, mode);

    let blocks = samples.div_ceil(BLOCK);
    let partials: Vec<Partial> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * BLOCK;
            let hi = ((b + 1) * BLOCK).min(samples);
            let mut ws = EvalWorkspace::default();
            let mut jet = Jet::default();
            let mut plan = MinorPlan::new(n, k).expect("dimensions checked above");
            let mut t: Vec<Complex64> = Vec::with_capacity(k);
            let mut part = Partial::default();
            for i in lo..hi {
                space.draw(seed, i, &mut t);
                let mut weight = 0.0;
                if space.in_box(&t) && space.guard_ok(&t) {
                    if spec.eval_jet_into(&t, &mut ws, &mut jet).is_ok() {
                        let f = plan.gen_jac(&jet, map);
                        if f > 0.0 && f.is_finite() {
                            weight = f / space.proposal_density(&t);
                        }
                    }
                }
                part.sum += weight;
                part.sum_sq += weight * weight;
                part.used += 1;
            }
            part
        })
        .collect();
    let total = partials.into_iter().fold(Partial::default(), Partial::merge);

    let nf = total.used as f64;
    let mean = total.sum / nf;
    let var = ((total.sum_sq - total.sum * total.sum / nf) / (nf - 1.0)).max(0.0);
    let stderr = (var / nf).sqrt();
    Ok((mean, stderr))
}

/// Estimate the volume of the amoeba or coamoeba by integrating the
/// pullback density over `truncation` and dividing by the declared
/// covering multiplicity.
pub fn integrate_pullback(
    spec: &VarietySpec,
    target: VolumeTarget,
    samples: u64,
    seed: u64,
    truncation: &[VarRect],
    mode: SamplerMode,
) -> Result<VolumeEstimate, MeasureError> {
    let multiplicity = match target {
        VolumeTarget::Amoeba => spec.multiplicity_log,
        VolumeTarget::Coamoeba => spec.multiplicity_arg,
    }
    .ok_or(MeasureError::MissingMultiplicity(target))?;
    let (mean, stderr) = integrate_raw(spec, target.map(), samples, seed, truncation, mode)?;
    let m = multiplicity as f64;
    Ok(VolumeEstimate {
        value: mean / m,
        stderr: stderr / m,
        samples,
        multiplicity,
        target,
        truncation: truncation.to_vec(),
        seed,
    })
}

/// One rung of the radius ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageEstimate {
    pub radius: f64,
    pub integral: f64,
    pub stderr: f64,
}

/// Outcome of the truncation-ladder classification.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum FinitenessVerdict {
    /// Stage integrals settled; `estimate` is the outermost stage value.
    Convergent { estimate: f64 },
    /// Stage integrals keep growing; `growth_exponent` is the slope of
    /// log I against log R.
    Divergent { growth_exponent: f64 },
    /// Stage estimates are statistically inconsistent.
    Inconclusive { reason: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinitenessReport {
    pub verdict: FinitenessVerdict,
    pub stages: Vec<StageEstimate>,
}

/// Classify the raw pullback integral as convergent or divergent along an
/// increasing radius ladder of parameter truncations.
pub fn classify_finiteness(
    spec: &VarietySpec,
    radii: &[f64],
    samples_per_stage: u64,
    seed: u64,
) -> Result<FinitenessReport, MeasureError> {
    if radii.len() < 4 || radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MeasureError::BadLadder);
    }
    let mut stages = Vec::with_capacity(radii.len());
    for (j, &radius) in radii.iter().enumerate() {
        let truncation = spec
            .domain_clipped(radius)
            .ok_or(MeasureError::EmptyTruncation)?;
        let stage_seed = CounterRng::derive_seed(seed, j as u64);
        let (integral, stderr) = integrate_raw(
            spec,
            TorusMap::Log,
            samples_per_stage,
            stage_seed,
            &truncation,
            SamplerMode::PoleAware,
        )?;
        stages.push(StageEstimate {
            radius,
            integral,
            stderr,
        });
    }

    let last = stages.last().unwrap();
    let prev = &stages[stages.len() - 2];
    let increment = last.integral - prev.integral;
    let sigma = (last.stderr.powi(2) + prev.stderr.powi(2)).sqrt();
    let floor = EPS_ABS.max(EPS_REL * last.integral) + 3.0 * sigma;

    // A clearly shrinking integral over growing boxes means the stage
    // estimates disagree beyond their error bars.
    let verdict = if stages
        .windows(2)
        .any(|w| w[1].integral - w[0].integral < -3.0 * (w[1].stderr.powi(2) + w[0].stderr.powi(2)).sqrt() - EPS_ABS)
    {
        FinitenessVerdict::Inconclusive {
            reason: "stage integrals decrease beyond stderr overlap".into(),
        }
    } else if increment <= floor {
        FinitenessVerdict::Convergent {
            estimate: last.integral,
        }
    } else {
        // Least-squares slope of log I against log R.
        let pts: Vec<(f64, f64)> = stages
            .iter()
            .filter(|s| s.integral > 0.0)
            .map(|s| (s.radius.ln(), s.integral.ln()))
            .collect();
        let m = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        FinitenessVerdict::Divergent {
            growth_exponent: slope,
        }
    };

    Ok(FinitenessReport { verdict, stages })
}

/// Verification of `p vol(coamoeba) <= vol(amoeba) <= P vol(coamoeba)`
/// with 3-stderr slack.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub p: Ratio<i64>,
    pub cap_p: Ratio<i64>,
    pub vol_amoeba: f64,
    pub vol_coamoeba: f64,
    pub lower_margin_sigma: f64,
    pub upper_margin_sigma: f64,
    pub pass: bool,
}

pub fn comparison_certificate(
    p: Ratio<i64>,
    cap_p: Ratio<i64>,
    vol_amoeba: &VolumeEstimate,
    vol_coamoeba: &VolumeEstimate,
) -> ComparisonReport {
    let pf = *p.numer() as f64 / *p.denom() as f64;
    let cf = *cap_p.numer() as f64 / *cap_p.denom() as f64;
    let lower_gap = vol_amoeba.value - pf * vol_coamoeba.value;
    let lower_sigma = (vol_amoeba.stderr.powi(2) + (pf * vol_coamoeba.stderr).powi(2))
        .sqrt()
        .max(f64::MIN_POSITIVE);
    let upper_gap = cf * vol_coamoeba.value - vol_amoeba.value;
    let upper_sigma = (vol_amoeba.stderr.powi(2) + (cf * vol_coamoeba.stderr).powi(2))
        .sqrt()
        .max(f64::MIN_POSITIVE);
    let lower_margin_sigma = lower_gap / lower_sigma;
    let upper_margin_sigma = upper_gap / upper_sigma;
    ComparisonReport {
        p,
        cap_p,
        vol_amoeba: vol_amoeba.value,
        vol_coamoeba: vol_coamoeba.value,
        lower_margin_sigma,
        upper_margin_sigma,
        pass: lower_margin_sigma >= -3.0 && upper_margin_sigma >= -3.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::variety::VarietySpec;
    use std::f64::consts::PI;

    fn line_spec(half_width: f64) -> VarietySpec {
        VarietySpec::new(
            1,
            vec![parse("t1", 1).unwrap(), parse("1+t1", 1).unwrap()],
            vec![VarRect::centered(half_width)],
            vec![],
        )
        .unwrap()
        .with_multiplicities(Some(2), Some(1))
        .with_tags(vec!["real".into(), "algebraic".into()])
    }

    fn exp_spec(half_width: f64) -> VarietySpec {
        VarietySpec::new(
            1,
            vec![parse("t1", 1).unwrap(), parse("exp(t1)", 1).unwrap()],
            vec![VarRect::centered(half_width)],
            vec![],
        )
        .unwrap()
        .with_multiplicities(Some(2), None)
    }

    #[test]
    fn line_amoeba_volume_near_half_pi_squared() {
        let spec = line_spec(400.0);
        let est = integrate_pullback(
            &spec,
            VolumeTarget::Amoeba,
            300_000,
            42,
            &spec.domain,
            SamplerMode::PoleAware,
        )
        .unwrap();
        let target = PI * PI / 2.0;
        assert!(
            (est.value - target).abs() <= 3.0 * est.stderr + 0.01,
            "est {} +- {} vs {target}",
            est.value,
            est.stderr
        );
        assert!(est.stderr / target < 0.02, "stderr {}", est.stderr);
    }

    #[test]
    fn line_coamoeba_volume_near_pi_squared() {
        let spec = line_spec(400.0);
        let est = integrate_pullback(
            &spec,
            VolumeTarget::Coamoeba,
            300_000,
            42,
            &spec.domain,
            SamplerMode::PoleAware,
        )
        .unwrap();
        let target = PI * PI;
        assert!(
            (est.value - target).abs() <= 3.0 * est.stderr + 0.02,
            "est {} +- {} vs {target}",
            est.value,
            est.stderr
        );
    }

    #[test]
    fn degenerate_constant_component_has_zero_volume() {
        // (t, 2): the single 2x2 minor has a zero row.
        let spec = VarietySpec::new(
            1,
            vec![parse("t1", 1).unwrap(), parse("2", 1).unwrap()],
            vec![VarRect::centered(5.0)],
            vec![],
        )
        .unwrap()
        .with_multiplicities(Some(1), Some(1));
        let est = integrate_pullback(
            &spec,
            VolumeTarget::Amoeba,
            20_000,
            1,
            &spec.domain,
            SamplerMode::PoleAware,
        )
        .unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn estimates_are_bit_identical_across_thread_counts() {
        let spec = line_spec(40.0);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                integrate_pullback(
                    &spec,
                    VolumeTarget::Amoeba,
                    100_000,
                    7,
                    &spec.domain,
                    SamplerMode::PoleAware,
                )
                .unwrap()
            })
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }

    #[test]
    fn missing_multiplicity_is_an_error() {
        let spec = line_spec(40.0).with_multiplicities(None, None);
        assert!(matches!(
            integrate_pullback(
                &spec,
                VolumeTarget::Amoeba,
                10,
                1,
                &spec.domain,
                SamplerMode::PoleAware
            ),
            Err(MeasureError::MissingMultiplicity(VolumeTarget::Amoeba))
        ));
    }

    #[test]
    fn stderr_shrinks_like_inverse_sqrt_samples() {
        let spec = line_spec(40.0);
        let est = |n: u64| {
            integrate_pullback(
                &spec,
                VolumeTarget::Amoeba,
                n,
                11,
                &spec.domain,
                SamplerMode::PoleAware,
            )
            .unwrap()
            .stderr
        };
        let ratio = est(50_000) / est(200_000);
        assert!(
            (ratio - 2.0).abs() <= 0.3,
            "expected ratio near 2, got {ratio}"
        );
    }

    #[test]
    fn amoeba_coamoeba_consistency() {
        // Both targets integrate the same density, so the products with
        // their multiplicities must agree.
        let spec = line_spec(40.0);
        let am = integrate_pullback(
            &spec,
            VolumeTarget::Amoeba,
            100_000,
            3,
            &spec.domain,
            SamplerMode::PoleAware,
        )
        .unwrap();
        let co = integrate_pullback(
            &spec,
            VolumeTarget::Coamoeba,
            100_000,
            4,
            &spec.domain,
            SamplerMode::PoleAware,
        )
        .unwrap();
        let lhs = am.value * am.multiplicity as f64;
        let rhs = co.value * co.multiplicity as f64;
        let sigma = ((am.stderr * 2.0).powi(2) + co.stderr.powi(2)).sqrt();
        assert!((lhs - rhs).abs() <= 3.0 * sigma, "{lhs} vs {rhs} ({sigma})");
    }

    #[test]
    fn monotone_in_truncation_box() {
        let spec = line_spec(40.0);
        let small = spec.domain_clipped(10.0).unwrap();
        let est_small = integrate_pullback(
            &spec,
            VolumeTarget::Amoeba,
            100_000,
            5,
            &small,
            SamplerMode::PoleAware,
        )
        .unwrap();
        let est_big = integrate_pullback(
            &spec,
            VolumeTarget::Amoeba,
            100_000,
            6,
            &spec.domain,
            SamplerMode::PoleAware,
        )
        .unwrap();
        let sigma = (est_small.stderr.powi(2) + est_big.stderr.powi(2)).sqrt();
        assert!(est_big.value >= est_small.value - 3.0 * sigma);
    }

    #[test]
    fn exp_curve_classified_divergent() {
        let spec = exp_spec(1000.0);
        let report = classify_finiteness(&spec, &[5.0, 10.0, 20.0, 40.0], 60_000, 9).unwrap();
        match report.verdict {
            FinitenessVerdict::Divergent { growth_exponent } => {
                assert!(
                    (0.5..1.5).contains(&growth_exponent),
                    "slope {growth_exponent}"
                );
            }
            other => panic!("expected divergent, got {other:?}"),
        }
    }

    #[test]
    fn line_classified_convergent() {
        let spec = line_spec(1000.0);
        let report = classify_finiteness(&spec, &[20.0, 40.0, 80.0, 160.0], 60_000, 9).unwrap();
        assert!(
            matches!(report.verdict, FinitenessVerdict::Convergent { .. }),
            "{report:?}"
        );
    }

    #[test]
    fn ladder_must_increase() {
        let spec = line_spec(40.0);
        assert!(matches!(
            classify_finiteness(&spec, &[5.0, 5.0, 10.0, 20.0], 100, 0),
            Err(MeasureError::BadLadder)
        ));
    }

    #[test]
    fn comparison_certificate_tight_for_line() {
        let spec = line_spec(400.0);
        let am = integrate_pullback(
            &spec,
            VolumeTarget::Amoeba,
            200_000,
            21,
            &spec.domain,
            SamplerMode::PoleAware,
        )
        .unwrap();
        let co = integrate_pullback(
            &spec,
            VolumeTarget::Coamoeba,
            200_000,
            22,
            &spec.domain,
            SamplerMode::PoleAware,
        )
        .unwrap();
        let half = Ratio::new(1, 2);
        let report = comparison_certificate(half, half, &am, &co);
        assert!(report.pass, "{report:?}");
    }
}
