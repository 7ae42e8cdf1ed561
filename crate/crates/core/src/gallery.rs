//! Built-in gallery: the plane and spatial curves plus the affine planes,
//! with their expected invariants (finiteness verdicts, limit-set shapes,
//! fiber counts, closed-form volumes) and figure outputs.
//!
//! `run_gallery` executes every case under a quick or full budget, writes
//! one JSON report per case plus figure rasters, and returns a pass/fail
//! summary. Reports are byte-identical for a fixed seed and profile.

use crate::expr::parse;
use crate::fibers::{self, SolveOptions};
use crate::limitset::{self, FeatureKind, LimitSetOptions, Rationality};
use crate::maps::{MinorPlan, TorusMap};
use crate::measure::{self, FinitenessVerdict, SamplerMode, VolumeTarget};
use crate::planes::AffinePlaneSpec;
use crate::raster::{self, BivariatePoly, RasterBounds, RasterMode};
use crate::rng::CounterRng;
use crate::variety::{ExclusionDisc, SampleSpace, VarRect, VarietySpec};
use crate::expr::{EvalWorkspace, Jet};
use num_complex::Complex64;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GalleryError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("case {case} crashed: {message}")]
    CaseFailed { case: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetProfile {
    /// All non-volume checks; finishes in a couple of minutes.
    Quick,
    /// Adds the Monte Carlo volume certificates and big rasters.
    Full,
}

/// Expected limit-set shape.
#[derive(Debug, Clone)]
pub struct LimitExpectation {
    pub points: usize,
    pub arcs: usize,
    /// Directions that must appear within 2 degrees.
    pub directions: Vec<Vec<f64>>,
    pub all_rational: bool,
}

#[derive(Debug, Clone)]
pub struct FiberExpectation {
    pub log: u32,
    /// None when the Arg covering is not finite (count grows with the box).
    pub arg: Option<u32>,
    pub p: Ratio<i64>,
    pub cap_p: Ratio<i64>,
}

#[derive(Debug, Clone)]
pub struct VolumeExpectation {
    pub amoeba: f64,
    pub coamoeba: f64,
}

#[derive(Debug, Clone)]
pub struct FigureJob {
    pub filename: &'static str,
    pub pair: (usize, usize),
    pub mode: RasterMode,
    pub bounds: RasterBounds,
    pub resolution: (usize, usize),
    pub samples: u64,
}

/// One gallery entry: a variety plus everything we can check about it.
pub struct GalleryCase {
    pub name: &'static str,
    pub spec: VarietySpec,
    pub plane: Option<AffinePlaneSpec>,
    pub ladder: Vec<f64>,
    pub expect_divergent: bool,
    pub limits: Option<LimitExpectation>,
    pub limit_domain: Option<Vec<VarRect>>,
    pub limit_ladder: Vec<f64>,
    pub fibers: Option<FiberExpectation>,
    pub volume: Option<VolumeExpectation>,
    pub figures: Vec<FigureJob>,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Domain for far-field sampling of curves with an exp component: the real
/// part stays below the f64 overflow bound of exp while the imaginary part
/// carries |t| far out.
fn exp_far_domain() -> VarRect {
    VarRect {
        re: (-650.0, 650.0),
        im: (-1.5e18, 1.5e18),
    }
}

pub fn real_line_plane() -> AffinePlaneSpec {
    AffinePlaneSpec::normalized(1, vec![], vec![]).expect("valid plane")
}

pub fn nonreal_line_plane() -> AffinePlaneSpec {
    AffinePlaneSpec::normalized(1, vec![c(0.0, 1.0)], vec![vec![c(2.0, 0.0)]])
        .expect("valid plane")
}

pub fn real_2plane() -> AffinePlaneSpec {
    AffinePlaneSpec::normalized(2, vec![c(2.0, 0.0)], vec![vec![c(3.0, 0.0), c(-1.0, 0.0)]])
        .expect("valid plane")
}

pub fn exp_curve_spec(half_width: f64) -> VarietySpec {
    VarietySpec::new(
        1,
        vec![parse("t1", 1).unwrap(), parse("exp(t1)", 1).unwrap()],
        vec![VarRect::centered(half_width)],
        vec![],
    )
    .unwrap()
    .with_multiplicities(Some(2), None)
    .with_tags(vec!["holomorphic".into()])
}

pub fn circle_curve_spec(im_half_width: f64) -> VarietySpec {
    VarietySpec::new(
        1,
        vec![parse("cos(t1)", 1).unwrap(), parse("sin(t1)", 1).unwrap()],
        vec![VarRect {
            re: (1e-6, 2.0 * PI - 1e-6),
            im: (-im_half_width, im_half_width),
        }],
        vec![
            ExclusionDisc {
                var: 0,
                center: c(PI / 2.0, 0.0),
                radius: 1e-9,
            },
            ExclusionDisc {
                var: 0,
                center: c(PI, 0.0),
                radius: 1e-9,
            },
            ExclusionDisc {
                var: 0,
                center: c(3.0 * PI / 2.0, 0.0),
                radius: 1e-9,
            },
        ],
    )
    .unwrap()
    // On the fundamental strip the coordinate moduli are invariant under
    // conjugation and under t -> pi - t, pi + t, 2 pi - t (cos and sin each
    // change only by sign), so Log covers regular values 8 times; Arg is
    // one-to-one there.
    .with_multiplicities(Some(8), Some(1))
    .with_tags(vec!["real".into(), "algebraic".into()])
}

pub fn spatial_curve_spec(half_width: f64) -> VarietySpec {
    VarietySpec::new(
        1,
        vec![
            parse("t1", 1).unwrap(),
            parse("exp(t1)", 1).unwrap(),
            parse("t1+1", 1).unwrap(),
        ],
        vec![VarRect::centered(half_width)],
        vec![],
    )
    .unwrap()
    .with_multiplicities(Some(2), None)
    .with_tags(vec!["holomorphic".into()])
}

/// The six gallery cases.
pub fn gallery_cases(profile: BudgetProfile) -> Vec<GalleryCase> {
    let full = profile == BudgetProfile::Full;
    let fig_samples = if full { 10_000_000 } else { 1_500_000 };
    let s = 2f64.sqrt() / 2.0;

    let real_line = real_line_plane();
    let mut line_spec = real_line
        .to_variety(400.0)
        .expect("line variety")
        .with_multiplicities(Some(2), Some(1));
    line_spec.tags.push("gallery".into());

    let nonreal = nonreal_line_plane();
    let nonreal_spec = nonreal
        .to_variety(400.0)
        .expect("nonreal line variety")
        .with_multiplicities(Some(1), Some(1));

    let plane2 = real_2plane();
    let plane2_spec = plane2
        .to_variety(60.0)
        .expect("plane variety")
        .with_multiplicities(Some(4), Some(1));

    vec![
        GalleryCase {
            name: "real-line",
            spec: line_spec,
            plane: Some(real_line),
            ladder: vec![20.0, 40.0, 80.0, 160.0],
            expect_divergent: false,
            limits: Some(LimitExpectation {
                points: 3,
                arcs: 0,
                directions: vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![s, s]],
                all_rational: true,
            }),
            limit_domain: Some(vec![VarRect::centered(90_000.0)]),
            limit_ladder: vec![10.0, 20.0, 40.0],
            fibers: Some(FiberExpectation {
                log: 2,
                arg: Some(1),
                p: Ratio::new(1, 2),
                cap_p: Ratio::new(1, 2),
            }),
            volume: Some(VolumeExpectation {
                amoeba: PI * PI / 2.0,
                coamoeba: PI * PI,
            }),
            figures: vec![
                FigureJob {
                    filename: "real-line-amoeba.pgm",
                    pair: (0, 1),
                    mode: RasterMode::Amoeba,
                    bounds: RasterBounds {
                        x: (-6.0, 6.0),
                        y: (-6.0, 6.0),
                    },
                    resolution: if full { (1024, 1024) } else { (512, 512) },
                    samples: fig_samples,
                },
                FigureJob {
                    filename: "real-line-coamoeba.pgm",
                    pair: (0, 1),
                    mode: RasterMode::Coamoeba,
                    bounds: RasterBounds::torus(),
                    resolution: (512, 512),
                    samples: fig_samples,
                },
            ],
        },
        GalleryCase {
            name: "nonreal-line",
            spec: nonreal_spec,
            plane: Some(nonreal),
            ladder: vec![20.0, 40.0, 80.0, 160.0],
            expect_divergent: false,
            limits: Some(LimitExpectation {
                points: 4,
                arcs: 0,
                directions: vec![],
                all_rational: true,
            }),
            limit_domain: Some(vec![VarRect::centered(90_000.0)]),
            limit_ladder: vec![10.0, 20.0, 40.0],
            fibers: Some(FiberExpectation {
                log: 1,
                arg: Some(1),
                p: Ratio::new(1, 1),
                cap_p: Ratio::new(1, 1),
            }),
            volume: None,
            figures: vec![],
        },
        GalleryCase {
            name: "real-2-plane",
            spec: plane2_spec,
            plane: Some(plane2),
            ladder: vec![10.0, 20.0, 40.0, 60.0],
            expect_divergent: false,
            limits: None,
            limit_domain: None,
            limit_ladder: vec![],
            fibers: Some(FiberExpectation {
                log: 4,
                arg: Some(1),
                p: Ratio::new(1, 4),
                cap_p: Ratio::new(1, 4),
            }),
            volume: Some(VolumeExpectation {
                amoeba: PI.powi(4) / 4.0,
                coamoeba: PI.powi(4),
            }),
            figures: vec![],
        },
        GalleryCase {
            name: "exp-curve",
            spec: exp_curve_spec(1000.0),
            plane: None,
            ladder: vec![5.0, 10.0, 20.0, 40.0],
            expect_divergent: true,
            limits: Some(LimitExpectation {
                points: 1,
                arcs: 1,
                directions: vec![vec![-1.0, 0.0]],
                all_rational: false,
            }),
            limit_domain: Some(vec![exp_far_domain()]),
            limit_ladder: vec![10.0, 20.0, 40.0],
            fibers: Some(FiberExpectation {
                log: 2,
                arg: None,
                p: Ratio::new(0, 1),
                cap_p: Ratio::new(0, 1),
            }),
            volume: None,
            figures: vec![FigureJob {
                filename: "exp-curve.pgm",
                pair: (0, 1),
                mode: RasterMode::Amoeba,
                bounds: RasterBounds {
                    x: (-3.0, 3.0),
                    y: (-20.0, 20.0),
                },
                resolution: (512, 512),
                samples: fig_samples,
            }],
        },
        GalleryCase {
            name: "circle-curve",
            spec: circle_curve_spec(40.0),
            plane: None,
            ladder: vec![5.0, 10.0, 20.0, 30.0],
            expect_divergent: false,
            limits: Some(LimitExpectation {
                points: 3,
                arcs: 0,
                directions: vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![s, s]],
                all_rational: true,
            }),
            limit_domain: None,
            limit_ladder: vec![10.0, 15.0, 20.0],
            fibers: None,
            volume: None,
            figures: vec![],
        },
        GalleryCase {
            name: "spatial-curve",
            spec: spatial_curve_spec(1000.0),
            plane: None,
            ladder: vec![5.0, 10.0, 20.0, 40.0],
            expect_divergent: true,
            limits: Some(LimitExpectation {
                points: 2,
                arcs: 1,
                directions: vec![vec![-1.0, 0.0, 0.0], vec![0.0, 0.0, -1.0]],
                all_rational: false,
            }),
            limit_domain: Some(vec![exp_far_domain()]),
            limit_ladder: vec![10.0, 20.0, 40.0],
            // Generic Arg fibers are single points at desk scale: the ray
            // constraints from z1 and z3 intersect once. Unbounded counts
            // only appear near the diagonal subtorus of the phase limit set.
            fibers: Some(FiberExpectation {
                log: 2,
                arg: Some(1),
                p: Ratio::new(1, 2),
                cap_p: Ratio::new(1, 2),
            }),
            volume: None,
            figures: vec![FigureJob {
                filename: "spatial-curve-z1z2.pgm",
                pair: (0, 1),
                mode: RasterMode::Amoeba,
                bounds: RasterBounds {
                    x: (-3.0, 3.0),
                    y: (-20.0, 20.0),
                },
                resolution: (512, 512),
                samples: fig_samples,
            }],
        },
    ]
}

/// Max relative Log/Arg density deviation and per-minor deviation over
/// random domain samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JacobianCheck {
    pub samples: u64,
    pub max_rel_deviation: f64,
    pub max_minor_deviation: f64,
}

/// Pointwise check of the Log/Arg Jacobian identity over `samples` random
/// points of the spec's domain.
pub fn check_jacobian_identity(spec: &VarietySpec, samples: u64, seed: u64) -> JacobianCheck {
    let space = SampleSpace::build(spec, &spec.domain, SamplerMode::PoleAware);
    let mut plan = MinorPlan::new(spec.n(), spec.k).expect("dims validated");
    let mut ws = EvalWorkspace::default();
    let mut jet = Jet::default();
    let mut t = Vec::new();
    let mut max_rel: f64 = 0.0;
    let mut max_minor: f64 = 0.0;
    let mut used = 0u64;
    let mut index = 0u64;
    while used < samples && index < samples * 20 {
        space.draw(seed, index, &mut t);
        index += 1;
        if !space.guard_ok(&t) || !space.in_box(&t) {
            continue;
        }
        if spec.eval_jet_into(&t, &mut ws, &mut jet).is_err() {
            continue;
        }
        let log_jac = plan.gen_jac(&jet, TorusMap::Log);
        let arg_jac = plan.gen_jac(&jet, TorusMap::Arg);
        if !log_jac.is_finite() || !arg_jac.is_finite() {
            continue;
        }
        max_rel = max_rel.max((log_jac - arg_jac).abs() / (1.0 + log_jac));
        let lm = plan.minor_magnitudes(&jet, TorusMap::Log);
        let am = plan.minor_magnitudes(&jet, TorusMap::Arg);
        for (l, a) in lm.iter().zip(&am) {
            max_minor = max_minor.max((l - a).abs() / (1.0 + l));
        }
        used += 1;
    }
    JacobianCheck {
        samples: used,
        max_rel_deviation: max_rel,
        max_minor_deviation: max_minor,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// Check pins a quantitative statement from the source material; these
    /// gate the exit code.
    pub load_bearing: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseResult {
    pub name: String,
    pub checks: Vec<CheckResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GallerySummary {
    pub profile: BudgetProfile,
    pub seed: u64,
    pub cases: Vec<CaseResult>,
    pub all_passed: bool,
}

impl fmt::Display for GallerySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for case in &self.cases {
            for check in &case.checks {
                writeln!(
                    f,
                    "{} {:<14} {:<22} {}",
                    if check.passed { "PASS" } else { "FAIL" },
                    case.name,
                    check.name,
                    check.detail
                )?;
            }
        }
        writeln!(
            f,
            "gallery: {}",
            if self.all_passed { "PASS" } else { "FAIL" }
        )
    }
}

fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0).acos()
}

fn push(checks: &mut Vec<CheckResult>, name: &str, passed: bool, detail: String, load: bool) {
    checks.push(CheckResult {
        name: name.to_string(),
        passed,
        detail,
        load_bearing: load,
    });
}

fn run_case(
    case: &GalleryCase,
    profile: BudgetProfile,
    seed: u64,
    out_dir: &Path,
) -> Result<CaseResult, GalleryError> {
    let full = profile == BudgetProfile::Full;
    let mut checks = Vec::new();
    let name_tag = case
        .name
        .bytes()
        .fold(0u64, |acc, b| acc.wrapping_mul(31).wrapping_add(b as u64));
    let case_seed = CounterRng::derive_seed(seed, name_tag);

    // Jacobian identity.
    let jac_samples = if full { 20_000 } else { 10_000 };
    let jac = check_jacobian_identity(&case.spec, jac_samples, case_seed);
    push(
        &mut checks,
        "jacobian-identity",
        jac.max_rel_deviation <= 1e-8 && jac.max_minor_deviation <= 1e-8,
        format!(
            "max rel dev {:.2e}, max minor dev {:.2e} over {} pts",
            jac.max_rel_deviation, jac.max_minor_deviation, jac.samples
        ),
        true,
    );

    // Finiteness ladder.
    let stage_samples = if full { 120_000 } else { 50_000 };
    match measure::classify_finiteness(&case.spec, &case.ladder, stage_samples, case_seed ^ 1) {
        Ok(report) => {
            let (ok, detail) = match (&report.verdict, case.expect_divergent) {
                (FinitenessVerdict::Divergent { growth_exponent }, true) => {
                    (true, format!("divergent, growth exponent {growth_exponent:.2}"))
                }
                (FinitenessVerdict::Convergent { estimate }, false) => {
                    (true, format!("convergent, integral {estimate:.4}"))
                }
                (v, _) => (false, format!("unexpected verdict {v:?}")),
            };
            push(&mut checks, "finiteness", ok, detail, true);
        }
        Err(e) => push(&mut checks, "finiteness", false, e.to_string(), true),
    }

    // Limit set.
    if let Some(expect) = &case.limits {
        let mut opts = LimitSetOptions::new(
            case.limit_ladder.clone(),
            if full { 200_000 } else { 120_000 },
            case_seed ^ 2,
        );
        opts.domain = case.limit_domain.clone();
        match limitset::log_limit_set(&case.spec, &opts) {
            Ok(report) => {
                let points_ok = report.isolated_points == expect.points;
                let arcs_ok = report.arcs == expect.arcs;
                let mut dirs_ok = true;
                for want in &expect.directions {
                    let hit = report
                        .features
                        .iter()
                        .any(|f| angle_between(&f.direction, want) <= 2f64.to_radians());
                    dirs_ok &= hit;
                }
                let rational_ok = !expect.all_rational
                    || report
                        .features
                        .iter()
                        .all(|f| matches!(f.rationality, Rationality::Rational { .. }));
                let arc_features = report
                    .features
                    .iter()
                    .filter(|f| f.kind == FeatureKind::Arc)
                    .count();
                push(
                    &mut checks,
                    "limit-set",
                    points_ok && arcs_ok && dirs_ok && rational_ok,
                    format!(
                        "{} points + {} arcs from {} far samples",
                        report.isolated_points, arc_features, report.far_samples
                    ),
                    true,
                );
            }
            Err(e) => push(&mut checks, "limit-set", false, e.to_string(), true),
        }
    }

    // Fiber counts and covering ratios.
    if let Some(expect) = &case.fibers {
        let opts = SolveOptions::for_spec(&case.spec, case_seed ^ 3);
        let probes = if full { 20 } else { 6 };
        match fibers::estimate_p_p(&case.spec, probes, opts) {
            Ok(est) => {
                let log_ok = est.evidence.iter().all(|e| e.log_count == expect.log as usize);
                let arg_ok = match expect.arg {
                    Some(a) => est.evidence.iter().all(|e| e.arg_count == a as usize),
                    // Arg covering not finite: the growth flag must trip.
                    None => est.arg_unbounded_suspected,
                };
                let ratio_ok = match expect.arg {
                    Some(_) => est.p == expect.p && est.cap_p == expect.cap_p,
                    None => true,
                };
                push(
                    &mut checks,
                    "fiber-counts",
                    log_ok && arg_ok && ratio_ok,
                    format!(
                        "log {:?}, arg {:?}, p {}, P {}{}",
                        est.evidence.iter().map(|e| e.log_count).collect::<Vec<_>>(),
                        est.evidence.iter().map(|e| e.arg_count).collect::<Vec<_>>(),
                        est.p,
                        est.cap_p,
                        if est.arg_unbounded_suspected {
                            " (arg unbounded suspected; P is a lower bound)"
                        } else {
                            ""
                        }
                    ),
                    true,
                );
            }
            Err(e) => push(&mut checks, "fiber-counts", false, e.to_string(), true),
        }
    }

    // Volume certificates (full profile).
    if full {
        if let (Some(expect), Some(_plane)) = (&case.volume, &case.plane) {
            let samples = if case.spec.k == 1 { 1_000_000 } else { 2_000_000 };
            let am = measure::integrate_pullback(
                &case.spec,
                VolumeTarget::Amoeba,
                samples,
                case_seed ^ 4,
                &case.spec.domain,
                SamplerMode::PoleAware,
            );
            let co = measure::integrate_pullback(
                &case.spec,
                VolumeTarget::Coamoeba,
                samples,
                case_seed ^ 5,
                &case.spec.domain,
                SamplerMode::PoleAware,
            );
            match (am, co) {
                (Ok(am), Ok(co)) => {
                    let am_ok = (am.value - expect.amoeba).abs() <= 3.0 * am.stderr;
                    let co_ok = (co.value - expect.coamoeba).abs() <= 3.0 * co.stderr;
                    push(
                        &mut checks,
                        "volume",
                        am_ok && co_ok,
                        format!(
                            "amoeba {:.4} +- {:.4} (target {:.4}), coamoeba {:.4} +- {:.4} (target {:.4})",
                            am.value, am.stderr, expect.amoeba, co.value, co.stderr, expect.coamoeba
                        ),
                        true,
                    );
                    // Comparison certificate with the case's p and P.
                    if let Some(fib) = &case.fibers {
                        if fib.arg.is_some() {
                            let report =
                                measure::comparison_certificate(fib.p, fib.cap_p, &am, &co);
                            push(
                                &mut checks,
                                "comparison",
                                report.pass,
                                format!(
                                    "margins {:.1} sigma / {:.1} sigma",
                                    report.lower_margin_sigma, report.upper_margin_sigma
                                ),
                                true,
                            );
                        }
                    }
                }
                (am, co) => {
                    let msg = [am.err(), co.err()]
                        .into_iter()
                        .flatten()
                        .map(|e| e.to_string())
                        .collect::<Vec<_>>()
                        .join("; ");
                    push(&mut checks, "volume", false, msg, true);
                }
            }
        }
    } else if case.fibers.as_ref().is_some_and(|f| f.arg.is_some()) && case.volume.is_some() {
        // Quick profile still certifies the comparison inequality, at a
        // lighter sample budget.
        let am = measure::integrate_pullback(
            &case.spec,
            VolumeTarget::Amoeba,
            150_000,
            case_seed ^ 4,
            &case.spec.domain,
            SamplerMode::PoleAware,
        );
        let co = measure::integrate_pullback(
            &case.spec,
            VolumeTarget::Coamoeba,
            150_000,
            case_seed ^ 5,
            &case.spec.domain,
            SamplerMode::PoleAware,
        );
        if let (Ok(am), Ok(co)) = (am, co) {
            let fib = case.fibers.as_ref().unwrap();
            let report = measure::comparison_certificate(fib.p, fib.cap_p, &am, &co);
            push(
                &mut checks,
                "comparison",
                report.pass,
                format!(
                    "margins {:.1} sigma / {:.1} sigma",
                    report.lower_margin_sigma, report.upper_margin_sigma
                ),
                true,
            );
        }
    }

    // Figures.
    for job in &case.figures {
        match raster::raster_pushforward(
            &case.spec,
            job.pair,
            job.mode,
            job.bounds,
            job.resolution,
            job.samples,
            case_seed ^ 6,
        ) {
            Ok(grid) => {
                let path = out_dir.join(job.filename);
                let write = std::fs::File::create(&path)
                    .map_err(|source| GalleryError::Io {
                        path: path.display().to_string(),
                        source,
                    })
                    .and_then(|f| {
                        grid.write_pgm(std::io::BufWriter::new(f)).map_err(|e| {
                            GalleryError::Io {
                                path: path.display().to_string(),
                                source: std::io::Error::other(e.to_string()),
                            }
                        })
                    });
                match write {
                    Ok(()) => {
                        let mut detail =
                            format!("{} ({} occupied cells)", job.filename, grid.occupied_cells());
                        let mut passed = true;
                        // Raster cross-check of the closed-form area.
                        if full && job.mode == RasterMode::Amoeba && case.name == "real-line" {
                            let target = PI * PI / 2.0;
                            let area = grid.corrected_area();
                            passed = (area - target).abs() / target <= 0.03;
                            detail = format!("{detail}, corrected area {area:.4} vs {target:.4}");
                        }
                        if full && job.mode == RasterMode::Coamoeba && case.name == "real-line" {
                            let target = PI * PI;
                            let area = grid.corrected_area();
                            passed = (area - target).abs() / target <= 0.03;
                            detail = format!("{detail}, corrected area {area:.4} vs {target:.4}");
                        }
                        push(&mut checks, job.filename, passed, detail, full);
                    }
                    Err(e) => push(&mut checks, job.filename, false, e.to_string(), false),
                }
            }
            Err(e) => push(&mut checks, job.filename, false, e.to_string(), false),
        }
    }

    // The circle curve also exercises the implicit-hypersurface rasterizer.
    if case.name == "circle-curve" {
        let poly = BivariatePoly {
            coeffs: vec![
                vec![c(-1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
                vec![],
                vec![c(1.0, 0.0)],
            ],
        };
        let bounds = RasterBounds {
            x: (-3.0, 3.0),
            y: (-3.0, 3.0),
        };
        match raster::raster_hypersurface(&poly, bounds, (512, 512), 128, case_seed ^ 7) {
            Ok(grid) => {
                let path = out_dir.join("circle-hypersurface.pgm");
                let ok = std::fs::File::create(&path)
                    .ok()
                    .map(|f| grid.write_pgm(std::io::BufWriter::new(f)).is_ok())
                    .unwrap_or(false);
                push(
                    &mut checks,
                    "circle-hypersurface.pgm",
                    ok,
                    format!("{} occupied cells", grid.occupied_cells()),
                    false,
                );
            }
            Err(e) => push(&mut checks, "circle-hypersurface.pgm", false, e.to_string(), false),
        }
    }

    Ok(CaseResult {
        name: case.name.to_string(),
        checks,
    })
}

/// Run every gallery case, write reports and figures under `out_dir`, and
/// return the summary. `all_passed` covers the load-bearing checks.
pub fn run_gallery(
    out_dir: &Path,
    profile: BudgetProfile,
    seed: u64,
) -> Result<GallerySummary, GalleryError> {
    std::fs::create_dir_all(out_dir).map_err(|source| GalleryError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let mut cases = Vec::new();
    for case in gallery_cases(profile) {
        let result = run_case(&case, profile, seed, out_dir)?;
        let path = out_dir.join(format!("{}.json", case.name));
        let json = serde_json::to_string_pretty(&result).expect("serializable");
        std::fs::write(&path, json).map_err(|source| GalleryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        cases.push(result);
    }
    let all_passed = cases
        .iter()
        .flat_map(|c| &c.checks)
        .filter(|c| c.load_bearing)
        .all(|c| c.passed);
    let summary = GallerySummary {
        profile,
        seed,
        cases,
        all_passed,
    };
    let path = out_dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).expect("serializable");
    std::fs::write(&path, json).map_err(|source| GalleryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(summary)
}
