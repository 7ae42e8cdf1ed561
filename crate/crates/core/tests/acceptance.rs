//! Acceptance suite: every quantitative claim the library certifies, one
//! test per criterion, each printing a PASS line with the measured numbers
//! (run with `--nocapture` to see them).

use amoeba_core::fibers::{self, Regularity, SolveOptions};
use amoeba_core::gallery::{
    self, check_jacobian_identity, circle_curve_spec, exp_curve_spec, nonreal_line_plane,
    real_2plane, real_line_plane, spatial_curve_spec,
};
use amoeba_core::limitset::{self, FeatureKind, LimitSetOptions, Rationality};
use amoeba_core::maps::TorusMap;
use amoeba_core::measure::{
    self, comparison_certificate, FinitenessVerdict, SamplerMode, VolumeTarget,
};
use amoeba_core::raster::{self, RasterBounds, RasterMode};
use amoeba_core::variety::{VarRect, VarietySpec};
use num_complex::Complex64;
use num_rational::Ratio;
use std::f64::consts::PI;
use std::time::Instant;

fn line_spec(half_width: f64) -> VarietySpec {
    real_line_plane()
        .to_variety(half_width)
        .unwrap()
        .with_multiplicities(Some(2), Some(1))
}

fn nonreal_line_spec(half_width: f64) -> VarietySpec {
    nonreal_line_plane()
        .to_variety(half_width)
        .unwrap()
        .with_multiplicities(Some(1), Some(1))
}

fn plane_spec(half_width: f64) -> VarietySpec {
    real_2plane()
        .to_variety(half_width)
        .unwrap()
        .with_multiplicities(Some(4), Some(1))
}

fn angle_deg(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    (dot / (na.sqrt() * nb.sqrt()))
        .clamp(-1.0, 1.0)
        .acos()
        .to_degrees()
}

/// Criterion 1: over >= 1e4 random points on each of five gallery specs,
/// the Log and Arg generalized Jacobians agree to 1e-8 relative, minor by
/// minor, in under 10 seconds.
#[test]
fn criterion_1_jacobian_identity() {
    let start = Instant::now();
    let specs: Vec<(&str, VarietySpec)> = vec![
        ("real-line", line_spec(40.0)),
        ("nonreal-line", nonreal_line_spec(40.0)),
        ("real-2-plane", plane_spec(40.0)),
        ("exp-curve", exp_curve_spec(40.0)),
        ("circle-curve", circle_curve_spec(40.0)),
    ];
    let mut worst_rel: f64 = 0.0;
    let mut worst_minor: f64 = 0.0;
    for (name, spec) in &specs {
        let check = check_jacobian_identity(spec, 10_000, 2024);
        assert!(
            check.samples >= 10_000,
            "{name}: only {} samples",
            check.samples
        );
        assert!(
            check.max_rel_deviation <= 1e-8,
            "{name}: rel deviation {}",
            check.max_rel_deviation
        );
        assert!(
            check.max_minor_deviation <= 1e-8,
            "{name}: minor deviation {}",
            check.max_minor_deviation
        );
        worst_rel = worst_rel.max(check.max_rel_deviation);
        worst_minor = worst_minor.max(check.max_minor_deviation);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "criterion 1 PASS: jacobian identity on 5 specs x 1e4 points, worst rel {worst_rel:.2e}, worst minor {worst_minor:.2e}, {elapsed:?}"
    );
}

/// Criterion 2: real line in (C*)^2. Amoeba volume pi^2/2 within 3 stderr
/// at 1e6 samples with stderr <= 1.5%, raster pixel count within 3%, and
/// the same for the coamoeba at pi^2; all under 60 seconds.
#[test]
fn criterion_2_real_line_volumes() {
    let start = Instant::now();
    let spec = line_spec(400.0);
    let target_amoeba = PI * PI / 2.0;
    let target_coamoeba = PI * PI;

    let am = measure::integrate_pullback(
        &spec,
        VolumeTarget::Amoeba,
        1_000_000,
        11,
        &spec.domain,
        SamplerMode::PoleAware,
    )
    .unwrap();
    assert!(
        (am.value - target_amoeba).abs() <= 3.0 * am.stderr,
        "amoeba {} +- {} vs {target_amoeba}",
        am.value,
        am.stderr
    );
    assert!(
        am.stderr <= 0.015 * target_amoeba,
        "amoeba stderr {} above 1.5%",
        am.stderr
    );

    let co = measure::integrate_pullback(
        &spec,
        VolumeTarget::Coamoeba,
        1_000_000,
        12,
        &spec.domain,
        SamplerMode::PoleAware,
    )
    .unwrap();
    assert!(
        (co.value - target_coamoeba).abs() <= 3.0 * co.stderr,
        "coamoeba {} +- {} vs {target_coamoeba}",
        co.value,
        co.stderr
    );
    assert!(co.stderr <= 0.015 * target_coamoeba);

    // Raster route: pixel-count areas with the one-cell-scale correction.
    let raster_spec = line_spec(2_000.0);
    let am_grid = raster::raster_pushforward(
        &raster_spec,
        (0, 1),
        RasterMode::Amoeba,
        RasterBounds {
            x: (-6.0, 6.0),
            y: (-6.0, 6.0),
        },
        (1024, 1024),
        10_000_000,
        13,
    )
    .unwrap();
    let am_area = am_grid.corrected_area();
    assert!(
        (am_area - target_amoeba).abs() / target_amoeba <= 0.03,
        "amoeba raster area {am_area} vs {target_amoeba}"
    );

    let co_grid = raster::raster_pushforward(
        &raster_spec,
        (0, 1),
        RasterMode::Coamoeba,
        RasterBounds::torus(),
        (512, 512),
        10_000_000,
        14,
    )
    .unwrap();
    let co_area = co_grid.corrected_area();
    assert!(
        (co_area - target_coamoeba).abs() / target_coamoeba <= 0.03,
        "coamoeba raster area {co_area} vs {target_coamoeba}"
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "criterion 2 PASS: amoeba {:.4} +- {:.4} (target {:.4}), raster {:.4}; coamoeba {:.4} +- {:.4} (target {:.4}), raster {:.4}; {elapsed:?}",
        am.value, am.stderr, target_amoeba, am_area, co.value, co.stderr, target_coamoeba, co_area
    );
}

/// Criterion 3: real 2-plane in (C*)^4, amoeba volume pi^4/4 within 5% at
/// 1e6..1e7 samples, under 5 minutes.
#[test]
fn criterion_3_real_2plane_volume() {
    let start = Instant::now();
    let spec = plane_spec(60.0);
    let target = PI.powi(4) / 4.0;
    let est = measure::integrate_pullback(
        &spec,
        VolumeTarget::Amoeba,
        4_000_000,
        21,
        &spec.domain,
        SamplerMode::PoleAware,
    )
    .unwrap();
    let rel = (est.value - target).abs() / target;
    assert!(
        rel <= 0.05,
        "plane amoeba {} vs {target} ({:.2}% off)",
        est.value,
        100.0 * rel
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    println!(
        "criterion 3 PASS: plane amoeba {:.4} +- {:.4} vs {target:.4} ({:.2}% off), {elapsed:?}",
        est.value,
        est.stderr,
        100.0 * rel
    );
}

/// Criterion 4: exact fiber counts at 20 regular probes per case, and the
/// covering ratios p = P = 1/2^k as exact rationals.
#[test]
fn criterion_4_fiber_counts() {
    // Real line: Log fiber 2, Arg fiber 1.
    let line = line_spec(40.0);
    let est = fibers::estimate_p_p(&line, 20, SolveOptions::for_spec(&line, 31)).unwrap();
    assert_eq!(est.evidence.len(), 20);
    for e in &est.evidence {
        assert_eq!(e.log_count, 2, "line log fiber {e:?}");
        assert_eq!(e.arg_count, 1, "line arg fiber {e:?}");
    }
    assert_eq!(est.p, Ratio::new(1, 2));
    assert_eq!(est.cap_p, Ratio::new(1, 2));

    // Non-real line in (C*)^3: Log fiber 1.
    let nonreal = nonreal_line_spec(40.0);
    let est_nr =
        fibers::estimate_p_p(&nonreal, 20, SolveOptions::for_spec(&nonreal, 32)).unwrap();
    for e in &est_nr.evidence {
        assert_eq!(e.log_count, 1, "nonreal-line log fiber {e:?}");
        assert_eq!(e.arg_count, 1, "nonreal-line arg fiber {e:?}");
    }
    assert_eq!(est_nr.p, Ratio::new(1, 1));
    assert_eq!(est_nr.cap_p, Ratio::new(1, 1));

    // Real 2-plane in (C*)^4: Log fiber 4 = 2^2.
    let plane = plane_spec(40.0);
    let est_pl = fibers::estimate_p_p(&plane, 20, SolveOptions::for_spec(&plane, 33)).unwrap();
    for e in &est_pl.evidence {
        assert_eq!(e.log_count, 4, "plane log fiber {e:?}");
        assert_eq!(e.arg_count, 1, "plane arg fiber {e:?}");
    }
    assert_eq!(est_pl.p, Ratio::new(1, 4));
    assert_eq!(est_pl.cap_p, Ratio::new(1, 4));

    println!(
        "criterion 4 PASS: line (2,1) p=P=1/2; nonreal line (1,1) p=P=1; plane (4,1) p=P=1/4; 20 regular probes each"
    );
}

/// Criterion 5: p vol(coamoeba) <= vol(amoeba) <= P vol(coamoeba) with
/// 3-stderr slack on the real line, the non-real line, and the 2-plane.
#[test]
fn criterion_5_comparison_inequality() {
    let cases: Vec<(&str, VarietySpec, Ratio<i64>, u64, u64)> = vec![
        ("real-line", line_spec(400.0), Ratio::new(1, 2), 400_000, 41),
        (
            "nonreal-line",
            nonreal_line_spec(400.0),
            Ratio::new(1, 1),
            400_000,
            42,
        ),
        ("real-2-plane", plane_spec(60.0), Ratio::new(1, 4), 1_500_000, 43),
    ];
    for (name, spec, ratio, samples, seed) in cases {
        let am = measure::integrate_pullback(
            &spec,
            VolumeTarget::Amoeba,
            samples,
            seed,
            &spec.domain,
            SamplerMode::PoleAware,
        )
        .unwrap();
        let co = measure::integrate_pullback(
            &spec,
            VolumeTarget::Coamoeba,
            samples,
            seed + 100,
            &spec.domain,
            SamplerMode::PoleAware,
        )
        .unwrap();
        let report = comparison_certificate(ratio, ratio, &am, &co);
        assert!(report.pass, "{name}: {report:?}");
        let bound = *ratio.numer() as f64 / *ratio.denom() as f64 * report.vol_coamoeba;
        println!(
            "criterion 5 PASS ({name}): amoeba {:.4} vs p*co = P*co = {:.4}, margins {:.1}/{:.1} sigma",
            report.vol_amoeba, bound, report.lower_margin_sigma, report.upper_margin_sigma
        );
    }
}

/// Criterion 6: the finiteness classifier separates the divergent curves
/// from the convergent ones across 5 seeded reruns without a single
/// misclassification.
#[test]
fn criterion_6_finiteness_classifier() {
    let cases: Vec<(&str, VarietySpec, Vec<f64>, bool)> = vec![
        (
            "exp-curve",
            exp_curve_spec(1000.0),
            vec![5.0, 10.0, 20.0, 40.0],
            true,
        ),
        (
            "spatial-curve",
            spatial_curve_spec(1000.0),
            vec![5.0, 10.0, 20.0, 40.0],
            true,
        ),
        (
            "circle-curve",
            circle_curve_spec(40.0),
            vec![5.0, 10.0, 20.0, 30.0],
            false,
        ),
        (
            "real-line",
            line_spec(1000.0),
            vec![20.0, 40.0, 80.0, 160.0],
            false,
        ),
        (
            "nonreal-line",
            nonreal_line_spec(1000.0),
            vec![20.0, 40.0, 80.0, 160.0],
            false,
        ),
        (
            "real-2-plane",
            plane_spec(1000.0),
            vec![10.0, 20.0, 40.0, 60.0],
            false,
        ),
    ];
    for seed in 0..5u64 {
        for (name, spec, ladder, divergent) in &cases {
            let report = measure::classify_finiteness(spec, ladder, 50_000, seed * 1000 + 7)
                .unwrap_or_else(|e| panic!("{name} seed {seed}: {e}"));
            let ok = match (&report.verdict, divergent) {
                (FinitenessVerdict::Divergent { .. }, true) => true,
                (FinitenessVerdict::Convergent { .. }, false) => true,
                _ => false,
            };
            assert!(
                ok,
                "{name} seed {seed}: expected divergent={divergent}, got {:?}",
                report.verdict
            );
        }
    }
    println!("criterion 6 PASS: 6 cases x 5 seeds classified with zero errors");
}

/// Criterion 7: limit-set shapes. Circle: exactly three point clusters
/// within 2 degrees of the known directions, no arcs, rational slopes.
/// Exp curve: one point plus one arc. Spatial curve: two points plus one
/// arc. Non-algebraic cases flag >= 1 arc; algebraic cases none.
#[test]
fn criterion_7_limit_sets() {
    let s = 2f64.sqrt() / 2.0;

    // Circle curve (algebraic).
    let circle = circle_curve_spec(40.0);
    let opts = LimitSetOptions::new(vec![10.0, 15.0, 20.0], 200_000, 51);
    let report = limitset::log_limit_set(&circle, &opts).unwrap();
    assert_eq!(report.arcs, 0, "circle arcs: {:?}", report.features);
    assert_eq!(
        report.isolated_points, 3,
        "circle points: {:?}",
        report.features
    );
    for want in [[-1.0, 0.0], [0.0, -1.0], [s, s]] {
        let best = report
            .features
            .iter()
            .map(|f| angle_deg(&f.direction, &want))
            .fold(f64::INFINITY, f64::min);
        assert!(best <= 2.0, "circle direction {want:?} off by {best} deg");
    }
    assert!(
        report
            .features
            .iter()
            .all(|f| matches!(f.rationality, Rationality::Rational { .. })),
        "circle slopes must be rational: {:?}",
        report.features
    );

    // Exp curve (non-algebraic): one isolated point plus one arc.
    let exp = exp_curve_spec(40.0);
    let mut opts = LimitSetOptions::new(vec![10.0, 20.0, 40.0], 200_000, 52);
    opts.domain = Some(vec![VarRect {
        re: (-650.0, 650.0),
        im: (-1.5e18, 1.5e18),
    }]);
    let report = limitset::log_limit_set(&exp, &opts).unwrap();
    assert_eq!(report.arcs, 1, "exp arcs: {:?}", report.features);
    assert_eq!(report.isolated_points, 1, "exp points: {:?}", report.features);
    let point = report
        .features
        .iter()
        .find(|f| f.kind == FeatureKind::Point)
        .unwrap();
    assert!(angle_deg(&point.direction, &[-1.0, 0.0]) <= 2.0);

    // Spatial curve (non-algebraic): two points plus one arc.
    let spatial = spatial_curve_spec(40.0);
    let mut opts = LimitSetOptions::new(vec![10.0, 20.0, 40.0], 200_000, 53);
    opts.domain = Some(vec![VarRect {
        re: (-650.0, 650.0),
        im: (-1.5e18, 1.5e18),
    }]);
    let report = limitset::log_limit_set(&spatial, &opts).unwrap();
    assert_eq!(report.arcs, 1, "spatial arcs: {:?}", report.features);
    assert_eq!(
        report.isolated_points, 2,
        "spatial points: {:?}",
        report.features
    );

    println!(
        "criterion 7 PASS: circle 3 rational points / 0 arcs; exp 1 point + 1 arc; spatial 2 points + 1 arc"
    );
}

/// Criterion 8: property suite. Determinism under a fixed seed (bit
/// identical reports across thread counts), stderr scaling ~ 1/sqrt(N)
/// within 15%, conjugate-pair Log fibers for real specs, and consistency
/// of the amoeba/coamoeba pushforward integrals.
#[test]
fn criterion_8_property_suite() {
    let spec = line_spec(40.0);

    // Determinism: byte-identical serialized reports across pools.
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let est = measure::integrate_pullback(
                &spec,
                VolumeTarget::Amoeba,
                200_000,
                61,
                &spec.domain,
                SamplerMode::PoleAware,
            )
            .unwrap();
            serde_json::to_string(&est).unwrap()
        })
    };
    let a = run(1);
    let b = run(2);
    let c = run(4);
    assert_eq!(a, b, "reports differ between 1 and 2 threads");
    assert_eq!(b, c, "reports differ between 2 and 4 threads");

    // stderr ~ 1/sqrt(samples): quadrupling samples halves stderr +-15%.
    let stderr_of = |n: u64, seed: u64| {
        measure::integrate_pullback(
            &spec,
            VolumeTarget::Amoeba,
            n,
            seed,
            &spec.domain,
            SamplerMode::PoleAware,
        )
        .unwrap()
        .stderr
    };
    let mut ratios = Vec::new();
    for seed in [62, 63, 64] {
        ratios.push(stderr_of(200_000, seed) / stderr_of(800_000, seed));
    }
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!(
        (mean_ratio - 2.0).abs() <= 0.3,
        "stderr ratio {mean_ratio} not within 15% of 2"
    );

    // Conjugate pairs in Log fibers of real specs at regular values.
    for (spec, seed) in [(line_spec(40.0), 65u64), (plane_spec(40.0), 66u64)] {
        let mut checked = 0;
        let mut probe = 0u64;
        while checked < 5 && probe < 200 {
            probe += 1;
            let mut rng = amoeba_core::rng::CounterRng::for_sample(seed, probe);
            let t0: Vec<Complex64> = (0..spec.k)
                .map(|_| Complex64::new(rng.uniform(-2.0, 2.0), rng.uniform(0.2, 2.0)))
                .collect();
            let Some(target) = fibers::pushforward_target(&spec, &t0, TorusMap::Log) else {
                continue;
            };
            let report = fibers::fiber_count(
                &spec,
                TorusMap::Log,
                &target,
                SolveOptions::for_spec(&spec, seed + probe),
            )
            .unwrap();
            if report.regularity != Regularity::Regular {
                continue;
            }
            for sol in &report.solutions {
                let found = report.solutions.iter().any(|other| {
                    sol.iter()
                        .zip(other.iter())
                        .all(|(p, q)| (p[0] - q[0]).abs() <= 1e-6 && (p[1] + q[1]).abs() <= 1e-6)
                });
                assert!(found, "missing conjugate of {sol:?} in {report:?}");
            }
            checked += 1;
        }
        assert_eq!(checked, 5, "not enough regular probes");
    }

    // Amoeba and coamoeba integrate the same density: the products with
    // their multiplicities agree within 3 stderr.
    let am = measure::integrate_pullback(
        &spec,
        VolumeTarget::Amoeba,
        400_000,
        67,
        &spec.domain,
        SamplerMode::PoleAware,
    )
    .unwrap();
    let co = measure::integrate_pullback(
        &spec,
        VolumeTarget::Coamoeba,
        400_000,
        68,
        &spec.domain,
        SamplerMode::PoleAware,
    )
    .unwrap();
    let lhs = am.value * am.multiplicity as f64;
    let rhs = co.value * co.multiplicity as f64;
    let sigma = ((am.stderr * am.multiplicity as f64).powi(2)
        + (co.stderr * co.multiplicity as f64).powi(2))
    .sqrt();
    assert!(
        (lhs - rhs).abs() <= 3.0 * sigma,
        "pushforward integrals disagree: {lhs} vs {rhs} (sigma {sigma})"
    );

    println!(
        "criterion 8 PASS: bit-identical reports across 1/2/4 threads; stderr ratio {mean_ratio:.3}; conjugate pairs on 2 specs x 5 probes; integral consistency {lhs:.4} vs {rhs:.4}"
    );
}

/// Gallery determinism: two quick runs with the same seed produce byte
/// identical JSON reports.
#[test]
fn gallery_reports_are_reproducible() {
    let dir1 = std::env::temp_dir().join("amoeba-acceptance-g1");
    let dir2 = std::env::temp_dir().join("amoeba-acceptance-g2");
    for d in [&dir1, &dir2] {
        let _ = std::fs::remove_dir_all(d);
    }
    // A light sub-run: jacobian checks only, via the public runner on the
    // quick profile would repeat the whole suite; instead compare the
    // deterministic pieces across repeated in-process runs.
    let spec = line_spec(40.0);
    let a = serde_json::to_string(&check_jacobian_identity(&spec, 5_000, 9)).unwrap();
    let b = serde_json::to_string(&check_jacobian_identity(&spec, 5_000, 9)).unwrap();
    assert_eq!(a, b);

    let est1 = measure::classify_finiteness(&spec, &[20.0, 40.0, 80.0, 160.0], 20_000, 9).unwrap();
    let est2 = measure::classify_finiteness(&spec, &[20.0, 40.0, 80.0, 160.0], 20_000, 9).unwrap();
    assert_eq!(
        serde_json::to_string(&est1).unwrap(),
        serde_json::to_string(&est2).unwrap()
    );
    let _ = gallery::gallery_cases(gallery::BudgetProfile::Quick);
}
