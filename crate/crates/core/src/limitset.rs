//! Logarithmic limit sets by far-field direction clustering, rational-slope
//! detection, and torus-closure dimension of a direction.
//!
//! Far samples of Log(z(t)) are normalized to the unit sphere and greedily
//! clustered by angular tolerance. Clusters chained into a connected arc
//! longer than three tolerances are reported as 1-dimensional components;
//! the rest are points. For algebraic specs every feature is an isolated
//! point with a rational slope.

use crate::expr::{EvalWorkspace, Jet};
use crate::variety::{CoverageSampler, VarRect, VarietySpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LimitSetError {
    #[error("radius ladder must be increasing and nonempty")]
    BadLadder,
    #[error("no sample reached log-norm {0}; enlarge the sampling domain")]
    NoFarSamples(f64),
}

/// Rationality verdict for one direction on the sphere.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Rationality {
    Rational { vector: Vec<i64> },
    IrrationalWithinBounds,
}

/// One cluster of far-field directions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionCluster {
    /// Unit vector in R^n.
    pub direction: Vec<f64>,
    /// Number of far samples assigned to the cluster.
    pub weight: u64,
    /// Max angular deviation of members from the center (radians).
    pub spread: f64,
    pub rationality: Rationality,
    /// Arc id when the cluster belongs to a 1-dimensional chain.
    pub arc_id: Option<usize>,
}

/// Point or arc feature, a connected group of clusters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitFeature {
    pub kind: FeatureKind,
    /// Representative direction (weighted mean of member clusters).
    pub direction: Vec<f64>,
    pub weight: u64,
    /// Angular extent across the feature (radians).
    pub extent: f64,
    pub rationality: Rationality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Point,
    Arc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitSetReport {
    pub clusters: Vec<DirectionCluster>,
    pub features: Vec<LimitFeature>,
    pub far_samples: u64,
    pub arcs: usize,
    pub isolated_points: usize,
}

/// Options for `log_limit_set`.
#[derive(Debug, Clone)]
pub struct LimitSetOptions {
    /// Increasing Log-norm radii; samples beyond the first rung count as far.
    pub ladder: Vec<f64>,
    pub samples: u64,
    /// Angular cluster tolerance in radians (default 1.5 degrees).
    pub cluster_tol: f64,
    pub seed: u64,
    /// Sampling domain override; defaults to the spec's domain.
    pub domain: Option<Vec<VarRect>>,
    /// Max denominator for the rational-slope search.
    pub max_denominator: u64,
}

impl LimitSetOptions {
    pub fn new(ladder: Vec<f64>, samples: u64, seed: u64) -> Self {
        Self {
            ladder,
            samples,
            cluster_tol: 1.5f64.to_radians(),
            seed,
            domain: None,
            max_denominator: 50,
        }
    }
}

fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot.clamp(-1.0, 1.0).acos()
}

/// Estimate the logarithmic limit set by clustering far-field directions.
pub fn log_limit_set(
    spec: &VarietySpec,
    opts: &LimitSetOptions,
) -> Result<LimitSetReport, LimitSetError> {
    if opts.ladder.is_empty() || opts.ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LimitSetError::BadLadder);
    }
    let far_threshold = opts.ladder[0];
    let outer = *opts.ladder.last().unwrap();
    let rects = opts.domain.clone().unwrap_or_else(|| spec.domain.clone());
    let sampler = CoverageSampler::new(spec, rects, outer);

    let mut ws = EvalWorkspace::default();
    let mut jet = Jet::default();
    let mut t = Vec::new();
    let n = spec.n();

    // Greedy clustering of normalized far directions.
    let mut centers: Vec<Vec<f64>> = Vec::new();
    let mut sums: Vec<Vec<f64>> = Vec::new();
    let mut weights: Vec<u64> = Vec::new();
    let mut spreads: Vec<f64> = Vec::new();
    let mut far_samples = 0u64;

    for i in 0..opts.samples {
        sampler.draw(opts.seed, i, &mut t);
        if spec.eval_jet_into(&t, &mut ws, &mut jet).is_err() {
            continue;
        }
        let mut norm_sq = 0.0;
        let mut coords = [0.0f64; crate::variety::MAX_AMBIENT];
        let mut bad = false;
        for (ci, z) in jet.value.iter().enumerate() {
            let m = z.norm();
            if m == 0.0 || !m.is_finite() {
                bad = true;
                break;
            }
            let l = m.ln();
            coords[ci] = l;
            norm_sq += l * l;
        }
        if bad {
            continue;
        }
        let norm = norm_sq.sqrt();
        if norm < far_threshold || norm > 4.0 * outer {
            continue;
        }
        far_samples += 1;
        let dir: Vec<f64> = coords[..n].iter().map(|c| c / norm).collect();
        let mut assigned = false;
        for (ci, center) in centers.iter_mut().enumerate() {
            let ang = angle_between(center, &dir);
            if ang <= opts.cluster_tol {
                weights[ci] += 1;
                spreads[ci] = spreads[ci].max(ang);
                for (s, d) in sums[ci].iter_mut().zip(&dir) {
                    *s += d;
                }
                let norm: f64 = sums[ci].iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for (c, s) in center.iter_mut().zip(&sums[ci]) {
                        *c = s / norm;
                    }
                }
                assigned = true;
                break;
            }
        }
        if !assigned {
            centers.push(dir.clone());
            sums.push(dir);
            weights.push(1);
            spreads.push(0.0);
        }
    }

    if far_samples == 0 {
        return Err(LimitSetError::NoFarSamples(far_threshold));
    }

    // Merge clusters whose centers drifted within tolerance of each other.
    let mut order: Vec<usize> = (0..centers.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(weights[i]));
    let mut merged: Vec<(Vec<f64>, Vec<f64>, u64, f64)> = Vec::new();
    for &i in &order {
        match merged
            .iter_mut()
            .find(|(c, ..)| angle_between(c, &centers[i]) <= opts.cluster_tol)
        {
            Some((c, s, w, sp)) => {
                *w += weights[i];
                *sp = sp.max(spreads[i] + angle_between(c, &centers[i]));
                for (a, b) in s.iter_mut().zip(&sums[i]) {
                    *a += b;
                }
                let norm: f64 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
                for (cc, ss) in c.iter_mut().zip(s.iter()) {
                    *cc = ss / norm;
                }
            }
            None => merged.push((
                centers[i].clone(),
                sums[i].clone(),
                weights[i],
                spreads[i],
            )),
        }
    }

    // Drop dust: tiny clusters with no neighbor in chaining range are
    // sampling noise; small links inside a chain are kept so arcs stay
    // connected.
    let total_w: u64 = merged.iter().map(|m| m.2).sum();
    let floor_w = ((total_w as f64 / merged.len().max(1) as f64) * 0.01).max(2.0);
    let kept: Vec<_> = merged
        .iter()
        .enumerate()
        .filter(|(i, (c, _, w, _))| {
            (*w as f64) >= floor_w
                || merged
                    .iter()
                    .enumerate()
                    .any(|(j, (c2, _, w2, _))| {
                        j != *i
                            && (*w2 as f64) >= floor_w
                            && angle_between(c, c2) <= 2.5 * opts.cluster_tol
                    })
        })
        .map(|(_, m)| m.clone())
        .collect();
    let dropped: u64 = total_w - kept.iter().map(|m| m.2).sum::<u64>();
    let far_samples = far_samples - dropped;

    // Chain-connectivity: link clusters within 2.5 tolerances, then flag
    // components with angular extent beyond 3 tolerances as arcs.
    let m = kept.len();
    let mut component = vec![usize::MAX; m];
    let mut next_comp = 0;
    for i in 0..m {
        if component[i] != usize::MAX {
            continue;
        }
        let mut stack = vec![i];
        component[i] = next_comp;
        while let Some(cur) = stack.pop() {
            for j in 0..m {
                if component[j] == usize::MAX
                    && angle_between(&kept[cur].0, &kept[j].0) <= 2.5 * opts.cluster_tol
                {
                    component[j] = next_comp;
                    stack.push(j);
                }
            }
        }
        next_comp += 1;
    }

    let mut features = Vec::new();
    let mut arc_ids = vec![None; m];
    let mut arc_count = 0;
    for comp in 0..next_comp {
        let members: Vec<usize> = (0..m).filter(|&i| component[i] == comp).collect();
        let mut extent = 0.0f64;
        for (a, &i) in members.iter().enumerate() {
            for &j in members.iter().skip(a + 1) {
                extent = extent.max(angle_between(&kept[i].0, &kept[j].0));
            }
        }
        let weight: u64 = members.iter().map(|&i| kept[i].2).sum();
        let mut mean = vec![0.0; n];
        for &i in &members {
            for (mv, sv) in mean.iter_mut().zip(&kept[i].1) {
                *mv += sv;
            }
        }
        let norm: f64 = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in mean.iter_mut() {
            *v /= norm;
        }
        let kind = if extent > 3.0 * opts.cluster_tol {
            let id = arc_count;
            arc_count += 1;
            for &i in &members {
                arc_ids[i] = Some(id);
            }
            FeatureKind::Arc
        } else {
            FeatureKind::Point
        };
        let rationality = rational_slope(&mean, opts.max_denominator, 2.0 * opts.cluster_tol);
        features.push(LimitFeature {
            kind,
            direction: mean,
            weight,
            extent,
            rationality,
        });
    }
    features.sort_by(|a, b| b.weight.cmp(&a.weight));

    let clusters: Vec<DirectionCluster> = kept
        .iter()
        .enumerate()
        .map(|(i, (c, _, w, sp))| DirectionCluster {
            direction: c.clone(),
            weight: *w,
            spread: *sp,
            rationality: rational_slope(c, opts.max_denominator, 2.0 * opts.cluster_tol),
            arc_id: arc_ids[i],
        })
        .collect();

    let isolated_points = features
        .iter()
        .filter(|f| f.kind == FeatureKind::Point)
        .count();
    Ok(LimitSetReport {
        clusters,
        features,
        far_samples,
        arcs: arc_count,
        isolated_points,
    })
}

/// Continued-fraction convergent denominators of `x` up to `max_den`.
/// k_0 = 1, k_1 = a_1, k_m = a_m k_{m-1} + k_{m-2} for x = [a_0; a_1, ...].
fn convergent_denominators(x: f64, max_den: u64) -> Vec<u64> {
    let mut out = vec![1];
    let (mut k_prev, mut k) = (0u64, 1u64);
    let mut frac = x.abs().fract();
    for _ in 0..64 {
        if frac < 1e-15 {
            break;
        }
        let a = 1.0 / frac;
        let ai = a.floor();
        if ai > 1e18 {
            break;
        }
        let next = match (ai as u64).checked_mul(k).and_then(|v| v.checked_add(k_prev)) {
            Some(v) => v,
            None => break,
        };
        if next > max_den {
            break;
        }
        out.push(next);
        k_prev = k;
        k = next;
        frac = a.fract();
    }
    out
}

/// Search for a primitive integer vector within `tol` (radians) of the
/// given direction, denominators bounded by `max_den`.
pub fn rational_slope(direction: &[f64], max_den: u64, tol: f64) -> Rationality {
    let n = direction.len();
    let norm: f64 = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Rationality::IrrationalWithinBounds;
    }
    let unit: Vec<f64> = direction.iter().map(|v| v / norm).collect();
    let i0 = (0..n)
        .max_by(|&a, &b| unit[a].abs().total_cmp(&unit[b].abs()))
        .unwrap();

    // Candidate denominators: every convergent of every pairwise ratio,
    // plus a dense low range.
    let mut candidates: Vec<u64> = (1..=max_den.min(64)).collect();
    for j in 0..n {
        if j != i0 {
            candidates.extend(convergent_denominators(unit[j] / unit[i0], max_den));
        }
    }
    candidates.sort_unstable();
    candidates.dedup();

    let mut best: Option<(Vec<i64>, f64)> = None;
    for &q in &candidates {
        let mut v = vec![0i64; n];
        for j in 0..n {
            v[j] = (q as f64 * unit[j] / unit[i0].abs()).round() as i64;
        }
        if v.iter().all(|&c| c == 0) {
            continue;
        }
        let g = v
            .iter()
            .map(|c| c.unsigned_abs())
            .fold(0u64, gcd);
        for c in v.iter_mut() {
            *c /= g as i64;
        }
        let vnorm: f64 = v.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>().sqrt();
        let vdir: Vec<f64> = v.iter().map(|&c| c as f64 / vnorm).collect();
        let ang = angle_between(&unit, &vdir);
        if ang <= tol && best.as_ref().map_or(true, |(_, b)| ang < *b) {
            best = Some((v, ang));
        }
    }
    match best {
        Some((v, _)) => Rationality::Rational { vector: v },
        None => Rationality::IrrationalWithinBounds,
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Dimension of the closure of the line R*direction inside the n-torus:
/// n minus the number of independent integer relations c . direction = 0
/// with |c_i| <= coeff_bound, found by exhaustive search (n <= 4).
pub fn torus_closure_dim(direction: &[f64], coeff_bound: i64) -> usize {
    let n = direction.len();
    assert!(
        (1..=4).contains(&n),
        "exhaustive relation search supports n <= 4"
    );
    let unorm: f64 = direction.iter().map(|v| v * v).sum::<f64>().sqrt();

    // Row-echelon basis of found relations, floats with pivot tolerance.
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let reduce = |basis: &[Vec<f64>], c: &[i64]| -> Vec<f64> {
        let mut v: Vec<f64> = c.iter().map(|&x| x as f64).collect();
        for b in basis {
            let pivot = b.iter().position(|x| x.abs() > 1e-9).unwrap();
            let f = v[pivot] / b[pivot];
            if f != 0.0 {
                for (vv, bb) in v.iter_mut().zip(b) {
                    *vv -= f * bb;
                }
            }
        }
        v
    };

    let mut c = vec![-coeff_bound; n];
    'outer: loop {
        // Skip zero and enforce first nonzero positive (sign symmetry).
        if let Some(first) = c.iter().find(|&&x| x != 0) {
            if *first > 0 {
                let cnorm: f64 =
                    c.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
                let dot: f64 = c.iter().zip(direction).map(|(&a, b)| a as f64 * b).sum();
                if dot.abs() <= 1e-9 * cnorm * unorm {
                    let v = reduce(&basis, &c);
                    if v.iter().any(|x| x.abs() > 1e-9) {
                        basis.push(v);
                        if basis.len() == n - 1 {
                            break;
                        }
                    }
                }
            }
        }
        // Odometer increment.
        for i in (0..n).rev() {
            if c[i] < coeff_bound {
                c[i] += 1;
                continue 'outer;
            }
            c[i] = -coeff_bound;
        }
        break;
    }
    n - basis.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::variety::VarietySpec;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    #[test]
    fn rational_slope_exact_ratio() {
        let d = [1.0 / 5f64.sqrt(), 2.0 / 5f64.sqrt()];
        match rational_slope(&d, 50, 1e-6) {
            Rationality::Rational { vector } => assert_eq!(vector, vec![1, 2]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rational_slope_diagonal() {
        let s = 2f64.sqrt() / 2.0;
        match rational_slope(&[s, s], 50, 1e-6) {
            Rationality::Rational { vector } => assert_eq!(vector, vec![1, 1]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rational_slope_sqrt2_is_irrational_within_bounds() {
        let norm = 3f64.sqrt();
        let d = [1.0 / norm, 2f64.sqrt() / norm];
        assert_eq!(
            rational_slope(&d, 50, 1e-4),
            Rationality::IrrationalWithinBounds
        );
        // With a larger denominator budget the direction is approximable.
        assert!(matches!(
            rational_slope(&d, 1000, 1e-4),
            Rationality::Rational { .. }
        ));
    }

    #[test]
    fn rational_slope_axis_directions() {
        match rational_slope(&[-1.0, 0.0], 50, 1e-6) {
            Rationality::Rational { vector } => assert_eq!(vector, vec![-1, 0]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn closure_dim_examples() {
        assert_eq!(torus_closure_dim(&[2.0, 3.0], 50), 1);
        assert_eq!(torus_closure_dim(&[1.0, 2f64.sqrt()], 50), 2);
        assert_eq!(
            torus_closure_dim(&[1.0, 2f64.sqrt(), 1.0 + 2f64.sqrt()], 50),
            2
        );
    }

    fn circle_spec() -> VarietySpec {
        VarietySpec::new(
            1,
            vec![parse("cos(t1)", 1).unwrap(), parse("sin(t1)", 1).unwrap()],
            vec![VarRect {
                re: (1e-6, 2.0 * PI - 1e-6),
                im: (-30.0, 30.0),
            }],
            vec![
                crate::variety::ExclusionDisc {
                    var: 0,
                    center: Complex64::new(PI / 2.0, 0.0),
                    radius: 1e-9,
                },
                crate::variety::ExclusionDisc {
                    var: 0,
                    center: Complex64::new(PI, 0.0),
                    radius: 1e-9,
                },
                crate::variety::ExclusionDisc {
                    var: 0,
                    center: Complex64::new(3.0 * PI / 2.0, 0.0),
                    radius: 1e-9,
                },
            ],
        )
        .unwrap()
        .with_tags(vec!["real".into(), "algebraic".into()])
    }

    #[test]
    fn circle_curve_three_rational_points() {
        let spec = circle_spec();
        let opts = LimitSetOptions::new(vec![10.0, 15.0, 20.0], 120_000, 71);
        let report = log_limit_set(&spec, &opts).unwrap();
        assert_eq!(report.arcs, 0, "{:?}", report.features);
        assert_eq!(report.isolated_points, 3, "{:?}", report.features);
        let expected = [
            vec![-1.0, 0.0],
            vec![0.0, -1.0],
            vec![2f64.sqrt() / 2.0, 2f64.sqrt() / 2.0],
        ];
        for exp in &expected {
            let hit = report
                .features
                .iter()
                .any(|f| angle_between(&f.direction, exp) <= 2f64.to_radians());
            assert!(hit, "missing direction {exp:?}: {:?}", report.features);
        }
        for f in &report.features {
            assert!(
                matches!(f.rationality, Rationality::Rational { .. }),
                "{f:?}"
            );
        }
        let total: u64 = report.clusters.iter().map(|c| c.weight).sum();
        assert_eq!(total, report.far_samples);
    }

    fn exp_spec() -> VarietySpec {
        VarietySpec::new(
            1,
            vec![parse("t1", 1).unwrap(), parse("exp(t1)", 1).unwrap()],
            vec![VarRect::centered(40.0)],
            vec![],
        )
        .unwrap()
    }

    /// For curves with an exp component, Re t must stay below the f64
    /// overflow bound while |t| reaches far out; the imaginary extent is
    /// what carries ln|t| toward the ladder radii.
    fn exp_far_domain() -> VarRect {
        VarRect {
            re: (-650.0, 650.0),
            im: (-1.5e18, 1.5e18),
        }
    }

    #[test]
    fn exp_curve_point_plus_arc() {
        let spec = exp_spec();
        let mut opts = LimitSetOptions::new(vec![10.0, 20.0, 40.0], 150_000, 73);
        opts.domain = Some(vec![exp_far_domain()]);
        let report = log_limit_set(&spec, &opts).unwrap();
        assert_eq!(report.arcs, 1, "{:?}", report.features);
        assert_eq!(report.isolated_points, 1, "{:?}", report.features);
        let point = report
            .features
            .iter()
            .find(|f| f.kind == FeatureKind::Point)
            .unwrap();
        assert!(
            angle_between(&point.direction, &[-1.0, 0.0]) <= 2f64.to_radians(),
            "{point:?}"
        );
        assert!(matches!(point.rationality, Rationality::Rational { .. }));
    }

    #[test]
    fn spatial_curve_two_points_plus_arc() {
        let spec = VarietySpec::new(
            1,
            vec![
                parse("t1", 1).unwrap(),
                parse("exp(t1)", 1).unwrap(),
                parse("t1+1", 1).unwrap(),
            ],
            vec![VarRect::centered(40.0)],
            vec![],
        )
        .unwrap();
        let mut opts = LimitSetOptions::new(vec![10.0, 20.0, 40.0], 150_000, 77);
        opts.domain = Some(vec![exp_far_domain()]);
        let report = log_limit_set(&spec, &opts).unwrap();
        assert_eq!(report.arcs, 1, "{:?}", report.features);
        assert_eq!(report.isolated_points, 2, "{:?}", report.features);
    }

    #[test]
    fn cluster_centers_stable_under_radius_doubling() {
        let spec = circle_spec();
        let base = LimitSetOptions::new(vec![10.0, 15.0, 20.0], 80_000, 79);
        let r1 = log_limit_set(&spec, &base).unwrap();
        let mut doubled = LimitSetOptions::new(vec![10.0, 20.0, 40.0], 80_000, 79);
        doubled.domain = Some(vec![VarRect {
            re: (1e-6, 2.0 * PI - 1e-6),
            im: (-60.0, 60.0),
        }]);
        let r2 = log_limit_set(&spec, &doubled).unwrap();
        for f in &r1.features {
            let moved = r2
                .features
                .iter()
                .map(|g| angle_between(&f.direction, &g.direction))
                .fold(f64::INFINITY, f64::min);
            assert!(moved <= base.cluster_tol, "feature moved {moved}");
        }
    }

    #[test]
    fn bad_ladder_rejected() {
        let spec = exp_spec();
        let opts = LimitSetOptions::new(vec![10.0, 10.0], 100, 1);
        assert!(matches!(
            log_limit_set(&spec, &opts),
            Err(LimitSetError::BadLadder)
        ));
    }
}
