//! Variety specifications (parametrization + parameter domain) and the
//! deterministic samplers shared by the volume, fiber, and raster code.
//!
//! Sampling comes in two flavors. `SamplerMode::Uniform` draws uniformly
//! from the truncation box minus exclusions. `SamplerMode::PoleAware`
//! (the default for volume work) mixes the uniform draw with log-radius
//! annulus proposals around the zero sets of the components, where the
//! pullback density has 1/r poles; without those proposals the integrand
//! is not square-integrable and Monte Carlo error estimates collapse.
//! Both modes are unbiased and deterministic given `(seed, index)`.

use crate::expr::{as_affine, AffineForm, ComplexExpr, CompiledSystem, EvalWorkspace, ExprError, Jet};
use crate::rng::CounterRng;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

/// Hard cap on ambient dimension; keeps the minor enumeration C(n, 2k) small.
pub const MAX_AMBIENT: usize = 12;
/// Hard cap on parameter arity.
pub const MAX_ARITY: usize = 4;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("arity k must satisfy 1 <= k <= {MAX_ARITY}, got {0}")]
    BadArity(usize),
    #[error("ambient dimension n must satisfy k <= n <= {MAX_AMBIENT}, got n={n} for k={k}")]
    BadAmbient { n: usize, k: usize },
    #[error("domain must list one rectangle per variable ({expected}), got {got}")]
    DomainCount { expected: usize, got: usize },
    #[error("domain rectangle {0} is empty or not finite")]
    BadRect(usize),
    #[error("exclusion disc refers to variable {var} out of range (k={k})")]
    BadExclusionVar { var: usize, k: usize },
    #[error("component {0} is identically zero")]
    ZeroComponent(usize),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Per-variable rectangle in the (Re, Im) parameter plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarRect {
    pub re: (f64, f64),
    pub im: (f64, f64),
}

impl VarRect {
    pub fn centered(half_width: f64) -> Self {
        Self {
            re: (-half_width, half_width),
            im: (-half_width, half_width),
        }
    }

    pub fn area(&self) -> f64 {
        (self.re.1 - self.re.0) * (self.im.1 - self.im.0)
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.re >= self.re.0 && z.re <= self.re.1 && z.im >= self.im.0 && z.im <= self.im.1
    }

    pub fn is_valid(&self) -> bool {
        self.re.0 < self.re.1
            && self.im.0 < self.im.1
            && self.re.0.is_finite()
            && self.re.1.is_finite()
            && self.im.0.is_finite()
            && self.im.1.is_finite()
    }

    pub fn diameter(&self) -> f64 {
        let w = self.re.1 - self.re.0;
        let h = self.im.1 - self.im.0;
        (w * w + h * h).sqrt()
    }

    /// Intersection with the centered square of half-width `radius`.
    /// Returns None when the intersection is empty.
    pub fn clip(&self, radius: f64) -> Option<VarRect> {
        let r = VarRect {
            re: (self.re.0.max(-radius), self.re.1.min(radius)),
            im: (self.im.0.max(-radius), self.im.1.min(radius)),
        };
        r.is_valid().then_some(r)
    }

    fn sample(&self, u: f64, v: f64) -> Complex64 {
        Complex64::new(
            self.re.0 + u * (self.re.1 - self.re.0),
            self.im.0 + v * (self.im.1 - self.im.0),
        )
    }
}

/// Disc in one parameter plane excluded from the domain (zeros of a
/// component live inside it).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExclusionDisc {
    /// 0-based variable index.
    pub var: usize,
    #[serde(with = "crate::config::complex_pair")]
    pub center: Complex64,
    pub radius: f64,
}

/// A parametrized subvariety of the complex torus: k complex inputs,
/// n nonvanishing complex outputs, with a bounded parameter domain.
#[derive(Debug, Clone)]
pub struct VarietySpec {
    pub k: usize,
    pub components: Vec<ComplexExpr>,
    pub domain: Vec<VarRect>,
    pub exclusions: Vec<ExclusionDisc>,
    pub multiplicity_log: Option<u32>,
    pub multiplicity_arg: Option<u32>,
    pub tags: Vec<String>,
    compiled: CompiledSystem,
    affine_sheets: Vec<AffineForm>,
}

impl VarietySpec {
    pub fn new(
        k: usize,
        components: Vec<ComplexExpr>,
        domain: Vec<VarRect>,
        exclusions: Vec<ExclusionDisc>,
    ) -> Result<Self, SpecError> {
        if k == 0 || k > MAX_ARITY {
            return Err(SpecError::BadArity(k));
        }
        let n = components.len();
        if n < k || n > MAX_AMBIENT {
            return Err(SpecError::BadAmbient { n, k });
        }
        if domain.len() != k {
            return Err(SpecError::DomainCount {
                expected: k,
                got: domain.len(),
            });
        }
        for (i, r) in domain.iter().enumerate() {
            if !r.is_valid() {
                return Err(SpecError::BadRect(i));
            }
        }
        for e in &exclusions {
            if e.var >= k {
                return Err(SpecError::BadExclusionVar { var: e.var, k });
            }
        }
        let mut affine_sheets = Vec::new();
        for (i, c) in components.iter().enumerate() {
            if let Some(f) = as_affine(c, k) {
                if f.is_constant() {
                    if f.offset == Complex64::new(0.0, 0.0) {
                        return Err(SpecError::ZeroComponent(i));
                    }
                    // Nonzero constant component: no pole sheet.
                } else {
                    affine_sheets.push(f);
                }
            }
        }
        let compiled = CompiledSystem::compile(&components, k);
        Ok(Self {
            k,
            components,
            domain,
            exclusions,
            multiplicity_log: None,
            multiplicity_arg: None,
            tags: Vec::new(),
            compiled,
            affine_sheets,
        })
    }

    pub fn with_multiplicities(mut self, log: Option<u32>, arg: Option<u32>) -> Self {
        self.multiplicity_log = log;
        self.multiplicity_arg = arg;
        self
    }

    pub fn with_tags(mut self, tags: Vec<String>) -> Self {
        self.tags = tags;
        self
    }

    pub fn n(&self) -> usize {
        self.components.len()
    }

    pub fn is_tagged(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }

    /// Non-constant affine components; their zero hyperplanes carry the
    /// density poles handled by pole-aware sampling.
    pub fn affine_sheets(&self) -> &[AffineForm] {
        &self.affine_sheets
    }

    pub fn eval_jet_into(
        &self,
        t: &[Complex64],
        ws: &mut EvalWorkspace,
        jet: &mut Jet,
    ) -> Result<(), ExprError> {
        self.compiled.eval_jet_into(t, ws, jet)
    }

    /// Domain clipped to the centered square of half-width `radius`.
    /// None when any variable's rectangle gets cut to nothing.
    pub fn domain_clipped(&self, radius: f64) -> Option<Vec<VarRect>> {
        self.domain.iter().map(|r| r.clip(radius)).collect()
    }

    /// Anchors for pole-seeking samplers: one (form, pivot) per affine
    /// component sheet and per declared exclusion disc.
    pub(crate) fn pole_anchors(&self) -> Vec<(AffineForm, usize)> {
        let mut anchors = Vec::new();
        for f in self.affine_sheets() {
            if let Some(p) = best_pivot(f, None) {
                anchors.push((f.clone(), p));
            }
        }
        for e in &self.exclusions {
            anchors.push((disc_form(self.k, e.var, e.center), e.var));
        }
        anchors
    }

    /// Sampling-based check of the exclusion invariant: no near-zero
    /// coordinate outside the declared exclusions and pole guards.
    pub fn validate_exclusions(&self, samples: u64, seed: u64) -> Result<(), usize> {
        let space = SampleSpace::build(self, &self.domain, SamplerMode::Uniform);
        let mut ws = EvalWorkspace::default();
        let mut jet = Jet::default();
        let mut t = vec![Complex64::default(); self.k];
        for i in 0..samples {
            space.draw(seed, i, &mut t);
            if !space.guard_ok(&t) {
                continue;
            }
            match self.eval_jet_into(&t, &mut ws, &mut jet) {
                Ok(()) => {}
                Err(ExprError::ZeroCoordinate { index }) => return Err(index),
                Err(_) => continue,
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Mixture sampler
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMode {
    /// Uniform over the truncation box minus exclusions.
    Uniform,
    /// Mixture of the uniform draw with annulus proposals around density poles.
    PoleAware,
}

/// Fixed inner/outer log-annulus radius ratio; ln(1e9) enters the proposal
/// density, so the ratio trades a negligible guard bias for bounded weights.
const ANNULUS_RATIO: f64 = 1e-9;

#[derive(Debug, Clone)]
struct AnnulusStage {
    pivot: usize,
    form: AffineForm,
}

#[derive(Debug, Clone)]
enum Proposal {
    BoxUniform,
    Annulus { stages: Vec<AnnulusStage> },
}

#[derive(Debug, Clone)]
struct Guard {
    /// Affine form whose zero set is the pole sheet.
    form: AffineForm,
    /// Reject when |form(t)| < threshold.
    threshold: f64,
}

/// Deterministic mixture sampler over a truncation box.
#[derive(Debug, Clone)]
pub struct SampleSpace {
    k: usize,
    rects: Vec<VarRect>,
    proposals: Vec<Proposal>,
    /// Cumulative mixture weights, same length as `proposals`.
    cumulative: Vec<f64>,
    weights: Vec<f64>,
    guards: Vec<Guard>,
    r_in: f64,
    r_out: f64,
    log_ratio: f64,
    box_volume: f64,
}

fn disc_form(k: usize, var: usize, center: Complex64) -> AffineForm {
    let mut coeffs = vec![Complex64::new(0.0, 0.0); k];
    coeffs[var] = Complex64::new(1.0, 0.0);
    AffineForm {
        coeffs,
        offset: -center,
    }
}

fn best_pivot(form: &AffineForm, banned: Option<usize>) -> Option<usize> {
    let norm: f64 = form.coeffs.iter().map(|c| c.norm()).sum();
    let mut best = None;
    let mut best_mag = 0.0;
    for (j, c) in form.coeffs.iter().enumerate() {
        if Some(j) == banned {
            continue;
        }
        let m = c.norm();
        if m > best_mag {
            best_mag = m;
            best = Some(j);
        }
    }
    // Guard against near-degenerate pivots.
    best.filter(|_| best_mag > 1e-12 * (1.0 + norm))
}

/// Eliminate `other`'s dependence on `var` using `with` (whose coefficient
/// at `var` must be usable as a pivot).
fn eliminate(other: &AffineForm, with: &AffineForm, var: usize) -> AffineForm {
    let factor = other.coeffs[var] / with.coeffs[var];
    AffineForm {
        coeffs: other
            .coeffs
            .iter()
            .zip(&with.coeffs)
            .enumerate()
            .map(|(j, (o, w))| {
                if j == var {
                    Complex64::new(0.0, 0.0)
                } else {
                    o - factor * w
                }
            })
            .collect(),
        offset: other.offset - factor * with.offset,
    }
}

impl SampleSpace {
    pub fn build(spec: &VarietySpec, truncation: &[VarRect], mode: SamplerMode) -> Self {
        let k = spec.k;
        let rects = truncation.to_vec();
        let box_volume: f64 = rects.iter().map(|r| r.area()).product();
        let r_out = 2.0 * rects.iter().map(|r| r.diameter()).fold(1.0, f64::max);
        let r_in = r_out * ANNULUS_RATIO;
        let log_ratio = (1.0 / ANNULUS_RATIO).ln();

        // Pole forms: affine component sheets plus declared exclusion discs.
        let mut forms: Vec<(AffineForm, usize, f64)> = Vec::new();
        if mode == SamplerMode::PoleAware {
            for f in spec.affine_sheets() {
                if let Some(p) = best_pivot(f, None) {
                    let thr = f.coeffs[p].norm() * r_in;
                    forms.push((f.clone(), p, thr));
                }
            }
            for e in &spec.exclusions {
                let f = disc_form(k, e.var, e.center);
                let thr = e.radius.max(r_in);
                forms.push((f, e.var, thr));
            }
        }

        let mut guards: Vec<Guard> = forms
            .iter()
            .map(|(f, _, thr)| Guard {
                form: f.clone(),
                threshold: *thr,
            })
            .collect();
        if mode == SamplerMode::Uniform {
            // Uniform mode still respects declared exclusions.
            for e in &spec.exclusions {
                guards.push(Guard {
                    form: disc_form(k, e.var, e.center),
                    threshold: e.radius,
                });
            }
        }

        let mut proposals = vec![Proposal::BoxUniform];
        let mut singles = 0usize;
        for (f, p, _) in &forms {
            proposals.push(Proposal::Annulus {
                stages: vec![AnnulusStage {
                    pivot: *p,
                    form: f.clone(),
                }],
            });
            singles += 1;
        }
        // Pairs: the density has product poles where two sheets meet.
        let mut pairs = 0usize;
        if k >= 2 {
            for a in 0..forms.len() {
                for b in a + 1..forms.len() {
                    let (fa, pa, _) = &forms[a];
                    let (fb, _, _) = &forms[b];
                    let reduced = eliminate(fb, fa, *pa);
                    let Some(pb) = best_pivot(&reduced, Some(*pa)) else {
                        continue;
                    };
                    proposals.push(Proposal::Annulus {
                        stages: vec![
                            AnnulusStage {
                                pivot: pb,
                                form: reduced,
                            },
                            AnnulusStage {
                                pivot: *pa,
                                form: fa.clone(),
                            },
                        ],
                    });
                    pairs += 1;
                }
            }
        }

        let mut weights = vec![0.0; proposals.len()];
        if singles == 0 {
            weights[0] = 1.0;
        } else if pairs == 0 {
            weights[0] = 0.4;
            for w in weights.iter_mut().skip(1) {
                *w = 0.6 / singles as f64;
            }
        } else {
            weights[0] = 0.4;
            for w in weights.iter_mut().skip(1).take(singles) {
                *w = 0.3 / singles as f64;
            }
            for w in weights.iter_mut().skip(1 + singles) {
                *w = 0.3 / pairs as f64;
            }
        }
        let mut cumulative = weights.clone();
        for i in 1..cumulative.len() {
            cumulative[i] += cumulative[i - 1];
        }

        Self {
            k,
            rects,
            proposals,
            cumulative,
            weights,
            guards,
            r_in,
            r_out,
            log_ratio,
            box_volume,
        }
    }

    pub fn box_volume(&self) -> f64 {
        self.box_volume
    }

    pub fn rects(&self) -> &[VarRect] {
        &self.rects
    }

    pub fn in_box(&self, t: &[Complex64]) -> bool {
        t.iter().zip(&self.rects).all(|(z, r)| r.contains(*z))
    }

    /// False when `t` sits inside an exclusion disc or within the guarded
    /// collar of a pole sheet; the integrand is treated as zero there.
    pub fn guard_ok(&self, t: &[Complex64]) -> bool {
        self.guards
            .iter()
            .all(|g| g.form.eval(t).norm() >= g.threshold)
    }

    /// Draw sample `index` of the stream `seed` into `t`.
    /// Exactly 1 + 2k uniforms are consumed, so the map (seed, index) -> t
    /// is a pure function independent of batching.
    pub fn draw(&self, seed: u64, index: u64, t: &mut Vec<Complex64>) {
        let mut rng = CounterRng::for_sample(seed, index);
        let sel = rng.next_f64();
        t.clear();
        let mut us = [0.0f64; 2 * MAX_ARITY];
        for u in us.iter_mut().take(2 * self.k) {
            *u = rng.next_f64();
        }
        for (v, r) in self.rects.iter().enumerate() {
            t.push(r.sample(us[2 * v], us[2 * v + 1]));
        }
        let choice = self
            .cumulative
            .iter()
            .position(|c| sel < *c)
            .unwrap_or(self.proposals.len() - 1);
        if let Proposal::Annulus { stages } = &self.proposals[choice] {
            for st in stages {
                let pc = st.form.coeffs[st.pivot];
                // Root of the form in the pivot variable given the others.
                let mut rest = st.form.offset;
                for (j, c) in st.form.coeffs.iter().enumerate() {
                    if j != st.pivot {
                        rest += c * t[j];
                    }
                }
                let center = -rest / pc;
                let radius = self.r_in * (self.log_ratio * us[2 * st.pivot]).exp();
                let theta = TAU * us[2 * st.pivot + 1];
                t[st.pivot] = center + Complex64::from_polar(radius, theta);
            }
        }
    }

    /// Mixture proposal density at `t` (with respect to Lebesgue measure on
    /// the 2k real parameter coordinates).
    pub fn proposal_density(&self, t: &[Complex64]) -> f64 {
        let mut q = 0.0;
        for (prop, w) in self.proposals.iter().zip(&self.weights) {
            match prop {
                Proposal::BoxUniform => {
                    if self.in_box(t) {
                        q += w / self.box_volume;
                    }
                }
                Proposal::Annulus { stages } => {
                    let mut dens = *w;
                    let mut ok = true;
                    for (v, r) in self.rects.iter().enumerate() {
                        if stages.iter().any(|s| s.pivot == v) {
                            continue;
                        }
                        if !r.contains(t[v]) {
                            ok = false;
                            break;
                        }
                        dens /= r.area();
                    }
                    if !ok {
                        continue;
                    }
                    for st in stages {
                        let pc = st.form.coeffs[st.pivot];
                        let s = st.form.eval(t).norm() / pc.norm();
                        if s < self.r_in || s > self.r_out {
                            ok = false;
                            break;
                        }
                        dens /= TAU * self.log_ratio * s * s;
                    }
                    if ok {
                        q += dens;
                    }
                }
            }
        }
        q
    }
}

/// Coverage sampler for far-field exploration: a mixture of box-uniform,
/// per-axis log-symmetric, and annulus draws around pole anchors (affine
/// component zeros and exclusion centers). Not importance-weighted; users
/// only need the reachable image, not unbiased masses.
#[derive(Debug, Clone)]
pub struct CoverageSampler {
    rects: Vec<VarRect>,
    anchors: Vec<(AffineForm, usize)>,
    /// ln of the smallest magnitude either draw kind produces.
    inner_log: f64,
}

impl CoverageSampler {
    pub fn new(spec: &VarietySpec, rects: Vec<VarRect>, outer_radius: f64) -> Self {
        Self {
            rects,
            anchors: spec.pole_anchors(),
            inner_log: -1.6 * outer_radius.max(1.0),
        }
    }

    pub fn draw(&self, seed: u64, index: u64, t: &mut Vec<Complex64>) {
        let mut rng = CounterRng::for_sample(seed, index);
        let sel = rng.next_f64();
        t.clear();
        if sel < 1.0 / 3.0 {
            for r in &self.rects {
                t.push(Complex64::new(
                    rng.uniform(r.re.0, r.re.1),
                    rng.uniform(r.im.0, r.im.1),
                ));
            }
        } else if sel < 2.0 / 3.0 || self.anchors.is_empty() {
            // Log-symmetric per axis around the rect center: magnitudes are
            // log-uniform from exp(inner_log) up to the half-width, so every
            // scale gets equal sample mass.
            for r in &self.rects {
                let (cx, cy) = ((r.re.0 + r.re.1) / 2.0, (r.im.0 + r.im.1) / 2.0);
                let (hx, hy) = ((r.re.1 - r.re.0) / 2.0, (r.im.1 - r.im.0) / 2.0);
                let axis = |c: f64, h: f64, rng: &mut CounterRng| {
                    let mag = rng.uniform(self.inner_log.min(h.ln()), h.ln()).exp();
                    let sign = if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
                    c + sign * mag
                };
                let re = axis(cx, hx, &mut rng);
                let im = axis(cy, hy, &mut rng);
                t.push(Complex64::new(re, im));
            }
        } else {
            // Annulus around the root of one anchor form, log-uniform radius
            // from exp(inner_log) out to the rect diameter; remaining
            // variables box-uniform.
            for r in &self.rects {
                t.push(Complex64::new(
                    rng.uniform(r.re.0, r.re.1),
                    rng.uniform(r.im.0, r.im.1),
                ));
            }
            let which =
                ((rng.next_f64() * self.anchors.len() as f64) as usize).min(self.anchors.len() - 1);
            let (form, pivot) = &self.anchors[which];
            let mut rest = form.offset;
            for (j, c) in form.coeffs.iter().enumerate() {
                if j != *pivot {
                    rest += c * t[j];
                }
            }
            let center = -rest / form.coeffs[*pivot];
            let r_hi = self.rects[*pivot].diameter();
            let radius = rng.uniform(self.inner_log.min(r_hi.ln()), r_hi.ln()).exp();
            let theta = rng.uniform(0.0, TAU);
            t[*pivot] = center + Complex64::from_polar(radius, theta);
        }
    }
}
