//! JSON configuration shared by all CLI subcommands.
//!
//! One schema describes a variety: expression components, arity, domain
//! rectangles, exclusion discs, optional covering multiplicities, and tags.
//! `schema_version` is mandatory and must equal [`SCHEMA_VERSION`].

use crate::expr;
use crate::planes::AffinePlaneSpec;
use crate::variety::{ExclusionDisc, SpecError, VarRect, VarietySpec};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// JSON Schema document for the variety config, printable from the CLI.
pub const VARIETY_JSON_SCHEMA: &str = include_str!("../schema/variety.schema.json");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema_version {got}; this build reads version {want}")]
    SchemaVersion { got: u32, want: u32 },
    #[error("component {index}: {source}")]
    Component {
        index: usize,
        source: expr::ExprError,
    },
    #[error("n = {n} does not match the number of components ({got})")]
    ComponentCount { n: usize, got: usize },
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("plane config: {0}")]
    Plane(String),
}

/// Serde adapter for a complex number encoded as `[re, im]`.
pub mod complex_pair {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(c: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        [c.re, c.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectConfig {
    pub re: [f64; 2],
    pub im: [f64; 2],
}

impl From<RectConfig> for VarRect {
    fn from(r: RectConfig) -> Self {
        VarRect {
            re: (r.re[0], r.re[1]),
            im: (r.im[0], r.im[1]),
        }
    }
}

impl From<VarRect> for RectConfig {
    fn from(r: VarRect) -> Self {
        RectConfig {
            re: [r.re.0, r.re.1],
            im: [r.im.0, r.im.1],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExclusionConfig {
    /// 1-based variable index, matching the `t1..tk` naming.
    pub var: usize,
    pub center: [f64; 2],
    pub radius: f64,
}

/// On-disk description of a parametrized variety.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarietyConfig {
    pub schema_version: u32,
    pub k: usize,
    pub n: usize,
    pub components: Vec<String>,
    pub domain: Vec<RectConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclusions: Vec<ExclusionConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplicity_log: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplicity_arg: Option<u32>,
}

impl VarietyConfig {
    pub fn from_json(json: &str) -> Result<Self, ConfigError> {
        let cfg: VarietyConfig = serde_json::from_str(json)?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion {
                got: cfg.schema_version,
                want: SCHEMA_VERSION,
            });
        }
        Ok(cfg)
    }

    pub fn to_spec(&self) -> Result<VarietySpec, ConfigError> {
        if self.components.len() != self.n {
            return Err(ConfigError::ComponentCount {
                n: self.n,
                got: self.components.len(),
            });
        }
        let mut components = Vec::with_capacity(self.components.len());
        for (index, src) in self.components.iter().enumerate() {
            let ast =
                expr::parse(src, self.k).map_err(|source| ConfigError::Component { index, source })?;
            components.push(ast);
        }
        let domain: Vec<VarRect> = self.domain.iter().cloned().map(Into::into).collect();
        let exclusions: Vec<ExclusionDisc> = self
            .exclusions
            .iter()
            .map(|e| {
                if e.var == 0 {
                    return Err(SpecError::BadExclusionVar { var: 0, k: self.k });
                }
                Ok(ExclusionDisc {
                    var: e.var - 1,
                    center: Complex64::new(e.center[0], e.center[1]),
                    radius: e.radius,
                })
            })
            .collect::<Result<_, _>>()?;
        let spec = VarietySpec::new(self.k, components, domain, exclusions)?
            .with_multiplicities(self.multiplicity_log, self.multiplicity_arg)
            .with_tags(self.tags.clone());
        Ok(spec)
    }

    /// Render a spec back to its config form (component ASTs printed).
    pub fn from_spec(spec: &VarietySpec) -> Self {
        VarietyConfig {
            schema_version: SCHEMA_VERSION,
            k: spec.k,
            n: spec.n(),
            components: spec.components.iter().map(|c| c.to_string()).collect(),
            domain: spec.domain.iter().map(|r| (*r).into()).collect(),
            exclusions: spec
                .exclusions
                .iter()
                .map(|e| ExclusionConfig {
                    var: e.var + 1,
                    center: [e.center.re, e.center.im],
                    radius: e.radius,
                })
                .collect(),
            tags: spec.tags.clone(),
            multiplicity_log: spec.multiplicity_log,
            multiplicity_arg: spec.multiplicity_arg,
        }
    }
}

/// Load a variety spec straight from JSON text.
pub fn load_variety(json: &str) -> Result<VarietySpec, ConfigError> {
    VarietyConfig::from_json(json)?.to_spec()
}

/// On-disk description of an affine k-plane: `z = (t, b + a t)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneConfig {
    pub schema_version: u32,
    pub k: usize,
    pub s: usize,
    /// s complex offsets as [re, im] pairs.
    pub b: Vec<[f64; 2]>,
    /// s rows of k complex coefficients.
    pub a: Vec<Vec<[f64; 2]>>,
}

impl PlaneConfig {
    pub fn from_json(json: &str) -> Result<Self, ConfigError> {
        let cfg: PlaneConfig = serde_json::from_str(json)?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion {
                got: cfg.schema_version,
                want: SCHEMA_VERSION,
            });
        }
        Ok(cfg)
    }

    pub fn to_plane(&self) -> Result<AffinePlaneSpec, ConfigError> {
        if self.b.len() != self.s {
            return Err(ConfigError::Plane(format!(
                "b must have s = {} entries, got {}",
                self.s,
                self.b.len()
            )));
        }
        if self.a.len() != self.s || self.a.iter().any(|row| row.len() != self.k) {
            return Err(ConfigError::Plane(format!(
                "a must be an {} x {} matrix",
                self.s, self.k
            )));
        }
        let b: Vec<Complex64> = self.b.iter().map(|p| Complex64::new(p[0], p[1])).collect();
        let a: Vec<Vec<Complex64>> = self
            .a
            .iter()
            .map(|row| row.iter().map(|p| Complex64::new(p[0], p[1])).collect())
            .collect();
        AffinePlaneSpec::new(self.k, self.s, b, a).map_err(|e| ConfigError::Plane(e.to_string()))
    }
}
