//! Command-line frontend: volumes, Jacobian checks, fiber counts, limit
//! sets, rasters, plane certificates, and the gallery runner.
//!
//! Exit codes: 0 success, 1 expectation failure, 2 config error,
//! 3 numerical nonconvergence. `AMOEBA_SEED` overrides `--seed`.

use amoeba_core::config::{self, PlaneConfig, VarietyConfig};
use amoeba_core::fibers::{self, Regularity, SolveOptions};
use amoeba_core::gallery::{self, BudgetProfile};
use amoeba_core::limitset::{self, LimitSetOptions, Rationality};
use amoeba_core::maps::TorusMap;
use amoeba_core::measure::{self, SamplerMode, VolumeTarget};
use amoeba_core::raster::{self, BivariatePoly, RasterBounds, RasterMode};
use amoeba_core::variety::VarietySpec;
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_EXPECTATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NONCONVERGENCE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "amoeba",
    about = "Amoebas and coamoebas of parametrized subvarieties of the complex torus",
    long_about = None,
    version
)]
struct Cli {
    /// Cap worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Amoeba,
    Coamoeba,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerArg {
    /// Mixture sampling with annulus proposals around density poles.
    PoleAware,
    /// Plain uniform sampling over the truncation box minus exclusions.
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum MapArg {
    Log,
    Arg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Amoeba,
    Coamoeba,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Quick,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlaneAction {
    /// Reality test with per-row witnesses.
    Real,
    /// Expected Arg/Log fiber counts.
    Counts,
    /// Monte Carlo volume certificate against the closed forms.
    Volume,
    /// Emit the plane as a variety config.
    ToConfig,
}

#[derive(Args)]
struct CommonIo {
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed; the AMOEBA_SEED environment variable takes precedence.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo amoeba/coamoeba volume of a configured variety.
    Volume {
        /// Variety config (JSON).
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = TargetArg::Amoeba)]
        target: TargetArg,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        /// Clip the domain to the centered square of this half-width.
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, value_enum, default_value_t = SamplerArg::PoleAware)]
        sampler: SamplerArg,
        #[command(flatten)]
        io: CommonIo,
    },
    /// Pointwise check of the Log/Arg Jacobian identity.
    JacobianCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: u64,
        #[command(flatten)]
        io: CommonIo,
    },
    /// Count Log/Arg fibers at pushforward targets, or estimate p and P.
    Fibers {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = MapArg::Log)]
        map: MapArg,
        /// Parameter point "re,im[;re,im...]" whose image is the fiber target.
        #[arg(long, conflicts_with = "probes", allow_hyphen_values = true)]
        at: Option<String>,
        /// Estimate p and P from this many random regular probes.
        #[arg(long)]
        probes: Option<u64>,
        #[arg(long)]
        starts: Option<usize>,
        #[command(flatten)]
        io: CommonIo,
    },
    /// Far-field direction clusters of the logarithmic limit set (CSV).
    Limitset {
        #[arg(long)]
        config: PathBuf,
        /// Increasing Log-norm radii, e.g. "10,20,40".
        #[arg(long, default_value = "10,20,40")]
        ladder: String,
        #[arg(long, default_value_t = 200_000)]
        samples: u64,
        /// Cluster tolerance in degrees.
        #[arg(long, default_value_t = 1.5)]
        tol_deg: f64,
        #[command(flatten)]
        io: CommonIo,
    },
    /// Raster an amoeba/coamoeba image (PGM or PPM by extension).
    Raster {
        /// Variety config (JSON); mutually exclusive with --poly.
        #[arg(long, conflicts_with = "poly")]
        config: Option<PathBuf>,
        /// Bivariate polynomial coefficients (JSON [[..row of [re,im]..]]),
        /// rasterized by per-column root solving.
        #[arg(long)]
        poly: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ModeArg::Amoeba)]
        mode: ModeArg,
        /// "x0,x1,y0,y1" in Log-plane (amoeba) or [0,2pi) torus coordinates.
        #[arg(long, allow_hyphen_values = true)]
        bounds: String,
        /// "WxH" pixels.
        #[arg(long, default_value = "512x512")]
        res: String,
        #[arg(long, default_value_t = 2_000_000)]
        samples: u64,
        /// Coordinate pair to project, 1-based, e.g. "1,2".
        #[arg(long, default_value = "1,2")]
        pair: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Affine k-plane helpers: reality, expected counts, volume certificate.
    Plane {
        /// Plane config (JSON: k, s, b, a).
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        action: PlaneAction,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[command(flatten)]
        io: CommonIo,
    },
    /// Run every built-in example and write reports plus figures.
    Gallery {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ProfileArg::Quick)]
        profile: ProfileArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the JSON schema all configs are validated against.
    Schema,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn config(error: anyhow::Error) -> Self {
        Self {
            code: EXIT_CONFIG,
            error,
        }
    }

    fn nonconvergence(error: anyhow::Error) -> Self {
        Self {
            code: EXIT_NONCONVERGENCE,
            error,
        }
    }

    fn expectation(error: anyhow::Error) -> Self {
        Self {
            code: EXIT_EXPECTATION,
            error,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("warning: could not set --jobs: {e}");
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn seed_of(cli_seed: u64) -> u64 {
    std::env::var("AMOEBA_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(cli_seed)
}

fn load_spec(path: &Path) -> Result<VarietySpec, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::config)?;
    config::load_variety(&text)
        .map_err(|e| Failure::config(anyhow!("{}: {e}", path.display())))
}

fn emit<T: serde::Serialize>(report: &T, out: Option<&Path>) -> Result<(), Failure> {
    let json = serde_json::to_string_pretty(report).expect("serializable report");
    match out {
        Some(path) => std::fs::write(path, json.as_bytes())
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::config),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn parse_complex_list(text: &str) -> Result<Vec<Complex64>> {
    text.split(';')
        .map(|part| {
            let nums: Vec<&str> = part.split(',').map(str::trim).collect();
            if nums.len() != 2 {
                bail!("expected \"re,im\" pairs separated by ';', got `{part}`");
            }
            Ok(Complex64::new(nums[0].parse()?, nums[1].parse()?))
        })
        .collect()
}

fn parse_bounds(text: &str) -> Result<RasterBounds> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()?;
    if v.len() != 4 {
        bail!("--bounds needs four numbers x0,x1,y0,y1");
    }
    Ok(RasterBounds {
        x: (v[0], v[1]),
        y: (v[2], v[3]),
    })
}

fn parse_resolution(text: &str) -> Result<(usize, usize)> {
    let (w, h) = text
        .split_once('x')
        .ok_or_else(|| anyhow!("--res must look like 512x512"))?;
    Ok((w.trim().parse()?, h.trim().parse()?))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Volume {
            config,
            target,
            samples,
            radius,
            sampler,
            io,
        } => {
            let spec = load_spec(&config)?;
            let truncation = match radius {
                Some(r) => spec
                    .domain_clipped(r)
                    .ok_or_else(|| Failure::config(anyhow!("radius {r} empties the domain")))?,
                None => spec.domain.clone(),
            };
            let target = match target {
                TargetArg::Amoeba => VolumeTarget::Amoeba,
                TargetArg::Coamoeba => VolumeTarget::Coamoeba,
            };
            let mode = match sampler {
                SamplerArg::PoleAware => SamplerMode::PoleAware,
                SamplerArg::Uniform => SamplerMode::Uniform,
            };
            let est = measure::integrate_pullback(
                &spec,
                target,
                samples,
                seed_of(io.seed),
                &truncation,
                mode,
            )
            .map_err(|e| Failure::config(anyhow!(e)))?;
            emit(&est, io.out.as_deref())
        }
        Command::JacobianCheck {
            config,
            samples,
            io,
        } => {
            let spec = load_spec(&config)?;
            let report = gallery::check_jacobian_identity(&spec, samples, seed_of(io.seed));
            let passed = report.max_rel_deviation <= 1e-8 && report.max_minor_deviation <= 1e-8;
            emit(&report, io.out.as_deref())?;
            if !passed {
                return Err(Failure::expectation(anyhow!(
                    "Jacobian identity deviation above 1e-8"
                )));
            }
            Ok(())
        }
        Command::Fibers {
            config,
            map,
            at,
            probes,
            starts,
            io,
        } => {
            let spec = load_spec(&config)?;
            let map = match map {
                MapArg::Log => TorusMap::Log,
                MapArg::Arg => TorusMap::Arg,
            };
            let mut opts = SolveOptions::for_spec(&spec, seed_of(io.seed));
            if let Some(s) = starts {
                opts.starts = s;
            }
            match (at, probes) {
                (Some(at), _) => {
                    let t0 = parse_complex_list(&at).map_err(Failure::config)?;
                    if t0.len() != spec.k {
                        return Err(Failure::config(anyhow!(
                            "--at needs {} parameter values, got {}",
                            spec.k,
                            t0.len()
                        )));
                    }
                    let target = fibers::pushforward_target(&spec, &t0, map).ok_or_else(|| {
                        Failure::config(anyhow!("--at point is outside the torus"))
                    })?;
                    let report = fibers::fiber_count(&spec, map, &target, opts)
                        .map_err(|e| Failure::config(anyhow!(e)))?;
                    let undetermined = report.regularity == Regularity::Undetermined;
                    emit(&report, io.out.as_deref())?;
                    if undetermined {
                        return Err(Failure::nonconvergence(anyhow!(
                            "no start converged; fiber undetermined"
                        )));
                    }
                    Ok(())
                }
                (None, probes) => {
                    let est = fibers::estimate_p_p(&spec, probes.unwrap_or(12), opts)
                        .map_err(|e| Failure::nonconvergence(anyhow!(e)))?;
                    emit(&est, io.out.as_deref())
                }
            }
        }
        Command::Limitset {
            config,
            ladder,
            samples,
            tol_deg,
            io,
        } => {
            let spec = load_spec(&config)?;
            let ladder: Vec<f64> = ladder
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| Failure::config(anyhow!("--ladder: {e}")))?;
            let mut opts = LimitSetOptions::new(ladder, samples, seed_of(io.seed));
            opts.cluster_tol = tol_deg.to_radians();
            let report = limitset::log_limit_set(&spec, &opts)
                .map_err(|e| Failure::nonconvergence(anyhow!(e)))?;
            let csv = limitset_csv(&report);
            match io.out.as_deref() {
                Some(path) => std::fs::write(path, csv)
                    .with_context(|| format!("writing {}", path.display()))
                    .map_err(Failure::config)?,
                None => print!("{csv}"),
            }
            Ok(())
        }
        Command::Raster {
            config,
            poly,
            mode,
            bounds,
            res,
            samples,
            pair,
            out,
            seed,
        } => {
            let bounds = parse_bounds(&bounds).map_err(Failure::config)?;
            let resolution = parse_resolution(&res).map_err(Failure::config)?;
            let grid = match (config, poly) {
                (Some(cfg), None) => {
                    let spec = load_spec(&cfg)?;
                    let mode = match mode {
                        ModeArg::Amoeba => RasterMode::Amoeba,
                        ModeArg::Coamoeba => RasterMode::Coamoeba,
                    };
                    let nums: Vec<usize> = pair
                        .split(',')
                        .map(|s| s.trim().parse::<usize>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| Failure::config(anyhow!("--pair: {e}")))?;
                    if nums.len() != 2 || nums.contains(&0) {
                        return Err(Failure::config(anyhow!("--pair must be two 1-based indices")));
                    }
                    raster::raster_pushforward(
                        &spec,
                        (nums[0] - 1, nums[1] - 1),
                        mode,
                        bounds,
                        resolution,
                        samples,
                        seed_of(seed),
                    )
                    .map_err(|e| Failure::nonconvergence(anyhow!(e)))?
                }
                (None, Some(poly_path)) => {
                    let text = std::fs::read_to_string(&poly_path)
                        .with_context(|| format!("reading {}", poly_path.display()))
                        .map_err(Failure::config)?;
                    let raw: Vec<Vec<[f64; 2]>> = serde_json::from_str(&text)
                        .map_err(|e| Failure::config(anyhow!("--poly: {e}")))?;
                    let poly = BivariatePoly {
                        coeffs: raw
                            .into_iter()
                            .map(|row| {
                                row.into_iter()
                                    .map(|p| Complex64::new(p[0], p[1]))
                                    .collect()
                            })
                            .collect(),
                    };
                    raster::raster_hypersurface(&poly, bounds, resolution, 128, seed_of(seed))
                        .map_err(|e| Failure::nonconvergence(anyhow!(e)))?
                }
                _ => {
                    return Err(Failure::config(anyhow!(
                        "raster needs exactly one of --config or --poly"
                    )))
                }
            };
            let file = std::fs::File::create(&out)
                .with_context(|| format!("creating {}", out.display()))
                .map_err(Failure::config)?;
            let mut writer = std::io::BufWriter::new(file);
            let result = if out.extension().is_some_and(|e| e == "ppm") {
                grid.write_ppm(&mut writer)
            } else {
                grid.write_pgm(&mut writer)
            };
            result.map_err(|e| Failure::config(anyhow!(e)))?;
            writer.flush().map_err(|e| Failure::config(anyhow!(e)))?;
            Ok(())
        }
        Command::Plane {
            config,
            action,
            samples,
            io,
        } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))
                .map_err(Failure::config)?;
            let plane = PlaneConfig::from_json(&text)
                .and_then(|c| c.to_plane())
                .map_err(|e| Failure::config(anyhow!(e)))?;
            match action {
                PlaneAction::Real => emit(&plane.is_real(), io.out.as_deref()),
                PlaneAction::Counts => emit(&plane.expected_counts(), io.out.as_deref()),
                PlaneAction::Volume => {
                    let cert = plane
                        .volume_certificate(samples, seed_of(io.seed))
                        .map_err(|e| Failure::config(anyhow!(e)))?;
                    let passed = cert.amoeba_pass && cert.coamoeba_pass;
                    emit(&cert, io.out.as_deref())?;
                    if !passed {
                        return Err(Failure::expectation(anyhow!(
                            "volume certificate outside 3 stderr"
                        )));
                    }
                    Ok(())
                }
                PlaneAction::ToConfig => {
                    let spec = plane
                        .to_variety(40.0)
                        .map_err(|e| Failure::config(anyhow!(e)))?;
                    emit(&VarietyConfig::from_spec(&spec), io.out.as_deref())
                }
            }
        }
        Command::Gallery { out, profile, seed } => {
            let profile = match profile {
                ProfileArg::Quick => BudgetProfile::Quick,
                ProfileArg::Full => BudgetProfile::Full,
            };
            let summary = gallery::run_gallery(&out, profile, seed_of(seed))
                .map_err(|e| Failure::config(anyhow!(e)))?;
            print!("{summary}");
            if !summary.all_passed {
                return Err(Failure::expectation(anyhow!("gallery expectations failed")));
            }
            Ok(())
        }
        Command::Schema => {
            println!("{}", config::VARIETY_JSON_SCHEMA);
            Ok(())
        }
    }
}

fn limitset_csv(report: &limitset::LimitSetReport) -> String {
    let mut out = String::new();
    let dims = report
        .clusters
        .first()
        .map(|c| c.direction.len())
        .unwrap_or(0);
    let header: Vec<String> = (1..=dims)
        .map(|i| format!("dir{i}"))
        .chain(["weight", "spread", "rationality", "arc_id"].map(String::from))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for c in &report.clusters {
        let mut fields: Vec<String> = c.direction.iter().map(|v| format!("{v:.9}")).collect();
        fields.push(c.weight.to_string());
        fields.push(format!("{:.6}", c.spread));
        fields.push(match &c.rationality {
            Rationality::Rational { vector } => {
                let parts: Vec<String> = vector.iter().map(i64::to_string).collect();
                format!("rational({})", parts.join(" "))
            }
            Rationality::IrrationalWithinBounds => "irrational-within-bounds".into(),
        });
        fields.push(
            c.arc_id
                .map(|id| id.to_string())
                .unwrap_or_else(|| "-".into()),
        );
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_list_parsing() {
        let v = parse_complex_list("1,2;3,-4").unwrap();
        assert_eq!(v, vec![Complex64::new(1.0, 2.0), Complex64::new(3.0, -4.0)]);
        assert!(parse_complex_list("1;2,3").is_err());
    }

    #[test]
    fn bounds_parsing() {
        let b = parse_bounds("-6, 6, -5, 5").unwrap();
        assert_eq!(b.x, (-6.0, 6.0));
        assert_eq!(b.y, (-5.0, 5.0));
        assert!(parse_bounds("1,2,3").is_err());
    }

    #[test]
    fn resolution_parsing() {
        assert_eq!(parse_resolution("640x480").unwrap(), (640, 480));
        assert!(parse_resolution("640").is_err());
    }
}
