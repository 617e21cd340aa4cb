//! Command-line front end: model ingestion, DF and moment grids, contour
//! data, verification reports.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dfforge::builtin::{parse_builtin, ModelBundle, Potential};
use dfforge::contour::{
    geometric_levels, marching_squares, physical_boundary, sample_grid, ContourSet, GridSpec,
    LevelContours, CONTOUR_SCHEMA_VERSION,
};
use dfforge::model::parse_model_spec;
use dfforge::moments::{dispersion_closed_form, mean_vphi_law};
use dfforge::quad::{QuadConfig, QuadContext};
use dfforge::synthesis::{synthesize, DistributionFunction, SynthesisRequest, Variant};
use dfforge::verify::{run_verification, ScanSpec, ScanStation, VerifyJob};

#[derive(Parser)]
#[command(
    name = "dfforge",
    version,
    about = "Two-integral distribution functions for axisymmetric stellar systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Relative quadrature tolerance (overrides DFFORGE_QUAD_TOL).
    #[arg(long, global = true)]
    quad_tol: Option<f64>,
    /// Maximum adaptive bisection depth.
    #[arg(long, global = true)]
    quad_max_depth: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a DF and dump its component metadata as JSON.
    Synthesize {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the even DF on an (energy, Lz) grid; CSV `energy,Lz,f`.
    EvalGrid {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Skip the per-component interpolant cache.
        #[arg(long)]
        no_cache: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form dispersions on a (potential, R) grid; CSV
    /// `psi,R,sigma_R2,sigma_phi2,vbar_phi` (the psi column holds Phi for
    /// unbounded models).
    Moments {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0.1)]
        pot_min: f64,
        #[arg(long, default_value_t = 0.9)]
        pot_max: f64,
        #[arg(long, default_value_t = 5)]
        pot_steps: usize,
        #[arg(long, default_value_t = 0.2)]
        r_min: f64,
        #[arg(long, default_value_t = 2.0)]
        r_max: f64,
        #[arg(long, default_value_t = 5)]
        r_steps: usize,
        /// Rotation law `n,vstar,rstar` fixing the mean rotation input
        /// (default: no rotation).
        #[arg(long)]
        rot_law: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Isocontours of the even DF in the (energy, Lz) plane plus the
    /// physical-domain boundary, as JSON polyline data.
    Contour {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Ratio between successive contour levels.
        #[arg(long, default_value_t = 0.4)]
        level_ratio: f64,
        /// Stop the level ladder below this fraction of the grid maximum.
        #[arg(long, default_value_t = 1e-6)]
        min_level_fraction: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Round-trip, positivity and moment checks; JSON report. Exit code:
    /// 0 all pass, +2 accuracy failure, +4 negative DF region.
    Verify {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1e-6)]
        round_trip_tol: f64,
        #[arg(long, default_value_t = 1e-6)]
        moments_tol: f64,
        /// Extra station `pot,R` for file models (repeatable).
        #[arg(long)]
        station: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Model specification file.
    #[arg(long, conflicts_with = "builtin")]
    model: Option<PathBuf>,
    /// Builtin reference: `binney:v0=1,q=0.9`, `lyndenbell:a=0.5`,
    /// `fricke:p=2.5,n=0`.
    #[arg(long)]
    builtin: Option<String>,
    /// Synthesis variant: auto, epsilon, q, general, unbounded-epsilon,
    /// unbounded-q, unbounded-general.
    #[arg(long, default_value = "auto")]
    variant: String,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    e_min: f64,
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    e_max: f64,
    #[arg(long, default_value_t = 121)]
    e_steps: usize,
    #[arg(long, default_value_t = -3.0, allow_negative_numbers = true)]
    lz_min: f64,
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    lz_max: f64,
    #[arg(long, default_value_t = 121)]
    lz_steps: usize,
}

impl GridArgs {
    fn spec(&self) -> GridSpec {
        GridSpec {
            e_min: self.e_min,
            e_max: self.e_max,
            e_steps: self.e_steps,
            lz_min: self.lz_min,
            lz_max: self.lz_max,
            lz_steps: self.lz_steps,
        }
    }
}

/// A resolved model: either a builtin bundle or a parsed file.
struct ResolvedModel {
    name: String,
    bundle: Option<ModelBundle>,
    definition: dfforge::ModelDefinition,
    variant: Variant,
}

impl ResolvedModel {
    fn from_args(args: &ModelArgs) -> anyhow::Result<Self> {
        let (name, bundle, definition) = match (&args.model, &args.builtin) {
            (Some(path), None) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading model file {}", path.display()))?;
                let definition = parse_model_spec(&text)?;
                (path.display().to_string(), None, definition)
            }
            (None, Some(spec)) => {
                let bundle = parse_builtin(spec)?;
                (
                    bundle.name.clone(),
                    Some(bundle.clone()),
                    bundle.definition.clone(),
                )
            }
            _ => bail!("exactly one of --model or --builtin is required"),
        };
        let variant = match args.variant.as_str() {
            "auto" => bundle
                .as_ref()
                .map(|b| b.variant)
                .unwrap_or_else(|| Variant::infer(&definition.convention, &definition.expansion)),
            "epsilon" => Variant::EpsilonForm,
            "q" => Variant::QForm,
            "general" => Variant::GeneralForm,
            "unbounded-epsilon" => Variant::UnboundedEpsilon,
            "unbounded-q" => Variant::UnboundedQ,
            "unbounded-general" => Variant::UnboundedGeneral,
            other => bail!("unknown variant `{other}`"),
        };
        Ok(ResolvedModel {
            name,
            bundle,
            definition,
            variant,
        })
    }

    fn synthesize(&self, quad: Arc<QuadContext>) -> anyhow::Result<DistributionFunction> {
        let req = SynthesisRequest::new(
            self.definition.expansion.clone(),
            self.definition.convention,
            self.variant,
        );
        synthesize(&req, quad).with_context(|| format!("synthesizing DF for model {}", self.name))
    }

    fn potential(&self) -> Option<Potential> {
        self.bundle.as_ref().and_then(|b| b.potential)
    }

    fn stations(&self, extra: &[String]) -> anyhow::Result<Vec<ScanStation>> {
        let mut stations = match &self.bundle {
            Some(bundle) => bundle.default_stations(),
            None => [0.5, 1.0, 2.0]
                .iter()
                .map(|&radius| ScanStation { radius, pot: 1.0 })
                .collect(),
        };
        for text in extra {
            let (pot, radius) = text
                .split_once(',')
                .ok_or_else(|| anyhow!("station `{text}` is not `pot,R`"))?;
            stations.push(ScanStation {
                pot: pot.trim().parse().context("station potential")?,
                radius: radius.trim().parse().context("station radius")?,
            });
        }
        Ok(stations)
    }

    fn scan_stations(&self, extra: &[String]) -> anyhow::Result<Vec<ScanStation>> {
        match &self.bundle {
            Some(bundle) => Ok(bundle.scan_stations()),
            None => self.stations(extra),
        }
    }
}

/// 17 significant digits: enough to reproduce any f64 exactly.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_output(path: Option<&Path>, content: &str) -> anyhow::Result<()> {
    match path {
        Some(path) => {
            std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    let mut config = QuadConfig::default();
    if let Ok(text) = std::env::var("DFFORGE_QUAD_TOL") {
        config.rel_tol = text
            .parse()
            .map_err(|_| anyhow!("DFFORGE_QUAD_TOL must be a number, got `{text}`"))?;
    }
    if let Some(tol) = cli.quad_tol {
        config.rel_tol = tol;
    }
    if let Some(depth) = cli.quad_max_depth {
        config.max_depth = depth;
    }
    let quad = Arc::new(QuadContext::new(config));
    match &cli.command {
        Command::Synthesize { model, out } => cmd_synthesize(model, out.as_deref(), quad),
        Command::EvalGrid {
            model,
            grid,
            no_cache,
            out,
        } => cmd_eval_grid(model, &grid.spec(), *no_cache, out.as_deref(), quad),
        Command::Moments {
            model,
            pot_min,
            pot_max,
            pot_steps,
            r_min,
            r_max,
            r_steps,
            rot_law,
            out,
        } => cmd_moments(
            model,
            (*pot_min, *pot_max, *pot_steps),
            (*r_min, *r_max, *r_steps),
            rot_law.as_deref(),
            out.as_deref(),
        ),
        Command::Contour {
            model,
            grid,
            level_ratio,
            min_level_fraction,
            out,
        } => cmd_contour(
            model,
            &grid.spec(),
            *level_ratio,
            *min_level_fraction,
            out.as_deref(),
            quad,
        ),
        Command::Verify {
            model,
            round_trip_tol,
            moments_tol,
            station,
            out,
        } => cmd_verify(
            model,
            *round_trip_tol,
            *moments_tol,
            station,
            out.as_deref(),
            quad,
        ),
    }
}

#[derive(Serialize)]
struct SynthesisDump {
    schema_version: u32,
    model: String,
    variant: Variant,
    convention: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    scaling_radius: Option<f64>,
    components: Vec<dfforge::synthesis::ComponentInfo>,
}

fn cmd_synthesize(
    model: &ModelArgs,
    out: Option<&Path>,
    quad: Arc<QuadContext>,
) -> anyhow::Result<ExitCode> {
    let resolved = ResolvedModel::from_args(model)?;
    let df = resolved.synthesize(quad)?;
    let dump = SynthesisDump {
        schema_version: 1,
        model: resolved.name.clone(),
        variant: resolved.variant,
        convention: resolved.definition.convention.name().to_string(),
        scaling_radius: df.scaling_radius,
        components: df.terms.iter().map(|t| t.describe()).collect(),
    };
    write_output(out, &(serde_json::to_string_pretty(&dump)? + "\n"))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval_grid(
    model: &ModelArgs,
    spec: &GridSpec,
    no_cache: bool,
    out: Option<&Path>,
    quad: Arc<QuadContext>,
) -> anyhow::Result<ExitCode> {
    let resolved = ResolvedModel::from_args(model)?;
    let df = resolved.synthesize(quad)?;
    let df = if no_cache || spec.e_max <= 0.0 {
        df
    } else {
        df.cached(spec.e_max)?
    };
    let grid = sample_grid(&df, spec)?;
    let mut csv = String::from("energy,Lz,f\n");
    for (i, &e) in grid.energies.iter().enumerate() {
        for (j, &lz) in grid.lz.iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{}\n",
                fmt(e),
                fmt(lz),
                fmt(grid.value(i, j))
            ));
        }
    }
    write_output(out, &csv)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_moments(
    model: &ModelArgs,
    (pot_min, pot_max, pot_steps): (f64, f64, usize),
    (r_min, r_max, r_steps): (f64, f64, usize),
    rot_law: Option<&str>,
    out: Option<&Path>,
) -> anyhow::Result<ExitCode> {
    let resolved = ResolvedModel::from_args(model)?;
    let law = rot_law
        .map(|text| -> anyhow::Result<(u32, f64, f64)> {
            let parts: Vec<&str> = text.split(',').collect();
            if parts.len() != 3 {
                bail!("--rot-law expects `n,vstar,rstar`, got `{text}`");
            }
            Ok((
                parts[0].trim().parse()?,
                parts[1].trim().parse()?,
                parts[2].trim().parse()?,
            ))
        })
        .transpose()?;
    let lin = |lo: f64, hi: f64, steps: usize, i: usize| {
        if steps <= 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (steps - 1) as f64
        }
    };
    let mut csv = String::from("psi,R,sigma_R2,sigma_phi2,vbar_phi\n");
    for i in 0..pot_steps {
        let pot = lin(pot_min, pot_max, pot_steps, i);
        for j in 0..r_steps {
            let radius = lin(r_min, r_max, r_steps, j);
            let vbar = law
                .map(|(n, v_star, r_star)| mean_vphi_law(n, v_star, r_star, radius))
                .unwrap_or(0.0);
            let m = dispersion_closed_form(
                &resolved.definition.expansion,
                &resolved.definition.convention,
                pot,
                radius,
                vbar,
            )
            .with_context(|| format!("moments at (pot = {pot}, R = {radius})"))?;
            if m.sigma_phi2 < 0.0 {
                eprintln!(
                    "warning: sigma_phi^2 = {} < 0 at (pot = {pot}, R = {radius}); \
                     the rotation law exceeds what this model supports there",
                    m.sigma_phi2
                );
            }
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt(pot),
                fmt(radius),
                fmt(m.sigma_r2),
                fmt(m.sigma_phi2),
                fmt(m.vbar_phi)
            ));
        }
    }
    write_output(out, &csv)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_contour(
    model: &ModelArgs,
    spec: &GridSpec,
    level_ratio: f64,
    min_level_fraction: f64,
    out: Option<&Path>,
    quad: Arc<QuadContext>,
) -> anyhow::Result<ExitCode> {
    let resolved = ResolvedModel::from_args(model)?;
    let df = resolved.synthesize(quad)?;
    let df = if spec.e_max > 0.0 {
        df.cached(spec.e_max)?
    } else {
        df
    };
    let grid = sample_grid(&df, spec)?;
    let anchor = grid.max_value();
    let levels = geometric_levels(anchor, level_ratio, min_level_fraction * anchor.max(0.0));
    if levels.is_empty() {
        eprintln!("warning: empty level set (grid maximum {anchor}); writing empty contour data");
    }
    let contours = levels
        .iter()
        .map(|&level| LevelContours {
            level,
            polylines: marching_squares(&grid, level),
        })
        .collect();
    let boundary = match resolved.potential() {
        Some(pot) => {
            let rising = !resolved.definition.convention.is_bounded();
            physical_boundary(&|radius| pot.eval(radius, 0.0), rising, &grid.lz)
        }
        None => {
            eprintln!("warning: model has no analytic potential; omitting the domain boundary");
            Vec::new()
        }
    };
    let set = ContourSet {
        schema_version: CONTOUR_SCHEMA_VERSION,
        model: resolved.name.clone(),
        grid: *spec,
        level_ratio,
        levels,
        contours,
        boundary,
    };
    write_output(out, &(serde_json::to_string_pretty(&set)? + "\n"))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(
    model: &ModelArgs,
    round_trip_tol: f64,
    moments_tol: f64,
    extra_stations: &[String],
    out: Option<&Path>,
    quad: Arc<QuadContext>,
) -> anyhow::Result<ExitCode> {
    let resolved = ResolvedModel::from_args(model)?;
    let df = resolved.synthesize(quad)?;
    let job = VerifyJob {
        name: resolved.name.clone(),
        df: &df,
        expansion: &resolved.definition.expansion,
        stations: resolved.stations(extra_stations)?,
        scan: ScanSpec::new(resolved.scan_stations(extra_stations)?),
        round_trip_tol,
        moments_tol,
    };
    let report = run_verification(&job)?;
    write_output(out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    let accuracy_ok = report.round_trip_pass && report.moments_pass;
    let positivity_ok = report.positivity.is_nonnegative();
    eprintln!(
        "verify {}: round-trip max rel err {:.3e} ({}), moments max rel err {:.3e} ({}), \
         min DF value {:.3e} ({})",
        report.model,
        report.round_trip_max_rel_err,
        if report.round_trip_pass {
            "pass"
        } else {
            "FAIL"
        },
        report.moments_max_rel_err,
        if report.moments_pass { "pass" } else { "FAIL" },
        report.positivity.min_value,
        if positivity_ok {
            "non-negative"
        } else {
            "NEGATIVE REGION"
        },
    );
    let mut code = 0u8;
    if !accuracy_ok {
        code += 2;
    }
    if !positivity_ok {
        code += 4;
    }
    Ok(ExitCode::from(code))
}
