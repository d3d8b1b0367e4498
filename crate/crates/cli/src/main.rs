use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use tricomi_core::bounded_model::{anchored_h_grid, AnchoredParams, FrequencyGrid};
use tricomi_core::fitting::{
    bootstrap, complex_rmse, fit, mode_profiles, DataKind, FitConfig, FitModel, FitResult,
    SpectrumData, DEFAULT_BOOTSTRAP_REPLICATES, PROFILE_POINTS_PER_DECADE,
};
use tricomi_core::io::{self, Outputs};
use tricomi_core::realization::{convergence_study, gauss_stieltjes, to_state_space};
use tricomi_core::spectral::build_density;
use tricomi_core::{Error, Result, ShapeParams};

#[derive(Parser)]
#[command(
    name = "tricomi",
    version,
    about = "Bounded Tricomi relaxation models: evaluation, realisation and fitting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the continuous response over a band.
    Eval(EvalArgs),
    /// Sample the spectral density and write it with its header.
    Density(DensityArgs),
    /// Gauss-Stieltjes Foster model and diagonal state space.
    Realize(RealizeArgs),
    /// Error of M-term realisations against the exact response.
    Converge(ConvergeArgs),
    /// Fit a tissue or battery spectrum.
    Fit(FitArgs),
    /// Wild-bootstrap envelopes of the mode profiles.
    Bootstrap(BootstrapArgs),
    /// Normalised mode profiles of a fitted model.
    Modes(ModesArgs),
}

#[derive(Args)]
struct ShapeArgs {
    /// a,b,tau
    #[arg(long, value_delimiter = ',', required = true)]
    params: Vec<f64>,
    /// h0,hinf
    #[arg(long, value_delimiter = ',')]
    anchor: Option<Vec<f64>>,
    /// fmin,fmax in Hz
    #[arg(long, value_delimiter = ',', default_value = "1e-2,1e2")]
    band: Vec<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    /// Require 0 < a < 1 and 1 < b < 2.
    #[arg(long)]
    passive: bool,
    #[arg(long, default_value_t = 20)]
    points_per_decade: usize,
    /// Output directory; the table goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DensityArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[arg(long, default_value_t = 40)]
    points_per_decade: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct RealizeArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[arg(long)]
    order: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ConvergeArgs {
    /// a,b,tau; without it both reference regimes are run.
    #[arg(long, value_delimiter = ',')]
    params: Option<Vec<f64>>,
    /// h0,hinf
    #[arg(long, value_delimiter = ',', default_value = "2,1")]
    anchor: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1e-2,1e2")]
    band: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "5,15,45")]
    orders: Vec<usize>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Tissue,
    Battery,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "tissue")]
    kind: Kind,
    /// FitConfig as JSON; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Single model order.
    #[arg(long, conflicts_with = "orders")]
    order: Option<usize>,
    /// Candidate orders; defaults to 2,3,4 for tissue and 3 for battery.
    #[arg(long, value_delimiter = ',')]
    orders: Option<Vec<usize>>,
    /// Baseline model evaluated on the data grid, in the tissue format.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct BootstrapArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Existing fit JSON; the spectrum is fitted first when absent.
    #[arg(long)]
    fit: Option<PathBuf>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_REPLICATES)]
    replicates: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ModesArgs {
    /// Fit JSON written by `fit`.
    #[arg(long)]
    fit: PathBuf,
    /// fmin,fmax in Hz; defaults to the band of the fitted data.
    #[arg(long, value_delimiter = ',')]
    band: Option<Vec<f64>>,
    #[arg(long, default_value_t = PROFILE_POINTS_PER_DECADE)]
    points_per_decade: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn triple(v: &[f64], name: &str) -> Result<[f64; 3]> {
    v.try_into()
        .map_err(|_| Error::Domain(format!("--{name} takes three comma-separated values")))
}

fn pair(v: &[f64], name: &str) -> Result<(f64, f64)> {
    match v {
        [x, y] => Ok((*x, *y)),
        _ => Err(Error::Domain(format!(
            "--{name} takes two comma-separated values"
        ))),
    }
}

fn shape_of(v: &[f64]) -> Result<ShapeParams> {
    let [a, b, tau] = triple(v, "params")?;
    ShapeParams::new(a, b, tau)
}

fn anchor_of(v: Option<&[f64]>, shape: ShapeParams) -> Result<AnchoredParams> {
    let (h0, hinf) = match v {
        Some(v) => pair(v, "anchor")?,
        None => (1.0, 0.0),
    };
    AnchoredParams::new(h0, hinf, shape)
}

fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let shape = shape_of(&a.shape.params)?;
    if a.passive {
        shape.check_passive()?;
    }
    let anchor = anchor_of(a.shape.anchor.as_deref(), shape)?;
    let (f0, f1) = pair(&a.shape.band, "band")?;
    let grid = FrequencyGrid::log_spaced(f0, f1, a.points_per_decade)?;
    let h = anchored_h_grid(&anchor, &grid)?;
    let rows: Vec<Vec<f64>> = grid
        .f()
        .iter()
        .zip(&h)
        .map(|(f, h)| vec![*f, h.re, h.im, h.norm(), h.arg().to_degrees()])
        .collect();
    let table = io::format_table(&["f_hz", "re", "im", "abs", "phase_deg"], &rows)?;
    match &a.out {
        Some(dir) => {
            let mut out = Outputs::new();
            out.write(&out_path(dir, "eval.csv"), &table)?;
            out.commit();
        }
        None => print!("{table}"),
    }
    Ok(())
}

fn cmd_density(a: &DensityArgs) -> Result<()> {
    let shape = shape_of(&a.shape.params)?;
    let d = build_density(&shape, pair(&a.shape.band, "band")?, a.points_per_decade)?;
    let mut out = Outputs::new();
    let mut csv = Vec::new();
    d.write_csv(&mut csv)?;
    out.write(
        &out_path(&a.out, "density.csv"),
        &String::from_utf8_lossy(&csv),
    )?;
    out.write(
        &out_path(&a.out, "density.json"),
        &io::to_json(&d.header())?,
    )?;
    if !d.accepted() {
        return Err(Error::WindowTooNarrow {
            defect: d.norm_defect,
            suggested_decades: 1.0,
        });
    }
    out.commit();
    Ok(())
}

fn cmd_realize(a: &RealizeArgs) -> Result<()> {
    let shape = shape_of(&a.shape.params)?;
    let anchor = a
        .shape
        .anchor
        .as_deref()
        .map(|v| anchor_of(Some(v), shape))
        .transpose()?;
    let d = build_density(&shape, pair(&a.shape.band, "band")?, 40)?;
    if !d.accepted() {
        return Err(Error::WindowTooNarrow {
            defect: d.norm_defect,
            suggested_decades: 1.0,
        });
    }
    let model = gauss_stieltjes(&d, a.order)?;
    let ss = to_state_space(&model, shape.tau, anchor.as_ref())?;
    let mut out = Outputs::new();
    out.write(&out_path(&a.out, "foster.json"), &io::to_json(&model)?)?;
    out.write(&out_path(&a.out, "state_space.json"), &io::to_json(&ss)?)?;
    if model
        .nodes
        .iter()
        .chain(&model.weights)
        .any(|v| !(*v > 0.0))
        || (model.weight_sum() - 1.0).abs() > 1e-10
    {
        return Err(Error::Numerical {
            what: "realize",
            detail: format!(
                "Foster model is not passive (weight sum {:e})",
                model.weight_sum()
            ),
        });
    }
    out.commit();
    Ok(())
}

fn cmd_converge(a: &ConvergeArgs) -> Result<()> {
    let band = pair(&a.band, "band")?;
    let cases: Vec<(String, ShapeParams)> = match &a.params {
        Some(p) => vec![(String::new(), shape_of(p)?)],
        None => vec![
            ("_moderate".into(), ShapeParams::new(0.7, 1.7, 1.0)?),
            ("_long_tail".into(), ShapeParams::new(0.35, 1.7, 1.0)?),
        ],
    };
    let mut out = Outputs::new();
    for (suffix, shape) in cases {
        let anchor = anchor_of(Some(&a.anchor), shape)?;
        let report = convergence_study(&anchor, band, &a.orders)?;
        let mut csv = Vec::new();
        report.write_csv(&mut csv)?;
        let mut poles = Vec::new();
        report.write_poles_csv(&mut poles)?;
        out.write(
            &out_path(&a.out, &format!("converge{suffix}.csv")),
            &String::from_utf8_lossy(&csv),
        )?;
        out.write(
            &out_path(&a.out, &format!("poles{suffix}.csv")),
            &String::from_utf8_lossy(&poles),
        )?;
        out.write(
            &out_path(&a.out, &format!("converge{suffix}.json")),
            &io::to_json(&report)?,
        )?;
    }
    out.commit();
    Ok(())
}

fn load_config(d: &DataArgs) -> Result<FitConfig> {
    let mut cfg: FitConfig = match &d.config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => FitConfig::default(),
    };
    if let Some(s) = d.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_data(d: &DataArgs) -> Result<SpectrumData> {
    Ok(match d.kind {
        Kind::Tissue => SpectrumData::Tissue(io::read_tissue(&d.data)?),
        Kind::Battery => SpectrumData::Battery(io::read_battery(&d.data)?),
    })
}

fn template(kind: DataKind, order: usize) -> FitModel {
    match kind {
        DataKind::Tissue => FitModel::tissue_template(order),
        DataKind::Battery => FitModel::battery_template(order),
    }
}

fn default_order(kind: DataKind) -> usize {
    match kind {
        DataKind::Tissue => 4,
        DataKind::Battery => 3,
    }
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let cfg = load_config(&a.data)?;
    let data = load_data(&a.data)?;
    let orders = match (&a.order, &a.orders) {
        (Some(n), _) => vec![*n],
        (None, Some(v)) => v.clone(),
        (None, None) => match data.kind() {
            DataKind::Tissue => vec![2, 3, 4],
            DataKind::Battery => vec![3],
        },
    };
    let baseline_rmse = match &a.baseline {
        Some(p) => {
            let SpectrumData::Tissue(d) = &data else {
                return Err(Error::Domain("--baseline applies to tissue data".into()));
            };
            let b = io::read_tissue(p)?;
            if b.f.len() != d.f.len()
                || b.f
                    .iter()
                    .zip(&d.f)
                    .any(|(x, y)| (x / y - 1.0).abs() > 1e-9)
            {
                return Err(Error::Data(
                    "baseline frequencies do not match the data".into(),
                ));
            }
            Some(complex_rmse(&b.epshat(), &d.epshat()))
        }
        None => None,
    };
    let mut out = Outputs::new();
    let mut summary = Vec::new();
    for &n in &orders {
        let r = fit(&data, &cfg, &template(data.kind(), n))?;
        let name = if orders.len() == 1 {
            "fit.json".to_string()
        } else {
            format!("fit_n{n}.json")
        };
        out.write(&out_path(&a.out, &name), &io::to_json(&r)?)?;
        summary.push(json!({
            "order": n,
            "file": name,
            "aic": r.info.aic,
            "bic": r.info.bic,
            "complex_rmse": r.complex_rmse,
            "loss": r.loss,
            "converged": r.converged,
        }));
    }
    if orders.len() > 1 || baseline_rmse.is_some() {
        let best = summary
            .iter()
            .min_by(|x, y| {
                x["bic"]
                    .as_f64()
                    .unwrap_or(f64::INFINITY)
                    .total_cmp(&y["bic"].as_f64().unwrap_or(f64::INFINITY))
            })
            .map(|s| s["order"].clone());
        let report = json!({ "fits": summary, "bic_selected_order": best, "baseline_complex_rmse": baseline_rmse });
        out.write(&out_path(&a.out, "summary.json"), &io::to_json(&report)?)?;
    }
    out.commit();
    Ok(())
}

fn read_fit(path: &Path) -> Result<FitResult> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn cmd_bootstrap(a: &BootstrapArgs) -> Result<()> {
    let mut cfg = load_config(&a.data)?;
    let data = load_data(&a.data)?;
    let fitted = match &a.fit {
        Some(p) => read_fit(p)?,
        None => fit(
            &data,
            &cfg,
            &template(data.kind(), a.order.unwrap_or(default_order(data.kind()))),
        )?,
    };
    if let Some(s) = a.data.seed {
        cfg.seed = s;
    } else if a.fit.is_some() && a.data.config.is_none() {
        cfg.seed = fitted.seed;
    }
    let b = bootstrap(&fitted, &data, &cfg, a.replicates)?;
    let mut out = Outputs::new();
    out.write(&out_path(&a.out, "bootstrap.json"), &io::to_json(&b)?)?;
    for e in &b.envelopes {
        let rows: Vec<Vec<f64>> = (0..b.f.len())
            .map(|k| vec![b.f[k], e.median[k], e.lo[k], e.hi[k]])
            .collect();
        let csv = io::format_table(&["f_hz", "median", "p2_5", "p97_5"], &rows)?;
        out.write(
            &out_path(&a.out, &format!("envelope_block{}.csv", e.block + 1)),
            &csv,
        )?;
    }
    out.commit();
    Ok(())
}

fn cmd_modes(a: &ModesArgs) -> Result<()> {
    let fitted = read_fit(&a.fit)?;
    let band = match &a.band {
        Some(v) => pair(v, "band")?,
        None => (fitted.band_hz[0], fitted.band_hz[1]),
    };
    let set = mode_profiles(&fitted.model, band, a.points_per_decade)?;
    let mut out = Outputs::new();
    for p in &set.profiles {
        let rows: Vec<Vec<f64>> = p.f.iter().zip(&p.psi).map(|(f, s)| vec![*f, *s]).collect();
        out.write(
            &out_path(&a.out, &format!("mode_block{}.csv", p.block + 1)),
            &io::format_table(&["f_hz", "psi"], &rows)?,
        )?;
    }
    let peaks: Vec<_> = set
        .profiles
        .iter()
        .map(|p| json!({ "block": p.block + 1, "peak_hz": p.peak_hz }))
        .collect();
    let degenerate: Vec<usize> = set.degenerate.iter().map(|b| b + 1).collect();
    out.write(
        &out_path(&a.out, "modes.json"),
        &io::to_json(&json!({ "band_hz": [band.0, band.1], "peaks": peaks, "degenerate_blocks": degenerate }))?,
    )?;
    out.commit();
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Eval(a) => cmd_eval(a),
        Command::Density(a) => cmd_density(a),
        Command::Realize(a) => cmd_realize(a),
        Command::Converge(a) => cmd_converge(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Bootstrap(a) => cmd_bootstrap(a),
        Command::Modes(a) => cmd_modes(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(io::exit_code(&e) as u8)
        }
    }
}
