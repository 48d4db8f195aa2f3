use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use roughwall::harness::{self, ExperimentConfig};
use roughwall::macro_solver::Variant;
use roughwall::slip::SlipField;
use roughwall::{Error, Result};

#[derive(Parser)]
#[command(name = "roughwall", version, about = "Wall-law experiments for Stokes flow over rough boundaries")]
struct Cli {
    /// TOML experiment file; built-in riblet annulus when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also write SVG log-log plots.
    #[arg(long, global = true)]
    svg: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one cell problem and report c_bl, decay and residuals.
    Cell {
        /// e1|e2|e3 (chart tangents, then normal) or comma-separated components.
        #[arg(long)]
        lambda: Option<String>,
        /// Truncation depth L.
        #[arg(long)]
        depth: Option<f64>,
        /// Lateral cells per direction; the depth direction gets twice as many.
        #[arg(long)]
        res: Option<usize>,
    },
    /// Assemble the slip field along Γ.
    SlipField {
        #[arg(long)]
        samples: Option<usize>,
    },
    /// One macro solve.
    Macro {
        #[arg(long, default_value = "rough")]
        variant: String,
        #[arg(long)]
        eps: String,
        /// Slip field manifest written by slip-field (Navier only).
        #[arg(long)]
        slip: Option<PathBuf>,
    },
    /// Full ε-sweep with rate fits and verdicts.
    Converge {
        #[arg(long)]
        eps_list: Option<String>,
    },
    /// Divergence-constant study on comb domains.
    Divbench {
        #[arg(long)]
        eps_list: Option<String>,
        #[arg(long)]
        q: Option<f64>,
    },
    /// Cell solutions against the mode-expansion oracle under refinement.
    OracleCheck {
        #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
        res: Vec<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    harness::write_json(path, value)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn parse_lambda(text: &str, cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    let patch = cfg.patch()?;
    let bp = cfg.base_point()?;
    let mut frame = patch.tangent_frame(&bp);
    frame.push(patch.normal(&bp));
    if let Some(i) = text.strip_prefix('e').and_then(|d| d.parse::<usize>().ok()) {
        return frame.get(i.wrapping_sub(1)).cloned().ok_or_else(|| Error::Config(format!("no frame vector {text}")));
    }
    let v: std::result::Result<Vec<f64>, _> = text.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let v = v.map_err(|e| Error::Config(format!("bad --lambda '{text}': {e}")))?;
    if v.len() != frame.len() {
        return Err(Error::Config(format!("--lambda needs {} components", frame.len())));
    }
    Ok(v)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        harness::configure_threads(n)?;
    }
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.svg |= cli.svg;
    let out = cli.out.as_path();
    fs::create_dir_all(out)?;

    match cli.command {
        Command::Cell { lambda, depth, res } => {
            if let Some(n) = res {
                cfg.cell.lateral = n;
                cfg.cell.depth = 2 * n;
            }
            if depth.is_some() {
                cfg.cell.truncation_depth = depth;
            }
            let lambda = lambda.map(|l| parse_lambda(&l, &cfg)).transpose()?;
            let (sol, report) = harness::run_cell(&cfg, lambda)?;
            println!(
                "c_bl = {:?}  alpha_bound = {:.4}  measured_decay = {}",
                report.c_bl,
                report.alpha_bound,
                report.measured_decay.map_or("n/a".into(), |r| format!("{r:.4}"))
            );
            json(&out.join("cell.json"), &report)?;
            write(&out.join("cell_decay.csv"), &report.decay_csv())?;
            let mid = vec![0.5; sol.dim() - 1];
            let top = cfg.roughness.bound_m;
            write(&out.join("cell_slice.csv"), &harness::field_slice_csv(&sol, &mid, top, 201))?;
        }
        Command::SlipField { samples } => {
            let field = harness::build_slip_field(&cfg, samples)?;
            write(&out.join("slip_field.csv"), &field.to_csv())?;
            write(&out.join("slip_field.json"), &field.to_json()?)?;
        }
        Command::Macro { variant, eps, slip } => {
            let variant: Variant = variant.parse()?;
            let eps = *harness::parse_eps_list(&eps)?.first().ok_or_else(|| Error::Config("--eps is empty".into()))?;
            let slip = slip.map(|p| SlipField::from_json(&fs::read_to_string(p)?)).transpose()?;
            let (sol, report) = harness::run_macro(&cfg, variant, eps, slip)?;
            println!(
                "{variant} eps = {eps}: {} elements, divergence residual {:.2e}, {:.2} s",
                report.summary.elements, report.summary.divergence_residual, report.summary.wall_time
            );
            if let Some(n) = &report.norms_vs_rough {
                println!("difference to rough solution: L2 {:.4e}  H1 {:.4e}  W11 {:.4e}", n.l2, n.h1_semi, n.w11);
            }
            json(&out.join(format!("macro_{variant}.json")), &report)?;
            write(&out.join(format!("macro_{variant}.csv")), &sol.to_csv())?;
        }
        Command::Converge { eps_list } => {
            if let Some(l) = eps_list {
                cfg.macro_.eps = harness::parse_eps_list(&l)?;
            }
            let report = harness::run_pipeline(&cfg, Some(out))?;
            for v in &report.verdicts {
                let slope = v.fit.as_ref().map_or("n/a".into(), |f| format!("{:.3}", f.slope));
                println!("{:<18} rate {slope:>6}  target {:.2} ± {:.2}  {}", v.name, v.target, v.band, v.status);
            }
            if let Some(ok) = report.corrector_improves {
                println!("corrector below plain Dirichlet at every ε: {ok}");
            }
            println!("wrote {}", out.join("convergence.csv").display());
        }
        Command::Divbench { eps_list, q } => {
            let eps = match eps_list {
                Some(l) => harness::parse_eps_list(&l)?,
                None => cfg.divergence.eps.clone(),
            };
            let report = harness::run_divbench(&eps, cfg.seed, q.unwrap_or(cfg.divergence.q))?;
            for r in &report.rows {
                println!("eps = {:<8} m = {:<3} ratio {:.4}  envelope {:.3}", r.eps, r.m, r.global_ratio, r.bound_envelope);
            }
            println!("spread {:.3} over m growth {:.0}: {}", report.spread, report.m_growth, report.verdict);
            write(&out.join("divbench.csv"), &report.to_csv())?;
            json(&out.join("divbench.json"), &report)?;
        }
        Command::OracleCheck { res } => {
            let rows = harness::run_oracle_check(&cfg, &res)?;
            for r in &rows {
                println!("{:>4} x {:<4} relative error {:.3e}", r.lateral, r.depth_cells, r.relative_error);
            }
            json(&out.join("oracle_check.json"), &rows)?;
        }
    }
    Ok(())
}
