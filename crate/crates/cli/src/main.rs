use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use framecert::analysis;
use framecert::bounds::{self, DELTA_TOL};
use framecert::certify::{self, HierarchyOptions, Termination};
use framecert::fem::FrameModel;
use framecert::relax::{self, RelaxOptions};
use framecert::sdp::{self, SolverOptions};

/// Certified weight bounds for frame structures under compliance constraints.
#[derive(Parser, Debug)]
#[command(name = "framecert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compliance, weight and gradient at a given design.
    Analyze {
        /// Group areas, comma separated; a single value applies to all groups.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        area: Vec<f64>,
    },
    /// Uniform scaling of the design ratios to the feasibility boundary.
    Bounds {
        /// Ratios, comma separated; all ones by default.
        #[arg(long, value_delimiter = ',')]
        ratios: Vec<f64>,
    },
    /// Builds one relaxation, prints its block sizes and optionally solves it.
    Relax {
        #[arg(long)]
        solve: bool,
    },
    /// Runs the hierarchy and writes the reports.
    Hierarchy,
    /// Solves and verifies a problem read from an SDPA file.
    SolveSdpa {
        input: PathBuf,
    },
}

/// Options shared by all commands; any of them may come from `--config`.
#[derive(Args, Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct Flags {
    /// Model JSON path or bundled model name.
    #[arg(long, global = true)]
    model: Option<String>,
    /// Relaxation order.
    #[arg(long, global = true)]
    order: Option<usize>,
    /// Highest relaxation order of the hierarchy.
    #[arg(long, global = true)]
    rmax: Option<usize>,
    /// Absolute gap target; `inf` disables the gap stop.
    #[arg(long, global = true, allow_negative_numbers = true)]
    eps: Option<f64>,
    /// Solver tolerance.
    #[arg(long, global = true, allow_negative_numbers = true)]
    tol: Option<f64>,
    /// Relative singular-value threshold for ranks.
    #[arg(long, global = true, allow_negative_numbers = true)]
    rank_tol: Option<f64>,
    /// Output directory for reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Writes the relaxation in SDPA sparse format.
    #[arg(long, global = true)]
    export_sdpa: Option<PathBuf>,
    /// Keep the Schur pre-reduction off.
    #[arg(long, global = true)]
    no_reduce: bool,
    /// Solver log on stderr.
    #[arg(long, global = true)]
    verbose: bool,
    /// JSON file supplying any of these options; flags win.
    #[arg(long, global = true)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

impl Flags {
    fn merge(self, cfg: Flags) -> Flags {
        Flags {
            model: self.model.or(cfg.model),
            order: self.order.or(cfg.order),
            rmax: self.rmax.or(cfg.rmax),
            eps: self.eps.or(cfg.eps),
            tol: self.tol.or(cfg.tol),
            rank_tol: self.rank_tol.or(cfg.rank_tol),
            out: self.out.or(cfg.out),
            export_sdpa: self.export_sdpa.or(cfg.export_sdpa),
            no_reduce: self.no_reduce || cfg.no_reduce,
            verbose: self.verbose || cfg.verbose,
            config: self.config,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("tol", self.tol), ("rank-tol", self.rank_tol), ("eps", self.eps)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    bail!("--{name} must be positive, got {v}");
                }
            }
        }
        if self.order == Some(0) || self.rmax == Some(0) {
            bail!("relaxation orders start at 1");
        }
        Ok(())
    }

    fn model(&self) -> Result<FrameModel> {
        let Some(m) = &self.model else {
            bail!("no model given (use --model PATH or a bundled name)");
        };
        if Path::new(m).exists() {
            FrameModel::from_path(m).with_context(|| format!("loading {m}"))
        } else {
            FrameModel::bundled(m).with_context(|| format!("{m:?} is neither a file nor a bundled model"))
        }
    }

    fn solver(&self) -> SolverOptions {
        let mut s = SolverOptions {
            verbose: self.verbose,
            ..SolverOptions::default()
        };
        if let Some(t) = self.tol {
            s.tol = t;
            s.loose_tol = s.loose_tol.max(t);
        }
        s
    }

    fn relax(&self) -> RelaxOptions {
        RelaxOptions {
            schur_reduce: !self.no_reduce,
        }
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>().join(", ")
}

fn analyze(flags: &Flags, area: &[f64]) -> Result<()> {
    let model = flags.model()?;
    let asm = model.assemble()?;
    let n = asm.n_vars();
    let a = match area.len() {
        0 => vec![1.0; n],
        1 => vec![area[0]; n],
        k if k == n => area.to_vec(),
        k => bail!("{k} areas given for {n} groups"),
    };
    println!("weight {:.10e}", asm.weight(&a));
    for j in 0..asm.n_load_cases() {
        let c = analysis::compliance(&asm, j, &a)?;
        let g = analysis::compliance_gradient(&asm, j, &a)?;
        println!("load case {}: compliance {:.10e} (bound {:.6e})", asm.case_id(j), c, asm.cbar(j));
        println!("  gradient [{}]", fmt_list(g.as_slice()));
    }
    Ok(())
}

fn bounds_cmd(flags: &Flags, ratios: &[f64]) -> Result<()> {
    let model = flags.model()?;
    let asm = model.assemble()?;
    let n = asm.n_vars();
    let r = if ratios.is_empty() { vec![1.0; n] } else { ratios.to_vec() };
    for j in 0..asm.n_load_cases() {
        let range = analysis::compliance_range(&asm, j, &r)?;
        let sup = range.supremum.map_or("inf".to_string(), |s| format!("{s:.6e}"));
        println!("load case {}: inf c {:.6e}, sup c {sup}", range.load_case, range.infimum);
    }
    let s = bounds::scale_bisect(&asm, &r, DELTA_TOL)?;
    println!("delta* {:.10e}", s.delta);
    println!("w-bar {:.10e}", s.upper_weight);
    println!("compliances [{}]", fmt_list(&s.compliances));
    let active: Vec<&str> = s.active.iter().map(|j| asm.case_id(*j)).collect();
    println!("active [{}]", active.join(", "));
    Ok(())
}

fn relax_cmd(flags: &Flags, solve: bool) -> Result<()> {
    let model = flags.model()?;
    let asm = model.assemble()?;
    let init = bounds::scale_bisect(&asm, &vec![1.0; asm.n_vars()], DELTA_TOL)?;
    let bb = bounds::box_bounds(asm.group_weights(), init.upper_weight);
    let scaled = bounds::scale_model(&asm, &bb)?;
    let r = flags.order.unwrap_or_else(|| relax::min_order(&scaled));
    let rel = relax::build_relaxation(&scaled, r, flags.relax())?;
    println!("order {r}: {}; n={}", rel.sizes, rel.sizes.n_y);
    if let Some(p) = &flags.export_sdpa {
        sdp::write_sdpa(&rel.problem, p).with_context(|| format!("writing {}", p.display()))?;
        println!("wrote {}", p.display());
    }
    if solve {
        let sol = sdp::solve(&rel.problem, &flags.solver())?;
        println!("status {:?}, iterations {}", sol.status, sol.iterations);
        println!("lower bound {:.10e}", sol.objective);
        if !sol.status.is_optimal() {
            bail!("relaxation not solved: {:?}", sol.status);
        }
    }
    Ok(())
}

fn hierarchy(flags: &Flags) -> Result<bool> {
    let model = flags.model()?;
    let mut opts = HierarchyOptions {
        solver: flags.solver(),
        relax: flags.relax(),
        eps_target: flags.eps,
        ..HierarchyOptions::default()
    };
    if let Some(r) = flags.rmax {
        opts.r_max = r;
    }
    if let Some(t) = flags.rank_tol {
        opts.rank_tol = t;
    }
    let report = certify::run_hierarchy(&model, &opts)?;
    let md = certify::to_markdown(&report, Some(&model.name));
    print!("{md}");
    if let Some(dir) = &flags.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let write = |name: &str, body: String| -> Result<()> {
            let p = dir.join(name);
            std::fs::write(&p, body).with_context(|| format!("writing {}", p.display()))
        };
        write("report.json", serde_json::to_string_pretty(&report)? + "\n")?;
        write("report.md", md)?;
        write("report.csv", certify::to_csv(&report))?;
        write("convergence.svg", certify::to_svg(&report))?;
        write("timings.json", certify::timings_json(&report) + "\n")?;
    }
    Ok(report.termination != Termination::Failed)
}

fn solve_sdpa(flags: &Flags, input: &Path) -> Result<bool> {
    let problem = sdp::read_sdpa(input).with_context(|| format!("reading {}", input.display()))?;
    let sol = sdp::solve(&problem, &flags.solver())?;
    let rep = sdp::verify(&problem, &sol);
    println!("status {:?}, iterations {}", sol.status, sol.iterations);
    println!("objective {:.10e}", sol.objective);
    println!("dual objective {:.10e}", sol.dual_objective);
    println!(
        "verify: gap {:.2e}, primal violation {:.2e}, dual residual {:.2e}",
        rep.relative_gap, rep.primal_violation, rep.dual_residual
    );
    Ok(sol.status.is_optimal() && rep.passes(flags.tol.unwrap_or(1e-6).max(1e-6)))
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = match &cli.flags.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => Flags::default(),
    };
    let flags = cli.flags.merge(cfg);
    flags.validate()?;
    match &cli.command {
        Command::Analyze { area } => analyze(&flags, area).map(|_| true),
        Command::Bounds { ratios } => bounds_cmd(&flags, ratios).map(|_| true),
        Command::Relax { solve } => relax_cmd(&flags, *solve).map(|_| true),
        Command::Hierarchy => hierarchy(&flags),
        Command::SolveSdpa { input } => solve_sdpa(&flags, input),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
