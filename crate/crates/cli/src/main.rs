//! `dfcontour`: direct and regularized Dotsenko–Fateev integrals from the command line.
//!
//! Exit status: 0 success, 1 usage error, 2 parameters outside the convergent region,
//! 3 `verify` residual above tolerance, 4 any other failure.

mod config;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dfcontour::branch::{expected_monodromy, measure_monodromy};
use dfcontour::contour::{pochhammer_p, validate_contour, default_grid_density, Contour, ContourParams};
use dfcontour::engine::{continuation_contour, reference_params, regularized_integral, verify_theorem, Continuation};
use dfcontour::oracle::direct_integral;
use dfcontour::signature::{facets, genus_from_cells, genus_of_polygon_double, prefactor, ParamSet, Signature};
use num_complex::Complex64;

use config::{usage, Cx, RunConfig, Strategy, SweepParam, Twist, UsageError};
use output::Emitter;

/// Environment variable read when `--threads` is not given.
const THREADS_ENV: &str = "DFCONTOUR_THREADS";

#[derive(Parser)]
#[command(name = "dfcontour", version, about = "Dotsenko-Fateev integrals and their Pochhammer-type regularization")]
struct Cli {
    /// Emit JSON instead of TOML-style records / CSV rows.
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads (0 = all cores). Values never depend on this.
    #[arg(long, global = true, env = THREADS_ENV)]
    threads: Option<usize>,
    /// Run configuration file (flat TOML); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the merged configuration (file overlaid with flags) as TOML and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integral over the real chamber, in the convergent region only.
    Direct(RunArgs),
    /// Signed sum of the integrals over all sheets of the regularizing contour.
    Regularized(RunArgs),
    /// The product of 2i sin(π·exponent sum) factors.
    Prefactor(RunArgs),
    /// Both sides of the identity at one convergent point; exit 0 iff the residual is below --tol.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// Residual threshold (default: the quadrature tolerance).
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Measured monodromy around every facet against the exponent-sum formula.
    Monodromy(RunArgs),
    /// Continued values over a one-parameter sweep (CSV rows).
    Continue {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Genus of the double of an N-gon, by formula and by cell count.
    Genus {
        #[arg(long)]
        edges: usize,
    },
    /// Samples of the Pochhammer smoothing P over r in [-3δ, 3δ] (CSV rows).
    Trace {
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        /// Smoothing widths, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45])]
        eps_p: Vec<f64>,
        #[arg(long, default_value_t = 601)]
        samples: usize,
    },
}

/// Inputs shared by the integral commands. Every flag has a config-file key of the same name.
#[derive(Args, Default)]
struct RunArgs {
    /// Signature ℓ,m,n.
    #[arg(long, value_delimiter = ',')]
    sig: Option<Vec<usize>>,
    /// α_1..α_N, comma separated; complex values as 0.3+0.02i.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    alpha: Option<Vec<Cx>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta: Option<Vec<Cx>>,
    /// Upper triangle γ_{j,k}, j < k, row-major.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    gamma: Option<Vec<Cx>>,
    /// Mollifier width ε.
    #[arg(long)]
    eps: Option<f64>,
    /// Pochhammer radius δ (skips tuning; the contour is still validated).
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    eps_p: Option<f64>,
    /// Twist scale ϝ.
    #[arg(long)]
    digamma: Option<f64>,
    #[arg(long, value_enum)]
    twist: Option<Twist>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    #[arg(long)]
    max_subdivisions: Option<usize>,
    #[arg(long)]
    base_order: Option<usize>,
    #[arg(long, value_enum)]
    strategy: Option<Strategy>,
    /// Allow N ≥ 3 regularized integrals (slow).
    #[arg(long)]
    allow_large: bool,
    #[arg(long)]
    collar_width: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    param: Option<SweepParam>,
    /// One-based position in the swept array.
    #[arg(long)]
    index: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    from: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    to: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
}

impl RunArgs {
    fn to_config(&self) -> RunConfig {
        RunConfig {
            sig: self.sig.clone(),
            alpha: self.alpha.clone(),
            beta: self.beta.clone(),
            gamma: self.gamma.clone(),
            eps: self.eps,
            delta: self.delta,
            eps_p: self.eps_p,
            digamma: self.digamma,
            twist: self.twist,
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_subdivisions: self.max_subdivisions,
            base_order: self.base_order,
            strategy: self.strategy,
            allow_large: self.allow_large.then_some(true),
            collar_width: self.collar_width,
            ..RunConfig::default()
        }
    }
}

impl SweepArgs {
    fn overlay_on(&self, run: RunConfig) -> RunConfig {
        RunConfig {
            sweep_param: self.param,
            sweep_index: self.index,
            sweep_from: self.from,
            sweep_to: self.to,
            sweep_steps: self.steps,
            ..run
        }
    }
}

fn c_fields(z: Complex64) -> (f64, f64) {
    (z.re, z.im)
}

fn sig_text(s: &Signature) -> String {
    format!("{},{},{}", s.ell, s.m, s.n)
}

fn validated(sig: &Signature, cp: ContourParams) -> Result<ContourParams> {
    let rep = validate_contour(sig, &cp, default_grid_density(sig))?;
    if !rep.passed {
        anyhow::bail!(
            "contour δ = {} ϝ = {} fails validation (min |Z| {:e}, |Z-1| {:e}, separation {:e})",
            cp.delta,
            cp.digamma,
            rep.min_abs_z,
            rep.min_abs_z_minus_one,
            rep.min_pair_separation
        );
    }
    Ok(cp)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| usage(format!("{e:#}")))?,
        None => RunConfig::default(),
    };
    let mut out = Emitter::new(cli.json);
    if cli.dump_config {
        let top = match &cli.command {
            Command::Direct(a) | Command::Regularized(a) | Command::Prefactor(a) | Command::Monodromy(a) => a.to_config(),
            Command::Verify { run, tol } => RunConfig { tol: *tol, ..run.to_config() },
            Command::Continue { run, sweep } => sweep.overlay_on(run.to_config()),
            Command::Genus { .. } | Command::Trace { .. } => RunConfig::default(),
        };
        print!("{}", file.overlay(top).to_text()?);
        return Ok(ExitCode::SUCCESS);
    }
    match &cli.command {
        Command::Direct(args) => {
            let cfg = file.overlay(args.to_config());
            let sig = cfg.signature()?;
            let p = cfg.params(&sig)?;
            let r = direct_integral(&sig, &p, &cfg.quad(sig.dim())?)?;
            out.record(&output::Direct {
                schema_version: output::SCHEMA_VERSION,
                command: "direct",
                signature: sig_text(&sig),
                value_re: r.value.re,
                value_im: r.value.im,
                err: r.error_estimate,
                evals: r.evaluations,
            })?;
        }
        Command::Regularized(args) => {
            let cfg = file.overlay(args.to_config());
            let sig = cfg.signature()?;
            let p = cfg.params(&sig)?;
            let cp = validated(&sig, cfg.contour(&sig)?)?;
            let r = regularized_integral(&sig, &p, &cp, &cfg.quad(sig.dim())?, &cfg.engine())?;
            out.record(&output::Regularized {
                schema_version: output::SCHEMA_VERSION,
                command: "regularized",
                signature: sig_text(&sig),
                value_re: r.value.re,
                value_im: r.value.im,
                err: r.error_estimate,
                evals: r.evaluations,
                sheets: r.per_sheet.len(),
                delta: cp.delta,
                eps_p: cp.eps_p,
                digamma: cp.digamma,
            })?;
        }
        Command::Prefactor(args) => {
            let cfg = file.overlay(args.to_config());
            let sig = cfg.signature()?;
            let p = cfg.params(&sig)?;
            let v = prefactor(&sig, &p);
            out.record(&output::Prefactor {
                schema_version: output::SCHEMA_VERSION,
                command: "prefactor",
                signature: sig_text(&sig),
                prefactor_re: v.re,
                prefactor_im: v.im,
                prefactor_abs: v.norm(),
            })?;
        }
        Command::Verify { run, tol } => {
            let cfg = file.overlay(RunConfig { tol: *tol, ..run.to_config() });
            let sig = cfg.signature()?;
            let p = cfg.params(&sig)?;
            let cp = validated(&sig, cfg.contour(&sig)?)?;
            let spec = cfg.quad(sig.dim())?;
            let tol = cfg.tol.unwrap_or(spec.rel_tol);
            let r = verify_theorem(&sig, &p, &cp, &spec, &cfg.engine())?;
            let passed = r.rel_residual < tol;
            let (lhs_re, lhs_im) = c_fields(r.lhs.value);
            let (rhs_re, rhs_im) = c_fields(r.rhs);
            let (prefactor_re, prefactor_im) = c_fields(r.prefactor);
            let (direct_re, direct_im) = c_fields(r.direct.value);
            let (fitted_phase_re, fitted_phase_im) = c_fields(r.fitted_phase);
            let (predicted_phase_re, predicted_phase_im) = c_fields(r.predicted_phase);
            out.record(&output::Verify {
                schema_version: output::SCHEMA_VERSION,
                command: "verify",
                signature: sig_text(&sig),
                lhs_re,
                lhs_im,
                lhs_err: r.lhs.error_estimate,
                rhs_re,
                rhs_im,
                prefactor_re,
                prefactor_im,
                direct_re,
                direct_im,
                direct_err: r.direct.error_estimate,
                fitted_phase_re,
                fitted_phase_im,
                predicted_phase_re,
                predicted_phase_im,
                rel_residual: r.rel_residual,
                tol,
                passed,
            })?;
            out.finish()?;
            return Ok(if passed { ExitCode::SUCCESS } else { ExitCode::from(3) });
        }
        Command::Monodromy(args) => {
            let cfg = file.overlay(args.to_config());
            let sig = cfg.signature()?;
            let p = cfg.params(&sig)?;
            let cp = validated(&sig, cfg.contour(&sig)?)?;
            let contour = Contour::new(&sig, cp);
            let mut rows = Vec::new();
            for f in facets(&sig) {
                let m = measure_monodromy(&contour, &f, &p)?;
                let e = expected_monodromy(&p, &f);
                let w: Vec<String> = m.windings.iter().map(|w| w.to_string()).collect();
                rows.push(output::MonodromyRow {
                    schema_version: output::SCHEMA_VERSION,
                    facet: f.to_string(),
                    measured_re: m.theta.re,
                    measured_im: m.theta.im,
                    expected_re: e.re,
                    expected_im: e.im,
                    abs_err: (m.theta - e).norm(),
                    windings: w.join(" "),
                });
            }
            out.rows(&rows)?;
        }
        Command::Continue { run, sweep } => {
            let cfg = file.overlay(sweep.overlay_on(run.to_config()));
            let rows = continue_sweep(&cfg)?;
            out.rows(&rows)?;
        }
        Command::Genus { edges } => {
            let g = genus_of_polygon_double(*edges).map_err(|e| usage(e.to_string()))?;
            out.record(&output::Genus {
                schema_version: output::SCHEMA_VERSION,
                command: "genus",
                edges: *edges,
                genus: g,
                genus_from_cells: genus_from_cells(*edges),
            })?;
        }
        Command::Trace { delta, eps_p, samples } => {
            out.rows(&trace(*delta, eps_p, *samples)?)?;
        }
    }
    out.finish()?;
    Ok(ExitCode::SUCCESS)
}

fn continue_sweep(cfg: &RunConfig) -> Result<Vec<output::ContinueRow>> {
    let sig = cfg.signature()?;
    let base = cfg.params(&sig)?;
    let which = cfg.sweep_param.ok_or_else(|| usage("missing --param"))?;
    let index = cfg.sweep_index.unwrap_or(1);
    let from = cfg.sweep_from.ok_or_else(|| usage("missing --from"))?;
    let to = cfg.sweep_to.ok_or_else(|| usage("missing --to"))?;
    let steps = cfg.sweep_steps.unwrap_or(5);
    if steps == 0 {
        return Err(usage("--steps must be at least 1"));
    }
    let len = match which {
        SweepParam::Alpha | SweepParam::Beta => sig.dim(),
        SweepParam::Gamma => sig.pair_count(),
    };
    if index == 0 || index > len {
        return Err(usage(format!("--index {index} outside 1..={len}")));
    }
    // Continuation is costly per point; default to a looser tolerance beyond one variable.
    let mut cfg = cfg.clone();
    if cfg.rel_tol.is_none() && sig.dim() >= 2 {
        cfg.rel_tol = Some(2e-3);
    }
    let cp = validated(&sig, cfg.contour_with(&sig, || Ok(continuation_contour(&sig)?))?)?;
    let spec = cfg.quad(sig.dim())?;
    let k = Continuation::calibrate(&sig, &cp, &spec, &cfg.engine(), &reference_params(&sig))
        .context("calibrating at the reference point")?;
    let name = match which {
        SweepParam::Alpha => "alpha",
        SweepParam::Beta => "beta",
        SweepParam::Gamma => "gamma",
    };
    let mut rows = Vec::with_capacity(steps);
    for s in 0..steps {
        let t = if steps == 1 { 0.0 } else { s as f64 / (steps - 1) as f64 };
        let x = from + t * (to - from);
        let p = swept(&sig, &base, which, index - 1, x)?;
        let row = match k.value(&p) {
            Ok(v) => output::ContinueRow {
                schema_version: output::SCHEMA_VERSION,
                param: format!("{name}_{index}"),
                x,
                value_re: v.value.re,
                value_im: v.value.im,
                err: v.error_estimate,
                prefactor_re: v.prefactor.re,
                prefactor_im: v.prefactor.im,
                status: "ok".into(),
            },
            Err(e) => {
                let pre = prefactor(&sig, &p);
                output::ContinueRow {
                    schema_version: output::SCHEMA_VERSION,
                    param: format!("{name}_{index}"),
                    x,
                    value_re: f64::NAN,
                    value_im: f64::NAN,
                    err: f64::NAN,
                    prefactor_re: pre.re,
                    prefactor_im: pre.im,
                    status: e.to_string(),
                }
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

/// `base` with one entry replaced by `x` plus that entry's imaginary part.
fn swept(sig: &Signature, base: &ParamSet, which: SweepParam, k: usize, x: f64) -> Result<ParamSet> {
    let mut alpha = base.alpha.clone();
    let mut beta = base.beta.clone();
    let mut gamma = base.gamma_upper().to_vec();
    let slot = match which {
        SweepParam::Alpha => &mut alpha[k],
        SweepParam::Beta => &mut beta[k],
        SweepParam::Gamma => &mut gamma[k],
    };
    *slot = Complex64::new(x, slot.im);
    Ok(ParamSet::new(sig, alpha, beta, gamma)?)
}

fn trace(delta: f64, eps_list: &[f64], samples: usize) -> Result<Vec<output::TraceRow>> {
    if !(delta > 0.0) || samples < 2 {
        return Err(usage("trace needs --delta > 0 and --samples >= 2"));
    }
    let mut rows = Vec::with_capacity(eps_list.len() * samples);
    for &eps_p in eps_list {
        if !(eps_p > 0.0 && eps_p < delta / 2.0) {
            return Err(usage(format!("--eps-p {eps_p} outside (0, delta/2)")));
        }
        // The tracer allows any radius, unlike integration contours.
        let cp = ContourParams { delta, eps_p, ..ContourParams::new(Default::default(), 0.25, 0.05, 1.0)? };
        for s in 0..samples {
            let r = -3.0 * delta + 6.0 * delta * s as f64 / (samples - 1) as f64;
            let p = pochhammer_p(&cp, r);
            rows.push(output::TraceRow { schema_version: output::SCHEMA_VERSION, eps_p, r, p_re: p.re, p_im: p.im });
        }
    }
    Ok(rows)
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    match e.downcast_ref::<dfcontour::Error>() {
        Some(dfcontour::Error::NotInConvergentRegion(_)) => 2,
        Some(dfcontour::Error::InvalidSignature(_)) => 1,
        _ => 4,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let _ = std::io::stdout().flush();
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
