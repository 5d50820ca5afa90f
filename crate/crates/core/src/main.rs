use clap::{Args, Parser, Subcommand};
use hopskit::bcf::{BathKernel, KernelKind};
use hopskit::config::CliConfig;
use hopskit::ensemble::{export, observable_series, run_ensemble, EnsembleError, ExecOptions};
use hopskit::expfit::{fit_bcf, fit_error, from_text, to_text, ExponentialBcf, FitReport};
use hopskit::hops::HopsMode;
use hopskit::master_eq::{
    decompose_l, propagate_me, sigma_z_expectation, Mat2, MeError, MeOptions, MeVariant,
};
use hopskit::spin_boson::{find_named, named_configs, NamedConfig};
use hopskit::stocproc::{check_correlations, plan_noise, sample_process};
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "hopskit", version, about = "Hierarchy of pure states simulator")]
struct Cli {
    /// Worker threads for fits and ensembles.
    #[arg(long, global = true, env = "HOPSKIT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Clone)]
struct Source {
    /// TOML run description.
    #[arg(long, conflicts_with = "named")]
    config: Option<PathBuf>,
    /// Built-in configuration label (see `list`).
    #[arg(long)]
    named: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the bath correlation function by a sum of exponentials.
    Fit {
        #[command(flatten)]
        src: Source,
        #[arg(long)]
        n_terms: Option<usize>,
        #[arg(long)]
        tau0: Option<f64>,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_rel_error: Option<f64>,
        /// Fit every term count in `A:B` and print the error table.
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Run a trajectory ensemble.
    Run {
        #[command(flatten)]
        src: Source,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<HopsMode>,
        #[arg(long)]
        kmax: Option<usize>,
        /// Fit file to use instead of fitting.
        #[arg(long)]
        fit: Option<PathBuf>,
    },
    /// Propagate the Born-Markov master equation.
    Me {
        #[command(flatten)]
        src: Source,
        #[arg(long)]
        variant: Option<MeVariant>,
        #[arg(long)]
        skip_omega0: bool,
        #[arg(long)]
        freeze_transitions: bool,
    },
    /// Compare the <sigma_z> series of two result files.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Maximal tolerated absolute deviation.
        #[arg(long, default_value_t = 0.05)]
        tol: f64,
        #[arg(long)]
        t_min: Option<f64>,
        #[arg(long)]
        t_max: Option<f64>,
    },
    /// Check the sampled noise statistics against the target kernel.
    Noise {
        #[command(flatten)]
        src: Source,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Grid points in each time argument.
        #[arg(long, default_value_t = 20)]
        points: usize,
        /// Check the thermal shift process instead of the driving noise.
        #[arg(long)]
        thermal: bool,
        /// Write one realisation in binary form.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// List built-in configurations.
    List {
        /// Write each configuration as a TOML file into this directory.
        #[arg(long)]
        emit: Option<PathBuf>,
    },
}

/// Failure with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(m: impl ToString) -> Self {
        Self {
            code: 4,
            message: m.to_string(),
        }
    }

    fn other(m: impl ToString) -> Self {
        Self {
            code: 1,
            message: m.to_string(),
        }
    }
}

type Outcome = Result<u8, Failure>;

fn load(src: &Source) -> Result<CliConfig, Failure> {
    let mut cfg = match (&src.config, &src.named) {
        (Some(p), None) => CliConfig::load(p).map_err(Failure::config)?,
        (None, Some(label)) => CliConfig::from_named(
            &find_named(label).ok_or_else(|| Failure::config(format!("unknown configuration {label:?}")))?,
        ),
        _ => return Err(Failure::config("give either --config or --named")),
    };
    if let Some(o) = &src.out {
        cfg.output.dir = o.clone();
    }
    Ok(cfg)
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(Failure::other)?;
    }
    std::fs::write(path, text).map_err(|e| Failure::other(format!("{}: {e}", path.display())))
}

fn do_fit(named: &NamedConfig) -> Result<(ExponentialBcf, FitReport), Failure> {
    log::info!(
        "fitting {} terms on [0, {}] with {} restarts",
        named.fit.n_terms,
        named.fit.tau0,
        named.fit.restarts
    );
    named.fit_kernel_terms().map_err(Failure::other)
}

fn cmd_fit(cfg: &CliConfig, sweep: Option<&str>) -> Outcome {
    let named = cfg.to_named();
    let dir = &cfg.output.dir;
    if let Some(range) = sweep {
        let (a, b) = range
            .split_once(':')
            .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)))
            .filter(|(a, b)| *a >= 1 && a <= b)
            .ok_or_else(|| Failure::config(format!("sweep range {range:?} is not A:B")))?;
        let target = named.fit_target().map_err(Failure::config)?;
        let mut table = String::from("n_terms,rel_2_error,max_rel_error\n");
        println!("{:>3} {:>14} {:>14}", "N", "rel 2-error", "max rel error");
        for n in a..=b {
            let mut opts = named.fit.options(named.omega_c);
            opts.n_terms = n;
            let (e, rep) = fit_bcf(&target, &opts).map_err(Failure::other)?;
            let two = fit_error(&e, &target, 2.0).map_err(Failure::other)?;
            println!("{n:>3} {:>14.4e} {:>14.4e}", two.rel_p_error, rep.max_rel_error);
            writeln!(table, "{n},{:.16e},{:.16e}", two.rel_p_error, rep.max_rel_error).unwrap();
            write_file(
                &dir.join(format!("{}-N{n}.fit", cfg.stem())),
                &to_text(&e, rep.p, rep.tau0, rep.max_rel_error),
            )?;
        }
        write_file(&dir.join(format!("{}-sweep.csv", cfg.stem())), &table)?;
        return Ok(0);
    }
    let (e, rep) = do_fit(&named)?;
    write_file(
        &dir.join(format!("{}.fit", cfg.stem())),
        &to_text(&e, rep.p, rep.tau0, rep.max_rel_error),
    )?;
    write_file(
        &dir.join(format!("{}.fit.json", cfg.stem())),
        &serde_json::to_string_pretty(&rep).expect("report serialises"),
    )?;
    println!(
        "max relative error {:.4e} (target {:.4e}), relative {}-norm error {:.4e}, {}/{} restarts converged",
        rep.max_rel_error, named.fit.max_rel_error, rep.p, rep.rel_p_error, rep.converged_restarts, rep.restarts_used
    );
    if rep.max_rel_error <= named.fit.max_rel_error {
        Ok(0)
    } else {
        eprintln!("fit tolerance not met; best fit written");
        Ok(2)
    }
}

fn read_fit(path: &Path) -> Result<ExponentialBcf, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    Ok(from_text(&text).map_err(Failure::config)?.0)
}

fn cmd_run(cfg: &CliConfig, fit_file: Option<&Path>) -> Outcome {
    let named = cfg.to_named();
    let fit = if let Some(p) = fit_file.or(cfg.fit.file.as_deref()) {
        read_fit(p)?
    } else if let Some(e) = cfg.inline_fit().map_err(Failure::config)? {
        e
    } else {
        let (e, rep) = do_fit(&named)?;
        if rep.max_rel_error > named.fit.max_rel_error {
            log::warn!(
                "fit max relative error {:.3e} above target {:.3e}",
                rep.max_rel_error,
                named.fit.max_rel_error
            );
        }
        write_file(
            &cfg.output.dir.join(format!("{}.fit", cfg.stem())),
            &to_text(&e, rep.p, rep.tau0, rep.max_rel_error),
        )?;
        e
    };
    if fit.n_terms() != named.fit.n_terms {
        log::info!("using {} exponential terms from the fit", fit.n_terms());
    }
    let run = named.run_config(fit).map_err(Failure::config)?;
    let res = match run_ensemble(&run, ExecOptions::default()) {
        Ok(r) => r,
        Err(e @ EnsembleError::FailureCap { .. }) => {
            eprintln!("{e}");
            return Ok(3);
        }
        Err(e @ (EnsembleError::InvalidConfig(_) | EnsembleError::Hierarchy(_) | EnsembleError::Noise(_))) => {
            return Err(Failure::config(e))
        }
        Err(e) => return Err(Failure::other(e)),
    };
    export(&run, &res, &cfg.output.dir, &cfg.stem()).map_err(Failure::other)?;
    let sz = observable_series(&res, &sigma_z_matrix()).map_err(Failure::other)?;
    let (last, err) = *sz.last().expect("non-empty grid");
    let max_err = sz.iter().map(|v| v.1).fold(0.0, f64::max);
    println!(
        "{}: {} trajectories ({} failed), final <sigma_z> = {last:.6} +- {err:.2e}, max stderr {max_err:.2e}, {:.1} s",
        named.label,
        res.n_samples,
        res.failed.len(),
        res.wall_time
    );
    Ok(0)
}

fn sigma_z_matrix() -> DMatrix<Complex64> {
    DMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(-1.0, 0.0),
        ],
    )
}

fn cmd_me(cfg: &CliConfig) -> Outcome {
    let named = cfg.to_named();
    let params = named.me_params().map_err(Failure::config)?;
    let opts = MeOptions {
        variant: cfg.output.me_variant,
        skip_omega0: cfg.output.skip_omega0,
        freeze_transitions: cfg.output.freeze_transitions,
        ..MeOptions::default()
    };
    let dec = decompose_l(&params).map_err(Failure::config)?;
    if dec.l_0.norm() == 0.0 {
        log::info!("l_0 = 0: no pure-dephasing channel");
    }
    let rho0 = Mat2::new(
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
    );
    let grid = named.t_grid();
    let series = match propagate_me(&params, &rho0, &opts, &grid) {
        Ok(s) => s,
        Err(e @ MeError::DivergentRate) => {
            eprintln!("{e} or --skip-omega0");
            return Ok(4);
        }
        Err(e) => return Err(Failure::other(e)),
    };
    let mut csv = String::from("t,sigma_z");
    for r in 0..2 {
        for c in 0..2 {
            write!(csv, ",re_rho{r}{c},im_rho{r}{c}").unwrap();
        }
    }
    csv.push('\n');
    for (t, rho) in grid.iter().zip(&series) {
        write!(csv, "{t:.16e},{:.16e}", sigma_z_expectation(rho)).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                write!(csv, ",{:.16e},{:.16e}", rho[(r, c)].re, rho[(r, c)].im).unwrap();
            }
        }
        csv.push('\n');
    }
    let variant = match opts.variant {
        MeVariant::Constant => "constant",
        MeVariant::Extended => "extended",
    };
    let path = cfg.output.dir.join(format!("{}-me-{variant}.csv", cfg.stem()));
    write_file(&path, &csv)?;
    println!(
        "{}: final <sigma_z> = {:.6}, written to {}",
        named.label,
        sigma_z_expectation(series.last().expect("non-empty grid")),
        path.display()
    );
    Ok(0)
}

/// `(t, <sigma_z>)` from a result CSV with either a `sigma_z` column or the
/// diagonal of `rho`.
fn read_sigma_z(path: &Path) -> Result<Vec<(f64, f64)>, Failure> {
    let bad = |e: &dyn std::fmt::Display| Failure::config(format!("{}: {e}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| bad(&e))?;
    let head = rdr.headers().map_err(|e| bad(&e))?.clone();
    let col = |name: &str| head.iter().position(|h| h == name);
    let t = col("t").ok_or_else(|| bad(&"no t column"))?;
    let sz = col("sigma_z");
    let diag = col("re_rho00").zip(col("re_rho11"));
    if sz.is_none() && diag.is_none() {
        return Err(bad(&"no sigma_z or rho columns"));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(&e))?;
        let get = |i: usize| -> Result<f64, Failure> {
            rec.get(i)
                .ok_or_else(|| bad(&format!("short row {:?}", rec.position().map(|p| p.line()))))?
                .parse::<f64>()
                .map_err(|e| bad(&e))
        };
        let v = match (sz, diag) {
            (Some(i), _) => get(i)?,
            (None, Some((a, b))) => get(a)? - get(b)?,
            _ => unreachable!(),
        };
        out.push((get(t)?, v));
    }
    if out.is_empty() {
        return Err(bad(&"no data rows"));
    }
    Ok(out)
}

fn interpolate(series: &[(f64, f64)], t: f64) -> f64 {
    let i = series.partition_point(|p| p.0 < t);
    if i == 0 {
        return series[0].1;
    }
    if i == series.len() {
        return series[i - 1].1;
    }
    let (a, b) = (series[i - 1], series[i]);
    a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0)
}

fn cmd_compare(a: &Path, b: &Path, tol: f64, t_min: Option<f64>, t_max: Option<f64>) -> Outcome {
    let sa = read_sigma_z(a)?;
    let sb = read_sigma_z(b)?;
    if sa.is_empty() || sb.is_empty() {
        return Err(Failure::other("empty series"));
    }
    let lo = sa[0].0.max(sb[0].0).max(t_min.unwrap_or(f64::NEG_INFINITY));
    let hi = sa[sa.len() - 1].0.min(sb[sb.len() - 1].0).min(t_max.unwrap_or(f64::INFINITY));
    let devs: Vec<f64> = sa
        .iter()
        .filter(|p| p.0 >= lo && p.0 <= hi)
        .map(|p| (p.1 - interpolate(&sb, p.0)).abs())
        .collect();
    if devs.is_empty() {
        return Err(Failure::other("time ranges do not overlap"));
    }
    let max = devs.iter().copied().fold(0.0, f64::max);
    let rms = (devs.iter().map(|d| d * d).sum::<f64>() / devs.len() as f64).sqrt();
    let pass = max < tol;
    println!(
        "t in [{lo}, {hi}], {} points: max deviation {max:.4e}, rms {rms:.4e}, tolerance {tol:.4e}: {}",
        devs.len(),
        if pass { "pass" } else { "FAIL" }
    );
    Ok(if pass { 0 } else { 1 })
}

fn cmd_noise(cfg: &CliConfig, samples: usize, seed: u64, points: usize, thermal: bool, dump: Option<&Path>) -> Outcome {
    let named = cfg.to_named();
    let sd = named.sd().map_err(Failure::config)?;
    let kernel = if thermal {
        if named.temperature <= 0.0 {
            return Err(Failure::config("thermal check needs a positive temperature"));
        }
        BathKernel::new(sd, KernelKind::ThermalShift { beta: named.beta() })
    } else {
        named.fit_kernel().map_err(Failure::config)?
    };
    let abstol = named.noise_rel_tol * kernel.eval(0.0).norm();
    let plan = Arc::new(plan_noise(Arc::new(kernel), named.t_max, abstol).map_err(Failure::other)?);
    println!(
        "plan: {} nodes, dw = {:.4e}, dt = {:.4e}, riemann error {:.3e}, interpolation error {:.3e}, abstol {:.3e}",
        plan.node_count(),
        plan.d_omega,
        plan.d_t,
        plan.riemann_error,
        plan.interp_error,
        abstol
    );
    if let Some(p) = dump {
        let f = std::fs::File::create(p).map_err(Failure::other)?;
        sample_process(&plan, seed).write_binary(std::io::BufWriter::new(f)).map_err(Failure::other)?;
    }
    let m = points.max(1);
    let times: Vec<f64> = (0..m).map(|i| named.t_max * i as f64 / (m.max(2) - 1) as f64).collect();
    let chk = check_correlations(&plan, samples, seed, &times).map_err(Failure::other)?;
    println!(
        "{} samples: autocorrelation error {:.4e}, pseudo-correlation {:.4e}, bound {:.4e}: {}",
        chk.samples,
        chk.max_autocorrelation_error,
        chk.max_pseudo_correlation,
        chk.bound,
        if chk.passed() { "pass" } else { "FAIL" }
    );
    Ok(if chk.passed() { 0 } else { 1 })
}

fn cmd_list(emit: Option<&Path>) -> Outcome {
    for n in named_configs() {
        println!(
            "{:<22} s={:<4} wc={:<6} alpha={:<8.4} eps={:<4} T={:<5} N={} tau0={:<4} k={:<2} samples={}{}",
            n.label,
            n.s,
            n.omega_c,
            n.alpha,
            n.epsilon,
            n.temperature,
            n.fit.n_terms,
            n.fit.tau0,
            n.k_max,
            n.n_samples,
            n.reference.as_deref().map(|r| format!("  [{r}]")).unwrap_or_default()
        );
        if let Some(dir) = emit {
            write_file(&dir.join(format!("{}.toml", n.label)), &CliConfig::from_named(&n).to_toml())?;
        }
    }
    Ok(0)
}

fn dispatch(cli: Cli) -> Outcome {
    match cli.cmd {
        Command::Fit {
            src,
            n_terms,
            tau0,
            restarts,
            seed,
            max_rel_error,
            sweep,
        } => {
            let mut cfg = load(&src)?;
            if let Some(v) = n_terms {
                cfg.fit.n_terms = v;
            }
            if let Some(v) = tau0 {
                cfg.fit.tau0 = v;
            }
            if let Some(v) = restarts {
                cfg.fit.restarts = v;
            }
            if let Some(v) = seed {
                cfg.fit.seed = v;
            }
            if let Some(v) = max_rel_error {
                cfg.fit.max_rel_error = v;
            }
            cmd_fit(&cfg, sweep.as_deref())
        }
        Command::Run {
            src,
            samples,
            seed,
            mode,
            kmax,
            fit,
        } => {
            let mut cfg = load(&src)?;
            if let Some(v) = samples {
                cfg.ensemble.n_samples = v;
            }
            if let Some(v) = seed {
                cfg.ensemble.master_seed = v;
            }
            if let Some(v) = mode {
                cfg.hierarchy.mode = v;
            }
            if let Some(v) = kmax {
                cfg.hierarchy.k_max = v;
            }
            cmd_run(&cfg, fit.as_deref())
        }
        Command::Me {
            src,
            variant,
            skip_omega0,
            freeze_transitions,
        } => {
            let mut cfg = load(&src)?;
            if let Some(v) = variant {
                cfg.output.me_variant = v;
            }
            cfg.output.skip_omega0 |= skip_omega0;
            cfg.output.freeze_transitions |= freeze_transitions;
            cmd_me(&cfg)
        }
        Command::Compare { a, b, tol, t_min, t_max } => cmd_compare(&a, &b, tol, t_min, t_max),
        Command::Noise {
            src,
            samples,
            seed,
            points,
            thermal,
            dump,
        } => {
            let cfg = load(&src)?;
            cmd_noise(&cfg, samples, seed, points, thermal, dump.as_deref())
        }
        Command::List { emit } => cmd_list(emit.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global() {
            log::warn!("could not set thread count: {e}");
        }
    }
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
