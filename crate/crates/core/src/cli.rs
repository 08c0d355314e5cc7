//! Command-line driver: configuration merging, experiment dispatch and CSV
//! output with a provenance header.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::channel::{bec_family, bsc_family, sample_path_stream, ChannelSpec};
use crate::config::ExperimentConfig;
use crate::constraint::ForbiddenPairSet;
use crate::error::{Error, Result};
use crate::hmm::{conditional_surprisals, joint_symbols};
use crate::markov::{build_transition, markov_entropy_rate, MarkovParams, TransitionMatrix};
use crate::optimizer::{
    fit_rates, run, GradientOracle, InitialTheta, NoiselessOracle, Objective, SATrace, SimulatedOracle, StepRecord,
};
use crate::oracle::{
    asymptotic_coefficient_experiment, birch_sequence, chart_builder, exact_in, fd_gradient, parry_optimum,
    perturbation_experiment,
};
use crate::rng::StreamId;
use crate::simulator::{build_views, estimate_gradient_replicated, write_block_dump};
use crate::stats::{batch_means_std_err, mean};

pub const SEED_ENV: &str = "FSC_SEED";

#[derive(Debug, Parser)]
#[command(name = "fsc", version, about = "Capacity of input-constrained finite-state channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Default)]
pub struct Common {
    /// Configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `rll-D-K`, `rll-D-inf`, `unconstrained-K` or a constraint file.
    #[arg(long)]
    pub constraint: Option<String>,
    /// `bsc`, `bec` or a channel file.
    #[arg(long)]
    pub channel: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct SaFlags {
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long = "eps-floor")]
    pub eps_floor: Option<f64>,
    #[arg(long)]
    pub iters: Option<u64>,
    /// Starting point as a comma-separated list, or `random`.
    #[arg(long)]
    pub theta0: Option<String>,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub max_sample_len: Option<usize>,
    /// Project infeasible steps instead of rejecting them.
    #[arg(long)]
    pub projection: bool,
}

#[derive(Debug, Clone, Args, Default)]
pub struct PointFlags {
    /// Evaluation point as a comma-separated list; uniform rows by default.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the stochastic-approximation optimizer and write its trace.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sa: SaFlags,
    },
    /// Monte Carlo entropies and mutual information at one point.
    EstimateEntropy {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        point: PointFlags,
    },
    /// Replicated simulator gradient at one point.
    EstimateGradient {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        point: PointFlags,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// Also write every per-block sum to this CSV.
        #[arg(long = "dump-blocks")]
        dump_blocks: Option<PathBuf>,
    },
    /// Exact small-instance computations.
    Oracle {
        #[command(subcommand)]
        which: OracleCommand,
    },
    /// Summarize a trace written by `optimize`.
    Report {
        trace: PathBuf,
        /// Reference point for the rate fit.
        #[arg(long = "theta-ref", value_delimiter = ',', allow_hyphen_values = true)]
        theta_ref: Option<Vec<f64>>,
        /// Reference objective value for the rate fit.
        #[arg(long = "f-ref")]
        f_ref: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Block mutual information, optionally with its finite-difference gradient.
    In {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        point: PointFlags,
        #[arg(long)]
        gradient: bool,
        #[arg(long)]
        h: Option<f64>,
    },
    /// Conditional-entropy bounds on the output entropy rate for 1..=n.
    Birch {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        point: PointFlags,
    },
    /// Max-entropic chain and noiseless capacity of a constraint.
    Parry {
        #[command(flatten)]
        common: Common,
    },
    /// High-SNR coefficient of the golden-mean chain through a BSC.
    Coeff {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pi: Option<f64>,
        #[arg(long = "eps-grid", value_delimiter = ',')]
        eps_grid: Option<Vec<f64>>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Entropy increase when a periodic chain is perturbed.
    Perturb {
        #[command(flatten)]
        common: Common,
        /// Rows separated by `;`, entries by `,`.
        #[arg(long)]
        matrix: Option<String>,
        #[arg(long = "delta-grid", value_delimiter = ',')]
        delta_grid: Option<Vec<f64>>,
        #[arg(long)]
        n: Option<usize>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::parse(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(c) = &common.constraint {
        cfg.problem.constraint = c.clone();
    }
    if let Some(c) = &common.channel {
        cfg.problem.channel = c.clone();
    }
    if let Some(e) = common.epsilon {
        cfg.problem.epsilon = e;
    }
    if let Some(s) = common.seed {
        cfg.sa.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output.out = Some(o.display().to_string());
    }
    Ok(cfg)
}

fn apply_point(cfg: &mut ExperimentConfig, point: &PointFlags, oracle: bool) {
    if let Some(t) = &point.theta {
        cfg.estimate.theta = Some(t.clone());
    }
    if let Some(n) = point.n {
        if oracle {
            cfg.oracle.n = n;
        } else {
            cfg.estimate.n = n;
        }
    }
}

fn parse_theta_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("theta0: bad entry `{v}`")))
        })
        .collect()
}

fn parse_matrix(text: &str) -> Result<Vec<Vec<f64>>> {
    text.split(';').map(parse_theta_list).collect()
}

/// Constraint by name or file, with the binary label of each symbol.
pub fn resolve_constraint(spec: &str) -> Result<(ForbiddenPairSet, Vec<usize>)> {
    let bad = || Error::InvalidConfig(format!("constraint: cannot read `{spec}`"));
    let parts: Vec<&str> = spec.split('-').collect();
    match parts.as_slice() {
        ["rll", d, k] => {
            let d = d.parse().map_err(|_| bad())?;
            let k = if *k == "inf" {
                None
            } else {
                Some(k.parse().map_err(|_| bad())?)
            };
            ForbiddenPairSet::rll(d, k)
        }
        ["unconstrained", k] => {
            let k: usize = k.parse().map_err(|_| bad())?;
            Ok((ForbiddenPairSet::unconstrained(k)?, (0..k).collect()))
        }
        _ => {
            let f = ForbiddenPairSet::parse(&std::fs::read_to_string(spec).map_err(|_| bad())?)?;
            let labels = (0..f.alphabet_size()).collect();
            Ok((f, labels))
        }
    }
}

/// Channel by family name or file, driven through the constraint's labels
/// when its input alphabet differs from the constraint's.
pub fn resolve_channel(spec: &str, epsilon: f64, f: &ForbiddenPairSet, labels: &[usize]) -> Result<ChannelSpec> {
    let base = match spec {
        "bsc" => bsc_family(epsilon)?.exact_channel(),
        "bec" => bec_family(epsilon)?.exact_channel(),
        path => ChannelSpec::parse(&std::fs::read_to_string(path).map_err(|_| {
            Error::InvalidConfig(format!("channel: cannot read `{path}`"))
        })?)?,
    };
    if base.inputs() == f.alphabet_size() {
        Ok(base)
    } else {
        base.with_input_labels(labels)
    }
}

/// Free coordinates of the chain whose allowed entries are equal per row.
pub fn uniform_theta(f: &ForbiddenPairSet) -> Vec<f64> {
    (0..f.alphabet_size())
        .flat_map(|i| {
            let m = f.allowed_in_row(i).len();
            std::iter::repeat_n(1.0 / m as f64, m - 1)
        })
        .collect()
}

struct Problem {
    constraint: ForbiddenPairSet,
    channel: ChannelSpec,
}

fn problem(cfg: &ExperimentConfig) -> Result<Problem> {
    let (constraint, labels) = resolve_constraint(&cfg.problem.constraint)?;
    let channel = resolve_channel(&cfg.problem.channel, cfg.problem.epsilon, &constraint, &labels)?;
    Ok(Problem { constraint, channel })
}

fn point(cfg: &ExperimentConfig, f: &ForbiddenPairSet) -> Result<(MarkovParams, TransitionMatrix)> {
    let theta = cfg.estimate.theta.clone().unwrap_or_else(|| uniform_theta(f));
    let params = MarkovParams::new(theta, 0.0);
    let p = build_transition(&params, f)?;
    Ok((params, p))
}

/// Provenance comment lines followed by the body.
fn with_provenance(command: &str, cfg: &ExperimentConfig, body: &str) -> String {
    let mut s = format!(
        "# seed={}, version={}, config_hash={}, command={command}\n",
        cfg.sa.seed,
        env!("CARGO_PKG_VERSION"),
        cfg.hash()
    );
    for line in cfg.to_text().lines().filter(|l| !l.is_empty()) {
        let _ = writeln!(s, "#   {line}");
    }
    s.push_str(body);
    s
}

fn csv_text(header: &[String], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Writes `text` to `path` and reads it back, or prints it when no path is set.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, text)?;
            if std::fs::read_to_string(path)? != text {
                return Err(Error::Io(format!("{} did not read back intact", path.display())));
            }
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn out_path(cfg: &ExperimentConfig) -> Option<PathBuf> {
    cfg.output.out.as_ref().map(PathBuf::from)
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn trace_csv(trace: &SATrace) -> Result<String> {
    let d = trace.theta0.len();
    let mut header = vec!["n".to_string()];
    header.extend((0..d).map(|c| format!("theta_{c}")));
    header.extend((0..d).map(|c| format!("g_{c}")));
    header.extend(strings(&["a_n", "rejected", "f_hat", "f_hat_se", "sample_len"]));
    let rows: Vec<Vec<String>> = trace
        .records
        .iter()
        .map(|r| {
            let mut row = vec![r.n.to_string()];
            row.extend(r.theta.iter().map(f64::to_string));
            row.extend(r.g.iter().map(f64::to_string));
            row.push(r.a_n.to_string());
            row.push(r.rejected.to_string());
            row.push(fmt_opt(r.f_hat.map(|o| o.value)));
            row.push(fmt_opt(r.f_hat.map(|o| o.std_err)));
            row.push(r.sample_len.to_string());
            row
        })
        .collect();
    csv_text(&header, &rows)
}

/// Reads the records of a trace CSV; comment lines are skipped.
pub fn read_trace(text: &str) -> Result<Vec<StepRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| Error::MalformedTrace(e.to_string()))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let need = |name: &str| col(name).ok_or_else(|| Error::MalformedTrace(format!("missing column `{name}`")));
    let n_col = need("n")?;
    let theta_cols: Vec<usize> = (0..).map_while(|c| col(&format!("theta_{c}"))).collect();
    let g_cols: Vec<usize> = (0..).map_while(|c| col(&format!("g_{c}"))).collect();
    if theta_cols.is_empty() || theta_cols.len() != g_cols.len() {
        return Err(Error::MalformedTrace("theta and g columns do not match".into()));
    }
    let (a_col, rej_col, f_col) = (need("a_n")?, need("rejected")?, need("f_hat")?);
    let (se_col, m_col) = (col("f_hat_se"), col("sample_len"));
    let mut records = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::MalformedTrace(e.to_string()))?;
        let bad = |what: &str| Error::MalformedTrace(format!("record {}: bad {what}", idx + 1));
        let field = |c: usize| row.get(c).unwrap_or("");
        let num = |c: usize, what: &str| field(c).parse::<f64>().map_err(|_| bad(what));
        let optional = |c: Option<usize>| c.map(field).filter(|v| !v.is_empty());
        let f_hat = match optional(Some(f_col)) {
            Some(v) => Some(Objective {
                value: v.parse().map_err(|_| bad("f_hat"))?,
                std_err: optional(se_col).map_or(Ok(f64::NAN), |v| v.parse().map_err(|_| bad("f_hat_se")))?,
            }),
            None => None,
        };
        records.push(StepRecord {
            n: field(n_col).parse().map_err(|_| bad("n"))?,
            theta: theta_cols.iter().map(|&c| num(c, "theta")).collect::<Result<_>>()?,
            g: g_cols.iter().map(|&c| num(c, "g")).collect::<Result<_>>()?,
            a_n: num(a_col, "a_n")?,
            rejected: field(rej_col).parse().map_err(|_| bad("rejected"))?,
            sample_len: optional(m_col).map_or(Ok(0), |v| v.parse().map_err(|_| bad("sample_len")))?,
            f_hat,
        });
    }
    if records.is_empty() {
        return Err(Error::MalformedTrace("trace has no records".into()));
    }
    Ok(records)
}

fn summary_text(trace: &SATrace) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "theta0 = {}", fmt_vec(&trace.theta0));
    let _ = writeln!(s, "theta_final = {}", fmt_vec(&trace.theta_final));
    let _ = writeln!(s, "iterations = {}", trace.records.len());
    let _ = writeln!(s, "stop_reason = {:?}", trace.stop_reason);
    let _ = writeln!(s, "reject_count = {}", trace.reject_count);
    let _ = writeln!(s, "late_rejections = {}", trace.late_rejections);
    match trace.last_objective() {
        Some(o) => {
            let _ = writeln!(s, "f_hat_final = {}", o.value);
            let _ = writeln!(s, "f_hat_final_se = {}", o.std_err);
        }
        None => {
            let _ = writeln!(s, "f_hat_final = none");
        }
    }
    s
}

fn optimize(common: &Common, flags: &SaFlags) -> Result<()> {
    let mut cfg = load(common)?;
    let sa = &mut cfg.sa;
    macro_rules! take {
        ($flag:expr, $field:expr) => {
            if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    take!(flags.a, sa.a);
    take!(flags.b, sa.b);
    take!(flags.alpha, sa.blocking.alpha);
    take!(flags.beta, sa.blocking.beta);
    take!(flags.eps_floor, sa.epsilon_floor);
    take!(flags.iters, sa.max_iters);
    take!(flags.replicas, sa.replicas);
    take!(flags.grad_tol, sa.stop.grad_tol);
    if let Some(m) = flags.max_sample_len {
        sa.max_sample_len = Some(m);
    }
    if flags.projection {
        sa.projection = true;
    }
    if let Some(t) = &flags.theta0 {
        sa.theta0 = if t == "random" {
            InitialTheta::Random
        } else {
            InitialTheta::Given(parse_theta_list(t)?)
        };
    }
    cfg.validate()?;
    let prob = problem(&cfg)?;
    let oracle: Box<dyn GradientOracle> = if prob.channel.is_noiseless() {
        Box::new(NoiselessOracle {
            constraint: prob.constraint,
        })
    } else {
        Box::new(SimulatedOracle {
            constraint: prob.constraint,
            channel: prob.channel,
            blocking: cfg.sa.blocking,
        })
    };
    let (trace, failure) = match run(&cfg.sa, oracle.as_ref()) {
        Ok(t) => (t, None),
        Err(aborted) => (aborted.trace, Some(aborted.error)),
    };
    let out = out_path(&cfg);
    emit(out.as_deref(), &with_provenance("optimize", &cfg, &trace_csv(&trace)?))?;
    if let Some(out) = &out {
        let summary = out.with_file_name("summary.txt");
        emit(Some(&summary), &with_provenance("optimize", &cfg, &summary_text(&trace)))?;
    } else {
        eprint!("{}", summary_text(&trace));
    }
    failure.map_or(Ok(()), Err)
}

fn estimate_entropy(common: &Common, pt: &PointFlags) -> Result<()> {
    let mut cfg = load(common)?;
    apply_point(&mut cfg, pt, false);
    cfg.validate()?;
    let prob = problem(&cfg)?;
    let (params, _) = point(&cfg, &prob.constraint)?;
    let views = build_views(&params, &prob.constraint, &prob.channel)?;
    let n = cfg.estimate.n;
    if n < 2 {
        return Err(Error::OutOfRange("estimate n must be at least 2".into()));
    }
    let path = sample_path_stream(&views.transition, &prob.channel, n, StreamId::new(cfg.sa.seed, 0));
    let z = joint_symbols(&path.x, &path.y, prob.channel.outputs());
    let sy = conditional_surprisals(&views.output, &path.y)?;
    let sz = conditional_surprisals(&views.joint, &z)?;
    let diff: Vec<f64> = sy.iter().zip(&sz).map(|(a, b)| a - b).collect();
    let h_x = markov_entropy_rate(&views.transition);
    let rows = vec![
        strings(&["h_x", &h_x.to_string(), "0"]),
        vec!["h_y".into(), mean(&sy).to_string(), batch_means_std_err(&sy).to_string()],
        vec!["h_xy".into(), mean(&sz).to_string(), batch_means_std_err(&sz).to_string()],
        vec![
            "mutual_information".into(),
            (h_x + mean(&diff)).to_string(),
            batch_means_std_err(&diff).to_string(),
        ],
    ];
    let body = csv_text(&strings(&["quantity", "estimate", "std_err"]), &rows)?;
    emit(out_path(&cfg).as_deref(), &with_provenance("estimate-entropy", &cfg, &body))
}

fn estimate_gradient_cmd(
    common: &Common,
    pt: &PointFlags,
    replicas: Option<usize>,
    alpha: Option<f64>,
    beta: Option<f64>,
    dump: Option<&Path>,
) -> Result<()> {
    let mut cfg = load(common)?;
    apply_point(&mut cfg, pt, false);
    if let Some(r) = replicas {
        cfg.estimate.replicas = r;
    }
    if let Some(a) = alpha {
        cfg.sa.blocking.alpha = a;
    }
    if let Some(b) = beta {
        cfg.sa.blocking.beta = b;
    }
    if let Some(d) = dump {
        cfg.output.dump_blocks = Some(d.display().to_string());
    }
    cfg.validate()?;
    let prob = problem(&cfg)?;
    let (params, _) = point(&cfg, &prob.constraint)?;
    let est = estimate_gradient_replicated(
        &params,
        &prob.constraint,
        &prob.channel,
        cfg.estimate.n,
        cfg.sa.blocking,
        cfg.estimate.replicas,
        StreamId::new(cfg.sa.seed, 0),
    )?;
    let h_prime = &est.replicas[0].h_prime;
    let rows: Vec<Vec<String>> = (0..est.mean.len())
        .map(|c| {
            vec![
                c.to_string(),
                est.mean[c].to_string(),
                if est.replicas.len() > 1 {
                    est.std_err[c].to_string()
                } else {
                    String::new()
                },
                h_prime[c].to_string(),
            ]
        })
        .collect();
    let body = csv_text(&strings(&["coordinate", "g_mean", "g_std_err", "h_prime"]), &rows)?;
    emit(out_path(&cfg).as_deref(), &with_provenance("estimate-gradient", &cfg, &body))?;
    if let Some(path) = &cfg.output.dump_blocks {
        let mut buf = Vec::new();
        write_block_dump(&mut buf, &est.replicas)?;
        let text = String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))?;
        emit(Some(Path::new(path)), &with_provenance("estimate-gradient", &cfg, &text))?;
    }
    Ok(())
}

fn oracle_cmd(which: &OracleCommand) -> Result<()> {
    match which {
        OracleCommand::In {
            common,
            point: pt,
            gradient,
            h,
        } => {
            let mut cfg = load(common)?;
            apply_point(&mut cfg, pt, true);
            if let Some(h) = h {
                cfg.oracle.h = *h;
            }
            let prob = problem(&cfg)?;
            let (params, p) = point(&cfg, &prob.constraint)?;
            let n = cfg.oracle.n;
            let value = exact_in(&p, &prob.channel, n)?.value;
            let mut header = strings(&["n", "i_n"]);
            let mut row = vec![n.to_string(), value.to_string()];
            if *gradient {
                let g = fd_gradient(chart_builder(&prob.constraint), &params.theta, &prob.channel, n, cfg.oracle.h)?;
                header.extend((0..g.len()).map(|c| format!("d_i_n_{c}")));
                row.extend(g.iter().map(f64::to_string));
            }
            let body = csv_text(&header, &[row])?;
            emit(out_path(&cfg).as_deref(), &with_provenance("oracle in", &cfg, &body))
        }
        OracleCommand::Birch { common, point: pt } => {
            let mut cfg = load(common)?;
            apply_point(&mut cfg, pt, true);
            let prob = problem(&cfg)?;
            let (_, p) = point(&cfg, &prob.constraint)?;
            let rows: Vec<Vec<String>> = birch_sequence(&p, &prob.channel, cfg.oracle.n)?
                .iter()
                .map(|b| {
                    vec![
                        b.n.to_string(),
                        b.lower.to_string(),
                        b.upper.to_string(),
                        b.midpoint().to_string(),
                        b.gap().to_string(),
                    ]
                })
                .collect();
            let body = csv_text(&strings(&["n", "lower", "upper", "midpoint", "gap"]), &rows)?;
            emit(out_path(&cfg).as_deref(), &with_provenance("oracle birch", &cfg, &body))
        }
        OracleCommand::Parry { common } => {
            let cfg = load(common)?;
            let (f, _) = resolve_constraint(&cfg.problem.constraint)?;
            let opt = parry_optimum(&f)?;
            let mut rows = vec![
                vec!["capacity0".into(), opt.capacity0.to_string()],
                vec!["spectral_radius".into(), opt.spectral_radius.to_string()],
            ];
            rows.extend(
                opt.theta_star
                    .iter()
                    .enumerate()
                    .map(|(c, t)| vec![format!("theta_star_{c}"), t.to_string()]),
            );
            let body = csv_text(&strings(&["quantity", "value"]), &rows)?;
            emit(out_path(&cfg).as_deref(), &with_provenance("oracle parry", &cfg, &body))
        }
        OracleCommand::Coeff {
            common,
            pi,
            eps_grid,
            n,
        } => {
            let mut cfg = load(common)?;
            if let Some(pi) = pi {
                cfg.oracle.pi = *pi;
            }
            if let Some(g) = eps_grid {
                cfg.oracle.eps_grid = g.clone();
            }
            cfg.oracle.n = n.unwrap_or(12);
            let exp = asymptotic_coefficient_experiment(cfg.oracle.pi, &cfg.oracle.eps_grid, cfg.oracle.n)?;
            let rows: Vec<Vec<String>> = exp
                .ratios
                .iter()
                .map(|(e, r, g)| vec![e.to_string(), r.to_string(), g.to_string()])
                .collect();
            let body = csv_text(&strings(&["eps", "ratio", "sandwich_gap"]), &rows)?;
            emit(out_path(&cfg).as_deref(), &with_provenance("oracle coeff", &cfg, &body))?;
            eprintln!(
                "fitted = {} (se {}), target = {}, relative_error = {}",
                exp.fitted, exp.fit.intercept_std_err, exp.target, exp.relative_error
            );
            Ok(())
        }
        OracleCommand::Perturb {
            common,
            matrix,
            delta_grid,
            n,
        } => {
            let mut cfg = load(common)?;
            if common.epsilon.is_none() && cfg.problem.channel == "bsc" && common.config.is_none() {
                cfg.problem.epsilon = 0.0;
            }
            if let Some(m) = matrix {
                cfg.oracle.matrix = Some(parse_matrix(m)?);
            }
            if let Some(g) = delta_grid {
                cfg.oracle.delta_grid = g.clone();
            }
            cfg.oracle.n = n.unwrap_or(12);
            let rows = cfg
                .oracle
                .matrix
                .clone()
                .unwrap_or_else(|| vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
            let p = TransitionMatrix::new(rows)?;
            let k = p.size();
            let identity = ForbiddenPairSet::unconstrained(k)?;
            let channel = resolve_channel(&cfg.problem.channel, cfg.problem.epsilon, &identity, &(0..k).collect::<Vec<_>>())?;
            let exp = perturbation_experiment(&p, &cfg.oracle.delta_grid, &channel, None, cfg.oracle.n)?;
            let rows: Vec<Vec<String>> = exp.points.iter().map(|(d, h)| vec![d.to_string(), h.to_string()]).collect();
            let body = csv_text(&strings(&["delta", "delta_h"]), &rows)?;
            emit(out_path(&cfg).as_deref(), &with_provenance("oracle perturb", &cfg, &body))?;
            eprintln!(
                "entry = {:?}, slope = {}, all_positive = {}, in_envelope = {}",
                exp.entry,
                fmt_opt(exp.fit.map(|f| f.slope)),
                exp.all_positive,
                exp.in_envelope
            );
            Ok(())
        }
    }
}

/// Text summary of a trace file.
pub fn report_text(text: &str, theta_ref: Option<&[f64]>, f_ref: Option<f64>) -> Result<String> {
    let records = read_trace(text)?;
    let last = records.last().expect("non-empty");
    let rejected = records.iter().filter(|r| r.rejected).count();
    let tail = (records.len() / 10).max(1);
    let late = records.iter().rev().take(tail).any(|r| r.rejected);
    let mut s = String::new();
    let _ = writeln!(s, "iterations = {}", records.len());
    let _ = writeln!(s, "theta_last = {}", fmt_vec(&last.theta));
    let _ = writeln!(s, "reject_count = {rejected}");
    let _ = writeln!(s, "reject_fraction = {}", rejected as f64 / records.len() as f64);
    let _ = writeln!(s, "late_rejections = {late}");
    if let Some(o) = records.iter().rev().find_map(|r| r.f_hat) {
        let _ = writeln!(s, "f_hat_last = {}", o.value);
        let _ = writeln!(s, "f_hat_last_se = {}", o.std_err);
    }
    if let Some(theta_ref) = theta_ref {
        match fit_rates(&records, theta_ref, f_ref) {
            Ok(fit) => {
                let _ = writeln!(s, "theta_rate = {} (se {})", fit.tau_hat.slope, fit.tau_hat.slope_std_err);
                if let Some(fr) = fit.f_rate {
                    let _ = writeln!(s, "f_rate = {} (se {})", fr.slope, fr.slope_std_err);
                }
            }
            Err(e) => {
                let _ = writeln!(s, "rate_fit = unavailable ({e})");
            }
        }
    }
    Ok(s)
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Optimize { common, sa } => optimize(common, sa),
        Command::EstimateEntropy { common, point } => estimate_entropy(common, point),
        Command::EstimateGradient {
            common,
            point,
            replicas,
            alpha,
            beta,
            dump_blocks,
        } => estimate_gradient_cmd(common, point, *replicas, *alpha, *beta, dump_blocks.as_deref()),
        Command::Oracle { which } => oracle_cmd(which),
        Command::Report {
            trace,
            theta_ref,
            f_ref,
            out,
        } => {
            let text = std::fs::read_to_string(trace)?;
            let summary = report_text(&text, theta_ref.as_deref(), *f_ref)?;
            emit(out.as_deref(), &summary)
        }
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> std::process::ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return std::process::ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::ExitCode::FAILURE
        }
    }
}
