use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use peaked_core::bounds::{self, BoundConstants, LogNumber, Regime};
use peaked_core::challenge::{self, Challenge, Decoder, PrivateChallenge, RunConfig, FORMAT_PRIVATE, FORMAT_PUBLIC};
use peaked_core::ensembles::{self, mean_and_se, Ensemble, PeakedInstance};
use peaked_core::linalg;
use peaked_core::noise::{self, Goal, NoiseModel, PlanParams};
use peaked_core::perturb::{self, PerturbationPath, TruncatedPath};
use peaked_core::rng::{child_rng, derive_seed};
use peaked_core::sim::{self, SampleMeta, SampleSet, DEFAULT_N_MAX_DENSE};
use peaked_core::stitch::{self, StitchPlan};
use peaked_core::synth::{self, SynthConfig};
use peaked_core::{BitString, Circuit, Gate};

#[derive(Parser)]
#[command(name = "peaked", version, about = "Generate, sample and verify random peaked circuits")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// Root seed; every random choice derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path or prefix, depending on the subcommand.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the report as JSON on stdout.
    #[arg(long)]
    json: bool,
    /// Largest n for which dense unitaries and exact distributions are formed.
    #[arg(long, default_value_t = DEFAULT_N_MAX_DENSE)]
    n_max_dense: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a challenge: writes PREFIX.public.json and PREFIX.private.json.
    Gen(GenArgs),
    /// Sample shots from a challenge circuit, optionally through a noise channel.
    Sample(SampleArgs),
    /// Decode and check submitted shots against a private challenge.
    Verify(VerifyArgs),
    /// Batch Hilbert–Schmidt overlap statistics of synthesized instances as CSV.
    ///
    /// Columns: kind,n,instance,seed,trace_sq,trace_sq_se,hs_norm_sq,hs_norm_sq_se,peakedness,iterations.
    /// Data rows have kind=instance and empty SE columns; each n ends with a kind=summary row of
    /// means and standard errors.
    Stats(StatsArgs),
    /// Stitching: compose blocks, evaluate the mixing recurrence, count patterns.
    #[command(subcommand)]
    Stitch(StitchCmd),
    /// Perturbation paths between a challenge circuit and random gates.
    #[command(subcommand)]
    Perturb(PerturbCmd),
    /// Closed-form bound calculators.
    #[command(subcommand)]
    Bounds(BoundsCmd),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum GenMethod {
    Postselect,
    Variational,
    Stitched,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Sampler {
    Rejection,
    Conditional,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, value_enum)]
    method: GenMethod,
    #[arg(long)]
    n: usize,
    /// Target peakedness.
    #[arg(long)]
    delta: f64,
    /// Peak string; random when omitted.
    #[arg(long)]
    peak: Option<BitString>,
    /// Brickwall depth for variational targets; defaults to n.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    #[arg(long)]
    stop_on_success: bool,
    /// Postselection sampler.
    #[arg(long, value_enum, default_value_t = Sampler::Rejection)]
    sampler: Sampler,
    #[arg(long, default_value_t = 1_000_000)]
    max_trials: u64,
    /// Number of stitched blocks.
    #[arg(long, default_value_t = 3)]
    blocks: usize,
    /// Per-block peakedness for stitched generation.
    #[arg(long, default_value_t = 0.9)]
    block_delta: f64,
    /// Blend block seams with local rewrites.
    #[arg(long)]
    rewrite: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Public or private challenge file.
    #[arg(long)]
    challenge: PathBuf,
    #[arg(long)]
    shots: usize,
    /// bsc:R, depol:EPS, tsparse:T[:random] or tsparse:T:worst:TARGET.
    #[arg(long)]
    noise: Option<String>,
    /// Write one bit string per line instead of JSON.
    #[arg(long)]
    text: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Private challenge file.
    #[arg(long)]
    challenge: PathBuf,
    /// Shots file: JSON sample set, JSON array of strings, or one string per line.
    #[arg(long)]
    shots: PathBuf,
    #[arg(long, default_value = "hba")]
    decoder: String,
    /// Hamming radius; defaults to the recommended radius for the declared channel.
    #[arg(long)]
    t: Option<usize>,
    /// Declared noise channel the shots went through.
    #[arg(long)]
    noise: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// Comma-separated wire counts.
    #[arg(long, value_delimiter = ',', default_value = "6")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    instances: u64,
    /// Brickwall depth; defaults to n for each n.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, default_value_t = 0.7)]
    delta: f64,
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum StitchCmd {
    /// Chain instance files into one stitched challenge.
    Compose {
        /// Block files (private challenges or instances), in order.
        #[arg(long, num_args = 1.., required = true)]
        blocks: Vec<PathBuf>,
        #[arg(long)]
        rewrite: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Iterate the block-mixing recurrence.
    Recurrence {
        #[arg(long)]
        d: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Monte-Carlo estimate of the mixed peak.
    Mixing {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        layers: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[command(flatten)]
        common: Common,
    },
    /// C(m−1, k−1) ways to cut m gates into k blocks.
    Count {
        #[arg(long)]
        m: u64,
        #[arg(long)]
        k: u64,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum PerturbCmd {
    /// Output-distribution distance against the first-order bound.
    Tv {
        #[arg(long)]
        challenge: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.001,0.01")]
        theta: Vec<f64>,
        #[arg(long, default_value_t = perturb::DEFAULT_TV_C)]
        c: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Truncation error per Taylor order.
    Trunc {
        #[arg(long)]
        challenge: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        theta: f64,
        #[arg(long, default_value_t = 8)]
        kmax: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the truncated peak polynomial and extrapolate to the path end.
    Poly {
        #[arg(long)]
        challenge: PathBuf,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 0.1)]
        interval: f64,
        /// Interpolate with exact rationals as well.
        #[arg(long)]
        exact: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug, Clone)]
struct ConstArgs {
    /// Override a constant, e.g. --const kappa=0.5. Repeatable.
    #[arg(long = "const", value_parser = parse_const)]
    consts: Vec<(String, f64)>,
}

fn parse_const(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected NAME=VALUE")?;
    Ok((k.to_string(), v.parse().map_err(|_| format!("bad value in {s:?}"))?))
}

#[derive(Args, Debug, Clone)]
struct DimArgs {
    /// Hilbert-space dimension.
    #[arg(long, conflicts_with = "n")]
    d: Option<f64>,
    /// Wire count; d = 2ⁿ.
    #[arg(long)]
    n: Option<usize>,
}

impl DimArgs {
    fn dim(&self) -> Result<f64> {
        match (self.d, self.n) {
            (Some(d), _) => Ok(d),
            (None, Some(n)) => Ok(2f64.powi(n as i32)),
            _ => bail!("give --d or --n"),
        }
    }
}

#[derive(Subcommand)]
enum BoundsCmd {
    /// (1−δ)^{d−1}, exact.
    Acceptance {
        #[command(flatten)]
        dim: DimArgs,
        #[arg(long)]
        delta: f64,
        #[command(flatten)]
        common: Common,
    },
    /// k!/(δd)^k, upper bound.
    Tail {
        #[command(flatten)]
        dim: DimArgs,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        k: u64,
        #[command(flatten)]
        consts: ConstArgs,
        #[command(flatten)]
        common: Common,
    },
    /// c_δ·C(d+k−2, k), lower bound.
    Packing {
        #[command(flatten)]
        dim: DimArgs,
        #[arg(long)]
        k: u64,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[command(flatten)]
        consts: ConstArgs,
        #[command(flatten)]
        common: Common,
    },
    /// (C n² s/ε)^{κs}, upper bound.
    Covering {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        eps: f64,
        #[command(flatten)]
        consts: ConstArgs,
        #[command(flatten)]
        common: Common,
    },
    /// covering/packing, upper bound on compressibility.
    Compression {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: u64,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[command(flatten)]
        consts: ConstArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Gate-count lower bounds.
    Lb {
        #[arg(long)]
        n: usize,
        /// Design order; defaults to ⌈log₂ n⌉.
        #[arg(long)]
        k: Option<u64>,
        #[arg(long, value_enum, default_value_t = LbRegime::Design)]
        regime: LbRegime,
        #[command(flatten)]
        consts: ConstArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Peak-to-fidelity lower bound.
    Fidelity {
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        eps_add: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Sample-size plan for a decoder.
    Plan {
        #[arg(long)]
        goal: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p_max: f64,
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        t: Option<usize>,
        #[arg(long)]
        delta_chernoff: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LbRegime {
    Design,
    Haar,
}

/// What a subcommand hands back to `main`.
struct Outcome {
    json: Value,
    text: String,
    code: u8,
}

impl Outcome {
    fn ok(json: Value, text: String) -> Self {
        Outcome { json, text, code: 0 }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, res) = match cli.cmd {
        Cmd::Gen(a) => (a.common.clone(), cmd_gen(&a)),
        Cmd::Sample(a) => (a.common.clone(), cmd_sample(&a)),
        Cmd::Verify(a) => (a.common.clone(), cmd_verify(&a)),
        Cmd::Stats(a) => (a.common.clone(), cmd_stats(&a)),
        Cmd::Stitch(c) => cmd_stitch(c),
        Cmd::Perturb(c) => cmd_perturb(c),
        Cmd::Bounds(c) => cmd_bounds(c),
    };
    match res {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            // A closed pipe downstream is not an error worth reporting.
            let _ = if common.json {
                writeln!(stdout, "{}", serde_json::to_string_pretty(&out.json).expect("serializable report"))
            } else if !out.text.is_empty() {
                writeln!(stdout, "{}", out.text.trim_end())
            } else {
                Ok(())
            };
            ExitCode::from(out.code)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().ok_or_else(|| anyhow!("output path {} has no file name", path.display()))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn read_value(path: &Path) -> Result<Value> {
    let s = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&s).with_context(|| format!("parsing {}", path.display()))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn require_out(c: &Common) -> Result<&Path> {
    c.out.as_deref().ok_or_else(|| anyhow!("--out is required"))
}

fn load_private(path: &Path) -> Result<PrivateChallenge> {
    let v = read_value(path)?;
    if v.get("format").and_then(Value::as_str) != Some(FORMAT_PRIVATE) {
        bail!("{} is not a private challenge file", path.display());
    }
    serde_json::from_value(v).with_context(|| format!("parsing {}", path.display()))
}

/// A private challenge or a bare instance.
fn load_instance(path: &Path) -> Result<(PeakedInstance, Option<PrivateChallenge>)> {
    let v = read_value(path)?;
    if v.get("format").and_then(Value::as_str) == Some(FORMAT_PRIVATE) {
        let p: PrivateChallenge = serde_json::from_value(v)?;
        return Ok((p.instance.clone(), Some(p)));
    }
    Ok((serde_json::from_value(v).with_context(|| format!("parsing {} as an instance", path.display()))?, None))
}

/// Circuit, input string and id from a public or private challenge.
fn load_runnable(path: &Path) -> Result<(Circuit, BitString, String)> {
    let v = read_value(path)?;
    match v.get("format").and_then(Value::as_str) {
        Some(FORMAT_PUBLIC) => {
            let p: challenge::PublicChallenge = serde_json::from_value(v)?;
            let x = p.input();
            Ok((p.circuit, x, p.id))
        }
        Some(FORMAT_PRIVATE) => {
            let p: PrivateChallenge = serde_json::from_value(v)?;
            let x = p.instance.input();
            Ok((p.instance.circuit, x, p.id))
        }
        _ => bail!("{} is not a challenge file", path.display()),
    }
}

fn read_shots(path: &Path) -> Result<SampleSet> {
    let s = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let t = s.trim_start();
    if t.starts_with('{') {
        return serde_json::from_str(t).with_context(|| format!("parsing {}", path.display()));
    }
    let strings: Vec<String> = if t.starts_with('[') {
        serde_json::from_str(t).with_context(|| format!("parsing {}", path.display()))?
    } else {
        t.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(String::from).collect()
    };
    let shots = strings.iter().map(|x| x.parse::<BitString>()).collect::<peaked_core::Result<Vec<_>>>()?;
    let n = shots.first().map(|x| x.len()).ok_or_else(|| anyhow!("{} holds no shots", path.display()))?;
    Ok(SampleSet::new(n, shots, SampleMeta { instance_id: None, noise: "unknown".into(), seed: None })?)
}

fn random_string(n: usize, seed: u64, stream: u64) -> Result<BitString> {
    let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    Ok(BitString::new(n, child_rng(seed, stream).random::<u64>() & mask)?)
}

fn seal_and_write(inst: PeakedInstance, plan: Option<StitchPlan>, cfg: RunConfig, seed: u64, prefix: &Path) -> Result<Challenge> {
    let ch = Challenge::seal(inst, plan, cfg, seed, &["method", "n", "depth", "block_count"])?;
    write_json(&with_suffix(prefix, ".public.json"), &ch.public)?;
    write_json(&with_suffix(prefix, ".private.json"), &ch.private)?;
    Ok(ch)
}

fn cmd_gen(a: &GenArgs) -> Result<Outcome> {
    let c = &a.common;
    let prefix = require_out(c)?;
    let n = a.n;
    let peak = match a.peak {
        Some(p) if p.len() != n => bail!("peak string {p} does not have {n} bits"),
        Some(p) => p,
        None => random_string(n, c.seed, 1)?,
    };
    let depth = a.depth.unwrap_or(n);
    let params = json!({
        "method": a.method, "n": n, "delta": a.delta, "depth": depth, "seeds": a.seeds, "iters": a.iters,
        "stop_on_success": a.stop_on_success, "sampler": a.sampler, "max_trials": a.max_trials,
        "block_count": a.blocks, "block_delta": a.block_delta, "rewrite": a.rewrite,
    });
    let cfg = RunConfig::new("gen", c.seed, c.n_max_dense, params);
    let (inst, plan, extra) = match a.method {
        GenMethod::Postselect => {
            let inst = match a.sampler {
                Sampler::Rejection => {
                    ensembles::postselect_generate_with(n, a.delta, &peak, a.max_trials, derive_seed(c.seed, 2), Ensemble::Dense)?
                }
                Sampler::Conditional => ensembles::conditional_generate(n, a.delta, &peak, derive_seed(c.seed, 2))?,
            };
            (inst, None, Value::Null)
        }
        GenMethod::Variational => {
            let target = ensembles::random_brickwall(n, depth, derive_seed(c.seed, 3));
            let scfg = SynthConfig { depth: Some(depth), seeds: a.seeds, iters: a.iters, stop_on_success: a.stop_on_success, ..Default::default() };
            let (inst, report) = synth::multistart_search(&target, &peak, a.delta, &scfg, derive_seed(c.seed, 4))?;
            let summary = json!({
                "best_peakedness": report.best_peakedness,
                "best_seed_index": report.best_seed_index,
                "iterations": report.per_seed_traces.iter().map(|t| t.iterations).collect::<Vec<_>>(),
                "seed_best": report.per_seed_traces.iter().map(|t| t.best).collect::<Vec<_>>(),
                "wall_time": report.wall_time,
                "below_target": report.below_target,
            });
            if report.below_target {
                let rep = json!({"status": "below-target", "delta_target": a.delta, "report": summary, "config": cfg});
                write_json(&with_suffix(prefix, ".report.json"), &rep)?;
                let text = format!(
                    "synthesis reached peakedness {:.4}, below the target {}; report written to {}",
                    report.best_peakedness,
                    a.delta,
                    with_suffix(prefix, ".report.json").display()
                );
                return Ok(Outcome { json: rep, text, code: 2 });
            }
            (inst, None, summary)
        }
        GenMethod::Stitched => {
            if a.blocks == 0 {
                bail!("--blocks must be at least 1");
            }
            let mut blocks = Vec::with_capacity(a.blocks);
            for i in 0..a.blocks {
                let xi = if i + 1 == a.blocks { peak } else { random_string(n, c.seed, 100 + i as u64)? };
                blocks.push(ensembles::conditional_generate(n, a.block_delta, &xi, derive_seed(c.seed, 200 + i as u64))?);
            }
            let plan = StitchPlan::chain(blocks)?;
            let (circuit, mut inst) = stitch::stitch_capped(&plan, c.n_max_dense)?;
            if a.rewrite {
                inst.circuit = stitch::boundary_rewrite(&circuit, &plan.seams(), derive_seed(c.seed, 5))?.circuit;
                if !inst.predicted {
                    inst.peakedness = inst.measured_peakedness()?;
                }
            }
            let pred = stitch::predict(&plan);
            if inst.peakedness < a.delta {
                let rep = json!({"status": "below-target", "delta_target": a.delta, "peakedness": inst.peakedness, "prediction": pred});
                write_json(&with_suffix(prefix, ".report.json"), &rep)?;
                return Ok(Outcome { json: rep, text: format!("stitched peakedness {:.4} is below the target {}", inst.peakedness, a.delta), code: 2 });
            }
            (inst, Some(plan), serde_json::to_value(pred)?)
        }
    };
    let peakedness = inst.peakedness;
    let method = inst.method;
    let ch = seal_and_write(inst, plan, cfg, c.seed, prefix)?;
    let json = json!({
        "status": "ok",
        "id": ch.public.id,
        "method": method,
        "n": n,
        "peakedness": peakedness,
        "public": with_suffix(prefix, ".public.json"),
        "private": with_suffix(prefix, ".private.json"),
        "details": extra,
    });
    let text = format!(
        "{method} instance {} on {n} wires, peakedness {peakedness:.6}\nwrote {} and {}",
        ch.public.id,
        with_suffix(prefix, ".public.json").display(),
        with_suffix(prefix, ".private.json").display()
    );
    Ok(Outcome::ok(json, text))
}

fn cmd_sample(a: &SampleArgs) -> Result<Outcome> {
    let c = &a.common;
    let (circuit, input, id) = load_runnable(&a.challenge)?;
    let mut set = sim::sample(&circuit, &input, a.shots, derive_seed(c.seed, 1))?;
    set.meta.instance_id = Some(id);
    if let Some(spec) = &a.noise {
        let model: NoiseModel = spec.parse()?;
        set = noise::apply_noise(&set, &model, derive_seed(c.seed, 2))?;
    }
    let body = if a.text {
        let mut s = String::with_capacity(set.len() * (set.n + 1));
        for x in &set.shots {
            s.push_str(&x.to_string());
            s.push('\n');
        }
        s
    } else {
        let mut s = serde_json::to_string(&set)?;
        s.push('\n');
        s
    };
    let summary = json!({"shots": set.len(), "n": set.n, "noise": set.meta.noise, "instance_id": set.meta.instance_id, "seed": c.seed});
    match &c.out {
        Some(p) => {
            write_atomic(p, body.as_bytes())?;
            Ok(Outcome::ok(summary, format!("wrote {} shots to {}", set.len(), p.display())))
        }
        None if c.json => Ok(Outcome::ok(serde_json::to_value(&set)?, String::new())),
        None => Ok(Outcome::ok(summary, body)),
    }
}

fn cmd_verify(a: &VerifyArgs) -> Result<Outcome> {
    let private = load_private(&a.challenge)?;
    let shots = read_shots(&a.shots)?;
    let decoder: Decoder = a.decoder.parse()?;
    let model: Option<NoiseModel> = a.noise.as_deref().map(str::parse).transpose()?;
    let n = private.instance.n();
    let t = match (a.t, model) {
        (Some(t), _) => t,
        (None, Some(NoiseModel::Bsc { r })) => {
            let mut p = PlanParams::new(n, private.instance.peakedness.max(1e-12), 0.1);
            p.r = Some(r);
            noise::plan_samples(Goal::Hba, &p)?.t_radius.unwrap_or(0)
        }
        (None, Some(NoiseModel::Tsparse { t, .. })) => t,
        _ => 0,
    };
    let v = challenge::verify(&private, &shots, decoder, t, model.as_ref())?;
    let code = if v.accept {
        0
    } else if !v.commitment_ok {
        4
    } else {
        3
    };
    let status = if v.accept {
        "accept"
    } else if !v.commitment_ok {
        "reject: commitment mismatch"
    } else {
        "reject: peak weight outside window"
    };
    let text = format!(
        "{status}\nestimate {:.6} ± {:.6} (claimed {:.6}, window [{:.6}, {:.6}], t = {t}, decoder {})",
        v.report.estimate, v.report.std_err, v.claimed, v.window[0], v.window[1], v.report.decoder
    );
    let json = json!({"status": status, "verdict": v, "t": t, "shots": shots.len()});
    Ok(Outcome { json, text, code })
}

fn cmd_stats(a: &StatsArgs) -> Result<Outcome> {
    let c = &a.common;
    let cfg = SynthConfig { seeds: a.seeds, iters: a.iters, stop_on_success: true, ..Default::default() };
    let mut csv = String::from("kind,n,instance,seed,trace_sq,trace_sq_se,hs_norm_sq,hs_norm_sq_se,peakedness,iterations\n");
    let mut summaries = Vec::new();
    for &n in &a.n {
        let depth = a.depth.unwrap_or(n);
        let rows = synth::hs_batch(n, depth, a.instances, a.delta, &SynthConfig { depth: Some(depth), ..cfg.clone() }, derive_seed(c.seed, n as u64))?;
        for r in &rows {
            csv.push_str(&format!(
                "instance,{},{},{},{:.12e},,{:.12e},,{:.12e},{}\n",
                r.n, r.instance, r.seed, r.trace_sq, r.hs_norm_sq, r.peakedness, r.iterations
            ));
        }
        let ts: Vec<f64> = rows.iter().map(|r| r.trace_sq).collect();
        let hs: Vec<f64> = rows.iter().map(|r| r.hs_norm_sq).collect();
        let (tm, tse) = mean_and_se(&ts);
        let (hm, hse) = mean_and_se(&hs);
        let pm = rows.iter().map(|r| r.peakedness).sum::<f64>() / rows.len().max(1) as f64;
        let im = rows.iter().map(|r| r.iterations as f64).sum::<f64>() / rows.len().max(1) as f64;
        csv.push_str(&format!("summary,{n},{},,{tm:.12e},{tse:.12e},{hm:.12e},{hse:.12e},{pm:.12e},{im:.3}\n", rows.len()));
        summaries.push(json!({"n": n, "depth": depth, "instances": rows.len(), "trace_sq_mean": tm, "trace_sq_se": tse,
            "hs_norm_sq_mean": hm, "hs_norm_sq_se": hse, "reference_hs_norm_sq": 2.0 / 4f64.powi(n as i32),
            "peakedness_mean": pm, "iterations_mean": im}));
    }
    let json = json!({"summary": summaries, "config": RunConfig::new("stats", c.seed, c.n_max_dense, json!({"n": a.n, "instances": a.instances, "delta": a.delta, "seeds": a.seeds, "iters": a.iters, "depth": a.depth}))});
    match &c.out {
        Some(p) => {
            write_atomic(p, csv.as_bytes())?;
            Ok(Outcome::ok(json, format!("wrote {}", p.display())))
        }
        None => Ok(Outcome::ok(json, csv)),
    }
}

fn cmd_stitch(cmd: StitchCmd) -> (Common, Result<Outcome>) {
    match cmd {
        StitchCmd::Compose { blocks, rewrite, common } => {
            let r = (|| {
                let prefix = require_out(&common)?;
                let insts = blocks.iter().map(|p| load_instance(p).map(|x| x.0)).collect::<Result<Vec<_>>>()?;
                let plan = StitchPlan::chain(insts)?;
                let (circuit, mut inst) = stitch::stitch_capped(&plan, common.n_max_dense)?;
                if rewrite {
                    inst.circuit = stitch::boundary_rewrite(&circuit, &plan.seams(), derive_seed(common.seed, 5))?.circuit;
                    if !inst.predicted {
                        inst.peakedness = inst.measured_peakedness()?;
                    }
                }
                let pred = stitch::predict(&plan);
                let cfg = RunConfig::new("stitch", common.seed, common.n_max_dense, json!({"method": "stitched", "n": plan.n(), "block_count": plan.blocks.len(), "rewrite": rewrite}));
                let peakedness = inst.peakedness;
                let predicted = inst.predicted;
                let ch = seal_and_write(inst, Some(plan), cfg, common.seed, prefix)?;
                let json = json!({"id": ch.public.id, "peakedness": peakedness, "predicted": predicted, "prediction": pred});
                let text = format!(
                    "stitched {} blocks: peakedness {peakedness:.6} (product prediction {:.6}, mixing expectation {:.6})",
                    blocks.len(),
                    pred.predicted_peak,
                    pred.analytic_expectation
                );
                Ok(Outcome::ok(json, text))
            })();
            (common, r)
        }
        StitchCmd::Recurrence { d, eps, common } => {
            let r = (|| {
                let (q, last) = stitch::predict_peak_recurrence(d, &eps)?;
                let closed = stitch::closed_form_q(d, &eps);
                let json = json!({"d": d, "eps": eps, "q": q, "q_last": last, "closed_form": closed});
                Ok(Outcome::ok(json, format!("q_L = {last:.12} (closed form {closed:.12})")))
            })();
            (common, r)
        }
        StitchCmd::Mixing { n, layers, eps, trials, common } => {
            let r = (|| {
                let est = stitch::montecarlo_block_mixing(n, layers, eps, trials, common.seed)?;
                let text = format!("mean {:.6} ± {:.6} over {} trials, closed form {:.6}", est.mean, est.std_err, est.trials, est.closed_form);
                Ok(Outcome::ok(serde_json::to_value(est)?, text))
            })();
            (common, r)
        }
        StitchCmd::Count { m, k, common } => {
            let r = (|| {
                let v = stitch::stitch_pattern_count(m, k)?;
                Ok(Outcome::ok(json!({"m": m, "k": k, "count": v.to_string()}), v.to_string()))
            })();
            (common, r)
        }
    }
}

/// Path from the challenge circuit to independent Haar gates on the same wires.
fn path_for(private: &PrivateChallenge, seed: u64) -> Result<(PerturbationPath, BitString)> {
    let inst = &private.instance;
    if inst.input().weight() != 0 {
        bail!("perturbation paths start from 0ⁿ; this instance has input {}", inst.input());
    }
    let mut rng = child_rng(seed, 7);
    let gates = inst
        .circuit
        .materialized()
        .gates
        .iter()
        .map(|g| Gate::fixed(g.wires.clone(), linalg::haar_unitary(g.dim(), &mut rng)))
        .collect::<peaked_core::Result<Vec<_>>>()?;
    let target = Circuit::from_gates(inst.n(), gates)?;
    Ok((perturb::make_path(&inst.circuit.materialized(), &target)?, inst.peak_string))
}

fn cmd_perturb(cmd: PerturbCmd) -> (Common, Result<Outcome>) {
    match cmd {
        PerturbCmd::Tv { challenge, theta, c, common } => {
            let r = (|| {
                let private = load_private(&challenge)?;
                let (path, x) = path_for(&private, common.seed)?;
                let reports = theta.iter().map(|&t| perturb::tv_peakedness_check_with(&path, t, &x, c)).collect::<peaked_core::Result<Vec<_>>>()?;
                let mut text = String::new();
                for (t, rep) in theta.iter().zip(&reports) {
                    text.push_str(&format!("θ = {t:e}: ‖p−q‖₁ = {:.3e} ≤ {:.3e} {}\n", rep.l1_distance, rep.tv_bound, if rep.holds { "holds" } else { "VIOLATED" }));
                }
                let json = json!({"theta": theta, "reports": reports, "max_op_norm": path.max_op_norm(), "m": path.gate_count(), "warnings": path.warnings});
                Ok(Outcome::ok(json, text))
            })();
            (common, r)
        }
        PerturbCmd::Trunc { challenge, theta, kmax, common } => {
            let r = (|| {
                let private = load_private(&challenge)?;
                let (path, _) = path_for(&private, common.seed)?;
                let mut rows = Vec::new();
                let mut text = String::new();
                for k in 0..=kmax {
                    let tp = TruncatedPath { path: path.clone(), k };
                    let err = perturb::truncation_errors(&tp, theta).into_iter().fold(0.0, f64::max);
                    let bound = perturb::truncation_error_bounds(&tp, theta).into_iter().fold(0.0, f64::max);
                    text.push_str(&format!("K = {k}: max gate error {err:.3e} (bound {bound:.3e})\n"));
                    rows.push(json!({"k": k, "max_error": err, "max_bound": bound}));
                }
                Ok(Outcome::ok(json!({"theta": theta, "rows": rows}), text))
            })();
            (common, r)
        }
        PerturbCmd::Poly { challenge, k, interval, exact, common } => {
            let r = (|| {
                let private = load_private(&challenge)?;
                let (path, x) = path_for(&private, common.seed)?;
                let tp = TruncatedPath { path, k };
                let degree = 2 * tp.path.gate_count() * k;
                let nodes = perturb::chebyshev_nodes(0.0, interval, degree + 1);
                let fit = perturb::amplitude_polynomial(&tp, &x, &nodes)?;
                let end = tp.path.theta_end;
                let direct = perturb::truncated_peak(&tp, end, &x)?;
                let f64_end = fit.eval(end);
                let mut json = json!({"degree": degree, "nodes": nodes, "fit": fit, "direct_endpoint": direct,
                    "f64_endpoint": f64_end, "f64_endpoint_error": (f64_end - direct).abs(),
                    "lebesgue_at_endpoint": perturb::lebesgue_function(&nodes, end)});
                let mut text = format!(
                    "degree {degree}, held-out residual {:.3e}, endpoint: direct {direct:.12}, f64 fit {f64_end:.12} (error {:.3e})",
                    fit.heldout_residual,
                    (f64_end - direct).abs()
                );
                if exact {
                    let ef = perturb::amplitude_polynomial_exact(&tp, &x, &nodes)?;
                    let e = ef.eval(end);
                    json["exact_endpoint"] = json!(e);
                    json["exact_endpoint_error"] = json!((e - direct).abs());
                    text.push_str(&format!("\nexact interpolation endpoint {e:.12} (error {:.3e})", (e - direct).abs()));
                }
                Ok(Outcome::ok(json, text))
            })();
            (common, r)
        }
    }
}

fn constants(over: &ConstArgs) -> Result<BoundConstants> {
    let mut v = serde_json::to_value(BoundConstants::default())?;
    for (k, x) in &over.consts {
        match v.get_mut(k) {
            Some(slot) => *slot = json!(x),
            None => bail!("unknown constant {k:?}"),
        }
    }
    let c: BoundConstants = serde_json::from_value(v)?;
    c.validate()?;
    Ok(c)
}

fn bound_report(name: &str, semantics: &str, formula: &str, inputs: Value, consts: Option<&BoundConstants>, value: LogNumber) -> Outcome {
    let json = json!({
        "bound": name, "semantics": semantics, "formula": formula, "inputs": inputs,
        "constants": consts, "ln": value.ln, "log10": value.log10(), "value": value.value(), "display": value.to_string(),
    });
    let cn = consts.map(|c| format!("\nconstants: {}", serde_json::to_string(c).unwrap_or_default())).unwrap_or_default();
    let text = format!("{name} ({semantics}): {formula} = {value} (ln = {:.6}){cn}", value.ln);
    Outcome::ok(json, text)
}

fn cmd_bounds(cmd: BoundsCmd) -> (Common, Result<Outcome>) {
    match cmd {
        BoundsCmd::Acceptance { dim, delta, common } => {
            let r = (|| {
                let d = dim.dim()?;
                Ok(bound_report("acceptance", "exact", "(1−δ)^(d−1)", json!({"d": d, "delta": delta}), None, bounds::acceptance_haar(d, delta)?))
            })();
            (common, r)
        }
        BoundsCmd::Tail { dim, delta, k, consts, common } => {
            let r = (|| {
                let d = dim.dim()?;
                let cs = constants(&consts)?;
                let mut out = bound_report("tail", "upper bound", "k!/(δd)^k", json!({"d": d, "delta": delta, "k": k}), Some(&cs), bounds::acceptance_kdesign_bound(d, delta, k)?);
                let simple = bounds::acceptance_kdesign_simplified(d, delta, k, &cs)?;
                out.json["simplified"] = json!({"formula": "(c_tail·k/(δd))^k", "ln": simple.ln, "value": simple.value()});
                Ok(out)
            })();
            (common, r)
        }
        BoundsCmd::Packing { dim, k, delta, consts, common } => {
            let r = (|| {
                let d = dim.dim()?;
                let cs = constants(&consts)?;
                let mut out = bound_report("packing", "lower bound", "c_δ·C(d+k−2, k)", json!({"d": d, "k": k, "delta": delta}), Some(&cs), bounds::packing_log(d, k, delta, &cs)?);
                out.json["notes"] = json!(["c_delta has no known closed form; default 1"]);
                Ok(out)
            })();
            (common, r)
        }
        BoundsCmd::Covering { n, s, eps, consts, common } => {
            let r = (|| {
                let cs = constants(&consts)?;
                Ok(bound_report("covering", "upper bound", "(C·n²·s/ε)^(κ·s)", json!({"n": n, "s": s, "eps": eps}), Some(&cs), bounds::covering_log(n, s, eps, &cs)?))
            })();
            (common, r)
        }
        BoundsCmd::Compression { n, k, s, eps, delta, consts, common } => {
            let r = (|| {
                let cs = constants(&consts)?;
                let b = bounds::compression_probability_bound(n, k, s, eps, delta, &cs)?;
                let mut out = bound_report("compression", "upper bound", "(C·n²·s/ε)^(κ·s) / (c_δ·C(d+k−2, k)) + O(ε)", json!({"n": n, "k": k, "s": s, "eps": eps, "delta": delta}), Some(&cs), b.log_bound);
                out.json["additive"] = json!(b.additive);
                out.json["crossover_s"] = json!(bounds::compression_crossover(n, k, eps, delta, &cs)?);
                Ok(out)
            })();
            (common, r)
        }
        BoundsCmd::Lb { n, k, regime, consts, common } => {
            let r = (|| {
                let cs = constants(&consts)?;
                let k_used = k.unwrap_or_else(|| bounds::log_n_design_order(n));
                let (reg, formula) = match regime {
                    LbRegime::Design => (Regime::Design, "⌊α_lb·kn/ln(kn)⌋"),
                    LbRegime::Haar => (Regime::Haar, "⌊c₄·4ⁿ⌋"),
                };
                let b = bounds::gate_count_lower_bound(n, k_used, reg, &cs)?;
                let mut out = bound_report("gate-count", "lower bound", formula, json!({"n": n, "k": k_used, "k_is_log2_n": k.is_none()}), Some(&cs), b.log_s_star);
                out.json["s_star"] = json!(b.s_star);
                out.json["regime"] = json!(b.regime);
                Ok(out)
            })();
            (common, r)
        }
        BoundsCmd::Fidelity { delta, eps_add, common } => {
            let r = (|| {
                let f = bounds::peak_to_fidelity(delta, eps_add)?;
                let json = json!({"bound": "fidelity", "semantics": "lower bound", "formula": "(√(δ(δ−ε)) − √((1−δ)(1−δ+ε)))²",
                    "inputs": {"delta": delta, "eps_add": eps_add}, "f_min": f.f_min, "relaxation": f.relaxation, "relaxation_holds": f.holds});
                Ok(Outcome::ok(json, format!("F_min = {:.12}; 1 − F_min ≤ {:.6} ({})", f.f_min, f.relaxation, if f.holds { "holds" } else { "violated" })))
            })();
            (common, r)
        }
        BoundsCmd::Plan { goal, n, p_max, eta, r, eps, alpha, t, delta_chernoff, common } => {
            let res = (|| {
                let g: Goal = goal.parse()?;
                let p = PlanParams { n, p_max, r, eps, alpha, eta, t, delta_chernoff };
                let plan = noise::plan_samples(g, &p)?;
                let text = format!("N = {} ({} with constant {}){}", plan.shots, plan.formula, plan.constant, plan.t_radius.map(|t| format!(", radius t = {t}")).unwrap_or_default());
                Ok(Outcome::ok(json!({"plan": plan, "params": p}), text))
            })();
            (common, res)
        }
    }
}
