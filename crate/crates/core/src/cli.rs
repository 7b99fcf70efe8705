//! Command-line surface: argument parsing, command drivers and report
//! rendering. Every command returns an [`Outcome`]; [`run`] prints it and maps
//! it to an exit code.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::activations::builtin;
use crate::approx::{swap_audit, Sampler};
use crate::bounds::{
    breakpoint_upper_bound, corollary1_bound, corollary2_bound, lemma1_check, theorem1_lower_bound,
    theorem2_bound, BoundConfig,
};
use crate::error::{arg, Error, Result};
use crate::netgraph::{random_network, Network, RandomNetSpec, Segment};
use crate::report::AuditReport;
use crate::restriction::restrict;
use crate::targets::catalog;

/// First line of every campaign CSV.
pub const CSV_VERSION_LINE: &str = "# expressivity-auditor v1";
pub const CSV_COLUMNS: [&str; 17] = [
    "trial", "seed", "activation", "n", "d_f", "omega_f", "h", "b", "n_total", "bound", "l1", "l2", "l3",
    "l4", "l5", "l6", "sandwich",
];
/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "EXPR_AUDIT_THREADS";

/// Reference multipliers for the catalog targets, echoed next to computed
/// values.
const REFERENCE_VALUES: [(&str, Theorem, f64); 3] = [
    ("poly_g2", Theorem::One, 1.37),
    ("poly_a", Theorem::Two, 0.82),
    ("poly_g1", Theorem::Two, 0.737),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Input = 1,
    Violation = 2,
}

/// Result of one command: a JSON document, its human-readable rendering and
/// the exit status.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub value: Value,
    pub text: String,
    pub exit: Exit,
}

#[derive(Debug, Parser)]
#[command(name = "expr-audit", version, about = "Break-point counts and approximation bounds for piecewise-linear networks")]
pub struct Cli {
    /// Print a single JSON object instead of a table.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Theorem {
    #[value(name = "1")]
    #[serde(rename = "1")]
    One,
    #[value(name = "2")]
    #[serde(rename = "2")]
    Two,
    #[value(name = "cor1")]
    #[serde(rename = "cor1")]
    Cor1,
    #[value(name = "cor2")]
    #[serde(rename = "cor2")]
    Cor2,
    #[value(name = "weak")]
    #[serde(rename = "weak")]
    Weak,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Depth, width and break-point bound of a network.
    Analyze {
        /// Network JSON file.
        #[arg(long)]
        net: PathBuf,
        /// Activation piece count; defaults to the network's largest.
        #[arg(long)]
        t: Option<usize>,
    },
    /// Exact break points and transitions along a segment.
    Breakpoints {
        /// Network JSON file.
        #[arg(long)]
        net: PathBuf,
        /// Comma-separated start point.
        #[arg(long, allow_hyphen_values = true)]
        from: String,
        /// Comma-separated end point.
        #[arg(long, allow_hyphen_values = true)]
        to: String,
    },
    /// Random-network campaign over the upper bound and transition lemmas.
    Verify {
        /// Campaign JSON file.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV destination; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lower bounds on pieces and hidden units for a catalog target.
    LowerBound {
        /// sq_norm, poly_a, poly_g1 or poly_g2.
        #[arg(long)]
        target: String,
        /// Input dimension (sq_norm only).
        #[arg(long)]
        n: Option<usize>,
        /// Target sup error.
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 2)]
        t: usize,
        #[arg(long, value_enum)]
        theorem: Theorem,
        /// Network depth (cor2).
        #[arg(long)]
        depth: Option<usize>,
        /// Laplacian grid points per axis (theorem 2).
        #[arg(long, default_value_t = 101)]
        grid: usize,
        #[arg(long, default_value_t = 256)]
        pair_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Output error after swapping every hidden activation.
    Swap {
        /// Network JSON file.
        #[arg(long)]
        net: PathBuf,
        /// Activation in the network, e.g. sigmoid.
        #[arg(long)]
        act1: String,
        /// Replacement, e.g. sigmoid-q(32).
        #[arg(long)]
        act2: String,
        /// Bound on the absolute weights.
        #[arg(long = "A")]
        a: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Parses `"0.5,-1,2e-3"`.
pub fn parse_point(s: &str) -> Result<Vec<f64>> {
    let v = s
        .split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse(format!("`{t}` is not a finite number")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(v)
}

pub fn load_network(path: &Path) -> Result<Network> {
    let s = std::fs::read_to_string(path)?;
    Network::from_json(&s)
}

fn verdict_word(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

fn exit_for(ok: bool) -> Exit {
    if ok {
        Exit::Ok
    } else {
        Exit::Violation
    }
}

pub fn analyze(net: &Network, t: Option<usize>) -> Result<Outcome> {
    let p = net.depth_profile()?;
    let t = match t {
        Some(t) => t,
        None => net
            .max_pieces()
            .ok_or_else(|| arg("--t is required when some activation is not piecewise linear"))?,
    };
    let h = p.hidden_count();
    let bound = breakpoint_upper_bound(t, p.omega, p.depth)?;
    let l1 = lemma1_check(t, p.depth, h)?;
    let value = json!({
        "command": "analyze",
        "d_f": p.depth,
        "omega_f": p.omega.to_string(),
        "omega_f_value": p.omega_f64(),
        "widths": p.widths,
        "hidden_units": h,
        "t": t,
        "bound": bound,
        "lemma1": l1,
    });
    let mut text = String::new();
    let _ = writeln!(text, "depth d_f        {}", p.depth);
    let _ = writeln!(text, "width omega_f    {} ({:.6})", p.omega, p.omega_f64());
    let _ = writeln!(text, "layer widths     {:?}", p.widths);
    let _ = writeln!(text, "hidden units     {h}");
    let _ = writeln!(text, "pieces t         {t}");
    let exact = bound.exact.as_deref().map(|e| format!(" = {e}")).unwrap_or_default();
    let _ = writeln!(text, "break-point bound {}{exact}{}", bound.value, if bound.overflow { " (overflow)" } else { "" });
    let _ = writeln!(text, "{l1}");
    Ok(Outcome { value, text, exit: exit_for(l1.passed()) })
}

pub fn breakpoints(net: &Network, seg: &Segment) -> Result<Outcome> {
    let r = restrict(net, seg)?;
    let s = r.sandwich();
    let lemmas = r.lemma_audit();
    let lemmas_ok = lemmas.iter().all(AuditReport::passed);
    let ok = s.holds() && lemmas_ok;
    let value = json!({
        "command": "breakpoints",
        "segment": seg,
        "b": s.break_points,
        "break_points": r.output().breakpoints(),
        "n_total": s.transitions,
        "bound": s.bound,
        "sandwich": verdict_word(s.holds()),
        "lemmas": lemmas,
    });
    let mut text = String::new();
    let _ = writeln!(text, "break points B   {}", s.break_points);
    let _ = writeln!(text, "at alpha         {:?}", r.output().breakpoints());
    let _ = writeln!(text, "transitions N    {}", s.transitions);
    let _ = writeln!(text, "upper bound      {}", s.bound);
    let _ = writeln!(text, "sandwich         {}", verdict_word(s.holds()));
    let failed = lemmas.iter().filter(|l| l.failed()).count();
    let _ = writeln!(text, "lemma audits     {} checked, {failed} failed", lemmas.len());
    for l in lemmas.iter().filter(|l| l.failed()) {
        let _ = writeln!(text, "  {l}");
    }
    Ok(Outcome { value, text, exit: exit_for(ok) })
}

/// Random-network campaign parameters, read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    /// Activation names; each trial picks one uniformly.
    #[serde(default = "default_activations")]
    pub activations: Vec<String>,
    /// Input dimensions; each trial picks one uniformly.
    #[serde(default = "default_inputs")]
    pub n_inputs: Vec<usize>,
    /// Depth is uniform in `1..=max_depth`.
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    #[serde(default = "default_width")]
    pub max_width: usize,
    #[serde(default = "default_skip")]
    pub skip_prob: f64,
    #[serde(default = "default_weight")]
    pub weight_range: f64,
    /// Segment endpoints are uniform in this interval on every axis.
    #[serde(default = "default_segment")]
    pub segment_range: (f64, f64),
}

fn default_activations() -> Vec<String> {
    vec!["relu".into()]
}
fn default_inputs() -> Vec<usize> {
    vec![1, 2, 3]
}
fn default_depth() -> usize {
    4
}
fn default_width() -> usize {
    5
}
fn default_skip() -> f64 {
    0.3
}
fn default_weight() -> f64 {
    1.0
}
fn default_segment() -> (f64, f64) {
    (-2.0, 2.0)
}

impl Default for CampaignSpec {
    fn default() -> Self {
        Self {
            activations: default_activations(),
            n_inputs: default_inputs(),
            max_depth: default_depth(),
            max_width: default_width(),
            skip_prob: default_skip(),
            weight_range: default_weight(),
            segment_range: default_segment(),
        }
    }
}

impl CampaignSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.activations.is_empty() || self.n_inputs.is_empty() {
            return Err(arg("campaign needs at least one activation and one input dimension"));
        }
        for a in &self.activations {
            if builtin(a)?.as_pwl().is_none() {
                return Err(arg(format!("campaign activation `{a}` is not piecewise linear")));
            }
        }
        if self.n_inputs.contains(&0) || self.max_depth == 0 || self.max_width == 0 {
            return Err(arg("n_inputs, max_depth and max_width must be positive"));
        }
        let (lo, hi) = self.segment_range;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(arg("segment_range must be a finite interval with lo < hi"));
        }
        Ok(())
    }
}

/// Seed of trial `trial`: first output of the master stream number `trial`.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial);
    rng.next_u64()
}

/// One campaign row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub seed: u64,
    pub activation: String,
    pub n: usize,
    pub d_f: usize,
    pub omega_f: String,
    pub h: usize,
    pub b: usize,
    pub n_total: usize,
    pub bound: f64,
    /// Lemma 1 through 6 verdicts.
    pub lemmas: [bool; 6],
    pub sandwich: bool,
    /// Failed lemma reports, for diagnostics.
    pub failures: Vec<AuditReport>,
}

impl TrialRecord {
    pub fn ok(&self) -> bool {
        self.sandwich && self.lemmas.iter().all(|&l| l)
    }

    fn csv_row(&self) -> Vec<String> {
        let mut row = vec![
            self.trial.to_string(),
            self.seed.to_string(),
            self.activation.clone(),
            self.n.to_string(),
            self.d_f.to_string(),
            self.omega_f.clone(),
            self.h.to_string(),
            self.b.to_string(),
            self.n_total.to_string(),
            self.bound.to_string(),
        ];
        row.extend(self.lemmas.iter().map(|&l| verdict_word(l).to_string()));
        row.push(verdict_word(self.sandwich).to_string());
        row
    }
}

/// Network and segment of one trial.
pub fn trial_instance(spec: &CampaignSpec, seed: u64) -> Result<(Network, Segment)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let activation = spec.activations[rng.gen_range(0..spec.activations.len())].clone();
    let n = spec.n_inputs[rng.gen_range(0..spec.n_inputs.len())];
    let depth = rng.gen_range(1..=spec.max_depth);
    let net = random_network(&RandomNetSpec {
        n_inputs: n,
        depth,
        widths: None,
        max_width: Some(spec.max_width),
        skip_prob: spec.skip_prob,
        weight_range: spec.weight_range,
        activation,
        seed: rng.next_u64(),
    })?;
    let (lo, hi) = spec.segment_range;
    loop {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
        if x != y {
            return Ok((net, Segment::new(x, y)?));
        }
    }
}

pub fn run_trial(spec: &CampaignSpec, trial: u64, seed: u64) -> Result<TrialRecord> {
    let (net, seg) = trial_instance(spec, seed)?;
    let r = restrict(&net, &seg)?;
    let p = r.profile();
    let s = r.sandwich();
    let l1 = lemma1_check(r.t(), p.depth, p.hidden_count())?;
    let audits = r.lemma_audit();
    let mut lemmas = [l1.passed(), true, true, true, true, true];
    let mut failures: Vec<AuditReport> = Vec::new();
    if l1.failed() {
        failures.push(l1);
    }
    for a in audits {
        let idx = match a.kind.as_str() {
            "lemma2" => 1,
            "lemma3" => 2,
            "lemma4" => 3,
            "lemma5" => 4,
            _ => 5,
        };
        if a.failed() {
            lemmas[idx] = false;
            failures.push(a);
        }
    }
    Ok(TrialRecord {
        trial,
        seed,
        activation: net.units()[0].activation.name(),
        n: net.n_inputs(),
        d_f: p.depth,
        omega_f: p.omega.to_string(),
        h: p.hidden_count(),
        b: s.break_points,
        n_total: s.transitions,
        bound: s.bound,
        lemmas,
        sandwich: s.holds(),
        failures,
    })
}

/// Runs `trials` independent trials in parallel; records come back in trial
/// order.
pub fn run_campaign(spec: &CampaignSpec, trials: u64, master_seed: u64) -> Result<Vec<TrialRecord>> {
    spec.validate()?;
    (0..trials)
        .into_par_iter()
        .map(|i| run_trial(spec, i, trial_seed(master_seed, i)))
        .collect()
}

pub fn write_campaign_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut out = out;
    writeln!(out, "{CSV_VERSION_LINE}")?;
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(CSV_COLUMNS).map_err(io)?;
    for r in records {
        w.write_record(r.csv_row()).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn verify_summary(records: &[TrialRecord], seed: u64) -> Outcome {
    let violations = records.iter().filter(|r| !r.ok()).count();
    let mut by_check = serde_json::Map::new();
    by_check.insert("sandwich".into(), json!(records.iter().filter(|r| !r.sandwich).count()));
    for k in 0..6 {
        by_check.insert(format!("l{}", k + 1), json!(records.iter().filter(|r| !r.lemmas[k]).count()));
    }
    let value = json!({
        "command": "verify",
        "trials": records.len(),
        "seed": seed,
        "violations": violations,
        "failures": by_check,
    });
    let mut text = format!("trials {}  violations {violations}\n", records.len());
    for r in records.iter().filter(|r| !r.ok()) {
        let _ = writeln!(text, "trial {} (seed {}) failed", r.trial, r.seed);
        for f in &r.failures {
            let _ = writeln!(text, "  {f}");
        }
    }
    Outcome { value, text, exit: exit_for(violations == 0) }
}

/// Arguments of the lower-bound command.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerBoundRequest {
    pub target: String,
    pub n: Option<usize>,
    pub epsilon: f64,
    pub t: usize,
    pub theorem: Theorem,
    pub depth: Option<usize>,
    pub grid: usize,
    pub pair_samples: usize,
    pub seed: u64,
}

impl LowerBoundRequest {
    pub fn new(target: &str, theorem: Theorem, epsilon: f64) -> Self {
        Self {
            target: target.to_string(),
            n: None,
            epsilon,
            t: 2,
            theorem,
            depth: None,
            grid: 101,
            pair_samples: 256,
            seed: 0,
        }
    }
}

pub fn lower_bound(req: &LowerBoundRequest) -> Result<Outcome> {
    let g = catalog(&req.target, req.n)?;
    if !(req.epsilon > 0.0 && req.epsilon.is_finite()) {
        return Err(arg(format!("epsilon must be positive, got {}", req.epsilon)));
    }
    let cfg = BoundConfig {
        pair_samples: req.pair_samples,
        epsilon: req.epsilon,
        t: req.t,
        seed: req.seed,
        ..BoundConfig::default()
    };
    let mut value = json!({
        "command": "lower-bound",
        "target": g.name(),
        "n": g.n(),
        "theorem": req.theorem,
        "epsilon": req.epsilon,
        "t": req.t,
    });
    let obj = value.as_object_mut().expect("object literal");
    let mut text = String::new();
    match req.theorem {
        Theorem::One | Theorem::Weak => {
            let r = theorem1_lower_bound(&g, &cfg)?;
            obj.insert("multiplier".into(), json!(r.value));
            obj.insert("pieces_lb".into(), json!(r.pieces_lb));
            obj.insert("hidden_units_lb".into(), json!(r.hidden_units_lb));
            obj.insert("best_pair".into(), json!(r.best_pair));
            obj.insert("pairs_evaluated".into(), json!(r.pairs_evaluated));
            obj.insert("verdict".into(), json!("estimate"));
            obj.insert("provenance".into(), json!(cfg.provenance()));
            let _ = writeln!(text, "multiplier       {} / sqrt(eps)", r.value);
            let _ = writeln!(text, "linear pieces >= {}", r.pieces_lb);
            if let Some(h) = r.hidden_units_lb {
                let _ = writeln!(text, "hidden units >=  {h}");
            }
            let _ = writeln!(text, "best pair        {:?} -> {:?}", r.best_pair.0, r.best_pair.1);
            let _ = writeln!(text, "search           {}", cfg.provenance());
        }
        Theorem::Two => {
            let r = theorem2_bound(&g, req.epsilon, req.t, req.grid)?;
            obj.insert("multiplier".into(), json!(r.multiplier));
            obj.insert("pieces_lb".into(), json!(r.pieces_lb));
            obj.insert("hidden_units_lb".into(), json!(r.hidden_units_lb));
            obj.insert("max_abs_laplacian".into(), json!(r.max_abs_laplacian));
            obj.insert("argmax".into(), json!(r.argmax));
            obj.insert("third_bound".into(), json!(g.third_bound()));
            obj.insert("verdict".into(), json!("estimate"));
            obj.insert("provenance".into(), json!(format!("grid_per_axis={}", r.grid_per_axis)));
            let _ = writeln!(text, "multiplier       {} / sqrt(eps)", r.multiplier);
            let _ = writeln!(text, "max |laplacian|  {} at {:?}", r.max_abs_laplacian, r.argmax);
            let _ = writeln!(text, "linear pieces >= {}", r.pieces_lb);
            if let Some(h) = r.hidden_units_lb {
                let _ = writeln!(text, "hidden units >=  {h}");
            }
        }
        Theorem::Cor1 => {
            let mu = g
                .mu()
                .ok_or_else(|| Error::Precondition(format!("target `{}` is not strongly convex", g.name())))?;
            let h = corollary1_bound(mu, g.diameter(), req.epsilon, req.t)?;
            obj.insert("mu".into(), json!(mu));
            obj.insert("diameter".into(), json!(g.diameter()));
            obj.insert("multiplier".into(), json!(mu.sqrt() * g.diameter() / 4.0));
            obj.insert("hidden_units_lb".into(), json!(h));
            let _ = writeln!(text, "mu               {mu}");
            let _ = writeln!(text, "diameter         {}", g.diameter());
            let _ = writeln!(text, "hidden units >=  {h}");
        }
        Theorem::Cor2 => {
            let d = req.depth.ok_or_else(|| arg("--depth is required for cor2"))?;
            let r = corollary2_bound(&g, d, req.epsilon, &cfg)?;
            obj.insert("depth".into(), json!(d));
            obj.insert("c".into(), json!(r.c));
            obj.insert("q".into(), json!(r.q));
            obj.insert("hidden_units_lb".into(), json!(r.value));
            obj.insert("verdict".into(), json!("estimate"));
            obj.insert("provenance".into(), json!(cfg.provenance()));
            let _ = writeln!(text, "c(g)             {}", r.c);
            let _ = writeln!(text, "q(g)             {}", r.q);
            let _ = writeln!(text, "hidden units >=  {}", r.value);
        }
    }
    let theorem_key = if req.theorem == Theorem::Weak { Theorem::One } else { req.theorem };
    if let Some(&(_, _, reference)) = REFERENCE_VALUES
        .iter()
        .find(|(name, th, _)| *name == g.name() && *th == theorem_key)
    {
        obj.insert("reference_value".into(), json!(reference));
        let _ = writeln!(text, "reference value  {reference} / sqrt(eps)");
    }
    Ok(Outcome { value, text, exit: Exit::Ok })
}

pub fn swap(net: &Network, act1: &str, act2: &str, a: f64, samples: usize, seed: u64) -> Result<Outcome> {
    let s1 = builtin(act1)?;
    let s2 = builtin(act2)?;
    if samples == 0 {
        return Err(arg("--samples must be positive"));
    }
    let r = swap_audit(net, &s1, &s2, a, Sampler::MonteCarlo { samples, seed })?;
    let ok = r.margin >= 0.0;
    let value = json!({
        "command": "swap",
        "act1": act1,
        "act2": act2,
        "A": a,
        "seed": seed,
        "audit": r,
        "verdict": verdict_word(ok),
    });
    let mut text = String::new();
    let _ = writeln!(text, "empirical sup    {:e}", r.empirical_sup);
    let _ = writeln!(text, "bound            {:e}", r.bound);
    let _ = writeln!(text, "margin           {:e}", r.margin);
    let _ = writeln!(text, "activation gap   {:e}", r.gap);
    let _ = writeln!(text, "samples          {}", r.samples);
    let _ = writeln!(text, "verdict          {}", verdict_word(ok));
    Ok(Outcome { value, text, exit: exit_for(ok) })
}

fn execute(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Analyze { net, t } => analyze(&load_network(net)?, *t),
        Command::Breakpoints { net, from, to } => {
            let net = load_network(net)?;
            breakpoints(&net, &Segment::new(parse_point(from)?, parse_point(to)?)?)
        }
        Command::Verify { spec, trials, seed, out } => {
            let spec = CampaignSpec::from_json(&std::fs::read_to_string(spec)?)?;
            let records = run_campaign(&spec, *trials as u64, *seed)?;
            let mut summary = verify_summary(&records, *seed);
            match out {
                Some(path) => {
                    write_campaign_csv(&records, std::fs::File::create(path)?)?;
                    summary.value["csv"] = json!(path.display().to_string());
                }
                None => {
                    let mut buf = Vec::new();
                    write_campaign_csv(&records, &mut buf)?;
                    summary.text.insert_str(0, &String::from_utf8_lossy(&buf));
                }
            }
            Ok(summary)
        }
        Command::LowerBound { target, n, epsilon, t, theorem, depth, grid, pair_samples, seed } => {
            lower_bound(&LowerBoundRequest {
                target: target.clone(),
                n: *n,
                epsilon: *epsilon,
                t: *t,
                theorem: *theorem,
                depth: *depth,
                grid: *grid,
                pair_samples: *pair_samples,
                seed: *seed,
            })
        }
        Command::Swap { net, act1, act2, a, samples, seed } => {
            swap(&load_network(net)?, act1, act2, *a, *samples, *seed)
        }
    }
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n >= 1)
}

/// Parses `args`, runs the command and writes its report; returns the exit
/// code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    Exit::Ok
                }
                _ => {
                    let _ = write!(err, "{e}");
                    Exit::Input
                }
            };
            return code as i32;
        }
    };
    let result = match thread_cap() {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(arg(format!("cannot build thread pool: {e}"))),
        },
        None => execute(&cli),
    };
    match result {
        Ok(o) => {
            let _ = if cli.json {
                writeln!(out, "{}", serde_json::to_string_pretty(&o.value).unwrap_or_default())
            } else {
                write!(out, "{}", o.text)
            };
            o.exit as i32
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            Exit::Input as i32
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_parse() {
        assert_eq!(parse_point("0.5, -1,2e-3").unwrap(), vec![0.5, -1.0, 0.002]);
        assert!(parse_point("1,,2").is_err());
        assert!(parse_point("nan").is_err());
    }

    #[test]
    fn trial_seeds_are_distinct_and_stable() {
        let a: Vec<u64> = (0..50).map(|i| trial_seed(42, i)).collect();
        let b: Vec<u64> = (0..50).map(|i| trial_seed(42, i)).collect();
        assert_eq!(a, b);
        let mut s = a.clone();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 50);
        assert_ne!(trial_seed(42, 0), trial_seed(43, 0));
    }

    #[test]
    fn campaign_spec_defaults_and_rejections() {
        let s = CampaignSpec::from_json("{}").unwrap();
        assert_eq!(s, CampaignSpec::default());
        assert!(CampaignSpec::from_json(r#"{"activations": ["sigmoid"]}"#).is_err());
        assert!(CampaignSpec::from_json(r#"{"max_depht": 3}"#).is_err());
        assert!(CampaignSpec::from_json(r#"{"segment_range": [1, 1]}"#).is_err());
    }

    #[test]
    fn violations_exit_2() {
        let spec = CampaignSpec::default();
        let mut recs = run_campaign(&spec, 3, 9).unwrap();
        assert_eq!(verify_summary(&recs, 9).exit, Exit::Ok);
        recs[1].lemmas[3] = false;
        let out = verify_summary(&recs, 9);
        assert_eq!(out.exit, Exit::Violation);
        assert_eq!(out.value["violations"], 1);
        assert_eq!(out.value["failures"]["l4"], 1);
        assert!(out.text.contains("trial 1"));
    }

    #[test]
    fn empty_campaign() {
        let recs = run_campaign(&CampaignSpec::default(), 0, 1).unwrap();
        let mut buf = Vec::new();
        write_campaign_csv(&recs, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, format!("{CSV_VERSION_LINE}\n{}\n", CSV_COLUMNS.join(",")));
        assert_eq!(verify_summary(&recs, 1).exit, Exit::Ok);
    }

    #[test]
    fn reference_values_attach() {
        let o = lower_bound(&LowerBoundRequest::new("poly_a", Theorem::Two, 1e-4)).unwrap();
        assert_eq!(o.value["reference_value"], json!(0.82));
        let o = lower_bound(&LowerBoundRequest::new("sq_norm", Theorem::Cor1, 1e-4)).unwrap();
        assert!(o.value.get("reference_value").is_none());
        assert!((o.value["hidden_units_lb"].as_f64().unwrap() - 5.643856189774724).abs() < 1e-12);
    }

    #[test]
    fn invalid_combinations() {
        assert!(lower_bound(&LowerBoundRequest::new("poly_g1", Theorem::Cor2, 1e-4)).is_err());
        assert!(lower_bound(&LowerBoundRequest::new("poly_g1", Theorem::Cor1, 1e-4)).is_err());
        assert!(lower_bound(&LowerBoundRequest::new("sq_norm", Theorem::Cor2, 1e-4)).is_err());
        assert!(lower_bound(&LowerBoundRequest::new("nope", Theorem::One, 1e-4)).is_err());
    }
}
