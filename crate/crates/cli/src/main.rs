use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use stopcert_core::linear::{self, PastError, PdbVerdict};
use stopcert_core::poly::{parse_rational, Polynomial, Q};
use stopcert_core::preexp::{preexp_pts, LocPoly};
use stopcert_core::pts::Pts;
use stopcert_core::report::InvariantReport;
use stopcert_core::sim::{self, At, RunConfig, Stop};
use stopcert_core::sos::{self, CertificateInput, SosError, SosOptions, Tolerances};
use stopcert_core::{load_pts_with_params, models};

#[derive(Parser)]
#[command(name = "stopcert", version, about = "Martingale invariants and optional stopping for probabilistic transition systems")]
struct Cli {
    /// Emit machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    /// Override a model parameter, e.g. `--param n=2`.
    #[arg(long = "param", value_name = "NAME=VALUE", global = true)]
    params: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that exactly one transition is enabled in every state.
    Validate {
        model: String,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Pre-expectation of a polynomial, one guarded piece per transition.
    Preexp {
        model: String,
        #[arg(long)]
        poly: String,
        /// Only print pieces leaving this location.
        #[arg(long)]
        loc: Option<String>,
    },
    /// Linear martingale invariants of the deterministic counterpart.
    SynthLinear {
        model: String,
        /// Ranking function used to establish finite expected run-time.
        #[arg(long)]
        past_h: Option<String>,
        #[arg(long = "K", allow_hyphen_values = true)]
        k: Option<String>,
        #[arg(long)]
        eps: Option<String>,
        #[arg(long, default_value = "-1", allow_hyphen_values = true)]
        final_value: String,
    },
    /// Geometric persistence certificate by sum-of-squares programming.
    SynthSos {
        model: String,
        #[arg(long, default_value_t = 2)]
        degree: u32,
        #[arg(long, default_value = "1/1000000")]
        eps: String,
        #[arg(long)]
        homogeneous: bool,
        /// Write the certificate here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the compiled SDP here.
        #[arg(long)]
        dump_sdp: Option<PathBuf>,
    },
    /// Re-run exact verification of a certificate.
    VerifyCertificate {
        model: String,
        cert: PathBuf,
        /// Multiplier degree used when the certificate lists only `V`.
        #[arg(long, default_value_t = 2)]
        degree: u32,
        #[arg(long, default_value_t = 1e-6)]
        tol_res: f64,
        #[arg(long, default_value_t = 1e-8)]
        tol_psd: f64,
    },
    /// Expected run-time bound from a ranking function.
    Past {
        model: String,
        #[arg(long, allow_hyphen_values = true)]
        h: String,
        /// Value of `h` at the final location.
        #[arg(long, default_value = "-1", allow_hyphen_values = true)]
        final_value: String,
        #[arg(long = "K", allow_hyphen_values = true)]
        k: String,
        #[arg(long)]
        eps: String,
        /// Accept `h >= K` without proof.
        #[arg(long)]
        assume_lower_bound: bool,
    },
    /// Monte Carlo estimate of an expectation.
    Simulate {
        model: String,
        #[arg(long, default_value_t = 10_000)]
        runs: u64,
        #[arg(long, default_value_t = 100_000)]
        max_steps: u64,
        #[arg(long, env = "STOPCERT_SEED", default_value_t = 1)]
        seed: u64,
        /// Defaults to the stopping time.
        #[arg(long, allow_hyphen_values = true)]
        expr: Option<String>,
        /// A step index or `stop`.
        #[arg(long, default_value = "stop")]
        at: String,
        /// Stop at the first state where this polynomial is negative
        /// instead of at the final location.
        #[arg(long, allow_hyphen_values = true)]
        stop_negative: Option<String>,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long)]
        exact: bool,
    },
}

/// Outcome of a successful command invocation.
struct Output {
    ok: bool,
    json: Value,
    text: String,
}

impl Output {
    fn new(ok: bool, json: Value, text: impl Into<String>) -> Self {
        Self {
            ok,
            json,
            text: text.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&out.json).expect("serializable"));
            } else {
                print!("{}", out.text);
            }
            if out.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn rational(text: &str, what: &str) -> Result<Q> {
    parse_rational(text).map_err(|e| anyhow!("{what}: {e}"))
}

fn load_model(model: &str, params: &[String]) -> Result<Pts> {
    let overrides = params
        .iter()
        .map(|kv| {
            let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("--param expects NAME=VALUE, got `{kv}`"))?;
            Ok((k.trim().to_string(), rational(v, k)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let text = if Path::new(model).exists() {
        fs::read_to_string(model).with_context(|| format!("reading {model}"))?
    } else if let Some(src) = models::source(model) {
        src.to_string()
    } else {
        bail!("no such file or bundled model: {model}");
    };
    load_pts_with_params(&text, &overrides).with_context(|| format!("loading {model}"))
}

fn state_poly(p: &Pts, text: &str) -> Result<Polynomial> {
    p.parse_state_poly(text).map_err(|e| anyhow!("`{text}`: {e}"))
}

/// `h` everywhere except the final location, which gets a constant.
fn ranking(p: &Pts, h: &str, final_value: &str) -> Result<LocPoly> {
    let mut out = LocPoly::uniform(p, state_poly(p, h)?);
    if let Some(f) = p.final_loc() {
        out.set(f, Polynomial::constant(rational(final_value, "--final-value")?));
    }
    Ok(out)
}

fn run(cli: &Cli) -> Result<Output> {
    let params = &cli.params;
    match &cli.command {
        Command::Validate { model, samples, seed } => {
            let p = load_model(model, params)?;
            validate(&p, *samples, *seed)
        }
        Command::Preexp { model, poly, loc } => {
            let p = load_model(model, params)?;
            preexp(&p, poly, loc.as_deref())
        }
        Command::SynthLinear {
            model,
            past_h,
            k,
            eps,
            final_value,
        } => {
            let p = load_model(model, params)?;
            let past = match (past_h, k, eps) {
                (Some(h), Some(k), Some(e)) => Some((ranking(&p, h, final_value)?, rational(k, "--K")?, rational(e, "--eps")?)),
                (None, None, None) => None,
                _ => bail!("--past-h, --K and --eps go together"),
            };
            synth_linear(&p, past)
        }
        Command::SynthSos {
            model,
            degree,
            eps,
            homogeneous,
            out,
            dump_sdp,
        } => {
            let p = load_model(model, params)?;
            let opts = SosOptions {
                degree: *degree,
                eps: rational(eps, "--eps")?,
                homogeneous: *homogeneous,
                ..SosOptions::default()
            };
            synth_sos(&p, &opts, out.as_deref(), dump_sdp.as_deref())
        }
        Command::VerifyCertificate {
            model,
            cert,
            degree,
            tol_res,
            tol_psd,
        } => {
            let p = load_model(model, params)?;
            let text = fs::read_to_string(cert).with_context(|| format!("reading {}", cert.display()))?;
            let tol = Tolerances {
                psd: *tol_psd,
                res: *tol_res,
                ..Tolerances::default()
            };
            verify(&p, &text, *degree, tol)
        }
        Command::Past {
            model,
            h,
            final_value,
            k,
            eps,
            assume_lower_bound,
        } => {
            let p = load_model(model, params)?;
            let h = ranking(&p, h, final_value)?;
            past(&p, &h, &rational(k, "--K")?, &rational(eps, "--eps")?, *assume_lower_bound)
        }
        Command::Simulate {
            model,
            runs,
            max_steps,
            seed,
            expr,
            at,
            stop_negative,
            workers,
            exact,
        } => {
            let p = load_model(model, params)?;
            let mut cfg = RunConfig::new(*runs, *max_steps, *seed)?.workers(*workers).exact(*exact);
            if let Some(s) = stop_negative {
                cfg = cfg.stop(Stop::Negative(ranking(&p, s, "-1")?));
            }
            let at = match at.as_str() {
                "stop" => At::Stop,
                k => At::Step(k.parse().map_err(|_| anyhow!("--at expects a step index or `stop`, got `{k}`"))?),
            };
            simulate(&p, &cfg, expr.as_deref(), at)
        }
    }
}

fn validate(p: &Pts, samples: usize, seed: u64) -> Result<Output> {
    let report = p.validate_nondemonic(samples, seed);
    let mut text = String::new();
    for l in &report.locations {
        text += &format!("{}: {}\n", l.location, serde_json::to_value(&l.verdict)?["verdict"].as_str().unwrap_or("?"));
    }
    match report.failure() {
        Some(f) => text += &format!("FAIL at {}: {}\n", f.location, serde_json::to_string(&f.verdict)?),
        None => text += "OK\n",
    }
    Ok(Output::new(report.passed(), serde_json::to_value(&report)?, text))
}

fn preexp(p: &Pts, poly: &str, loc: Option<&str>) -> Result<Output> {
    let h = LocPoly::uniform(p, state_poly(p, poly)?);
    let only = loc
        .map(|l| p.location_id(l).ok_or_else(|| anyhow!("unknown location `{l}`")))
        .transpose()?;
    let pw = preexp_pts(p, &h, true);
    let mut pieces = Vec::new();
    let mut text = String::new();
    for pc in pw.pieces.iter().filter(|pc| only.is_none_or(|l| pc.source == l)) {
        let guard = pc.guard.display(p.vars());
        let poly = pc.poly.display(p.vars()).to_string();
        text += &format!("[{}] {} -> {}\n", p.locations()[pc.source], guard, poly);
        pieces.push(json!({
            "transition": pc.transition,
            "location": p.locations()[pc.source],
            "guard": guard,
            "poly": poly,
        }));
    }
    Ok(Output::new(true, json!({ "pieces": pieces }), text))
}

fn report_text(r: &InvariantReport) -> String {
    let mut s = format!("  martingale: {}\n  {}\n", r.martingale, r.statement);
    for a in &r.assumptions {
        s += &format!("  assumes: {a}\n");
    }
    s
}

fn synth_linear(p: &Pts, past: Option<(LocPoly, Q, Q)>) -> Result<Output> {
    let (past_json, past_text) = match &past {
        Some((h, k, eps)) => match linear::past_bound(p, h, k, eps, false) {
            Ok(b) => {
                let t = format!("PAST: E(T) <= {} via h = {}", b.bound, h.display(p));
                (serde_json::to_value(&b)?, t)
            }
            Err(e) => {
                let v = json!({ "error": e.to_string() });
                let out = json!({ "past": v });
                return Ok(Output::new(false, out, format!("PAST check failed: {e}\n")));
            }
        },
        None => (Value::Null, "PAST assumed (not checked)".to_string()),
    };
    let cdts = linear::determinize(p);
    let basis = match linear::synth_linear_invariants(&cdts, p) {
        Ok(b) => b,
        Err(e) => return Ok(Output::new(false, json!({ "error": e.to_string() }), format!("{e}\n"))),
    };
    let mut text = format!("{} invariant(s)\n", basis.elements.len());
    let mut elements = Vec::new();
    for (i, e) in basis.elements.iter().enumerate() {
        let e0 = linear::initial_expectation(p, &e.h);
        let verdict = match &e.pdb {
            PdbVerdict::Bounded { k, k_exact } => {
                format!("bounded, K = {}", k_exact.as_ref().map_or_else(|| k.to_string(), |q| q.to_string()))
            }
            PdbVerdict::UnboundedEvidence { transition, reason } => format!("unbounded (transition {transition}: {reason})"),
            PdbVerdict::Unknown { reason } => format!("unknown ({reason})"),
        };
        text += &format!(
            "h{i} = {}\n  difference bound: {verdict}\n  E h(X0) = {}\n",
            e.h.display(p),
            e0.display(p.vars())
        );
        elements.push(json!({
            "h": e.h.display(p),
            "pdb": e.pdb,
            "initial_expectation": e0.display(p.vars()).to_string(),
        }));
    }
    let reports = linear::invariant_report_linear(p, &basis, &past_text);
    text += &format!("{past_text}\n{} report(s)\n", reports.len());
    for r in &reports {
        text += &report_text(r);
    }
    let out = json!({
        "invariants": elements,
        "trivial": basis.trivial.iter().map(|t| t.display(p)).collect::<Vec<_>>(),
        "past": past_json,
        "reports": reports,
    });
    Ok(Output::new(true, out, text))
}

fn synth_sos(p: &Pts, opts: &SosOptions, out: Option<&Path>, dump_sdp: Option<&Path>) -> Result<Output> {
    if let Some(path) = dump_sdp {
        let sys = sos::build_constraints(p, opts.degree, &opts.eps, opts.homogeneous)?;
        fs::write(path, sos::compile_to_sdp(&sys).to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    let cert = match sos::synth_sos(p, opts) {
        Ok(c) => c,
        Err(e @ (SosError::NotFeasible { .. } | SosError::Rejected(_))) => {
            return Ok(Output::new(false, json!({ "feasible": false, "error": e.to_string() }), format!("{e}\n")));
        }
        Err(e) => return Err(e.into()),
    };
    let cert_text = sos::certificate_to_json(p, &cert);
    if let Some(path) = out {
        fs::write(path, &cert_text).with_context(|| format!("writing {}", path.display()))?;
    }
    let reports = sos::invariant_reports_sos(p, &cert);
    let mut text = format!("feasible, alpha = {}\nV = {}\n", cert.alpha, cert.v_poly().display(p));
    for r in &reports {
        text += &report_text(r);
    }
    if out.is_none() {
        text += &cert_text;
        text += "\n";
    }
    let json = json!({
        "feasible": true,
        "alpha": cert.alpha.to_string(),
        "certificate": serde_json::from_str::<Value>(&cert_text)?,
        "reports": reports,
    });
    Ok(Output::new(true, json, text))
}

fn verify(p: &Pts, text: &str, degree: u32, tol: Tolerances) -> Result<Output> {
    let verification = match sos::certificate_from_json(p, text)? {
        CertificateInput::Full(cert) => sos::verify_certificate(p, &cert, &tol),
        CertificateInput::Polys { eps, v } => {
            let opts = SosOptions {
                degree,
                eps: eps.clone(),
                tol,
                ..SosOptions::default()
            };
            match sos::certificate_for_v(p, &v, &eps, &opts) {
                Ok(c) => c.verification,
                Err(e) => return Ok(Output::new(false, json!({ "passed": false, "error": e.to_string() }), format!("REJECTED: {e}\n"))),
            }
        }
    };
    let text = if verification.passed {
        "VERIFIED\n".to_string()
    } else {
        format!("REJECTED: {}\n", verification.failures.join("; "))
    };
    Ok(Output::new(verification.passed, serde_json::to_value(&verification)?, text))
}

fn past(p: &Pts, h: &LocPoly, k: &Q, eps: &Q, assume: bool) -> Result<Output> {
    match linear::past_bound(p, h, k, eps, assume) {
        Ok(b) => {
            let mut text = format!("E(T) <= {}\n", b.bound);
            for a in &b.assumptions {
                text += &format!("assumes: {a}\n");
            }
            Ok(Output::new(true, serde_json::to_value(&b)?, text))
        }
        Err(e @ (PastError::BadConstants | PastError::NoFinal)) => Err(e.into()),
        Err(e) => Ok(Output::new(false, json!({ "error": e.to_string() }), format!("FAIL: {e}\n"))),
    }
}

fn simulate(p: &Pts, cfg: &RunConfig, expr: Option<&str>, at: At) -> Result<Output> {
    let est = match expr {
        Some(e) => {
            let e = LocPoly::uniform(p, state_poly(p, e)?);
            sim::estimate_expectation(p, cfg, &e, at)?
        }
        None if at == At::Stop => sim::estimate_stopping_time(p, cfg)?,
        None => bail!("--expr is required with --at <k>"),
    };
    let text = format!(
        "mean = {} +/- {} ({} runs, {:.4} truncated{})\n",
        est.mean,
        est.stderr,
        est.runs,
        est.truncated_fraction,
        if est.reliable { "" } else { ", UNRELIABLE" }
    );
    Ok(Output::new(true, serde_json::to_value(est)?, text))
}
