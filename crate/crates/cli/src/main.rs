//! `selfcontract` command-line driver.
//!
//! Exit codes: 0 success or valid, 1 semantic failure (not self-contracted,
//! uncertifiable, invalid certificate), 2 input error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use selfcontract::certify::{certify_easycase, check_certificate, Certificate, GeneralSetup};
use selfcontract::experiments::{self, ExperimentId};
use selfcontract::generators::{
    adversarial_ratio, descent_trace, greedy_random, harmonic_staircase, ratio, square_path, FunctionSpec, StepRule,
};
use selfcontract::io;
use selfcontract::norms::Gauge;
use selfcontract::partition::{build_partition, compute_constants, estimate_all};
use selfcontract::polyline::{is_self_contracted, length, SelfContracted};
use selfcontract::Error;

#[derive(Parser)]
#[command(name = "selfcontract", version, about = "Self-contracted polylines: checks, certificates and experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum CertMode {
    Easy,
    General,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Square,
    Harmonic,
    Greedy,
    Adversarial,
    Descent,
}

#[derive(Subcommand)]
enum Cmd {
    /// Is the polyline self-contracted under the gauge? Exit 0 iff yes.
    Check {
        #[arg(long)]
        poly: PathBuf,
        #[arg(long)]
        gauge: PathBuf,
    },
    /// Build a length certificate, write it as JSON and re-check it.
    Certify {
        #[arg(long)]
        poly: PathBuf,
        #[arg(long)]
        gauge: PathBuf,
        /// Frozen constants of the cylinder over the gauge (general mode).
        #[arg(long)]
        constants: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "general")]
        mode: CertMode,
        /// Output directory for certificate.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Relative tolerance of the re-check.
        #[arg(long, default_value_t = selfcontract::certify::DEFAULT_TOL)]
        tol: f64,
        /// Sample budget for constant estimation when no constants file is given.
        #[arg(long, default_value_t = 2000)]
        budget: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Recursion depth before windows fall back to their measured ratio.
        #[arg(long)]
        max_depth: Option<usize>,
    },
    /// Re-check a certificate file. Exit 0 iff every step holds.
    Verify {
        #[arg(long)]
        cert: PathBuf,
        #[arg(long, default_value_t = selfcontract::certify::DEFAULT_TOL)]
        tol: f64,
    },
    /// Write a polyline file (CSV with a provenance header).
    Generate {
        #[arg(long, value_enum)]
        kind: GenKind,
        #[arg(long)]
        gauge: Option<PathBuf>,
        /// Dimension of the harmonic staircase.
        #[arg(long)]
        n: Option<usize>,
        /// Number of points.
        #[arg(long, default_value_t = 10)]
        r: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        budget: usize,
        /// Objective JSON for descent traces.
        #[arg(long)]
        function: Option<PathBuf>,
        /// Comma-separated start point for descent traces.
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        /// Fixed step size; exact line search when omitted.
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Boundary partition of the gauge sphere as JSON.
    Partition {
        #[arg(long)]
        gauge: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the angle constants and write them as JSON. By default the
    /// constants are for the cylinder over the gauge, as general certificates need.
    Estimate {
        #[arg(long)]
        gauge: PathBuf,
        #[arg(long, default_value_t = 2000)]
        budget: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Estimate for the gauge itself instead of its cylinder.
        #[arg(long)]
        base: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one of the seeded experiments and write its CSV/SVG files.
    Reproduce {
        /// E1_harmonic_growth, E2_easycase_suite, E3_lemma_validation or E4_adversarial_constants.
        experiment: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

enum Failure {
    Semantic(String),
    Input(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Input(_) => Failure::Input(e.to_string()),
            _ => Failure::Semantic(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Check { poly, gauge } => check(&poly, &gauge),
        Cmd::Certify {
            poly,
            gauge,
            constants,
            mode,
            out,
            tol,
            budget,
            seed,
            max_depth,
        } => certify(&poly, &gauge, constants.as_deref(), mode, &out, tol, budget, seed, max_depth),
        Cmd::Verify { cert, tol } => verify(&cert, tol),
        Cmd::Generate {
            kind,
            gauge,
            n,
            r,
            seed,
            budget,
            function,
            x0,
            eta,
            steps,
            out,
            svg,
        } => generate(GenArgs {
            kind,
            gauge,
            n,
            r,
            seed,
            budget,
            function,
            x0,
            eta,
            steps,
            out,
            svg,
        }),
        Cmd::Partition { gauge, delta, out } => partition(&gauge, delta, out.as_deref()),
        Cmd::Estimate {
            gauge,
            budget,
            seed,
            base,
            out,
        } => estimate(&gauge, budget, seed, base, out.as_deref()),
        Cmd::Reproduce { experiment, seed, out } => reproduce(&experiment, seed, &out),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Semantic(m)) => {
            eprintln!("{m}");
            ExitCode::from(1)
        }
        Err(Failure::Input(m)) => {
            eprintln!("{m}");
            ExitCode::from(2)
        }
    }
}

fn check(poly: &Path, gauge: &Path) -> Outcome {
    let g = io::read_gauge(gauge)?;
    let p = io::read_polyline(poly)?;
    let verdict = is_self_contracted(&p, &g)?;
    let (l, c) = (length(&p), p.chord());
    println!("self_contracted: {}", verdict.holds());
    if let SelfContracted::No { witness } = &verdict {
        println!("witness: ({}, {}, {})", witness.0, witness.1, witness.2);
    }
    println!("length: {l}");
    println!("chord: {c}");
    println!("ratio: {}", ratio(&p));
    match verdict {
        SelfContracted::Yes => Ok(()),
        SelfContracted::No { witness } => Err(Failure::Semantic(format!(
            "not self-contracted, witness (i, j, k) = ({}, {}, {})",
            witness.0, witness.1, witness.2
        ))),
    }
}

#[allow(clippy::too_many_arguments)]
fn certify(
    poly: &Path,
    gauge: &Path,
    constants: Option<&Path>,
    mode: CertMode,
    out: &Path,
    tol: f64,
    budget: usize,
    seed: u64,
    max_depth: Option<usize>,
) -> Outcome {
    let g = io::read_gauge(gauge)?;
    let p = io::read_polyline(poly)?;
    if p.dim() != g.dim() {
        return Err(Failure::Input("polyline and gauge dimensions differ".into()));
    }
    if !(tol > 0.0) {
        return Err(Failure::Input("--tol must be positive".into()));
    }
    let cert = match mode {
        CertMode::Easy => {
            if !g.is_max_norm_plane() {
                return Err(Failure::Input("--mode easy needs the maximum norm of R^2".into()));
            }
            certify_easycase(&p)?
        }
        CertMode::General => {
            let setup = match constants {
                Some(path) => GeneralSetup::from_constants(&g, io::read_constants(path)?)?,
                None => GeneralSetup::new(&g, budget, seed)?,
            };
            setup.certify(&p, max_depth)?
        }
    };
    let path = out.join("certificate.json");
    io::write_file(&path, &cert.to_json()?)?;
    report(&cert, tol, Some(&path))
}

fn report(cert: &Certificate, tol: f64, written: Option<&Path>) -> Outcome {
    let rep = check_certificate(cert, tol);
    if let Some(p) = written {
        println!("certificate: {}", p.display());
    }
    println!("effective_C: {}", cert.root_claim.effective_c);
    println!("length: {}", cert.root_claim.length);
    println!("chord: {}", cert.root_claim.chord);
    println!("steps: {}", rep.steps_checked);
    println!("fallback_rate: {}", cert.fallback_rate());
    println!("partial: {}", cert.stats.partial);
    println!("valid: {}", rep.ok);
    if rep.ok {
        return Ok(());
    }
    for f in &rep.failures {
        eprintln!("step {:?} [{}]: {}", f.path, f.lemma_tag, f.reason);
    }
    Err(Failure::Semantic(format!("{} failing step(s)", rep.failures.len())))
}

fn verify(cert: &Path, tol: f64) -> Outcome {
    let cert = Certificate::from_json(&io::read_to_string(cert)?)?;
    report(&cert, tol, None)
}

struct GenArgs {
    kind: GenKind,
    gauge: Option<PathBuf>,
    n: Option<usize>,
    r: usize,
    seed: u64,
    budget: usize,
    function: Option<PathBuf>,
    x0: Option<String>,
    eta: Option<f64>,
    steps: usize,
    out: Option<PathBuf>,
    svg: Option<PathBuf>,
}

fn need_gauge(a: &GenArgs) -> Result<Gauge, Failure> {
    let path = a.gauge.as_ref().ok_or_else(|| Failure::Input("--gauge is required".into()))?;
    Ok(io::read_gauge(path)?)
}

fn generate(a: GenArgs) -> Outcome {
    let mut prov = vec![("seed", a.seed.to_string())];
    let (poly, gauge) = match a.kind {
        GenKind::Square => {
            prov.push(("generator", "square".into()));
            (square_path(), Gauge::max_norm(2))
        }
        GenKind::Harmonic => {
            let n = a.n.ok_or_else(|| Failure::Input("--n is required".into()))?;
            if n == 0 {
                return Err(Failure::Input("--n must be positive".into()));
            }
            prov.push(("generator", format!("harmonic n={n}")));
            (harmonic_staircase(n), Gauge::euclidean(n))
        }
        GenKind::Greedy => {
            let g = need_gauge(&a)?;
            let outp = greedy_random(&g, g.dim(), a.r, a.seed, 1.0)?;
            prov.push(("generator", format!("greedy r={}", a.r)));
            prov.push(("starved", outp.starved.to_string()));
            (outp.poly, g)
        }
        GenKind::Adversarial => {
            let g = need_gauge(&a)?;
            let (p, rat) = adversarial_ratio(&g, g.dim(), a.r, a.budget, a.seed)?;
            prov.push(("generator", format!("adversarial r={}", a.r)));
            prov.push(("budget", a.budget.to_string()));
            prov.push(("ratio", format!("{rat:?}")));
            (p, g)
        }
        GenKind::Descent => {
            let g = need_gauge(&a)?;
            let fpath = a.function.as_ref().ok_or_else(|| Failure::Input("--function is required".into()))?;
            let f: FunctionSpec = serde_json::from_str(&io::read_to_string(fpath)?)
                .map_err(|e| Failure::Input(format!("function JSON: {e}")))?;
            let x0: Vec<f64> = a
                .x0
                .as_deref()
                .ok_or_else(|| Failure::Input("--x0 is required".into()))?
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| Failure::Input(format!("--x0: {e}")))?;
            let rule = match a.eta {
                Some(eta) => StepRule::Fixed { eta },
                None => StepRule::ExactLineSearch,
            };
            let (p, sc) = descent_trace(&f, &x0, rule, a.steps, &g)?;
            prov.push(("generator", "descent".into()));
            prov.push(("self_contracted", sc.to_string()));
            (p, g)
        }
    };
    prov.push(("gauge_hash", gauge.hash()));
    let text = io::polyline_csv(&poly, &prov);
    match &a.out {
        Some(path) => io::write_file(path, &text)?,
        None => print!("{text}"),
    }
    if let Some(path) = &a.svg {
        io::write_file(path, &io::polyline_svg(&poly, &gauge)?)?;
    }
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(path) => Ok(io::write_file(path, text)?),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn partition(gauge: &Path, delta: f64, out: Option<&Path>) -> Outcome {
    let g = io::read_gauge(gauge)?;
    let part = build_partition(&g, delta)?;
    let patches = match part.count_exact() {
        Some(c) if c <= 100_000 => Some(part.patches()?),
        _ => None,
    };
    let doc = json!({
        "delta": part.delta,
        "count": if part.count.is_finite() { json!(part.count) } else { json!("inf") },
        "gauge": g,
        "patches": patches.map(|ps| ps.into_iter().map(|p| json!({
            "index": p.index.0,
            "normal": p.normal,
            "membership": p.membership,
        })).collect::<Vec<_>>()),
    });
    emit(out, &serde_json::to_string_pretty(&doc).expect("JSON value"))
}

fn estimate(gauge: &Path, budget: usize, seed: u64, base: bool, out: Option<&Path>) -> Outcome {
    let g = io::read_gauge(gauge)?;
    let target = if base { g } else { Gauge::cylinder(g) };
    let est = estimate_all(&target, budget, seed)?;
    let c = compute_constants(&target, target.dim(), &est)?;
    emit(out, &serde_json::to_string_pretty(&c).expect("constants serialize"))
}

fn reproduce(id: &str, seed: u64, out: &Path) -> Outcome {
    let id: ExperimentId = id.parse()?;
    for a in experiments::run(id, seed)? {
        let path = out.join(&a.name);
        io::write_file(&path, &a.contents)?;
        println!("{}", path.display());
    }
    Ok(())
}
