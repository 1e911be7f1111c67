mod manifest;

use clap::{Args, Parser, Subcommand};
use hopfmin_core as core;
use hopfmin_core::{
    cracks, domain, energy, hopf, mesh, minimizer, refmaps, trajectories, AnnulusSpec, DomainSpec,
};
use manifest::RunManifest;
use num_complex::Complex64;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

const EXIT_OK: i32 = 0;
const EXIT_USAGE: i32 = 1;
const EXIT_NUMERIC: i32 = 2;
const EXIT_IO: i32 = 3;

/// Sliding-boundary Dirichlet energy minimization between doubly
/// connected planar domains, with Hopf-differential certificates, crack
/// diagnostics, and trajectory tracing.
#[derive(Parser, Debug)]
#[command(name = "hopfmin", version, about)]
struct Cli {
    /// Worker thread cap (also HOPFMIN_THREADS); results do not depend
    /// on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Minimize the Dirichlet energy of a sliding-boundary map.
    Solve(SolveArgs),
    /// Fit the Hopf product of a stored field and issue the minimality
    /// certificate.
    HopfCheck(HopfCheckArgs),
    /// Per-ray crack decomposition of a stored field.
    Cracks(CracksArgs),
    /// Sample a closed-form reference map onto a mesh.
    Ref(RefArgs),
    /// Energy breakdown of a stored field.
    Energy(EnergyArgs),
    /// Evaluate both sides of the two-solution energy identity.
    IdentityCheck(IdentityCheckArgs),
    /// Free-Lagrangian lower bounds and distortion diagnostics.
    Bounds(BoundsArgs),
    /// Conformal modulus of a domain from the capacity potential.
    Modulus(ModulusArgs),
    /// Trace a trajectory of a quadratic differential.
    Trace(TraceArgs),
    /// Collar radius of an annulus pair (empty output in the
    /// no-collar regime).
    Sigma(SigmaArgs),
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Source domain, e.g. annulus:1,2 (washer:RHO is parsed but not
    /// solvable from).
    #[arg(long)]
    source: String,
    /// Target domain, e.g. annulus:1,1.25 or washer:2.
    #[arg(long)]
    target: String,
    #[arg(long, default_value_t = 33)]
    nr: usize,
    #[arg(long, default_value_t = 128)]
    ntheta: usize,
    /// Solver configuration JSON file (defaults used when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed override for perturbation restarts.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct HopfCheckArgs {
    sol: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    fit_order: usize,
    #[arg(long, default_value_t = 1e-2)]
    im_ratio: f64,
    #[arg(long, default_value_t = 5e-2)]
    residual_rel: f64,
    #[arg(long, default_value_t = 5e-2)]
    spurious_ratio: f64,
}

#[derive(Args, Debug)]
struct CracksArgs {
    sol: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-ray CSV rows theta,r_theta,R_theta.
    #[arg(long)]
    ray_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RefArgs {
    /// identity | nitsche | cracked-nitsche | logmap | logmap-dual
    kind: String,
    /// Map parameters: nitsche r,r_star; cracked-nitsche r,sigma,r_star;
    /// logmap/logmap-dual R.
    #[arg(long, default_value = "")]
    params: String,
    /// Source annulus r,R to mesh.
    #[arg(long)]
    annulus: String,
    #[arg(long, default_value_t = 33)]
    nr: usize,
    #[arg(long, default_value_t = 128)]
    ntheta: usize,
    #[arg(long)]
    out: PathBuf,
    /// Optional node CSV (x,y,u,v).
    #[arg(long)]
    field_csv: Option<PathBuf>,
    /// Optional per-triangle CSV (cx,cy,hz_re,hz_im,hzbar_re,hzbar_im,J).
    #[arg(long)]
    deriv_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EnergyArgs {
    sol: PathBuf,
    /// Append a CSV row label,total,normal,tangential.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value = "field")]
    label: String,
    #[arg(long)]
    field_csv: Option<PathBuf>,
    #[arg(long)]
    deriv_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IdentityCheckArgs {
    h: PathBuf,
    big_h: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    sol: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ModulusArgs {
    /// Domain, e.g. annulus:1,2 or washer:2.
    #[arg(long)]
    domain: String,
    #[arg(long, default_value_t = 65)]
    nr: usize,
    #[arg(long, default_value_t = 256)]
    ntheta: usize,
}

#[derive(Args, Debug)]
struct TraceArgs {
    /// Laurent coefficients "laurent:N:RE,IM[;N:RE,IM...]",
    /// e.g. laurent:-2:1.0,0.0.
    #[arg(long)]
    phi: String,
    /// Start point x,y.
    #[arg(long)]
    from: String,
    /// horizontal | vertical
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    #[arg(long, default_value_t = 50.0)]
    max_len: f64,
    /// Annulus r,R bounding the trace.
    #[arg(long, default_value = "0.1,10")]
    annulus: String,
    /// Output path; .csv writes x,y,s rows, anything else JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SigmaArgs {
    #[arg(long)]
    r: f64,
    #[arg(long = "R")]
    big_r: f64,
    #[arg(long)]
    rstar: f64,
    #[arg(long = "Rstar")]
    big_rstar: f64,
}

fn parse_domain(s: &str) -> Result<DomainSpec, String> {
    let (kind, rest) = s.split_once(':').ok_or_else(|| format!("domain '{s}' must look like annulus:r,R or washer:rho"))?;
    let nums: Vec<f64> = rest
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad number '{p}': {e}")))
        .collect::<Result<_, _>>()?;
    match (kind, nums.as_slice()) {
        ("annulus", [r, big_r]) => DomainSpec::annulus(*r, *big_r).map_err(|e| e.to_string()),
        ("washer", [rho]) => DomainSpec::washer(*rho).map_err(|e| e.to_string()),
        _ => Err(format!("domain '{s}' must look like annulus:r,R or washer:rho")),
    }
}

fn parse_annulus(s: &str) -> Result<AnnulusSpec, String> {
    let nums: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad number '{p}': {e}")))
        .collect::<Result<_, _>>()?;
    match nums.as_slice() {
        [r, big_r] => AnnulusSpec::new(*r, *big_r).map_err(|e| e.to_string()),
        _ => Err(format!("annulus '{s}' must look like r,R")),
    }
}

fn parse_refkind(kind: &str, params: &str) -> Result<refmaps::RefMapKind, String> {
    let nums: Vec<f64> = if params.trim().is_empty() {
        Vec::new()
    } else {
        params
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad number '{p}': {e}")))
            .collect::<Result<_, _>>()?
    };
    match (kind, nums.as_slice()) {
        ("identity", []) => Ok(refmaps::RefMapKind::Identity),
        ("nitsche", [r, r_star]) => Ok(refmaps::RefMapKind::Nitsche { r: *r, r_star: *r_star }),
        ("cracked-nitsche", [r, sigma, r_star]) => {
            Ok(refmaps::RefMapKind::CrackedNitsche { r: *r, sigma: *sigma, r_star: *r_star })
        }
        ("logmap", [big_r]) => Ok(refmaps::RefMapKind::LogMap { big_r: *big_r }),
        ("logmap-dual", [big_r]) => Ok(refmaps::RefMapKind::LogMapDual { big_r: *big_r }),
        _ => Err(format!("unknown reference map '{kind}' with params '{params}'")),
    }
}

fn parse_phi(s: &str) -> Result<hopf::QuadDifferential, String> {
    let body = s.strip_prefix("laurent:").ok_or_else(|| format!("phi '{s}' must start with 'laurent:'"))?;
    let mut terms = Vec::new();
    let mut max_order = 2i32;
    for term in body.split(';') {
        let (n, c) = term.split_once(':').ok_or_else(|| format!("term '{term}' must look like N:RE,IM"))?;
        let n: i32 = n.trim().parse().map_err(|e| format!("bad power '{n}': {e}"))?;
        let (re, im) = c.split_once(',').ok_or_else(|| format!("coefficient '{c}' must look like RE,IM"))?;
        let re: f64 = re.trim().parse().map_err(|e| format!("bad number '{re}': {e}"))?;
        let im: f64 = im.trim().parse().map_err(|e| format!("bad number '{im}': {e}"))?;
        max_order = max_order.max(n.abs());
        terms.push((n, Complex64::new(re, im)));
    }
    hopf::QuadDifferential::from_terms(max_order as usize, &terms).map_err(|e| e.to_string())
}

fn read_field(path: &Path) -> core::Result<mesh::MapField> {
    let body = std::fs::read_to_string(path)?;
    let file: mesh::FieldFile = serde_json::from_str(&body)?;
    file.into_field()
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> core::Result<()> {
    let body = serde_json::to_string_pretty(value)?;
    std::fs::write(path, body)?;
    Ok(())
}

fn emit<T: serde::Serialize>(out: &Option<PathBuf>, value: &T) -> core::Result<Vec<String>> {
    match out {
        Some(path) => {
            write_json(path, value)?;
            Ok(vec![path.display().to_string()])
        }
        None => {
            println!("{}", serde_json::to_string_pretty(value).map_err(core::Error::from)?);
            Ok(Vec::new())
        }
    }
}

fn exit_code_for(err: &core::Error) -> i32 {
    match err {
        core::Error::Io(_) | core::Error::Json(_) => EXIT_IO,
        core::Error::Numeric { .. } | core::Error::Solver(_) => EXIT_NUMERIC,
        core::Error::InvalidDomain(_) | core::Error::InvalidTarget(_) | core::Error::Config(_) => EXIT_USAGE,
        _ => EXIT_NUMERIC,
    }
}

fn run(cli: Cli) -> Result<i32, (i32, String)> {
    let usage = |msg: String| (EXIT_USAGE, msg);
    let core_err = |e: core::Error| (exit_code_for(&e), e.to_string());
    let started = Instant::now();
    match cli.command {
        Command::Sigma(a) => {
            let sigma = domain::nitsche_sigma(a.r, a.big_r, a.rstar, a.big_rstar).map_err(core_err)?;
            match sigma {
                Some(s) => println!("sigma = {s}"),
                None => println!("sigma = none (target ratio at or above the bound; no collar)"),
            }
            Ok(EXIT_OK)
        }
        Command::Modulus(a) => {
            let d = parse_domain(&a.domain).map_err(usage)?;
            let m = domain::conformal_modulus(&d, a.nr, a.ntheta).map_err(core_err)?;
            println!("{}", serde_json::to_string_pretty(&m).map_err(|e| (EXIT_IO, e.to_string()))?);
            Ok(EXIT_OK)
        }
        Command::Ref(a) => {
            let kind = parse_refkind(&a.kind, &a.params).map_err(usage)?;
            let annulus = parse_annulus(&a.annulus).map_err(usage)?;
            let m = mesh::build_mesh(&DomainSpec::Annulus(annulus), a.nr, a.ntheta).map_err(core_err)?;
            let f = refmaps::sample_refmap(&kind, Arc::new(m)).map_err(core_err)?;
            let file = mesh::FieldFile::from_field(&f);
            write_json(&a.out, &file).map_err(core_err)?;
            let mut outputs = vec![a.out.display().to_string()];
            if let Some(p) = &a.field_csv {
                let mut w = std::fs::File::create(p).map_err(|e| (EXIT_IO, e.to_string()))?;
                mesh::write_field_csv(&f, &mut w).map_err(core_err)?;
                outputs.push(p.display().to_string());
            }
            if let Some(p) = &a.deriv_csv {
                let d = mesh::element_derivatives(&f).map_err(core_err)?;
                let mut w = std::fs::File::create(p).map_err(|e| (EXIT_IO, e.to_string()))?;
                mesh::write_deriv_csv(&d, &mut w).map_err(core_err)?;
                outputs.push(p.display().to_string());
            }
            let mut man = RunManifest::new(serde_json::json!({
                "kind": a.kind, "params": a.params, "annulus": a.annulus, "nr": a.nr, "ntheta": a.ntheta
            }));
            man.outputs = outputs;
            man.wall_time_s = started.elapsed().as_secs_f64();
            man.write_next_to(&a.out).map_err(|e| (EXIT_IO, e.to_string()))?;
            Ok(EXIT_OK)
        }
        Command::Solve(a) => {
            let source = parse_domain(&a.source).map_err(usage)?;
            let target = parse_domain(&a.target).map_err(usage)?;
            if source.as_annulus().is_none() {
                return Err(usage("solve requires an annulus source (washer sources are not solvable from)".into()));
            }
            let mut cfg: minimizer::SolverConfig = match &a.config {
                Some(path) => {
                    let body = std::fs::read_to_string(path).map_err(|e| (EXIT_IO, e.to_string()))?;
                    serde_json::from_str(&body).map_err(|e| (EXIT_USAGE, format!("bad config: {e}")))?
                }
                None => minimizer::SolverConfig::default(),
            };
            if let Some(seed) = a.seed {
                cfg.seed = seed;
            }
            let m = mesh::build_mesh(&source, a.nr, a.ntheta).map_err(core_err)?;
            let res = minimizer::solve(Arc::new(m), &target, &cfg).map_err(core_err)?;
            let mut file = mesh::FieldFile::from_field(&res.field);
            file.energy_history = Some(res.energy_history.clone());
            file.converged = Some(res.converged);
            write_json(&a.out, &file).map_err(core_err)?;
            let status = if res.converged { EXIT_OK } else { EXIT_NUMERIC };
            let mut man = RunManifest::new(serde_json::to_value(&cfg).unwrap_or_default());
            man.outputs = vec![a.out.display().to_string()];
            man.wall_time_s = started.elapsed().as_secs_f64();
            man.exit_status = status;
            man.write_next_to(&a.out).map_err(|e| (EXIT_IO, e.to_string()))?;
            if !res.converged {
                eprintln!(
                    "solve did not converge within {} outer iterations (outputs written with converged = false)",
                    res.outer_iters
                );
            }
            Ok(status)
        }
        Command::HopfCheck(a) => {
            let f = read_field(&a.sol).map_err(core_err)?;
            let thresholds = hopf::CertThresholds {
                im_ratio: a.im_ratio,
                residual_rel: a.residual_rel,
                spurious_ratio: a.spurious_ratio,
                fit_order: a.fit_order,
                ..Default::default()
            };
            let report = hopf::minimality_certificate(&f, &thresholds).map_err(core_err)?;
            let outputs = emit(&a.out, &report).map_err(core_err)?;
            if let Some(primary) = &a.out {
                let mut man = RunManifest::new(serde_json::to_value(&thresholds).unwrap_or_default());
                man.inputs = vec![a.sol.display().to_string()];
                man.outputs = outputs;
                man.wall_time_s = started.elapsed().as_secs_f64();
                man.write_next_to(primary).map_err(|e| (EXIT_IO, e.to_string()))?;
            }
            Ok(EXIT_OK)
        }
        Command::Cracks(a) => {
            let f = read_field(&a.sol).map_err(core_err)?;
            let target = f.target.ok_or_else(|| usage("stored field carries no target domain".into()))?;
            let report = cracks::crack_report(&f, &target).map_err(core_err)?;
            let outputs = emit(&a.out, &report).map_err(core_err)?;
            if let Some(p) = &a.ray_csv {
                let thresholds = cracks::default_thresholds(&f, &target).map_err(core_err)?;
                let profile = cracks::ray_profile(&f, &target, thresholds).map_err(core_err)?;
                let mut w = std::fs::File::create(p).map_err(|e| (EXIT_IO, e.to_string()))?;
                cracks::write_ray_csv(&profile, &mut w).map_err(core_err)?;
            }
            if let Some(primary) = &a.out {
                let mut man = RunManifest::new(serde_json::Value::Null);
                man.inputs = vec![a.sol.display().to_string()];
                man.outputs = outputs;
                man.wall_time_s = started.elapsed().as_secs_f64();
                man.write_next_to(primary).map_err(|e| (EXIT_IO, e.to_string()))?;
            }
            Ok(EXIT_OK)
        }
        Command::Energy(a) => {
            let f = read_field(&a.sol).map_err(core_err)?;
            let breakdown = energy::dirichlet_energy(&f).map_err(core_err)?;
            println!("{}", serde_json::to_string_pretty(&breakdown).map_err(|e| (EXIT_IO, e.to_string()))?);
            if let Some(p) = &a.csv {
                use std::io::Write;
                let fresh = !p.exists();
                let mut w = std::fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(p)
                    .map_err(|e| (EXIT_IO, e.to_string()))?;
                if fresh {
                    writeln!(w, "label,total,normal,tangential").map_err(|e| (EXIT_IO, e.to_string()))?;
                }
                writeln!(w, "{},{},{},{}", a.label, breakdown.total, breakdown.normal_part, breakdown.tangential_part)
                    .map_err(|e| (EXIT_IO, e.to_string()))?;
            }
            if let Some(p) = &a.field_csv {
                let mut w = std::fs::File::create(p).map_err(|e| (EXIT_IO, e.to_string()))?;
                mesh::write_field_csv(&f, &mut w).map_err(core_err)?;
            }
            if let Some(p) = &a.deriv_csv {
                let d = mesh::element_derivatives(&f).map_err(core_err)?;
                let mut w = std::fs::File::create(p).map_err(|e| (EXIT_IO, e.to_string()))?;
                mesh::write_deriv_csv(&d, &mut w).map_err(core_err)?;
            }
            Ok(EXIT_OK)
        }
        Command::IdentityCheck(a) => {
            let h = read_field(&a.h).map_err(core_err)?;
            let big_h = read_field(&a.big_h).map_err(core_err)?;
            let gap = energy::energy_identity_gap(&h, &big_h).map_err(core_err)?;
            emit(&a.out, &gap).map_err(core_err)?;
            Ok(EXIT_OK)
        }
        Command::Bounds(a) => {
            let f = read_field(&a.sol).map_err(core_err)?;
            let source = f
                .mesh
                .domain
                .as_annulus()
                .ok_or_else(|| usage("bounds require an annulus source mesh".into()))?;
            let target = f.target.ok_or_else(|| usage("stored field carries no target domain".into()))?;
            let report = energy::free_lagrangian_report(&f, &source, &target).map_err(core_err)?;
            emit(&a.out, &report).map_err(core_err)?;
            Ok(EXIT_OK)
        }
        Command::Trace(a) => {
            let q = parse_phi(&a.phi).map_err(usage)?;
            let from: Vec<f64> = a
                .from
                .split(',')
                .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad number '{p}': {e}")))
                .collect::<Result<_, _>>()
                .map_err(usage)?;
            let [x, y] = from.as_slice() else {
                return Err(usage(format!("--from '{}' must look like x,y", a.from)));
            };
            let kind = match a.kind.as_str() {
                "horizontal" => trajectories::TrajectoryKind::Horizontal,
                "vertical" => trajectories::TrajectoryKind::Vertical,
                other => return Err(usage(format!("kind '{other}' must be horizontal or vertical"))),
            };
            let annulus = parse_annulus(&a.annulus).map_err(usage)?;
            let t = trajectories::trace_trajectory(&q, Complex64::new(*x, *y), kind, a.step, a.max_len, &annulus)
                .map_err(core_err)?;
            if a.out.extension().is_some_and(|e| e == "csv") {
                let mut w = std::fs::File::create(&a.out).map_err(|e| (EXIT_IO, e.to_string()))?;
                trajectories::write_trajectory_csv(&t, &mut w).map_err(core_err)?;
            } else {
                write_json(&a.out, &t).map_err(core_err)?;
            }
            let mut man = RunManifest::new(serde_json::json!({
                "phi": a.phi, "from": a.from, "kind": a.kind, "step": a.step, "max_len": a.max_len
            }));
            man.outputs = vec![a.out.display().to_string()];
            man.wall_time_s = started.elapsed().as_secs_f64();
            man.write_next_to(&a.out).map_err(|e| (EXIT_IO, e.to_string()))?;
            Ok(EXIT_OK)
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are success; anything else is usage.
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let threads = cli
        .threads
        .or_else(|| std::env::var("HOPFMIN_THREADS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0);
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(code);
        }
    }
}
