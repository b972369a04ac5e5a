use crate::args::ModelArgs;
use crate::io::{num, read_field, write_field, write_json, RunManifest, Table};
use crate::{CliResult, Failure};
use clap::{Args, ValueEnum};
use qls_core::criterion::{
    find_kappa0, gp_closed_form_slope, kappa_grid, vk_slope_branch_fd, vk_slope_integral, CriterionReport, Method,
    SweepRow, Verdict, GP_CLOSED_FORM_KAPPA_ZERO_LIMIT,
};
use qls_core::evolution::{self, perturbed_kink, EvolutionConfig, Scheme};
use qls_core::field::{BoundaryKind, FieldState};
use qls_core::functionals::functional_report;
use qls_core::model::{BuiltinCase, NonlinearModel};
use qls_core::potential::PotentialSlice;
use qls_core::profile::{default_grid, kink_profile, soliton_profile, SolitonProfile};
use qls_core::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use std::path::{Path, PathBuf};

#[derive(Args, Debug)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Speed; 0 gives the kink
    #[arg(long, default_value_t = 0.0)]
    pub c: f64,
    /// Half-width of the grid (default from the decay rate)
    #[arg(long)]
    pub xmax: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn profile(a: &ProfileArgs, manifest: &mut RunManifest) -> CliResult<()> {
    let model = a.model.resolve()?;
    manifest.model = Some(model.descriptor());
    let prof = build_profile(&model, a.c, a.xmax, a.n)?;
    let mut t = Table::create(a.out.as_deref(), &["x", "re", "im", "abs", "eta", "phase"])?;
    for j in 0..prof.grid.n {
        let v = prof.values[j];
        t.row([
            num(prof.grid.x(j)),
            num(v.re),
            num(v.im),
            num(prof.amplitude[j]),
            num(prof.eta[j]),
            num(prof.phase[j]),
        ])?;
    }
    t.finish(manifest)
}

fn build_profile(model: &NonlinearModel, c: f64, xmax: Option<f64>, n: Option<usize>) -> CliResult<SolitonProfile> {
    let (x_def, n_def) = default_grid(model, c)?;
    Ok(soliton_profile(model, c, xmax.unwrap_or(x_def), n.unwrap_or(n_def))?)
}

#[derive(Args, Debug)]
pub struct PotentialArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0.0)]
    pub c: f64,
    /// Number of xi samples on [-r0^2, 0]
    #[arg(long = "xi-grid", default_value_t = 201)]
    pub xi_grid: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn potential(a: &PotentialArgs, manifest: &mut RunManifest) -> CliResult<()> {
    let model = a.model.resolve()?;
    manifest.model = Some(model.descriptor());
    if a.xi_grid < 2 {
        return Err(Failure::validation("--xi-grid needs at least 2 points"));
    }
    let slice = PotentialSlice::new(&model, a.c)?;
    let lo = -model.r0_sq();
    let mut t = Table::create(a.out.as_deref(), &["xi", "V"])?;
    for k in 0..a.xi_grid {
        // endpoints exact so xi = -r0^2 and xi = 0 appear verbatim
        let xi = if k + 1 == a.xi_grid {
            0.0
        } else {
            lo + (-lo) * k as f64 / (a.xi_grid - 1) as f64
        };
        t.row([num(xi), num(slice.eval(xi)?)])?;
    }
    t.finish(manifest)
}

#[derive(Args, Debug)]
pub struct FunctionalsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Field CSV with columns x, re, im on a uniform grid
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Lyapunov weight M
    #[arg(long = "M-lyap")]
    pub m_lyap: Option<f64>,
    /// Reference field CSV for d_X
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub periodic: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn boundary(periodic: bool) -> BoundaryKind {
    if periodic {
        BoundaryKind::Periodic
    } else {
        BoundaryKind::Background
    }
}

pub fn functionals(a: &FunctionalsArgs, manifest: &mut RunManifest) -> CliResult<()> {
    let model = a.model.resolve()?;
    manifest.model = Some(model.descriptor());
    let bc = boundary(a.periodic);
    let field = read_field(&a.input, model.r0(), bc)?;
    let reference = match &a.reference {
        Some(p) => Some(read_field(p, model.r0(), bc)?),
        None => None,
    };
    let report = functional_report(&field, &model, a.m_lyap, reference.as_ref())?;
    write_json(&report, a.out.as_deref(), manifest)
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MethodArg {
    Integral,
    Branch,
    Gp,
}

#[derive(Args, Debug)]
pub struct CriterionArgs {
    /// Model flags; `--case gp-closed-form --kappa0` prints the root of the closed form
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Integral)]
    pub method: MethodArg,
    /// Speed step of the branch finite difference
    #[arg(long = "c-step", default_value_t = 0.05)]
    pub c_step: f64,
    /// Print the root in kappa of the closed-form slope (with `--case gp-closed-form`)
    #[arg(long)]
    pub kappa0: bool,
    /// Full JSON report instead of a one-line summary
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn is_gp_closed_form(m: &ModelArgs) -> bool {
    m.case
        .as_deref()
        .or(m.model.as_deref())
        .map(|s| s.eq_ignore_ascii_case("gp-closed-form"))
        .unwrap_or(false)
}

pub fn criterion(a: &CriterionArgs, manifest: &mut RunManifest) -> CliResult<()> {
    if a.kappa0 {
        if !is_gp_closed_form(&a.model) {
            return Err(Failure::validation("--kappa0 requires --case gp-closed-form"));
        }
        let k0 = find_kappa0()?;
        if a.json {
            write_json(&serde_json::json!({ "kappa0": k0 }), a.out.as_deref(), manifest)?;
        } else {
            println!("{k0:.6}");
        }
        return Ok(());
    }
    let report = if is_gp_closed_form(&a.model) {
        let mut m = a.model.clone();
        m.case = Some("GP1".into());
        m.model = None;
        gp_report(&m.resolve()?)?
    } else {
        let model = a.model.resolve()?;
        manifest.model = Some(model.descriptor());
        match a.method {
            MethodArg::Integral => vk_slope_integral(&model)?,
            MethodArg::Branch => vk_slope_branch_fd(&model, a.c_step)?,
            MethodArg::Gp => gp_report(&model)?,
        }
    };
    if a.json || a.out.is_some() {
        write_json(&report, a.out.as_deref(), manifest)
    } else {
        println!("{} {:?}", num(report.p_prime_0), report.verdict);
        Ok(())
    }
}

/// Closed form for the cubic model with `h = s`, on the momentum scale of
/// the other methods (twice the closed form's own normalization).
fn gp_report(model: &NonlinearModel) -> CliResult<CriterionReport> {
    if model.builtin_case() != Some(BuiltinCase::Gp1) || model.r0() != 1.0 {
        return Err(Failure::validation("the closed form applies to case GP1 with r0 = 1"));
    }
    let kappa = model.kappa();
    let half = if kappa == 0.0 {
        GP_CLOSED_FORM_KAPPA_ZERO_LIMIT
    } else {
        gp_closed_form_slope(0.0, kappa)?
    };
    let p = 2.0 * half;
    let err = 1e-14 * (1.0 + p.abs());
    let tolerance = 10.0 * err;
    Ok(CriterionReport {
        p_prime_0: p,
        method: Method::GPClosedForm,
        tolerance,
        error_estimate: err,
        verdict: Verdict::from_slope(p, tolerance),
        kappa,
        model_id: model.id(),
        cross_check: None,
    })
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Lower end (default kappa_tilde + 0.05)
    #[arg(long = "kappa-min", allow_negative_numbers = true)]
    pub kappa_min: Option<f64>,
    #[arg(long = "kappa-max", default_value_t = 10.0, allow_negative_numbers = true)]
    pub kappa_max: f64,
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Worker pool capped by `QLS_THREADS`.
fn pool() -> CliResult<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("QLS_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Failure::validation(format!("QLS_THREADS must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(Failure::validation("QLS_THREADS must be at least 1"));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Failure::Numerical {
        kind: "thread_pool".into(),
        message: e.to_string(),
    })
}

/// Integral-formula slopes, computed in parallel and returned in input order.
fn parallel_sweep(model: &NonlinearModel, kappas: &[f64]) -> CliResult<Vec<SweepRow>> {
    let pool = pool()?;
    Ok(pool.install(|| {
        kappas
            .par_iter()
            .map(|&k| SweepRow::from_result(k, vk_slope_integral(&model.with_kappa(k))))
            .collect()
    }))
}

const SWEEP_HEADER: [&str; 4] = ["kappa", "p_prime_0", "verdict", "error"];

fn sweep_row(r: &SweepRow) -> [String; 4] {
    [
        num(r.kappa),
        r.p_prime_0.map(num).unwrap_or_default(),
        r.verdict.map(|v| format!("{v:?}")).unwrap_or_default(),
        r.error.clone().unwrap_or_default(),
    ]
}

pub fn sweep(a: &SweepArgs, manifest: &mut RunManifest) -> CliResult<()> {
    let model = a.model.resolve()?;
    manifest.model = Some(model.descriptor());
    let kt = model.kappa_tilde().value;
    let lo = a.kappa_min.unwrap_or(kt + 0.05);
    if !(lo.is_finite() && a.kappa_max.is_finite()) || lo > a.kappa_max {
        return Err(Failure::validation(format!(
            "need kappa-min <= kappa-max, got {lo} > {}",
            a.kappa_max
        )));
    }
    if a.steps == 0 {
        return Err(Failure::validation("--steps must be at least 1"));
    }
    let rows = parallel_sweep(&model, &kappa_grid(lo, a.kappa_max, a.steps))?;
    let mut t = Table::create(a.out.as_deref(), &SWEEP_HEADER)?;
    for r in &rows {
        t.row(sweep_row(r))?;
    }
    t.finish(manifest)
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq)]
pub enum InitArg {
    Kink,
    Gray,
    File,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SchemeArg {
    Cn,
    Strang,
}

#[derive(Args, Debug)]
pub struct EvolveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = InitArg::Kink)]
    pub init: InitArg,
    /// Speed of the gray initial datum
    #[arg(long, default_value_t = 0.0)]
    pub c: f64,
    /// Initial field CSV for `--init file`
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Amplitude of the Gaussian perturbation added to the initial datum
    #[arg(long = "perturb-amp", default_value_t = 0.0)]
    pub perturb_amp: f64,
    /// Seed for a randomized perturbation (center, width, coefficient)
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    pub t_final: f64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Cn)]
    pub scheme: SchemeArg,
    #[arg(long = "output-every", default_value_t = 0.1)]
    pub output_every: f64,
    #[arg(long)]
    pub xmax: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub periodic: bool,
    /// Trace CSV (t, E, P_untwisted, min_nu, z, phi, dX_modulated)
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Final field CSV (x, re, im)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Gaussian bump `A a e^{-((x - x_c)/w)^2}`; fixed shape without a seed,
/// otherwise drawn from a ChaCha20 stream.
fn perturb(field: &FieldState, amp: f64, seed: Option<u64>) -> FieldState {
    let (center, width, coef) = match seed {
        None => (1.0, 1.0, Complex64::new(1.0, 0.5)),
        Some(s) => {
            let mut rng = ChaCha20Rng::seed_from_u64(s);
            let center = rng.gen_range(-2.0..2.0);
            let width = rng.gen_range(0.5..2.0);
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            (center, width, Complex64::from_polar(1.0, theta))
        }
    };
    let g = field.grid;
    let values = (0..g.n)
        .map(|j| {
            let y = (g.x(j) - center) / width;
            field.values[j] + coef * amp * (-y * y).exp()
        })
        .collect();
    field.with_values(values)
}

fn evolve_config(a: &EvolveArgs) -> EvolutionConfig {
    EvolutionConfig {
        dt: a.dt,
        t_final: a.t_final,
        scheme: match a.scheme {
            SchemeArg::Cn => Scheme::CrankNicolsonFixedPoint,
            SchemeArg::Strang => Scheme::StrangSplit,
        },
        output_every: a.output_every,
        boundary: boundary(a.periodic),
        ..EvolutionConfig::default()
    }
}

pub fn evolve(a: &EvolveArgs, manifest: &mut RunManifest) -> CliResult<()> {
    let model = a.model.resolve()?;
    manifest.model = Some(model.descriptor());
    manifest.seed = a.seed;
    if !a.perturb_amp.is_finite() || a.perturb_amp < 0.0 {
        return Err(Failure::validation("--perturb-amp must be finite and >= 0"));
    }
    let config = evolve_config(a);
    let (initial, reference) = match a.init {
        InitArg::File => {
            let p = a
                .input
                .as_deref()
                .ok_or_else(|| Failure::validation("--init file needs --in FIELD.csv"))?;
            (read_field(p, model.r0(), config.boundary)?, None)
        }
        InitArg::Kink | InitArg::Gray => {
            let c = if a.init == InitArg::Kink { 0.0 } else { a.c };
            if a.init == InitArg::Gray && c == 0.0 {
                return Err(Failure::validation("--init gray needs a nonzero --c"));
            }
            let prof = build_profile(&model, c, a.xmax, a.n)?;
            let base = if a.seed.is_none() && c == 0.0 {
                perturbed_kink(&prof, a.perturb_amp)?
            } else {
                perturb(&prof.field(), a.perturb_amp, a.seed)
            };
            (base, Some(prof))
        }
    };
    let initial = if a.init == InitArg::File && a.perturb_amp > 0.0 {
        perturb(&initial, a.perturb_amp, a.seed)
    } else {
        initial
    };
    let run = evolution::evolve(&initial, &model, &config, reference.as_ref())?;
    let tr = &run.trace;
    if let Some(path) = &a.trace {
        let mut t = Table::create(
            Some(path),
            &["t", "E", "P_untwisted", "min_nu", "z", "phi", "dX_modulated"],
        )?;
        for k in 0..tr.len() {
            t.row([
                num(tr.times[k]),
                num(tr.energy[k]),
                num(tr.momentum_untwisted[k]),
                num(tr.min_nu[k]),
                num(tr.z[k]),
                num(tr.phi[k]),
                num(tr.dx_modulated[k]),
            ])?;
        }
        t.finish(manifest)?;
    }
    if let Some(path) = &a.out {
        write_field(&run.final_field, Some(path), manifest)?;
    }
    for w in &tr.warnings {
        eprintln!("warning: {w}");
    }
    let summary = serde_json::json!({
        "steps": tr.steps,
        "max_inner_iterations": tr.max_inner_iterations,
        "max_abs_energy_drift": tr.max_abs_energy_drift(),
        "max_abs_momentum_drift": tr.max_abs_momentum_drift(),
        "warnings": tr.warnings.len(),
    });
    println!("{summary}");
    Ok(())
}

#[derive(Args, Debug)]
pub struct FiguresArgs {
    #[arg(long = "out-dir", default_value = ".")]
    pub out_dir: PathBuf,
    /// kappa samples per curve of the slope figure
    #[arg(long, default_value_t = 60)]
    pub steps: usize,
}

pub const FIG1_KAPPAS: [f64; 4] = [-0.25, 0.0, 1.0, 5.0];
/// Window of the kink-profile figure.
const FIG1_HALF_WIDTH: f64 = 10.0;

fn fig2_kappas(kappa_tilde: f64, steps: usize) -> Vec<f64> {
    // quadratic clustering towards the lower end, where the slope changes fastest
    let lo = kappa_tilde + 0.01;
    let hi = 10.0;
    (0..steps)
        .map(|k| {
            let t = if steps == 1 { 0.0 } else { k as f64 / (steps - 1) as f64 };
            lo + (hi - lo) * t * t
        })
        .collect()
}

pub fn figures(a: &FiguresArgs, manifest: &mut RunManifest) -> CliResult<()> {
    std::fs::create_dir_all(&a.out_dir)?;
    if a.steps == 0 {
        return Err(Failure::validation("--steps must be at least 1"));
    }
    fig1(&a.out_dir.join("fig1_kink_profiles.csv"), manifest)?;
    fig2(&a.out_dir.join("fig2_slope_vs_kappa.csv"), a.steps, manifest)
}

fn fig1(path: &Path, manifest: &mut RunManifest) -> CliResult<()> {
    let mut t = Table::create(Some(path), &["case", "r0", "kappa", "x", "u"])?;
    for case in BuiltinCase::ALL {
        for &kappa in &FIG1_KAPPAS {
            let model = NonlinearModel::builtin(case, 1.0, kappa)?;
            if kappa <= model.kappa_tilde().value {
                continue;
            }
            let (x, n) = default_grid(&model, 0.0)?;
            let kink = kink_profile(&model, x, n)?;
            for j in 0..kink.grid.n {
                let xj = kink.grid.x(j);
                if xj.abs() <= FIG1_HALF_WIDTH {
                    t.row([
                        case.id().to_string(),
                        num(1.0),
                        num(kappa),
                        num(xj),
                        num(kink.values[j].re),
                    ])?;
                }
            }
        }
    }
    t.finish(manifest)
}

fn fig2(path: &Path, steps: usize, manifest: &mut RunManifest) -> CliResult<()> {
    let mut t = Table::create(Some(path), &["case", "r0", "kappa", "p_prime_0", "verdict", "error"])?;
    let curves = [
        (BuiltinCase::Gp1, 1.0),
        (BuiltinCase::Gp2, 1.0),
        (BuiltinCase::Sf3, 1.0),
        (BuiltinCase::Sf3, 2.0),
    ];
    for (case, r0) in curves {
        let model = NonlinearModel::builtin(case, r0, 0.0)?;
        let kt = model.kappa_tilde().value;
        let rows = parallel_sweep(&model, &fig2_kappas(kt, steps))?;
        for r in &rows {
            let [k, p, v, e] = sweep_row(r);
            t.row([case.id().to_string(), num(r0), k, p, v, e])?;
        }
    }
    t.finish(manifest)
}
