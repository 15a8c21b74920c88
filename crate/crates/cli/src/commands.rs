use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tensor_fen::grid::TensorShape;
use tensor_fen::model::Dataset;
use tensor_fen::sampler::ChainConfig;
use tensor_fen::selection::{metrics, FitResult, Metrics};
use tensor_fen::simgen::{generate, make_setting, noise_variance, ShapeMask};
use tensor_fen::spline::SplineBasis;
use tensor_fen::tuning::{tune_and_fit, Grids, PipelineConfig, PipelineOutput, DEFAULT_RHO_GRID, DEFAULT_R_GRID};

use crate::io::{self, FitMeta};
use crate::CliError;

/// Number of points of the `f_hat` evaluation grid on `[0, 1]`.
pub const FHAT_POINTS: usize = 101;

pub const DEFAULT_ITERS: usize = 20_000;

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub setting: u8,
    pub n: usize,
    pub seed: u64,
    pub shape: (usize, usize),
    pub mask: Option<PathBuf>,
    pub eigenfields: usize,
    pub out: PathBuf,
}

/// Writes `x.txt`, `y.txt` and `truth.txt` into `out`.
pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let mask = match &args.mask {
        Some(p) => Some(ShapeMask::parse(&io::read_file(p)?)?),
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (p1, p2) = args.shape;
    let setting = make_setting(args.setting, p1, p2, mask, args.eigenfields, &mut rng)?;
    let noise = noise_variance(&setting, &mut rng);
    let data = generate(&setting.fields, args.n, noise, &mut rng);
    create_dir(&args.out)?;
    io::write_tensors(&args.out.join("x.txt"), &setting.shape, &data.x)?;
    io::write_vector(&args.out.join("y.txt"), &data.y)?;
    io::write_truth(&args.out.join("truth.txt"), &setting, noise)
}

/// Settings read from a flat `key = value` file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunSettings {
    pub p0: Option<Vec<f64>>,
    pub p0_scale: Option<Vec<f64>>,
    pub r: Option<Vec<f64>>,
    pub rho: Option<Vec<f64>>,
    pub iters: Option<usize>,
    pub burn_in: Option<usize>,
    pub warmstart_offset: Option<usize>,
    pub thinning: Option<usize>,
    pub split_ratio: Option<usize>,
}

/// Parse `key = value` lines; `#` starts a comment and lists are comma or space separated.
pub fn parse_settings(text: &str) -> Result<RunSettings, CliError> {
    let mut s = RunSettings::default();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", no + 1)))?;
        let value = value.trim();
        let list = || -> Result<Vec<f64>, CliError> {
            let v = value
                .split([',', ' ', '\t'])
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|_| CliError::Config(format!("line {}: bad number {t:?}", no + 1))))
                .collect::<Result<Vec<_>, _>>()?;
            if v.is_empty() {
                return Err(CliError::Config(format!("line {}: empty list", no + 1)));
            }
            Ok(v)
        };
        let count = || value.parse::<usize>().map_err(|_| CliError::Config(format!("line {}: bad integer {value:?}", no + 1)));
        match key.trim() {
            "p0" => s.p0 = Some(list()?),
            "p0_scale" => s.p0_scale = Some(list()?),
            "r" => s.r = Some(list()?),
            "rho" => s.rho = Some(list()?),
            "iters" => s.iters = Some(count()?),
            "burn_in" => s.burn_in = Some(count()?),
            "warmstart_offset" => s.warmstart_offset = Some(count()?),
            "thinning" => s.thinning = Some(count()?),
            "split_ratio" => s.split_ratio = Some(count()?),
            other => return Err(CliError::Config(format!("line {}: unknown key {other:?}", no + 1))),
        }
    }
    if s.p0.is_some() && s.p0_scale.is_some() {
        return Err(CliError::Config("give either p0 or p0_scale, not both".into()));
    }
    Ok(s)
}

impl RunSettings {
    pub fn pipeline(&self, seed: u64, pooled: bool, parallel: bool) -> Result<PipelineConfig, CliError> {
        let iters = self.iters.unwrap_or(DEFAULT_ITERS);
        let mut chain = ChainConfig::new(iters, seed);
        if let Some(b) = self.burn_in {
            chain.burn_in = b;
        }
        if let Some(w) = self.warmstart_offset {
            chain.warmstart_offset = w;
        }
        if let Some(t) = self.thinning {
            chain.thinning = t;
        }
        chain.validate()?;
        let mut cfg = PipelineConfig::new(chain);
        cfg.tune.warm_start = !parallel;
        cfg.pooled_final = pooled;
        if let Some(r) = self.split_ratio {
            if r < 2 {
                return Err(CliError::Config("split_ratio must be at least 2".into()));
            }
            cfg.split_ratio = r;
        }
        cfg.p0_scales = self.p0_scale.clone();
        cfg.r_grid = self.r.clone();
        cfg.rho_grid = self.rho.clone();
        if let Some(p0) = &self.p0 {
            cfg.grids = Some(Grids {
                p0: p0.clone(),
                r: self.r.clone().unwrap_or_else(|| DEFAULT_R_GRID.to_vec()),
                rho: self.rho.clone().unwrap_or_else(|| DEFAULT_RHO_GRID.to_vec()),
            });
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct TuneFitArgs {
    pub x: PathBuf,
    pub y: PathBuf,
    pub shape: Option<String>,
    pub grids_file: Option<PathBuf>,
    pub seed: u64,
    pub pooled: bool,
    pub jobs: Option<usize>,
    pub out: PathBuf,
}

/// Tune on a train/validation split, refit at the best point and write all artifacts.
///
/// A divergent final chain still writes every artifact and then fails with a numerical error.
pub fn tune_fit(args: &TuneFitArgs) -> Result<PipelineOutput, CliError> {
    let (shape, x) = io::read_tensors(&args.x)?;
    if let Some(s) = &args.shape {
        let want = io::parse_shape(s)?;
        if want != shape {
            return Err(CliError::Config(format!("--shape {:?} does not match {:?} in the covariate file", want.dims(), shape.dims())));
        }
    }
    let y = io::read_vector(&args.y)?;
    if y.len() * shape.size() != x.len() {
        return Err(CliError::Config(format!("{} responses for {} covariate tensors", y.len(), x.len() / shape.size())));
    }
    let settings = match &args.grids_file {
        Some(p) => parse_settings(&io::read_file(p)?)?,
        None => RunSettings::default(),
    };
    let jobs = args.jobs.unwrap_or(1);
    if jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let cfg = settings.pipeline(args.seed, args.pooled, jobs > 1)?;
    let out = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
        pool.install(|| tune_and_fit(&x, &y, &shape, &cfg))?
    } else {
        tune_and_fit(&x, &y, &shape, &cfg)?
    };
    create_dir(&args.out)?;
    write_artifacts(&args.out, &out)?;
    if out.diverged() {
        return Err(CliError::Numeric("final chain diverged; partial artifacts written".into()));
    }
    Ok(out)
}

fn write_artifacts(dir: &Path, out: &PipelineOutput) -> Result<(), CliError> {
    let fit = &out.fit;
    let shape = &out.shape;
    let meta = FitMeta {
        eps0: out.calibration.eps0,
        lambda_u: out.calibration.lambda_u,
        p0: out.tune.best.p0,
        r: out.tune.best.r,
        rho: out.tune.best.rho,
    };
    io::write_fit(&dir.join("fit.txt"), fit, &out.basis, &meta)?;
    io::write_file(&dir.join("inclusion.txt"), &io::matrix_text(shape, &fit.inclusion))?;

    let mut beta = String::from("entry active");
    for j in 1..=fit.k {
        write!(beta, " beta_{j}").unwrap();
    }
    beta.push('\n');
    for t in 0..shape.size() {
        write!(beta, "{} {}", io::entry_label(shape, t), fit.active[t] as u8).unwrap();
        for &b in fit.beta(t) {
            write!(beta, " {}", io::fmt(b)).unwrap();
        }
        beta.push('\n');
    }
    io::write_file(&dir.join("beta.txt"), &beta)?;

    let active: Vec<usize> = (0..shape.size()).filter(|&t| fit.active[t]).collect();
    let mut fhat = String::from("x");
    for &t in &active {
        write!(fhat, " {}", io::entry_label(shape, t)).unwrap();
    }
    fhat.push('\n');
    for i in 0..FHAT_POINTS {
        let x = i as f64 / (FHAT_POINTS - 1) as f64;
        fhat.push_str(&io::fmt(x));
        for &t in &active {
            write!(fhat, " {}", io::fmt(fit.component(&out.basis, t, x))).unwrap();
        }
        fhat.push('\n');
    }
    io::write_file(&dir.join("fhat.txt"), &fhat)?;

    io::write_vector(&dir.join("trace.txt"), &out.final_samples.train_mse)?;

    let mut table = String::from("stage row col p0 r rho loss diverged\n");
    for row in &out.tune.table {
        let p = row.point;
        writeln!(
            table,
            "{} {} {} {} {} {} {} {}",
            row.stage,
            row.row,
            row.col,
            io::fmt(p.p0),
            io::fmt(p.r),
            io::fmt(p.rho),
            io::fmt(row.loss),
            row.diverged as u8
        )
        .unwrap();
    }
    io::write_file(&dir.join("loss_table.txt"), &table)?;

    let c = &out.calibration;
    let calib = format!(
        "eps0 {}\neps0_initial {}\nlambda_u {}\ndegenerate {}\npooled {}\ndiverged {}\n",
        io::fmt(c.eps0),
        io::fmt(c.eps0_initial),
        io::fmt(c.lambda_u),
        c.degenerate as u8,
        out.pooled as u8,
        out.diverged() as u8
    );
    io::write_file(&dir.join("calibration.txt"), &calib)
}

#[derive(Debug, Clone)]
pub struct ReportArgs {
    pub fit: PathBuf,
    pub truth: PathBuf,
    pub test_x: PathBuf,
    pub test_y: PathBuf,
    pub out: PathBuf,
}

/// Truth read either from a simulation manifest or from another fit file.
enum TruthSource {
    Manifest(io::Truth),
    Fit(Box<(FitResult, SplineBasis)>),
}

impl TruthSource {
    fn read(path: &Path) -> Result<Self, CliError> {
        let text = io::read_file(path)?;
        if text.starts_with("shape") {
            let (fit, basis, _) = io::read_fit(path)?;
            Ok(TruthSource::Fit(Box::new((fit, basis))))
        } else {
            Ok(TruthSource::Manifest(io::read_truth(path)?))
        }
    }

    fn shape(&self) -> &TensorShape {
        match self {
            TruthSource::Manifest(t) => &t.shape,
            TruthSource::Fit(f) => &f.0.shape,
        }
    }

    fn active(&self) -> Vec<bool> {
        match self {
            TruthSource::Manifest(t) => t.fields.active.clone(),
            TruthSource::Fit(f) => f.0.active.clone(),
        }
    }

    fn eval(&self, t: usize, x: f64) -> f64 {
        match self {
            TruthSource::Manifest(m) => m.fields.eval(t, x),
            TruthSource::Fit(f) => f.0.component(&f.1, t, x),
        }
    }
}

/// Writes `metrics.txt` and the component-norm heatmap `norm_heatmap.txt`.
pub fn report(args: &ReportArgs) -> Result<Metrics, CliError> {
    let (fit, basis, _) = io::read_fit(&args.fit)?;
    let truth = TruthSource::read(&args.truth)?;
    let (test_shape, x) = io::read_tensors(&args.test_x)?;
    let y = io::read_vector(&args.test_y)?;
    for (name, s) in [("truth", truth.shape()), ("test covariates", &test_shape)] {
        if s != &fit.shape {
            return Err(CliError::Config(format!("{name} shape {:?} does not match fit shape {:?}", s.dims(), fit.shape.dims())));
        }
    }
    if y.len() * test_shape.size() != x.len() {
        return Err(CliError::Config("test responses do not match test covariates".into()));
    }
    let test = Dataset::new(fit.shape.clone(), x, y, &basis)?;
    let m = metrics(|t, x| truth.eval(t, x), &truth.active(), &fit, &basis, &test);
    create_dir(&args.out)?;
    let text = format!(
        "mse {}\nrmse {}\ntpr {}\ntnr {}\nrpe {}\n",
        io::fmt(m.mse),
        io::fmt(m.rmse),
        io::fmt(m.tpr),
        io::fmt(m.tnr),
        io::fmt(m.rpe)
    );
    io::write_file(&args.out.join("metrics.txt"), &text)?;
    let norms: Vec<f64> = (0..fit.shape.size()).map(|t| fit.component_norm(t)).collect();
    io::write_file(&args.out.join("norm_heatmap.txt"), &io::matrix_text(&fit.shape, &norms))?;
    Ok(m)
}
