//! Run directories: simulation, reconstruction and evaluation on disk.
//!
//! Layout of a run directory:
//!
//! ```text
//! manifest.json
//! x_true.{hdr.json,bin}  csm_true.*  phi_true.*  plan.*  y.*  m_true.csv
//! recon_<mode>/x_est.*  m_est.csv  phi_est.*  trace.csv  recon.json  timing.json
//! metrics.csv
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{ReconConfig, SimConfig};
use crate::csm::{coefficient_count, PolyCoeffs};
use crate::error::{Error, Result};
use crate::geometry::{make_plan, AcquisitionPlan, MotionParams, PlanSpec};
use crate::grid::{ComplexGrid, Measurements, RngSeed};
use crate::io::{load_grid, load_measurements, save_grid, save_measurements, save_stack, Semantic};
use crate::metrics::{csm_nrmse, motion_error, psnr, ssim, SsimOptions};
use crate::sampler::{sample_joint_observed, SamplerInit, SamplerTrace};
use crate::sim::{draw_motion, shepp_logan, simulate_acquisition, synth_csm, zero_fill_recon, MOTION_PRESETS};

pub const MANIFEST: &str = "manifest.json";
pub const METRICS: &str = "metrics.csv";

/// Files written by [`simulate`] besides the manifest.
pub const SIM_ARTIFACTS: [&str; 6] = [
    "x_true.bin",
    "csm_true.bin",
    "phi_true.bin",
    "m_true.csv",
    "plan.bin",
    "y.bin",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReconMode {
    Joint,
    FixedCsm,
    FixedMotion,
    ZeroFill,
}

impl ReconMode {
    pub const ALL: [ReconMode; 4] = [
        ReconMode::Joint,
        ReconMode::FixedCsm,
        ReconMode::FixedMotion,
        ReconMode::ZeroFill,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReconMode::Joint => "joint",
            ReconMode::FixedCsm => "fixed-csm",
            ReconMode::FixedMotion => "fixed-motion",
            ReconMode::ZeroFill => "zero-fill",
        }
    }

    pub fn dir_name(self) -> String {
        format!("recon_{}", self.name())
    }
}

impl std::str::FromStr for ReconMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ReconMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}; expected joint, fixed-csm, fixed-motion or zero-fill")))
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn prepare_dir(dir: &Path, marker: &str, force: bool) -> Result<()> {
    if dir.join(marker).exists() && !force {
        return Err(Error::Config(format!(
            "{} already holds a run; pass --force to overwrite",
            dir.display()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("manifest values serialize") + "\n"
}

/// Coefficient bookkeeping surfaced in the manifest.
pub fn coefficient_summary(coils: usize, order: usize) -> serde_json::Value {
    json!({
        "poly_order": order,
        "terms_per_coil": (order + 1) * (order + 1),
        "count": coefficient_count(coils, order),
        "count_formula": "2 * c * (N + 1)^2",
        "published_formula": "2 * c * N^2",
        "published_count": 2 * coils * order * order,
        "note": "a full tensor basis of degrees 0..=N per axis has (N+1)^2 terms; \
                 the published count 2cN^2 omits the degree-0 row and column",
    })
}

pub struct SimOutputs {
    pub x_true: ComplexGrid,
    pub csm_true: Vec<ComplexGrid>,
    pub phi_true: PolyCoeffs,
    pub m_true: MotionParams,
    pub plan: AcquisitionPlan,
    pub y: Measurements,
}

/// Builds the ground truth and measurements described by `cfg` in memory.
pub fn simulate_world(cfg: &SimConfig) -> Result<SimOutputs> {
    cfg.validate()?;
    let s = cfg.seed.0;
    let x_true = shepp_logan(cfg.height, cfg.width, cfg.phase_strength)?;
    let (csm_true, phi_true) = synth_csm(cfg.coils, cfg.height, cfg.width, cfg.csm_order, RngSeed(s))?;
    let m_true = draw_motion(cfg.shots, cfg.k_theta, cfg.k_t, RngSeed(s.wrapping_add(100)))?;
    let plan = make_plan(PlanSpec {
        height: cfg.height,
        width: cfg.width,
        accel: cfg.accel,
        acs_lines: cfg.acs_lines,
        scheme: cfg.scheme,
        num_shots: cfg.shots,
        ordering: cfg.ordering,
        seed: RngSeed(s.wrapping_add(200)),
    })?;
    let y = simulate_acquisition(&x_true, &phi_true, &m_true, &plan, cfg.noise_sigma, RngSeed(s.wrapping_add(300)))?;
    Ok(SimOutputs {
        x_true,
        csm_true,
        phi_true,
        m_true,
        plan,
        y,
    })
}

/// Writes the six ground-truth artifacts and `manifest.json` to `dir`.
pub fn simulate(cfg: &SimConfig, dir: &Path, force: bool) -> Result<SimOutputs> {
    cfg.validate()?;
    prepare_dir(dir, MANIFEST, force)?;
    let w = simulate_world(cfg)?;
    save_grid(&w.x_true, &dir.join("x_true"))?;
    save_stack(&w.csm_true, &dir.join("csm_true"), Semantic::Csm)?;
    w.phi_true.save(&dir.join("phi_true"))?;
    w.m_true.save_csv(&dir.join("m_true.csv"))?;
    w.plan.save(&dir.join("plan"))?;
    save_measurements(&w.y, &dir.join("y"))?;
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": "simulate",
        "config": cfg,
        "effective_accel": w.plan.effective_accel(),
        "num_samples": w.plan.num_samples(),
        "csm_coefficients": coefficient_summary(cfg.coils, cfg.poly_order),
        "ground_truth_csm_coefficients": coefficient_summary(cfg.coils, cfg.csm_order),
        "motion_presets_deg_px": MOTION_PRESETS,
        "artifacts": SIM_ARTIFACTS,
    });
    write(&dir.join(MANIFEST), &to_json(&manifest))?;
    Ok(w)
}

/// Ground truth and measurements read back from a run directory.
pub struct RunData {
    pub config: SimConfig,
    pub x_true: ComplexGrid,
    pub phi_true: PolyCoeffs,
    pub m_true: MotionParams,
    pub plan: AcquisitionPlan,
    pub y: Measurements,
}

pub fn load_run(dir: &Path) -> Result<RunData> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::format(&mpath, e.to_string()))?;
    let config: SimConfig = serde_json::from_value(manifest["config"].clone())
        .map_err(|e| Error::format(&mpath, format!("config: {e}")))?;
    Ok(RunData {
        config,
        x_true: load_grid(&dir.join("x_true"))?,
        phi_true: PolyCoeffs::load(&dir.join("phi_true"))?,
        m_true: MotionParams::load_csv(&dir.join("m_true.csv"))?,
        plan: AcquisitionPlan::load(&dir.join("plan"))?,
        y: load_measurements(&dir.join("y"))?,
    })
}

#[derive(Debug, Clone, Default)]
pub struct ReconOptions {
    /// Replaces the sampler seed from the config.
    pub seed: Option<RngSeed>,
    pub force: bool,
    pub trace_every: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ReconResult {
    pub dir: PathBuf,
    pub x: ComplexGrid,
    pub m: Option<MotionParams>,
    pub phi: Option<PolyCoeffs>,
    pub trace: Option<SamplerTrace>,
    pub seconds: f64,
}

/// Reconstructs `run_dir` in `mode`, writing into `run_dir/recon_<mode>/`.
///
/// On divergence the trace collected so far is still written.
pub fn recon(run_dir: &Path, cfg: &ReconConfig, mode: ReconMode, opts: &ReconOptions) -> Result<ReconResult> {
    let run = load_run(run_dir)?;
    let out = run_dir.join(mode.dir_name());
    prepare_dir(&out, "recon.json", opts.force)?;
    let mut sampler = cfg.sampler.clone();
    if let Some(s) = opts.seed {
        sampler.seed = s;
    }
    if let Some(t) = opts.trace_every {
        sampler.trace_every = t;
    }
    if mode != ReconMode::ZeroFill {
        sampler.validate()?;
    }
    let start = Instant::now();
    let mut init = SamplerInit::default();
    match mode {
        ReconMode::FixedCsm => {
            sampler.freeze_phi = true;
            init.phi = Some(run.phi_true.clone());
        }
        ReconMode::FixedMotion => {
            sampler.freeze_m = true;
            init.m = Some(run.m_true.clone());
        }
        _ => {}
    }
    // blocks frozen through the config are held at ground truth
    if sampler.freeze_phi && init.phi.is_none() {
        init.phi = Some(run.phi_true.clone());
    }
    if sampler.freeze_m && init.m.is_none() {
        init.m = Some(run.m_true.clone());
    }
    let record = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": "recon",
        "mode": mode,
        "sampler": sampler,
        "prior": cfg.prior,
        "likelihood_weight": "1 / (sigma_t^2 + noise_sigma^2)",
    });
    let result = if mode == ReconMode::ZeroFill {
        let x = zero_fill_recon(&run.y, &run.plan)?;
        save_grid(&x, &out.join("x_est"))?;
        ReconResult {
            dir: out.clone(),
            x,
            m: None,
            phi: None,
            trace: None,
            seconds: start.elapsed().as_secs_f64(),
        }
    } else {
        let prior = cfg.prior.build(Some(&run.x_true), &out)?;
        match sample_joint_observed(&run.y, &run.plan, prior.as_ref(), &sampler, &init, &mut |_| {}) {
            Ok(s) => {
                save_grid(&s.x, &out.join("x_est"))?;
                s.m.save_csv(&out.join("m_est.csv"))?;
                s.phi.save(&out.join("phi_est"))?;
                s.trace.save_csv(&out.join("trace.csv"))?;
                ReconResult {
                    dir: out.clone(),
                    x: s.x,
                    m: Some(s.m),
                    phi: Some(s.phi),
                    trace: Some(s.trace),
                    seconds: start.elapsed().as_secs_f64(),
                }
            }
            Err(f) => {
                f.trace.save_csv(&out.join("trace.csv"))?;
                return Err(f.error);
            }
        }
    };
    write(&out.join("recon.json"), &to_json(&record))?;
    write(&out.join("timing.json"), &to_json(&json!({ "wall_time_s": result.seconds })))?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub mode: String,
    pub accel: f64,
    pub k_theta: f64,
    pub k_t: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub csm_nrmse: Option<f64>,
    pub rmse_theta: Option<f64>,
    pub rmse_t: Option<f64>,
    pub wall_time_s: Option<f64>,
}

pub const METRICS_HEADER: &str =
    "run_id,mode,R,k_theta,k_t,psnr_db,ssim,csm_nrmse,rmse_theta_deg,rmse_t_px,wall_time_s";

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
        format!(
            "{},{},{},{},{},{:.4},{:.6},{},{},{},{}",
            self.run_id,
            self.mode,
            self.accel,
            self.k_theta,
            self.k_t,
            self.psnr,
            self.ssim,
            opt(self.csm_nrmse),
            opt(self.rmse_theta),
            opt(self.rmse_t),
            opt(self.wall_time_s),
        )
    }
}

/// Magnitude line cuts through the image center: `index,truth,estimate`.
pub fn profile_csv(truth: &ComplexGrid, est: &ComplexGrid, row: bool) -> String {
    let (h, w) = truth.shape();
    let mut s = String::from("index,truth,estimate\n");
    let n = if row { w } else { h };
    for k in 0..n {
        let at = if row { (h / 2, k) } else { (k, w / 2) };
        s += &format!("{k},{:.9e},{:.9e}\n", truth[at].norm(), est[at].norm());
    }
    s
}

/// Scores every `recon_<mode>` directory present, writes `metrics.csv` and
/// per-mode row/column profile CSVs, and returns the rows.
pub fn eval(run_dir: &Path) -> Result<Vec<MetricsRow>> {
    let run = load_run(run_dir)?;
    let (h, w) = run.x_true.shape();
    let run_id = run_dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let mut rows = Vec::new();
    for mode in ReconMode::ALL {
        let dir = run_dir.join(mode.dir_name());
        if !dir.join("x_est.hdr.json").exists() {
            continue;
        }
        let x = load_grid(&dir.join("x_est"))?;
        let phi_path = dir.join("phi_est.hdr.json");
        let csm = if phi_path.exists() {
            let phi = PolyCoeffs::load(&dir.join("phi_est"))?;
            Some(csm_nrmse(&phi, &run.phi_true, h, w)?)
        } else {
            None
        };
        let motion = if dir.join("m_est.csv").exists() {
            Some(motion_error(&MotionParams::load_csv(&dir.join("m_est.csv"))?, &run.m_true)?)
        } else {
            None
        };
        let wall = fs::read_to_string(dir.join("timing.json"))
            .ok()
            .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
            .and_then(|v| v["wall_time_s"].as_f64());
        write(&dir.join("profile_row.csv"), &profile_csv(&run.x_true, &x, true))?;
        write(&dir.join("profile_col.csv"), &profile_csv(&run.x_true, &x, false))?;
        rows.push(MetricsRow {
            run_id: run_id.clone(),
            mode: mode.name().into(),
            accel: run.config.accel,
            k_theta: run.config.k_theta,
            k_t: run.config.k_t,
            psnr: psnr(&run.x_true, &x)?,
            ssim: ssim(&run.x_true, &x)?,
            csm_nrmse: csm,
            rmse_theta: motion.map(|m| m.0),
            rmse_t: motion.map(|m| m.1),
            wall_time_s: wall,
        });
    }
    if rows.is_empty() {
        return Err(Error::Config(format!(
            "no reconstructions found in {}; run recon first",
            run_dir.display()
        )));
    }
    let o = SsimOptions::default();
    let mut csv = format!(
        "# psnr/ssim on magnitudes; ssim window {} std {} k1 {} k2 {}; csm nrmse on complex maps after gauge and global-phase alignment\n",
        o.window, o.sigma, o.k1, o.k2
    );
    csv += METRICS_HEADER;
    csv.push('\n');
    for r in &rows {
        csv += &r.to_csv();
        csv.push('\n');
    }
    write(&run_dir.join(METRICS), &csv)?;
    Ok(rows)
}
