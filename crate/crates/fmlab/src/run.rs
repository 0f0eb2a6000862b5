//! `run`: validate, execute inside a worker pool, write the manifest.

use std::path::{Path, PathBuf};

use crate::config::Config;
use crate::error::{HResult, HarnessError};
use crate::experiments;
use crate::output::{Ctx, Manifest, MANIFEST};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed_override: Option<u64>,
}

pub fn run_file(path: &Path, opts: &RunOptions) -> HResult<Manifest> {
    run_config(Config::load(path)?, opts)
}

fn output_dir(cfg: &Config, opts: &RunOptions) -> HResult<PathBuf> {
    opts.out
        .clone()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| HarnessError::Validation(vec!["out: no output directory (set `out` or pass --out)".into()]))
}

#[cfg(feature = "parallel")]
fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> HResult<(T, usize)> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w);
    }
    let pool = b.build().map_err(|e| HarnessError::Other(format!("worker pool: {e}")))?;
    let n = pool.current_num_threads();
    Ok((pool.install(f), n))
}

#[cfg(not(feature = "parallel"))]
fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> HResult<(T, usize)> {
    if workers.is_some_and(|w| w > 1) {
        log::warn!("built without the parallel feature; running on one worker");
    }
    Ok((f(), 1))
}

pub fn run_config(cfg: Config, opts: &RunOptions) -> HResult<Manifest> {
    if opts.workers == Some(0) {
        return Err(HarnessError::Validation(vec!["--workers: must be at least 1".into()]));
    }
    let cfg = match opts.seed_override {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    };
    let dir = output_dir(&cfg, opts)?;
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;

    let mut ctx = Ctx::new(dir.clone(), cfg.seed);
    let (result, workers) = with_workers(opts.workers, || experiments::execute(&cfg, &mut ctx))?;
    let failed_stage = result.as_ref().err().map(|e| e.stage().unwrap_or(ctx.current_stage()).to_string());
    let violated: Vec<String> = ctx
        .failed_checks()
        .iter()
        .map(|c| format!("{}/{}: {}", c.stage, c.name, c.detail))
        .collect();
    let first_violation_stage = ctx.failed_checks().first().map(|c| c.stage.clone());
    let (stages, files, seeds, checks, module_defaults) = ctx.into_parts();

    let (status, failed_stage, error) = match (&result, &first_violation_stage) {
        (Err(e), _) => ("failed", failed_stage, Some(e.to_string())),
        (Ok(()), Some(s)) => ("invariant_violation", Some(s.clone()), Some(violated.join("; "))),
        (Ok(()), None) => ("ok", None, None),
    };
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        kind: cfg.kind.clone(),
        config_sha256: cfg.checksum.clone(),
        seed: cfg.seed,
        seed_overridden: cfg.seed != cfg.file_seed,
        workers,
        parameters: cfg.resolved(),
        module_defaults,
        stages,
        files,
        seeds,
        checks,
        status: status.into(),
        failed_stage: failed_stage.clone(),
        error,
    };
    let path = dir.join(MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| HarnessError::Other(e.to_string()))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;

    match result {
        Err(e) => Err(e),
        Ok(()) if !violated.is_empty() => Err(HarnessError::Invariant {
            stage: failed_stage.unwrap_or_default(),
            message: violated.join("; "),
        }),
        Ok(()) => Ok(manifest),
    }
}
