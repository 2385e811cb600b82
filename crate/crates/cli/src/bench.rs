//! Batch runs over a directory of instances.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use alns_mip::bnb::{solve_mip, MipStatus, SolveLimits};
use alns_mip::engine::{self, SearchResult};
use alns_mip::generate::Family;
use alns_mip::metrics::{arm_distribution, primal_integral, write_bench_csv, BenchRow, GapSeries};

use crate::config::RunConfig;
use crate::{read_instance, status_word};

/// Reference objective for gap computations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub value: f64,
    pub certified: bool,
}

/// Proven optimum from the node-limited oracle when it finishes, otherwise
/// the better of its incumbent and `found`.
pub fn reference(oracle_status: MipStatus, oracle_best: Option<f64>, found: Option<f64>) -> Option<Reference> {
    if oracle_status == MipStatus::Optimal {
        return oracle_best.map(|value| Reference { value, certified: true });
    }
    let value = match (oracle_best, found) {
        (Some(a), Some(b)) => a.min(b),
        (a, b) => a.or(b)?,
    };
    Some(Reference {
        value,
        certified: false,
    })
}

#[derive(Serialize)]
struct ArmRow<'a> {
    instance: &'a str,
    arm: &'a str,
    percent: f64,
}

struct Outcome {
    row: BenchRow,
    arms: Vec<(String, f64)>,
}

fn instance_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("mps")))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .mps files in {}", dir.display());
    }
    Ok(files)
}

fn family_of(stem: &str) -> String {
    stem.split('_')
        .next()
        .and_then(|f| f.parse::<Family>().ok())
        .map(|f| f.short_name().to_string())
        .unwrap_or_default()
}

fn run_one(path: &Path, cfg: &RunConfig) -> Outcome {
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut row = BenchRow {
        instance: name.clone(),
        family: family_of(&name),
        seed: cfg.seed,
        pg_final: None,
        pi: None,
        time_to_first_feasible: None,
        status: String::new(),
        v_star: None,
        v_star_certified: false,
    };
    let attempt = || -> Result<(SearchResult, Option<Reference>)> {
        let inst = read_instance(path)?;
        let search = cfg.to_search()?;
        let result = engine::solve(&inst, &search)?;
        let oracle = solve_mip(&inst, &SolveLimits::nodes(cfg.budgets.oracle_nodes));
        let found = result.best.as_ref().map(|b| b.objective());
        let r = reference(oracle.status, oracle.best.as_ref().map(|b| b.objective()), found);
        Ok((result, r))
    };
    match attempt() {
        Ok((result, reference)) => {
            row.status = status_word(result.status).to_string();
            row.time_to_first_feasible = result.trace.time_to_first_feasible();
            if let Some(r) = reference {
                row.v_star = Some(r.value);
                row.v_star_certified = r.certified;
                let horizon = cfg.stop.wall_time_s.unwrap_or(0.0).max(result.end_time);
                if let Some(series) = GapSeries::from_trace(&result.trace, r.value, horizon) {
                    row.pg_final = Some(series.final_gap());
                    row.pi = Some(primal_integral(&series));
                }
            }
            let arms = arm_distribution(&result.trace, false).into_iter().collect();
            Outcome { row, arms }
        }
        Err(e) => {
            log::error!("{}: {e:#}", path.display());
            row.status = format!("error: {e:#}");
            Outcome { row, arms: Vec::new() }
        }
    }
}

pub fn arms_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}_arms.csv"))
}

pub fn run(dir: &Path, cfg: &RunConfig, out: &Path, jobs: usize) -> Result<()> {
    let files = instance_files(dir)?;
    cfg.to_search()?;
    let jobs = jobs.clamp(1, files.len());
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Outcome>>> = Mutex::new((0..files.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(path) = files.get(i) else { break };
                let outcome = run_one(path, cfg);
                slots.lock().expect("result slots")[i] = Some(outcome);
            });
        }
    });
    let outcomes: Vec<Outcome> = slots
        .into_inner()
        .expect("result slots")
        .into_iter()
        .map(|o| o.expect("every instance ran"))
        .collect();
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let rows: Vec<BenchRow> = outcomes.iter().map(|o| o.row.clone()).collect();
    let file = fs::File::create(out).with_context(|| format!("writing {}", out.display()))?;
    write_bench_csv(&rows, file)?;
    let mut w = csv::Writer::from_path(arms_path(out))?;
    for o in &outcomes {
        for (arm, percent) in &o.arms {
            w.serialize(ArmRow {
                instance: &o.row.instance,
                arm,
                percent: *percent,
            })?;
        }
    }
    w.flush()?;
    let failed = rows.iter().filter(|r| r.status.starts_with("error")).count();
    println!("instances={} failed={failed} summary={}", rows.len(), out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_prefers_certified_optimum() {
        let r = reference(MipStatus::Optimal, Some(-10.0), Some(-9.0)).unwrap();
        assert_eq!(r, Reference { value: -10.0, certified: true });
        let r = reference(MipStatus::LimitReachedWithIncumbent, Some(-8.0), Some(-9.0)).unwrap();
        assert_eq!(r, Reference { value: -9.0, certified: false });
        assert!(reference(MipStatus::LimitReachedNoIncumbent, None, None).is_none());
    }

    #[test]
    fn family_from_file_name() {
        assert_eq!(family_of("mk_3_0"), "mk");
        assert_eq!(family_of("cover5"), "");
    }
}
