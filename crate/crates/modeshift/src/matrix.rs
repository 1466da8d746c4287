//! Scenario matrix: every (policy, trigger, seed) cell run in parallel.
//!
//! Cells of the same seed share the fault schedule, so the trigger kinds
//! are compared on paired inputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use modeshift_core::metrics::{aggregate, CellReport, Report, RunSummary};
use modeshift_core::modemgr::TriggerKind;
use modeshift_core::sim::{run_with, SimOptions};
use modeshift_core::{Policy, SystemConfig};
use rayon::prelude::*;

use crate::output::{self, OutputDir};

#[derive(Debug, Clone)]
pub struct Matrix {
    pub config: SystemConfig,
    pub policies: Vec<Policy>,
    pub triggers: Vec<TriggerKind>,
    pub seeds: Vec<u64>,
    /// Also write trace, series and prediction files for every cell.
    pub detail: bool,
    pub series_limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CellKey {
    pub policy: Policy,
    pub trigger: TriggerKind,
    pub seed: u64,
}

impl CellKey {
    pub fn dir(&self) -> String {
        format!("runs/{}/{}/seed-{}", output::slug(self.policy), self.trigger.as_str(), self.seed)
    }
}

/// Summary and files written, or the error text.
type CellResult = Result<(RunSummary, Vec<PathBuf>), String>;

#[derive(Debug)]
pub struct MatrixOutcome {
    pub summaries: Vec<RunSummary>,
    pub failures: Vec<(CellKey, String)>,
    pub cells: Vec<CellReport>,
    pub reports: Vec<Report>,
}

impl Matrix {
    pub fn keys(&self) -> Vec<CellKey> {
        let mut keys = Vec::new();
        for &policy in &self.policies {
            for &trigger in &self.triggers {
                for &seed in &self.seeds {
                    keys.push(CellKey { policy, trigger, seed });
                }
            }
        }
        keys
    }

    fn check(&self) -> anyhow::Result<()> {
        if self.seeds.is_empty() {
            bail!("empty seed list");
        }
        if self.policies.is_empty() {
            bail!("empty policy list");
        }
        if self.triggers.is_empty() {
            bail!("empty trigger list");
        }
        Ok(())
    }

    /// Run every cell. With `out`, each cell writes its own directory and
    /// the aggregated files and manifest go to the root.
    pub fn run(&self, out: Option<&Path>) -> anyhow::Result<MatrixOutcome> {
        self.check()?;
        let options = if self.detail { SimOptions::all() } else { SimOptions::default() };
        let results: Vec<(CellKey, CellResult)> = self
            .keys()
            .into_par_iter()
            .map(|key| {
                let mut config = self.config.clone();
                config.policy = key.policy;
                let outcome = run_with(&config, key.trigger, key.seed, options)
                    .map_err(|e| e.to_string())
                    .and_then(|run| {
                        let mut written = Vec::new();
                        if let Some(root) = out {
                            let dir = key.dir();
                            let mut cell = OutputDir::create(&root.join(&dir)).map_err(|e| format!("{e:#}"))?;
                            output::write_run(&mut cell, &run, self.series_limit).map_err(|e| format!("{e:#}"))?;
                            written = cell.written().iter().map(|p| Path::new(&dir).join(p)).collect();
                        }
                        Ok((RunSummary::from(&run), written))
                    });
                (key, outcome)
            })
            .collect();

        let mut summaries = Vec::new();
        let mut failures = Vec::new();
        let mut written = Vec::new();
        for (key, r) in results {
            match r {
                Ok((s, w)) => {
                    summaries.push(s);
                    written.extend(w);
                }
                Err(e) => failures.push((key, e)),
            }
        }
        let (cells, reports) = summarize(&summaries)?;
        let outcome = MatrixOutcome { summaries, failures, cells, reports };
        if let Some(root) = out {
            let mut dir = OutputDir::create(root)?;
            for w in written {
                dir.register(w);
            }
            write_aggregates(&mut dir, &outcome)?;
            let mut failures = csv::Writer::from_writer(Vec::new());
            failures.write_record(["policy", "trigger", "seed", "error"])?;
            for (k, e) in &outcome.failures {
                failures.write_record([k.policy.as_str(), k.trigger.as_str(), &k.seed.to_string(), e])?;
            }
            let bytes = failures.into_inner().context("cannot encode failures.csv")?;
            dir.write("failures.csv", &bytes)?;
            dir.write_manifest()?;
        }
        Ok(outcome)
    }
}

/// Fold run summaries into one cell per (policy, trigger) and one table
/// per policy.
pub fn summarize(summaries: &[RunSummary]) -> anyhow::Result<(Vec<CellReport>, Vec<Report>)> {
    let mut groups: BTreeMap<(Policy, TriggerKind), Vec<RunSummary>> = BTreeMap::new();
    for s in summaries {
        groups.entry((s.policy, s.trigger)).or_default().push(s.clone());
    }
    let mut cells = Vec::new();
    for runs in groups.values() {
        cells.push(aggregate(runs).context("cannot aggregate runs")?);
    }
    let mut policies: Vec<Policy> = cells.iter().map(|c| c.policy).collect();
    policies.dedup();
    let reports = policies.iter().map(|p| Report::new(*p, &cells)).collect();
    Ok((cells, reports))
}

/// `summaries.json`, `cells.csv`, `per_task.csv` and one metrics CSV and
/// text table per policy.
pub fn write_aggregates(dir: &mut OutputDir, outcome: &MatrixOutcome) -> anyhow::Result<()> {
    dir.write("summaries.json", &output::to_json(&outcome.summaries)?)?;
    write_reports(dir, &outcome.cells, &outcome.reports)
}

pub fn write_reports(dir: &mut OutputDir, cells: &[CellReport], reports: &[Report]) -> anyhow::Result<()> {
    dir.csv("cells.csv", |b| output::write_cells_csv(b, cells))?;
    dir.csv("per_task.csv", |b| {
        output::write_per_task_csv(
            b,
            cells.iter().map(|c| (c.policy.as_str().to_string(), c.trigger.as_str().to_string(), "all".to_string(), &c.tasks)),
        )
    })?;
    for r in reports {
        let p = output::slug(r.policy);
        dir.csv(&format!("metrics-{p}.csv"), |b| output::write_report_csv(b, r))?;
        dir.write(&format!("table-{p}.txt"), r.to_table().as_bytes())?;
    }
    Ok(())
}
