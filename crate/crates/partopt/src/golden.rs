//! Golden table: every registered threshold recomputed and compared exactly.

use std::fmt::Write as _;

use partopt_core::corpus::{builtin_configs, Expectation, RegisteredConfig};
use partopt_core::threshold::Status;
use partopt_core::{Mode, Tolerances};

use crate::pipeline::{analyze, Analysis, RunConfig, DEFAULT_SAMPLES};

#[derive(Debug, Clone)]
pub struct GoldenOptions {
    /// Substring filter on config names.
    pub filter: Option<String>,
    pub samples: usize,
    pub tau_samples: Option<usize>,
    pub seed: u64,
    pub tol: Tolerances,
    pub workers: Option<usize>,
}

impl Default for GoldenOptions {
    fn default() -> Self {
        Self {
            filter: None,
            samples: DEFAULT_SAMPLES,
            tau_samples: None,
            seed: 1,
            tol: Tolerances::default(),
            workers: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// Nothing registered to compare against.
    Info,
}

#[derive(Debug, Clone)]
pub struct GoldenRow {
    pub config: &'static str,
    pub d: usize,
    pub mode: Mode,
    pub expected: Expectation,
    /// Per-point value, `vacuous`, or an error message.
    pub got: String,
    pub verdict: Verdict,
    /// Marginal and inadmissible cell counts, reported on failure.
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct GoldenOutcome {
    pub rows: Vec<GoldenRow>,
    pub warnings: Vec<String>,
}

impl GoldenOutcome {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.verdict != Verdict::Fail)
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<22} {:>2} {:<10} {:>9} {:>9}  {:<6} detail",
            "config", "d", "mode", "expected", "got", "result"
        );
        for r in &self.rows {
            let v = match r.verdict {
                Verdict::Pass => "PASS",
                Verdict::Fail => "FAIL",
                Verdict::Info => "-",
            };
            let _ = writeln!(
                s,
                "{:<22} {:>2} {:<10} {:>9} {:>9}  {:<6} {}",
                r.config,
                r.d,
                r.mode.as_str(),
                r.expected.to_string(),
                r.got,
                v,
                r.detail
            );
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}

/// Every `(config, d)` pair of the golden run.
pub fn golden_cases(filter: Option<&str>) -> Vec<(&'static RegisteredConfig, usize)> {
    builtin_configs()
        .iter()
        .filter(|c| filter.is_none_or(|f| c.name.contains(f)))
        .flat_map(|c| c.golden_d.iter().map(move |&d| (c, d)))
        .collect()
}

impl GoldenOptions {
    pub fn run_config(&self, cfg: &RegisteredConfig, d: usize) -> RunConfig {
        RunConfig {
            samples: self.samples,
            tau_samples: self.tau_samples,
            seed: self.seed,
            tol: self.tol,
            workers: self.workers,
            ..RunConfig::builtin(cfg.name, d)
        }
    }
}

/// Rows for one finished run.
pub fn check_analysis(cfg: &'static RegisteredConfig, d: usize, a: &Analysis) -> Vec<GoldenRow> {
    let mut rows = Vec::new();
    for r in &a.reports {
        let expected = a.resolved.expected(r.mode);
        let got = match (r.status, r.per_point) {
            (Status::Vacuous, _) => "vacuous".to_string(),
            (Status::Ok, Some(v)) => v.to_string(),
            (Status::Ok, None) => "-".to_string(),
        };
        let verdict = match expected {
            Expectation::Unregistered => Verdict::Info,
            Expectation::Vacuous if r.status == Status::Vacuous => Verdict::Pass,
            Expectation::Threshold(v) if r.status == Status::Ok && r.per_point == Some(v) => Verdict::Pass,
            _ => Verdict::Fail,
        };
        let mut detail = String::new();
        if verdict == Verdict::Fail {
            detail = format!("marginal {} / inadmissible {} of {} cells", r.marginal_count, r.inadmissible_count, r.cells);
        }
        if let Some(alt) = r.alt_per_point(a.resolved.spec.k()) {
            if !detail.is_empty() {
                detail.push_str("; ");
            }
            let _ = write!(detail, "uniform-side reading {alt}");
        }
        rows.push(GoldenRow {
            config: cfg.name,
            d,
            mode: r.mode,
            expected,
            got,
            verdict,
            detail,
        });
    }
    if let Err(e) = &a.ordering {
        rows.push(GoldenRow {
            config: cfg.name,
            d,
            mode: Mode::Microlocal,
            expected: Expectation::Unregistered,
            got: "ordering".into(),
            verdict: Verdict::Fail,
            detail: e.to_string(),
        });
    }
    rows
}

fn error_rows(cfg: &'static RegisteredConfig, d: usize, e: &anyhow::Error) -> Vec<GoldenRow> {
    Mode::ALL
        .iter()
        .map(|&mode| {
            let expected = cfg.expected(mode, d).unwrap_or(Expectation::Unregistered);
            GoldenRow {
                config: cfg.name,
                d,
                mode,
                expected,
                got: "error".into(),
                verdict: if expected == Expectation::Unregistered { Verdict::Info } else { Verdict::Fail },
                detail: format!("{e:#}"),
            }
        })
        .collect()
}

pub fn run_golden(opts: &GoldenOptions) -> GoldenOutcome {
    let mut out = GoldenOutcome::default();
    let cases = golden_cases(opts.filter.as_deref());
    if cases.is_empty() {
        out.warnings.push(format!(
            "filter {:?} matches no registered configuration; nothing was checked",
            opts.filter.as_deref().unwrap_or("")
        ));
        return out;
    }
    for (cfg, d) in cases {
        match analyze(&opts.run_config(cfg, d)) {
            Ok(a) => {
                out.rows.extend(check_analysis(cfg, d, &a));
                if !a.trusted() {
                    out.warnings.push(format!(
                        "{} d={d}: {:.1}% of cells are marginal; results untrusted",
                        cfg.name,
                        100.0 * a.marginal_fraction()
                    ));
                }
            }
            Err(e) => out.rows.extend(error_rows(cfg, d, &e)),
        }
    }
    out
}
