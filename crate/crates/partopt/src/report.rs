//! JSON reports, CSV cell dumps and gnuplot histograms.
//!
//! Thresholds are exact `{num, den}` pairs. Nothing time-dependent is
//! written, so equal runs give byte-identical files.

use std::io::Write;

use partopt_core::canonical::RankCell;
use partopt_core::corpus::Expectation;
use partopt_core::empirical::EmpiricalReport;
use partopt_core::incidence::SampleTally;
use partopt_core::threshold::{OrderingRow, ThresholdReport, Witness};
use partopt_core::{Error, Rational};
use serde::Serialize;

use crate::pipeline::Analysis;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RationalJson {
    pub num: i64,
    pub den: i64,
}

impl From<Rational> for RationalJson {
    fn from(r: Rational) -> Self {
        Self {
            num: *r.numer(),
            den: *r.denom(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CoverJson {
    pub tau_region: String,
    pub partition: String,
    pub max_corank: usize,
    pub members: usize,
}

#[derive(Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WitnessJson {
    Global {
        partition: String,
        worst_sample: usize,
        worst_tau: usize,
        max_corank: usize,
    },
    Local {
        per_sample: Vec<LocalWitnessJson>,
    },
    Microlocal,
    Vacuous {
        sample: Option<usize>,
        tau: Option<usize>,
    },
}

#[derive(Debug, Serialize)]
pub struct LocalWitnessJson {
    pub sample: usize,
    pub partition: String,
    pub max_corank: usize,
}

impl From<&Witness> for WitnessJson {
    fn from(w: &Witness) -> Self {
        match w {
            Witness::Global {
                partition,
                worst_sample,
                worst_tau,
                max_corank,
            } => WitnessJson::Global {
                partition: partition.to_string(),
                worst_sample: *worst_sample,
                worst_tau: *worst_tau,
                max_corank: *max_corank,
            },
            Witness::Local { per_sample } => WitnessJson::Local {
                per_sample: per_sample
                    .iter()
                    .map(|(s, p, c)| LocalWitnessJson {
                        sample: *s,
                        partition: p.to_string(),
                        max_corank: *c,
                    })
                    .collect(),
            },
            Witness::Microlocal => WitnessJson::Microlocal,
            Witness::Vacuous { sample, tau } => WitnessJson::Vacuous {
                sample: *sample,
                tau: *tau,
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub struct DiagnosticsJson {
    pub cells: usize,
    pub inadmissible: usize,
    pub marginal: usize,
}

#[derive(Debug, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ExpectedJson {
    Unregistered,
    Vacuous,
    Threshold(RationalJson),
}

impl From<Expectation> for ExpectedJson {
    fn from(e: Expectation) -> Self {
        match e {
            Expectation::Unregistered => ExpectedJson::Unregistered,
            Expectation::Vacuous => ExpectedJson::Vacuous,
            Expectation::Threshold(r) => ExpectedJson::Threshold(r.into()),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ModeReportJson {
    pub config: String,
    pub d: Option<usize>,
    pub k: usize,
    pub p: usize,
    pub mode: String,
    pub status: String,
    pub s_phi: Option<RationalJson>,
    pub per_point_threshold: Option<RationalJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alt_s_phi: Option<RationalJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alt_per_point_threshold: Option<RationalJson>,
    pub expected: ExpectedJson,
    pub cover: Vec<CoverJson>,
    pub witness: WitnessJson,
    pub diagnostics: DiagnosticsJson,
}

#[derive(Debug, Serialize)]
pub struct SamplingJson {
    pub requested: usize,
    pub accepted: usize,
    pub attempts: usize,
    pub convergence_failures: usize,
    pub submersion_failures: usize,
    pub domain_failures: usize,
    pub degenerate: usize,
    pub frame_failures: usize,
    pub shortfall: bool,
}

impl SamplingJson {
    fn new(t: &SampleTally, requested: usize, shortfall: bool, frame_failures: usize) -> Self {
        Self {
            requested,
            accepted: t.accepted,
            attempts: t.attempts,
            convergence_failures: t.convergence,
            submersion_failures: t.submersion,
            domain_failures: t.domain,
            degenerate: t.degenerate,
            frame_failures,
            shortfall,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct OrderingJson {
    pub ok: bool,
    pub rows: Vec<OrderingRowJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violation: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct OrderingRowJson {
    pub mode: String,
    pub status: String,
    pub s_phi: Option<RationalJson>,
}

impl From<&OrderingRow> for OrderingRowJson {
    fn from(r: &OrderingRow) -> Self {
        Self {
            mode: r.mode.to_string(),
            status: r.status.as_str().into(),
            s_phi: r.s_phi.map(Into::into),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunReportJson {
    pub schema_version: u32,
    pub config: String,
    pub d: Option<usize>,
    pub dims: Vec<usize>,
    pub components: Vec<String>,
    pub seed: u64,
    pub target: Vec<f64>,
    pub sampling: SamplingJson,
    pub tau_directions: usize,
    pub partitions: Vec<String>,
    pub reports: Vec<ModeReportJson>,
    pub ordering: OrderingJson,
    pub asymmetric_cells: usize,
    pub marginal_fraction: f64,
    pub trusted: bool,
}

fn mode_report(a: &Analysis, r: &ThresholdReport) -> ModeReportJson {
    let spec = &a.resolved.spec;
    ModeReportJson {
        config: spec.name().to_string(),
        d: a.resolved.d,
        k: spec.k(),
        p: spec.p(),
        mode: r.mode.to_string(),
        status: r.status.as_str().into(),
        s_phi: r.s_phi.map(Into::into),
        per_point_threshold: r.per_point.map(Into::into),
        alt_s_phi: r.alt_s_phi.map(Into::into),
        alt_per_point_threshold: r.alt_per_point(spec.k()).map(Into::into),
        expected: a.resolved.expected(r.mode).into(),
        cover: r
            .cover
            .iter()
            .map(|c| CoverJson {
                tau_region: c.tau_region.clone(),
                partition: c.partition.to_string(),
                max_corank: c.max_corank,
                members: c.members,
            })
            .collect(),
        witness: (&r.witness).into(),
        diagnostics: DiagnosticsJson {
            cells: r.cells,
            inadmissible: r.inadmissible_count,
            marginal: r.marginal_count,
        },
    }
}

pub fn run_report(a: &Analysis) -> RunReportJson {
    let spec = &a.resolved.spec;
    let ordering = match &a.ordering {
        Ok(rows) => OrderingJson {
            ok: true,
            rows: rows.iter().map(Into::into).collect(),
            violation: None,
        },
        Err(e) => OrderingJson {
            ok: false,
            rows: Vec::new(),
            violation: Some(e.to_string()),
        },
    };
    RunReportJson {
        schema_version: SCHEMA_VERSION,
        config: spec.name().to_string(),
        d: a.resolved.d,
        dims: spec.dims().to_vec(),
        components: spec.components().iter().map(|c| spec.render(c)).collect(),
        seed: a.seed,
        target: a.target.clone(),
        sampling: SamplingJson::new(&a.batch.tally, a.batch.requested, a.batch.shortfall(), a.frame_failures),
        tau_directions: a.grid.taus.len(),
        partitions: a.grid.partitions.iter().map(ToString::to_string).collect(),
        reports: a.reports.iter().map(|r| mode_report(a, r)).collect(),
        ordering,
        asymmetric_cells: a.grid.asymmetric_count(),
        marginal_fraction: a.marginal_fraction(),
        trusted: a.trusted(),
    }
}

pub fn to_json(a: &Analysis) -> String {
    let mut s = serde_json::to_string_pretty(&run_report(a)).expect("report serializes");
    s.push('\n');
    s
}

#[derive(Debug, Serialize)]
struct CellRow<'a> {
    sample_id: usize,
    tau_id: usize,
    tau: String,
    partition: &'a str,
    rank_l: usize,
    rank_r: usize,
    corank_l: usize,
    corank_r: usize,
    zero_l: bool,
    zero_r: bool,
    df_left: bool,
    df_right: bool,
    admissible: bool,
    microlocal_admissible: bool,
    sigma_gap: f64,
    marginal: bool,
}

/// One row per rank cell.
pub fn write_cells_csv<W: Write>(a: &Analysis, out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let names: Vec<String> = a.grid.partitions.iter().map(ToString::to_string).collect();
    let taus: Vec<String> = a
        .grid
        .taus
        .iter()
        .map(|t| t.iter().map(|v| format!("{v:.12}")).collect::<Vec<_>>().join(" "))
        .collect();
    let np = a.grid.partitions.len();
    for (i, c) in a.grid.cells.iter().enumerate() {
        let RankCell {
            sample_id,
            tau_id,
            rank_l,
            rank_r,
            corank_l,
            corank_r,
            zero_l,
            zero_r,
            df_left,
            df_right,
            admissible,
            microlocal_admissible,
            sigma_gap,
            marginal,
            ..
        } = *c;
        w.serialize(CellRow {
            sample_id,
            tau_id,
            tau: taus[tau_id].clone(),
            partition: &names[i % np],
            rank_l,
            rank_r,
            corank_l,
            corank_r,
            zero_l,
            zero_r,
            df_left,
            df_right,
            admissible,
            microlocal_admissible,
            sigma_gap,
            marginal,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct EmpiricalJson {
    pub schema_version: u32,
    pub config: String,
    pub set: String,
    pub pool: usize,
    pub tuples: u64,
    pub evaluated: u64,
    pub rejected_domain: u64,
    pub rejected_out_of_box: u64,
    pub resolution: usize,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub occupancy: f64,
    pub min_cell_count: u64,
    /// Occupancy is a finite-sample diagnostic, not a proof of interior.
    pub note: &'static str,
}

pub fn empirical_json(config: &str, set: &str, pool: usize, r: &EmpiricalReport) -> String {
    let j = EmpiricalJson {
        schema_version: SCHEMA_VERSION,
        config: config.into(),
        set: set.into(),
        pool,
        tuples: r.tuples,
        evaluated: r.evaluated,
        rejected_domain: r.rejected_domain,
        rejected_out_of_box: r.rejected_out_of_box,
        resolution: r.resolution,
        box_lo: r.hbox.lo.clone(),
        box_hi: r.hbox.hi.clone(),
        occupancy: r.occupancy,
        min_cell_count: r.min_cell_count,
        note: "diagnostic only: finite samples neither certify nor exclude interior",
    };
    let mut s = serde_json::to_string_pretty(&j).expect("report serializes");
    s.push('\n');
    s
}

/// Whitespace-delimited `t_1 … t_p count` rows at cell centers, with a blank
/// line after each scan line for gnuplot `splot`.
pub fn write_gnuplot<W: Write>(r: &EmpiricalReport, mut out: W) -> std::io::Result<()> {
    let p = r.hbox.p();
    writeln!(out, "# {} cells per axis, {} tuples", r.resolution, r.tuples)?;
    for (i, c) in r.counts.iter().enumerate() {
        let center = r.hbox.cell_center(i, r.resolution);
        for v in &center {
            write!(out, "{v:.9} ")?;
        }
        writeln!(out, "{c}")?;
        if p > 1 && (i + 1) % r.resolution == 0 {
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Exit code for an analysis: 3 on an ordering violation, 2 when an ok/vacuous
/// status disagrees with the registry, 4 when too many cells are marginal.
pub fn exit_code(a: &Analysis) -> i32 {
    if matches!(a.ordering, Err(Error::OrderingViolation { .. })) {
        3
    } else if !a.status_mismatches().is_empty() {
        2
    } else if !a.trusted() {
        4
    } else {
        0
    }
}
