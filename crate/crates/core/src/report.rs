//! Exports derived from a campaign report: first-order heatmaps, second-order
//! scatter data and counter summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;

use crate::campaign::CampaignReport;
use crate::faults::Lifetime;

pub const DEFAULT_BINS: usize = 200;

/// Exploitable first-order faults per model, binned over the fault-free
/// execution length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeatmapGrid {
    pub bins: usize,
    /// Fault-free run length.
    pub length: u64,
    /// One row per non-permanent model, in report order.
    pub rows: Vec<(String, Vec<u64>)>,
}

/// Bin of relative time `t`: bin `i` covers `[i*L/bins, (i+1)*L/bins)`;
/// times at or past `L` fall into the last bin.
pub fn bin_index(t: u64, length: u64, bins: usize) -> usize {
    if length == 0 {
        return 0;
    }
    ((t as u128 * bins as u128 / length as u128) as usize).min(bins - 1)
}

impl HeatmapGrid {
    pub fn from_report(report: &CampaignReport, bins: usize) -> Self {
        let bins = bins.max(1);
        let length = report.baseline.length as u64;
        let start = report.baseline.start_time;
        let mut rows: Vec<(String, Vec<u64>)> = Vec::new();
        for m in &report.models {
            if m.lifetime != Lifetime::Permanent && !rows.iter().any(|(id, _)| *id == m.id) {
                rows.push((m.id.clone(), vec![0; bins]));
            }
        }
        for f in report.exploitable.iter().filter(|f| f.order() == 1) {
            let fault = &f.faults[0];
            if let Some((_, row)) = rows.iter_mut().find(|(id, _)| *id == fault.point.model) {
                row[bin_index(fault.time().saturating_sub(start), length, bins)] += 1;
            }
        }
        Self { bins, length, rows }
    }

    pub fn row_sum(&self, model: &str) -> u64 {
        self.rows
            .iter()
            .find(|(id, _)| id == model)
            .map(|(_, r)| r.iter().sum())
            .unwrap_or(0)
    }

    /// `model,bin_0,…,bin_{n-1}` with a header line.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["model".to_string()];
        header.extend((0..self.bins).map(|i| format!("bin{i}")));
        w.write_record(&header)?;
        for (id, row) in &self.rows {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Binary PGM, one pixel row per model, brightness proportional to the
    /// bin count (0 = no exploitable fault).
    pub fn to_pgm(&self) -> Vec<u8> {
        let max = self.rows.iter().flat_map(|(_, r)| r).copied().max().unwrap_or(0);
        let mut out = format!("P5\n{} {}\n255\n", self.bins, self.rows.len()).into_bytes();
        for (_, row) in &self.rows {
            out.extend(row.iter().map(|&c| if max == 0 { 0 } else { (c * 255 / max) as u8 }));
        }
        out
    }
}

/// Second-order exploitable combinations as `(t1, t2) -> count`, times
/// relative to the campaign start.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScatterGrid {
    pub points: BTreeMap<(u64, u64), u64>,
}

impl ScatterGrid {
    pub fn from_report(report: &CampaignReport) -> Self {
        let start = report.baseline.start_time;
        let mut points = BTreeMap::new();
        for f in report.exploitable.iter().filter(|f| f.order() == 2) {
            let t1 = f.faults[0].time().saturating_sub(start);
            let t2 = f.faults[1].time().saturating_sub(start);
            *points.entry((t1, t2)).or_insert(0) += 1;
        }
        Self { points }
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t1", "t2", "count"])?;
        for (&(t1, t2), &n) in &self.points {
            w.serialize((t1, t2, n))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Plain-text counter summary.
pub fn stats_text(report: &CampaignReport) -> String {
    let c = &report.counters;
    let mut s = String::new();
    let _ = writeln!(s, "oracle: {}", report.oracle);
    let _ = writeln!(s, "max order: {}", report.max_order);
    let _ = writeln!(s, "baseline: {} instructions, {}", report.baseline.length, report.baseline.verdict);
    let rows = [
        ("sequences", c.sequences),
        ("points", c.points),
        ("instantiations", c.instantiations),
        ("executed", c.runs),
        ("dry runs", c.dry_runs),
        ("pruned", c.pruned),
        ("exploitable", c.exploitable),
        ("oracle rejected", c.oracle_rejected),
        ("timeouts", c.timeouts),
        ("invalid assembly", c.invalid_assembly),
        ("memory errors", c.memory_errors),
        ("hard faults", c.hard_faults),
    ];
    for (k, v) in rows {
        let _ = writeln!(s, "{k}: {v}");
    }
    let mut per_seq: BTreeMap<String, u64> = BTreeMap::new();
    for f in &report.exploitable {
        *per_seq.entry(f.sequence.join(",")).or_default() += 1;
    }
    for (seq, n) in per_seq {
        let _ = writeln!(s, "exploitable [{seq}]: {n}");
    }
    let _ = writeln!(s, "workers: {} (max active {})", report.stats.workers, report.stats.max_active_workers);
    let _ = writeln!(s, "wall time: {} ms", report.stats.wall_ms);
    s
}
