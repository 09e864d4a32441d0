//! Workload traces: parsing task records, per-job aggregation, outlier
//! filtering and turning job clusters into user types.
//!
//! Trace files are CSV with the header `time,job_id,task_id,cpu,mem`.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::demand::UtilityParams;
use crate::error::{invalid, Error, Result};
use crate::kmeans::ClusterModel;
use crate::pricing::{Instance, ResourceModel, UserType};

pub const TRACE_HEADER: [&str; 5] = ["time", "job_id", "task_id", "cpu", "mem"];

/// Usage of one task in one interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub time: u64,
    pub job_id: String,
    pub task_id: String,
    pub cpu: f64,
    pub mem: f64,
}

/// Usage of a job summed over its tasks and intervals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobUsage {
    pub job_id: String,
    pub cpu: f64,
    pub mem: f64,
}

impl JobUsage {
    pub fn point(&self) -> Vec<f64> {
        vec![self.cpu, self.mem]
    }
}

pub fn parse_trace(path: impl AsRef<Path>) -> Result<Vec<TaskRecord>> {
    parse_trace_reader(std::fs::File::open(path)?)
}

/// Reads and validates task records. Errors carry the 1-based file line.
pub fn parse_trace_reader(reader: impl Read) -> Result<Vec<TaskRecord>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = csv.headers().map_err(|e| Error::Trace {
        line: 1,
        reason: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != TRACE_HEADER {
        return Err(Error::Trace {
            line: 1,
            reason: format!(
                "expected header `{}`, got `{}`",
                TRACE_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for row in csv.records() {
        let row = row.map_err(|e| Error::Trace {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let fail = |reason: String| Error::Trace { line, reason };
        if row.len() != TRACE_HEADER.len() {
            return Err(fail(format!("expected 5 fields, got {}", row.len())));
        }
        let time = row[0]
            .parse::<u64>()
            .map_err(|_| fail(format!("time `{}` is not a nonnegative integer", &row[0])))?;
        let usage = |k: usize| -> Result<f64> {
            let v: f64 = row[k]
                .parse()
                .map_err(|_| fail(format!("{} `{}` is not a number", TRACE_HEADER[k], &row[k])))?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(fail(format!(
                    "{} must be finite and nonnegative, got {v}",
                    TRACE_HEADER[k]
                )));
            }
            Ok(v)
        };
        let record = TaskRecord {
            time,
            job_id: row[1].to_string(),
            task_id: row[2].to_string(),
            cpu: usage(3)?,
            mem: usage(4)?,
        };
        if !seen.insert((record.job_id.clone(), record.task_id.clone(), record.time)) {
            return Err(fail(format!(
                "duplicate record for job {} task {} at time {}",
                record.job_id, record.task_id, record.time
            )));
        }
        records.push(record);
    }
    Ok(records)
}

/// Per-job totals, ordered by job id.
pub fn aggregate(records: &[TaskRecord]) -> Vec<JobUsage> {
    let mut jobs: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for r in records {
        let e = jobs.entry(&r.job_id).or_default();
        e.0 += r.cpu;
        e.1 += r.mem;
    }
    jobs.into_iter()
        .map(|(id, (cpu, mem))| JobUsage {
            job_id: id.to_string(),
            cpu,
            mem,
        })
        .collect()
}

/// Mean and population standard deviation of job totals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceStats {
    pub jobs: usize,
    pub mean_cpu: f64,
    pub mean_mem: f64,
    pub std_cpu: f64,
    pub std_mem: f64,
}

impl TraceStats {
    pub fn of(jobs: &[JobUsage]) -> Self {
        let n = jobs.len() as f64;
        let mean = |f: fn(&JobUsage) -> f64| jobs.iter().map(f).sum::<f64>() / n;
        let (mc, mm) = (mean(|j| j.cpu), mean(|j| j.mem));
        let std = |f: fn(&JobUsage) -> f64, m: f64| (jobs.iter().map(|j| (f(j) - m).powi(2)).sum::<f64>() / n).sqrt();
        Self {
            jobs: jobs.len(),
            mean_cpu: mc,
            mean_mem: mm,
            std_cpu: std(|j| j.cpu, mc),
            std_mem: std(|j| j.mem, mm),
        }
    }

    /// Standard deviation over mean, CPU then memory.
    pub fn variation(&self) -> (f64, f64) {
        (self.std_cpu / self.mean_cpu, self.std_mem / self.mean_mem)
    }
}

/// Keeps jobs within `k_std` standard deviations of the mean in both CPU and
/// memory, using precomputed statistics.
pub fn filter_outliers(jobs: &[JobUsage], stats: &TraceStats, k_std: f64) -> Vec<JobUsage> {
    jobs.iter()
        // written as "not beyond" so that `∞·0` (NaN) keeps the job
        .filter(|j| {
            !((j.cpu - stats.mean_cpu).abs() > k_std * stats.std_cpu
                || (j.mem - stats.mean_mem).abs() > k_std * stats.std_mem)
        })
        .cloned()
        .collect()
}

/// Aggregates tasks into jobs and drops outliers in one pass; statistics
/// come from the unfiltered totals.
pub fn aggregate_and_filter(records: &[TaskRecord], k_std: f64) -> Vec<JobUsage> {
    let jobs = aggregate(records);
    if jobs.is_empty() {
        return jobs;
    }
    let stats = TraceStats::of(&jobs);
    filter_outliers(&jobs, &stats, k_std)
}

/// Turns a two-dimensional cluster model into an instance with resources
/// `cpu` and `mem`, one user type per cluster.
pub fn build_instance(
    model: &ClusterModel,
    capacities: &[f64],
    gamma: f64,
    alphas: &[f64],
    cs: &[f64],
    counts: &[u32],
) -> Result<Instance> {
    let k = model.centroids.len();
    if model.centroids.iter().any(|c| c.len() != 2) {
        return Err(Error::Dimension("cluster centroids must be (cpu, mem) pairs".into()));
    }
    for (name, len) in [("alphas", alphas.len()), ("cs", cs.len()), ("counts", counts.len())] {
        if len != k {
            return Err(Error::Dimension(format!("{name} has {len} entries for {k} clusters")));
        }
    }
    if capacities.len() != 2 {
        return Err(Error::Dimension(format!(
            "{} capacities for resources cpu, mem",
            capacities.len()
        )));
    }
    let users = (0..k)
        .map(|j| {
            let utility = UtilityParams::new(alphas[j], cs[j]).map_err(|e| match e {
                Error::InvalidParameter { field, reason } => invalid(format!("{field}[{j}]"), reason),
                other => other,
            })?;
            UserType::new(
                format!("cluster{}", j + 1),
                counts[j],
                model.centroids[j].clone(),
                utility,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let resources = ResourceModel::new(vec!["cpu".into(), "mem".into()], capacities.to_vec())?;
    Instance::new(resources, users, gamma)
}

/// Writes `cluster_id,centroid_cpu,centroid_mem,count`.
pub fn write_cluster_report(model: &ClusterModel, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cluster_id", "centroid_cpu", "centroid_mem", "count"])?;
    for (c, (centroid, count)) in model.centroids.iter().zip(&model.counts).enumerate() {
        w.write_record([
            (c + 1).to_string(),
            centroid[0].to_string(),
            centroid.get(1).copied().unwrap_or(0.0).to_string(),
            count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
