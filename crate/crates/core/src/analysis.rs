//! Post-processing of run records: residual curves with confidence bands,
//! exact-solution counts, timing tables, and the domain analysis of exact
//! solutions (Ward clustering plus smoothed per-domain proposal shares).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::decomposition::{residual_from_costs, SpinAssignment};
use crate::engine::RunRecord;
use crate::error::{Error, Result};
use crate::oracle::{count_exact, OracleResult};

pub const DEFAULT_DOMAINS: usize = 4;
pub const DEFAULT_SMOOTHING_WINDOW: usize = 100;
const CI_LEVEL: f64 = 0.95;

/// Per-step mean residual error across runs with a Student-t band.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveSummary {
    pub steps: Vec<usize>,
    pub mean_residual: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub run_count: usize,
}

/// Mean and two-sided 95% Student-t interval of `values` (`n ≥ 2`).
pub fn mean_ci(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return (mean, mean, mean);
    }
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.5 + CI_LEVEL / 2.0);
    let half = t * (var / n).sqrt();
    (mean, mean - half, mean + half)
}

pub fn summarize_runs(records: &[RunRecord], oracle: &OracleResult) -> Result<CurveSummary> {
    if records.len() < 2 {
        return Err(Error::InvalidArgument("need at least two runs for a confidence band".into()));
    }
    let len = records[0].evaluations();
    if let Some(r) = records.iter().find(|r| r.evaluations() != len) {
        return Err(Error::Shape(format!(
            "run lengths differ: {} vs {}",
            r.evaluations(),
            len
        )));
    }
    if let Some(r) = records.iter().find(|r| r.instance_label != oracle.instance_label) {
        return Err(Error::InvalidArgument(format!(
            "record for '{}' summarized against oracle for '{}'",
            r.instance_label, oracle.instance_label
        )));
    }
    let mut out = CurveSummary {
        steps: Vec::with_capacity(len),
        mean_residual: Vec::with_capacity(len),
        ci_low: Vec::with_capacity(len),
        ci_high: Vec::with_capacity(len),
        run_count: records.len(),
    };
    let mut column = vec![0.0; records.len()];
    for step in 0..len {
        for (slot, r) in column.iter_mut().zip(records) {
            let best = r.iterations[step].best_cost_so_far;
            if best < oracle.best_cost && !oracle.is_exact(best, oracle.tie_tolerance) {
                return Err(Error::InconsistentOracle(format!(
                    "run seed {} reaches {best}, below the oracle optimum {}",
                    r.seed, oracle.best_cost
                )));
            }
            *slot = if oracle.is_exact(best, oracle.tie_tolerance) {
                0.0
            } else {
                residual_from_costs(best, oracle.best_cost, oracle.w_frobenius)
            };
        }
        let (m, lo, hi) = mean_ci(&column);
        out.steps.push(records[0].iterations[step].step);
        out.mean_residual.push(m);
        out.ci_low.push(lo);
        out.ci_high.push(hi);
    }
    Ok(out)
}

/// One agglomeration: clusters `a` and `b` (ids `< m` are solutions, id
/// `m + t` is the cluster formed at merge `t`) joined at Ward `height`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainModel {
    pub exact_solutions: Vec<SpinAssignment>,
    /// Domain id of each solution, in input order.
    pub cluster_of: Vec<usize>,
    /// Merge tree over the solutions sorted lexicographically.
    pub linkage: Vec<Merge>,
    pub n_domains: usize,
}

impl DomainModel {
    pub fn domain_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_domains];
        for &d in &self.cluster_of {
            sizes[d] += 1;
        }
        sizes
    }
}

/// Ward agglomerative clustering in the ±1 embedding, where squared
/// Euclidean distance is `4 ×` Hamming distance.
///
/// Solutions are clustered in sorted order, equal-height merges go to the
/// smallest index pair, and domain ids follow the smallest member of each
/// domain, so the partition and its labels do not depend on input order.
pub fn ward_cluster(exact_solutions: &[SpinAssignment], target_clusters: usize) -> Result<DomainModel> {
    let m = exact_solutions.len();
    if target_clusters == 0 || m < target_clusters {
        return Err(Error::InvalidArgument(format!(
            "cannot cut {m} solutions into {target_clusters} clusters"
        )));
    }
    if let Some(x) = exact_solutions.iter().find(|x| x.len() != exact_solutions[0].len()) {
        return Err(Error::Shape(format!(
            "solution lengths differ: {} vs {}",
            x.len(),
            exact_solutions[0].len()
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| exact_solutions[a].cmp(&exact_solutions[b]).then(a.cmp(&b)));
    let sorted: Vec<&SpinAssignment> = order.iter().map(|&i| &exact_solutions[i]).collect();

    // squared Euclidean distances between active clusters, by slot
    let mut dist = vec![0.0; m * m];
    for i in 0..m {
        for j in (i + 1)..m {
            let d = 4.0 * sorted[i].hamming(sorted[j]) as f64;
            dist[i * m + j] = d;
            dist[j * m + i] = d;
        }
    }
    let mut size = vec![1usize; m];
    let mut id: Vec<usize> = (0..m).collect();
    let mut active = vec![true; m];
    // members[slot] lists sorted indices in that cluster
    let mut members: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();
    let mut linkage = Vec::with_capacity(m - 1);
    let mut clusters = m;
    let mut members_cut: Option<Vec<usize>> = None;

    while clusters > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..m {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..m {
                if !active[j] {
                    continue;
                }
                let d = dist[i * m + j];
                let better = match best {
                    None => true,
                    Some((bd, _, _)) => d < bd - 1e-9 * bd.abs().max(1.0),
                };
                if better {
                    best = Some((d, i, j));
                }
            }
        }
        let (height, i, j) = best.expect("two active clusters");
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for k in 0..m {
            if !active[k] || k == i || k == j {
                continue;
            }
            let nk = size[k] as f64;
            let d = ((ni + nk) * dist[i * m + k] + (nj + nk) * dist[j * m + k] - nk * height) / (ni + nj + nk);
            dist[i * m + k] = d;
            dist[k * m + i] = d;
        }
        active[j] = false;
        size[i] += size[j];
        let moved = std::mem::take(&mut members[j]);
        members[i].extend(moved);
        linkage.push(Merge {
            a: id[i].min(id[j]),
            b: id[i].max(id[j]),
            height,
            size: size[i],
        });
        id[i] = m + linkage.len() - 1;
        clusters -= 1;
        if clusters == target_clusters {
            // keep building the full tree, but remember the cut
            let mut groups: Vec<Vec<usize>> = (0..m)
                .filter(|&s| active[s])
                .map(|s| members[s].clone())
                .collect();
            groups.iter_mut().for_each(|g| g.sort_unstable());
            groups.sort_by_key(|g| g[0]);
            let mut cluster_of = vec![0; m];
            for (d, g) in groups.iter().enumerate() {
                for &sorted_idx in g {
                    cluster_of[order[sorted_idx]] = d;
                }
            }
            members_cut = Some(cluster_of);
        }
    }
    let cluster_of = match target_clusters == m {
        true => {
            let mut c = vec![0; m];
            for (rank, &orig) in order.iter().enumerate() {
                c[orig] = rank;
            }
            c
        }
        false => members_cut.expect("cut reached"),
    };
    Ok(DomainModel {
        exact_solutions: exact_solutions.to_vec(),
        cluster_of,
        linkage,
        n_domains: target_clusters,
    })
}

/// Domain of the Hamming-nearest exact solution, lowest index on ties.
pub fn assign_domain(x: &SpinAssignment, model: &DomainModel) -> usize {
    let mut best = (usize::MAX, 0);
    for (i, s) in model.exact_solutions.iter().enumerate() {
        let d = x.hamming(s);
        if d < best.0 {
            best = (d, i);
        }
    }
    model.cluster_of[best.1]
}

/// Per-domain boxcar-smoothed shares of the proposed candidates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DomainTraces {
    pub steps: Vec<usize>,
    /// `traces[d][t]`
    pub traces: Vec<Vec<f64>>,
}

/// Moving average with a window of `window` samples starting `(window−1)/2`
/// before each point, truncated at the ends and divided by the samples
/// actually covered.
pub fn boxcar_smooth(values: &[f64], window: usize) -> Vec<f64> {
    let len = values.len();
    let mut prefix = vec![0.0; len + 1];
    for (i, v) in values.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    let back = (window - 1) / 2;
    (0..len)
        .map(|t| {
            let lo = t.saturating_sub(back);
            let hi = (t + window - back).min(len);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

pub fn domain_population(record: &RunRecord, model: &DomainModel, window: usize) -> Result<DomainTraces> {
    if window == 0 {
        return Err(Error::InvalidArgument("smoothing window must be >= 1".into()));
    }
    let mut onehot = vec![vec![0.0; record.evaluations()]; model.n_domains];
    for (t, it) in record.iterations.iter().enumerate() {
        onehot[assign_domain(&it.candidate, model)][t] = 1.0;
    }
    Ok(DomainTraces {
        steps: record.iterations.iter().map(|it| it.step).collect(),
        traces: onehot.iter().map(|v| boxcar_smooth(v, window)).collect(),
    })
}

/// Mean seconds per run for one algorithm.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingRow {
    pub algo: String,
    pub runs: usize,
    pub total: f64,
    pub fit: f64,
    pub solve: f64,
    pub eval: f64,
}

pub fn timing_table(groups: &[(String, Vec<RunRecord>)]) -> Result<Vec<TimingRow>> {
    groups
        .iter()
        .map(|(algo, records)| {
            if records.is_empty() {
                return Err(Error::InvalidArgument(format!("no records for '{algo}'")));
            }
            let n = records.len() as f64;
            let phase = |f: fn(&crate::engine::IterationRecord) -> f64| {
                records.iter().map(|r| r.iterations.iter().map(f).sum::<f64>()).sum::<f64>() / n
            };
            Ok(TimingRow {
                algo: algo.clone(),
                runs: records.len(),
                total: records.iter().map(|r| r.total_seconds).sum::<f64>() / n,
                fit: phase(|it| it.surrogate_fit_seconds),
                solve: phase(|it| it.solve_seconds),
                eval: phase(|it| it.eval_seconds),
            })
        })
        .collect()
}

/// Exact-solution counts, one row per instance and one column per
/// algorithm.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountTable {
    pub instances: Vec<String>,
    pub algos: Vec<String>,
    pub counts: Vec<Vec<usize>>,
    pub runs: Vec<Vec<usize>>,
}

impl CountTable {
    pub fn totals(&self) -> Vec<usize> {
        (0..self.algos.len())
            .map(|a| self.counts.iter().map(|row| row[a]).sum())
            .collect()
    }

    pub fn get(&self, instance: &str, algo: &str) -> Option<usize> {
        let i = self.instances.iter().position(|s| s == instance)?;
        let a = self.algos.iter().position(|s| s == algo)?;
        Some(self.counts[i][a])
    }
}

/// Counts runs reaching each instance's optimum. Records are grouped by
/// `(instance label, algorithm name)`; instances without an oracle are
/// skipped with a warning.
pub fn count_table(
    records: &[RunRecord],
    oracles: &BTreeMap<String, OracleResult>,
    tolerance: f64,
) -> Result<CountTable> {
    let mut groups: BTreeMap<(String, String), Vec<RunRecord>> = BTreeMap::new();
    let mut algos: Vec<String> = Vec::new();
    for r in records {
        let name = r.algo.name();
        if !algos.contains(&name) {
            algos.push(name.clone());
        }
        groups
            .entry((r.instance_label.clone(), name))
            .or_default()
            .push(r.clone());
    }
    let instances: Vec<String> = groups
        .keys()
        .map(|(i, _)| i.clone())
        .filter(|i| {
            let known = oracles.contains_key(i);
            if !known {
                log::warn!("no oracle for instance '{i}', leaving it out of the count table");
            }
            known
        })
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut counts = vec![vec![0; algos.len()]; instances.len()];
    let mut runs = vec![vec![0; algos.len()]; instances.len()];
    for (i, inst) in instances.iter().enumerate() {
        for (a, algo) in algos.iter().enumerate() {
            if let Some(rs) = groups.get(&(inst.clone(), algo.clone())) {
                counts[i][a] = count_exact(rs, &oracles[inst], tolerance)?;
                runs[i][a] = rs.len();
            }
        }
    }
    Ok(CountTable {
        instances,
        algos,
        counts,
        runs,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{other:?}")),
    }
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// `step,mean,lo,hi`
pub fn write_curve_csv(path: impl AsRef<Path>, curve: &CurveSummary) -> Result<()> {
    let rows: Vec<Vec<String>> = (0..curve.steps.len())
        .map(|t| {
            vec![
                curve.steps[t].to_string(),
                num(curve.mean_residual[t]),
                num(curve.ci_low[t]),
                num(curve.ci_high[t]),
            ]
        })
        .collect();
    let header = ["step", "mean", "lo", "hi"].map(String::from);
    write_csv(path.as_ref(), &header, &rows)
}

/// `instance,<algo>...` with a trailing `Total` row.
pub fn write_counts_csv(path: impl AsRef<Path>, table: &CountTable) -> Result<()> {
    let mut header = vec!["instance".to_string()];
    header.extend(table.algos.iter().cloned());
    let mut rows: Vec<Vec<String>> = table
        .instances
        .iter()
        .zip(&table.counts)
        .map(|(inst, row)| {
            std::iter::once(inst.clone())
                .chain(row.iter().map(ToString::to_string))
                .collect()
        })
        .collect();
    rows.push(
        std::iter::once("Total".to_string())
            .chain(table.totals().iter().map(ToString::to_string))
            .collect(),
    );
    write_csv(path.as_ref(), &header, &rows)
}

/// Phases as rows (`cpu`, `fit`, `solve`, `eval`), algorithms as columns.
pub fn write_timing_csv(path: impl AsRef<Path>, rows: &[TimingRow]) -> Result<()> {
    let mut header = vec!["phase".to_string()];
    header.extend(rows.iter().map(|r| r.algo.clone()));
    let phases: [(&str, fn(&TimingRow) -> f64); 4] = [
        ("cpu", |r| r.total),
        ("fit", |r| r.fit),
        ("solve", |r| r.solve),
        ("eval", |r| r.eval),
    ];
    let body: Vec<Vec<String>> = phases
        .iter()
        .map(|(name, f)| {
            std::iter::once(name.to_string())
                .chain(rows.iter().map(|r| num(f(r))))
                .collect()
        })
        .collect();
    write_csv(path.as_ref(), &header, &body)
}

/// `step,d0,d1,...`
pub fn write_domain_csv(path: impl AsRef<Path>, traces: &DomainTraces) -> Result<()> {
    let mut header = vec!["step".to_string()];
    header.extend((0..traces.traces.len()).map(|d| format!("d{d}")));
    let rows: Vec<Vec<String>> = (0..traces.steps.len())
        .map(|t| {
            std::iter::once(traces.steps[t].to_string())
                .chain(traces.traces.iter().map(|tr| num(tr[t])))
                .collect()
        })
        .collect();
    write_csv(path.as_ref(), &header, &rows)
}

/// Writes a short human-readable count table to `out`.
pub fn print_count_table(out: &mut impl Write, table: &CountTable) -> std::io::Result<()> {
    write!(out, "{:<24}", "instance")?;
    for a in &table.algos {
        write!(out, " {a:>10}")?;
    }
    writeln!(out)?;
    for (inst, row) in table.instances.iter().zip(&table.counts) {
        write!(out, "{inst:<24}")?;
        for c in row {
            write!(out, " {c:>10}")?;
        }
        writeln!(out)?;
    }
    write!(out, "{:<24}", "Total")?;
    for c in table.totals() {
        write!(out, " {c:>10}")?;
    }
    writeln!(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{AlgoSpec, Algorithm, IterationRecord};

    fn spins(s: &str) -> SpinAssignment {
        SpinAssignment::parse_signs(s, s.len()).unwrap()
    }

    fn record(label: &str, bests: &[f64], cands: &[&str]) -> RunRecord {
        RunRecord {
            instance_label: label.into(),
            algo: AlgoSpec::new(Algorithm::Nbocs),
            seed: 0,
            n_rows: cands.first().map_or(1, |c| c.len()),
            k: 1,
            n_init: 0,
            dataset_rows: 0,
            iterations: bests
                .iter()
                .enumerate()
                .map(|(i, &b)| IterationRecord {
                    step: i + 1,
                    candidate: spins(cands.get(i).copied().unwrap_or("+")),
                    cost: b,
                    best_cost_so_far: b,
                    surrogate_fit_seconds: 0.5,
                    solve_seconds: 0.25,
                    eval_seconds: 0.125,
                })
                .collect(),
            total_seconds: 2.0,
        }
    }

    fn oracle(label: &str, best: f64) -> OracleResult {
        OracleResult {
            instance_label: label.into(),
            k: 1,
            best_cost: best,
            minimizers: vec![],
            second_best_cost: None,
            states_enumerated: 0,
            elapsed_seconds: 0.0,
            tie_tolerance: 1e-9,
            w_frobenius: 1.0,
        }
    }

    #[test]
    fn identical_runs_have_zero_width() {
        let recs = vec![record("a", &[4.0, 1.0], &[]), record("a", &[4.0, 1.0], &[])];
        let c = summarize_runs(&recs, &oracle("a", 1.0)).unwrap();
        assert_eq!(c.mean_residual, vec![1.0, 0.0]);
        assert_eq!(c.ci_low, c.mean_residual);
        assert_eq!(c.ci_high, c.mean_residual);
    }

    #[test]
    fn t_interval_matches_closed_form() {
        // df = 2: t_{0.975} = 4.302652729749464
        let (m, lo, hi) = mean_ci(&[1.0, 2.0, 3.0]);
        let half = 4.302652729749464 * (1.0f64 / 3.0).sqrt();
        assert!((m - 2.0).abs() < 1e-15);
        assert!((lo - (2.0 - half)).abs() < 1e-9);
        assert!((hi - (2.0 + half)).abs() < 1e-9);
    }

    #[test]
    fn summarize_validates() {
        let a = record("a", &[1.0, 1.0], &[]);
        assert!(summarize_runs(std::slice::from_ref(&a), &oracle("a", 1.0)).is_err());
        let b = record("a", &[1.0], &[]);
        assert!(summarize_runs(&[a.clone(), b], &oracle("a", 1.0)).is_err());
        assert!(summarize_runs(&[a.clone(), a.clone()], &oracle("b", 1.0)).is_err());
        assert!(summarize_runs(&[a.clone(), a], &oracle("a", 2.0)).is_err());
    }

    #[test]
    fn far_apart_solutions_are_singletons() {
        let sols = ["++++++", "+++---", "---+++", "------"].map(spins);
        let m = ward_cluster(&sols, 4).unwrap();
        let mut ids = m.cluster_of.clone();
        ids.sort();
        assert_eq!(ids, vec![0, 1, 2, 3]);
        assert!(ward_cluster(&sols, 5).is_err());
    }

    #[test]
    fn duplicates_merge_first_at_zero() {
        let sols = ["++++", "----", "++++", "+-+-"].map(spins);
        let m = ward_cluster(&sols, 3).unwrap();
        assert_eq!(m.linkage[0].height, 0.0);
        assert_eq!(m.cluster_of[0], m.cluster_of[2]);
        assert_eq!(m.linkage.len(), 3);
    }

    #[test]
    fn ward_is_order_independent() {
        let sols: Vec<SpinAssignment> = ["+++++", "++++-", "+++--", "-----", "----+", "+-+-+", "-+-+-"]
            .into_iter()
            .map(spins)
            .collect();
        let a = ward_cluster(&sols, 3).unwrap();
        let mut rev = sols.clone();
        rev.reverse();
        let b = ward_cluster(&rev, 3).unwrap();
        for i in 0..sols.len() {
            assert_eq!(a.cluster_of[i], b.cluster_of[sols.len() - 1 - i]);
        }
    }

    #[test]
    fn assign_domain_examples() {
        let sols = ["++++++", "------"].map(spins);
        let m = ward_cluster(&sols, 2).unwrap();
        assert_eq!(assign_domain(&sols[1], &m), m.cluster_of[1]);
        assert_eq!(assign_domain(&spins("-+----"), &m), m.cluster_of[1]);
        // equidistant: lowest solution index wins
        assert_eq!(assign_domain(&spins("+++---"), &m), m.cluster_of[0]);
    }

    #[test]
    fn boxcar_examples() {
        let alt = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let s = boxcar_smooth(&alt, 2);
        assert!(s[1..5].iter().all(|&v| v == 0.5));
        assert_eq!(boxcar_smooth(&alt, 1), alt.to_vec());
        let ones = boxcar_smooth(&[1.0; 7], 4);
        assert!(ones.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn populations_sum_to_one() {
        let sols = ["+++", "---", "+-+", "-+-"].map(spins);
        let m = ward_cluster(&sols, 4).unwrap();
        let cands = ["+++", "---", "++-", "+-+", "-+-", "--+", "+++", "-++"];
        let rec = record("a", &[1.0; 8], &cands);
        let t = domain_population(&rec, &m, 3).unwrap();
        for step in 0..8 {
            let s: f64 = t.traces.iter().map(|tr| tr[step]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(domain_population(&rec, &m, 0).is_err());
        let same = record("a", &[1.0; 3], &["+++", "+++", "+++"]);
        let t = domain_population(&same, &m, 100).unwrap();
        let d = m.cluster_of[0];
        assert!(t.traces[d].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn timing_means() {
        let mut a = record("a", &[1.0, 1.0], &[]);
        let b = record("a", &[1.0, 1.0], &[]);
        a.total_seconds = 4.0;
        let rows = timing_table(&[("nbocs".into(), vec![a, b])]).unwrap();
        assert_eq!(rows[0].total, 3.0);
        assert_eq!(rows[0].fit, 1.0);
        assert_eq!(rows[0].solve, 0.5);
        assert_eq!(rows[0].eval, 0.25);
        assert!(timing_table(&[("x".into(), vec![])]).is_err());
    }

    #[test]
    fn counts_and_csv() {
        let recs = vec![
            record("a", &[2.0, 1.0], &[]),
            record("a", &[2.0, 2.0], &[]),
            record("b", &[5.0, 3.0], &[]),
        ];
        let mut oracles = BTreeMap::new();
        oracles.insert("a".to_string(), oracle("a", 1.0));
        oracles.insert("b".to_string(), oracle("b", 3.0));
        let t = count_table(&recs, &oracles, 1e-6).unwrap();
        assert_eq!(t.get("a", "nbocs"), Some(1));
        assert_eq!(t.get("b", "nbocs"), Some(1));
        assert_eq!(t.totals(), vec![2]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("counts.csv");
        write_counts_csv(&p, &t).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "instance,nbocs\na,1\nb,1\nTotal,2\n");
    }
}
