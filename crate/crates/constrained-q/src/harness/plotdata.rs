//! Reshapes the toolkit's result CSVs into one tidy `plot,series,x,y,aux`
//! table, so any plotting tool can draw them without knowing the source
//! schemas. The input kind is sniffed from its header line.

use super::highway::METRICS_HEADER;
use super::search::SEARCH_HEADER;
use super::tree::{ALGO_CONSTRAINED, ALGO_SHAPED};
use anyhow::{bail, Context, Result};
use std::path::Path;

pub const TIDY_HEADER: &str = "plot,series,x,y,aux";

const TREE_SUMMARY_HEADER: &str = "config_hash,depth,cql_converged,cql_mean_samples,\
cql_std_samples,cql_ci95,rs_converged,rs_mean_samples,rs_std_samples,rs_ci95,ratio,wall_ms";
const TREE_RUNS_HEADER: &str =
    "config_hash,depth,algorithm,seed,converged,episode,samples,episodes_run";
const CURVES_HEADER: &str =
    "config_hash,depth,algorithm,seed,episode,samples,greedy_return,is_optimal";

type TidyRow = [String; 5];

fn row(plot: &str, series: String, x: &str, y: &str, aux: &str) -> TidyRow {
    [plot.to_string(), series, x.to_string(), y.to_string(), aux.to_string()]
}

fn tree_summary_rows(rec: &csv::StringRecord, out: &mut Vec<TidyRow>) {
    let depth = &rec[1];
    out.push(row("sample-complexity", ALGO_CONSTRAINED.into(), depth, &rec[3], &rec[5]));
    out.push(row("sample-complexity", ALGO_SHAPED.into(), depth, &rec[7], &rec[9]));
    out.push(row("sample-ratio", "ratio".into(), depth, &rec[10], ""));
}

fn tree_runs_rows(rec: &csv::StringRecord, out: &mut Vec<TidyRow>) {
    // Censored runs have no convergence sample count to plot.
    if rec[6].is_empty() {
        return;
    }
    out.push(row("sample-complexity-runs", rec[2].to_string(), &rec[1], &rec[6], &rec[3]));
}

fn curves_rows(rec: &csv::StringRecord, out: &mut Vec<TidyRow>) {
    let series = format!("d{}-{}", &rec[1], &rec[2]);
    out.push(row("learning-curve", series, &rec[5], &rec[6], &rec[7]));
}

fn metrics_rows(rec: &csv::StringRecord, out: &mut Vec<TidyRow>) {
    let run = &rec[1];
    let update = &rec[3];
    out.push(row("training-speed", run.to_string(), update, &rec[6], &rec[7]));
    out.push(row("training-violations", run.to_string(), update, &rec[14], &rec[13]));
    out.push(row("training-loss", run.to_string(), update, &rec[4], &rec[5]));
}

fn search_rows(rec: &csv::StringRecord, out: &mut Vec<TidyRow>) {
    let sample = format!("sample-{}", &rec[1]);
    out.push(row("search-tradeoff", sample, &rec[5], &rec[12], &rec[2]));
    out.push(row("search-lambda", "violations".into(), &rec[2], &rec[12], &rec[13]));
}

/// Converts one result CSV into tidy rows. Fails on a header this toolkit
/// never writes.
pub fn tidy_rows(input: &Path) -> Result<Vec<TidyRow>> {
    let mut reader = csv::Reader::from_path(input)
        .with_context(|| format!("reading {}", input.display()))?;
    let header = reader.headers()?.iter().collect::<Vec<_>>().join(",");
    let mapper: fn(&csv::StringRecord, &mut Vec<TidyRow>) = match header.as_str() {
        h if h == TREE_SUMMARY_HEADER => tree_summary_rows,
        h if h == TREE_RUNS_HEADER => tree_runs_rows,
        h if h == CURVES_HEADER => curves_rows,
        h if h == METRICS_HEADER => metrics_rows,
        h if h == SEARCH_HEADER => search_rows,
        other => bail!("unrecognized result file (header: {other})"),
    };
    let mut rows = Vec::new();
    for rec in reader.records() {
        mapper(&rec?, &mut rows);
    }
    Ok(rows)
}

/// Reads a result CSV and writes the tidy table next to whatever path the
/// caller picked. Empty inputs produce a header-only file.
pub fn write_plot_data(input: &Path, output: &Path) -> Result<usize> {
    let rows = tidy_rows(input)?;
    let mut w = csv::Writer::from_path(output)
        .with_context(|| format!("creating {}", output.display()))?;
    w.write_record(TIDY_HEADER.split(','))?;
    for r in &rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn tree_summary_becomes_two_series_and_a_ratio() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("summary.csv");
        fs::write(
            &input,
            format!("{TREE_SUMMARY_HEADER}\nabcd,3,20,100.0,5.0,2.2,20,400.0,9.0,4.1,0.25,17\n"),
        )
        .unwrap();
        let rows = tidy_rows(&input).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0], row("sample-complexity", ALGO_CONSTRAINED.into(), "3", "100.0", "2.2"));
        assert_eq!(rows[2][3], "0.25");
    }

    #[test]
    fn metrics_rows_fan_out_per_plot_and_empty_inputs_keep_the_header() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("metrics.csv");
        fs::write(
            &input,
            format!(
                "{METRICS_HEADER}\n\
                 ff,cdqn-s0,0,200,0.1,0.2,24.5,0.9,0,0,1,3,0,0.25,4.17,900\n"
            ),
        )
        .unwrap();
        let out = dir.path().join("tidy.csv");
        let n = write_plot_data(&input, &out).unwrap();
        assert_eq!(n, 3);
        let text = fs::read_to_string(&out).unwrap();
        assert!(text.starts_with(TIDY_HEADER));
        assert!(text.contains("training-speed,cdqn-s0,200,24.5,0.9"));
        assert!(text.contains("training-violations,cdqn-s0,200,4.17,0.25"));

        let empty = dir.path().join("empty.csv");
        fs::write(&empty, format!("{SEARCH_HEADER}\n")).unwrap();
        let out2 = dir.path().join("tidy2.csv");
        assert_eq!(write_plot_data(&empty, &out2).unwrap(), 0);
        assert_eq!(fs::read_to_string(&out2).unwrap().trim(), TIDY_HEADER);
    }

    #[test]
    fn unknown_headers_are_rejected_and_censored_runs_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let bogus = dir.path().join("bogus.csv");
        fs::write(&bogus, "a,b,c\n1,2,3\n").unwrap();
        assert!(tidy_rows(&bogus).is_err());

        let runs = dir.path().join("runs.csv");
        fs::write(
            &runs,
            format!(
                "{TREE_RUNS_HEADER}\nff,2,constrained-q,5,true,12,480,40\n\
                 ff,2,reward-shaping,5,false,,,4000\n"
            ),
        )
        .unwrap();
        let rows = tidy_rows(&runs).unwrap();
        assert_eq!(rows.len(), 1, "the censored row carries nothing to plot");
        assert_eq!(rows[0][1], "constrained-q");
    }
}
