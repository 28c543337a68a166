//! CSV reports. Each file starts with one `#` comment line naming the tool
//! version and the scenario hash; the rest is plain RFC 4180 CSV.

use scr_core::dashf::{RunTrace, Solution};
use scr_core::CostBreakdown;

use crate::files::TOOL_VERSION;

pub const TRACE_COLUMNS: [&str; 9] = ["iter", "y", "scr", "obj_part1", "obj_part2", "T_total", "E_total", "V", "wall_ms"];
pub const COMPARE_COLUMNS: [&str; 5] = ["algorithm", "scr", "T_total", "E_total", "V"];

/// Shortest decimal that parses back to the same value.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn header_line(key: &str, hash: &str) -> String {
    format!("# scr {TOOL_VERSION} {key}={hash}\n")
}

pub fn write_csv(header: &str, columns: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut out = header.as_bytes().to_vec();
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(columns).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.flush().expect("in-memory write");
    drop(w);
    out
}

pub fn trace_csv(scenario_hash: &str, trace: &RunTrace, timing: bool) -> Vec<u8> {
    let rows: Vec<Vec<String>> = trace
        .rows
        .iter()
        .map(|r| {
            vec![
                r.iter.to_string(),
                num(r.y),
                num(r.scr),
                num(r.obj_part1),
                num(r.obj_part2),
                num(r.total_delay),
                num(r.total_energy),
                num(r.total_score),
                num(if timing { r.wall_ms } else { 0.0 }),
            ]
        })
        .collect();
    write_csv(&header_line("scenario_sha256", scenario_hash), &TRACE_COLUMNS, &rows)
}

pub fn compare_row(sol: &Solution, bd: &CostBreakdown) -> Vec<String> {
    vec![sol.algorithm.name().to_string(), num(sol.scr), num(bd.total_delay), num(bd.total_energy), num(bd.total_score)]
}

pub fn compare_csv(scenario_hash: &str, rows: &[Vec<String>]) -> Vec<u8> {
    write_csv(&header_line("scenario_sha256", scenario_hash), &COMPARE_COLUMNS, rows)
}

/// Splits a report into its comment header and the parsed records.
pub fn read_csv(bytes: &[u8]) -> (String, Vec<String>, Vec<Vec<String>>) {
    let text = std::str::from_utf8(bytes).expect("utf-8 report");
    let (comment, body) = text.split_once('\n').unwrap_or((text, ""));
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let cols = r.headers().map(|h| h.iter().map(String::from).collect()).unwrap_or_default();
    let rows = r.records().filter_map(|rec| rec.ok()).map(|rec| rec.iter().map(String::from).collect()).collect();
    (comment.to_string(), cols, rows)
}
