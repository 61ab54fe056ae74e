//! Score files: `#` comment lines (threshold first), a header row, then one
//! row per scored step.
//!
//! ```text
//! # threshold=9.2103403719761836e0
//! time_index,x0,x1,collective,decision
//! 15,1.5e-1,-3.2e-1,1.5e-1,0
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::ScoreSeries;
use crate::error::{CgadError, Result};

/// Writes `scores`, adding `extra` as further comment lines.
pub fn write_scores(path: &Path, scores: &ScoreSeries, extra: &[String]) -> Result<()> {
    let mut out = format!("# threshold={:.16e}\n", scores.threshold);
    for line in extra {
        let _ = writeln!(out, "# {line}");
    }
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ");
    let _ = writeln!(out, "# median={}", join(&scores.per_node_median));
    let _ = writeln!(out, "# mad={}", join(&scores.per_node_mad));
    out.push_str("time_index");
    for name in &scores.node_names {
        out.push(',');
        out.push_str(name);
    }
    out.push_str(",collective,decision\n");
    for (t, &time) in scores.time_index.iter().enumerate() {
        let _ = write!(out, "{time}");
        for row in &scores.per_node_scores {
            let _ = write!(out, ",{:.16e}", row[t]);
        }
        let _ = writeln!(out, ",{:.16e},{}", scores.collective[t], scores.decisions[t]);
    }
    std::fs::write(path, out).map_err(|e| CgadError::io(path, e))
}

/// Reads a score file back; the collective column and decisions are
/// checked against the per-node scores and the threshold.
pub fn read_scores(path: &Path) -> Result<ScoreSeries> {
    let text = std::fs::read_to_string(path).map_err(|e| CgadError::io(path, e))?;
    let file = path.display().to_string();
    let err = |row: usize, col: usize, msg: String| CgadError::parse(&file, row, col, msg);
    let mut threshold = None;
    let mut median = Vec::new();
    let mut mad = Vec::new();
    let parse_list = |row: usize, s: &str| -> Result<Vec<f64>> {
        s.split_whitespace()
            .map(|v| v.parse().map_err(|_| err(row, 1, format!("invalid number {v:?}"))))
            .collect()
    };
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l)).peekable();
    while let Some(&(row, line)) = lines.peek() {
        let Some(comment) = line.strip_prefix('#') else { break };
        let comment = comment.trim();
        if let Some(v) = comment.strip_prefix("threshold=") {
            threshold = Some(v.parse::<f64>().map_err(|_| err(row, 1, format!("invalid threshold {v:?}")))?);
        } else if let Some(v) = comment.strip_prefix("median=") {
            median = parse_list(row, v)?;
        } else if let Some(v) = comment.strip_prefix("mad=") {
            mad = parse_list(row, v)?;
        }
        lines.next();
    }
    let threshold = threshold.ok_or_else(|| err(1, 1, "missing '# threshold=' line".into()))?;
    let (row, header) = lines.next().ok_or_else(|| err(0, 1, "missing header row".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[0] != "time_index" || cols[cols.len() - 2..] != ["collective", "decision"] {
        return Err(err(row, 1, "header must be time_index,<nodes>,collective,decision".into()));
    }
    let names: Vec<String> = cols[1..cols.len() - 2].iter().map(|s| s.to_string()).collect();
    let n = names.len();
    let mut time_index = Vec::new();
    let mut per_node = vec![Vec::new(); n];
    let mut collective = Vec::new();
    let mut decisions = Vec::new();
    for (row, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n + 3 {
            return Err(err(row, fields.len().min(n + 3), format!("expected {} fields", n + 3)));
        }
        time_index.push(fields[0].parse().map_err(|_| err(row, 1, format!("invalid time index {:?}", fields[0])))?);
        for (i, f) in fields[1..=n].iter().enumerate() {
            per_node[i].push(f.parse().map_err(|_| err(row, i + 2, format!("invalid score {f:?}")))?);
        }
        collective.push(
            fields[n + 1]
                .parse::<f64>()
                .map_err(|_| err(row, n + 2, format!("invalid score {:?}", fields[n + 1])))?,
        );
        decisions.push(match fields[n + 2] {
            "0" => 0,
            "1" => 1,
            other => return Err(err(row, n + 3, format!("decision must be 0 or 1, got {other:?}"))),
        });
    }
    if median.len() != n || mad.len() != n {
        return Err(err(0, 1, "median/mad comment lines do not match the node columns".into()));
    }
    let scores = ScoreSeries::new(
        time_index,
        names,
        super::RobustScores { scores: per_node, median, mad },
        threshold,
    )?;
    if scores.collective != collective || scores.decisions != decisions {
        return Err(CgadError::Format(format!(
            "{file}: collective or decision columns disagree with the node scores"
        )));
    }
    Ok(scores)
}
