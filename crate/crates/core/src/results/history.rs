//! Loss history as `epoch,loss` CSV.

use std::fmt::Write as _;
use std::path::Path;

use super::RunError;

pub const HISTORY_HEADER: &str = "epoch,loss";

/// One row per epoch, losses with 17 significant digits so reading the
/// file back gives the same bits.
pub fn render_history(history: &[f64]) -> String {
    let mut out = String::with_capacity(24 * (history.len() + 1));
    out.push_str(HISTORY_HEADER);
    out.push('\n');
    for (epoch, loss) in history.iter().enumerate() {
        writeln!(out, "{epoch},{loss:.16e}").unwrap();
    }
    out
}

pub fn parse_history(text: &str) -> Result<Vec<f64>, RunError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(HISTORY_HEADER) {
        return Err(RunError::History(format!("missing `{HISTORY_HEADER}` header")));
    }
    let mut out = Vec::new();
    for (row, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (epoch, loss) = line
            .split_once(',')
            .ok_or_else(|| RunError::History(format!("row {row}: expected `epoch,loss`")))?;
        if epoch.trim().parse::<usize>().ok() != Some(out.len()) {
            return Err(RunError::History(format!("row {row}: expected epoch {}", out.len())));
        }
        let loss = loss
            .trim()
            .parse::<f64>()
            .map_err(|e| RunError::History(format!("row {row}: {e}")))?;
        out.push(loss);
    }
    Ok(out)
}

pub fn write_history(history: &[f64], path: &Path) -> Result<(), RunError> {
    std::fs::write(path, render_history(history)).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_history(path: &Path) -> Result<Vec<f64>, RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_history(&text)
}
