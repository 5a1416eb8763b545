//! Per-session reports: `key = value` text and CSV rows.
//!
//! Byte counts are application-layer payload bytes (word payloads of the
//! round frames), not wire bytes; frame headers are excluded.

use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::runtime::session::Meter;

pub const CSV_HEADER: &str = "session,n,m,k,rounds,bytes_tx,bytes_rx,secext,wall_ms";

#[derive(Clone, Debug, PartialEq)]
pub struct SessionMetrics {
    pub session: u32,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub rounds: u64,
    pub bytes_tx: u64,
    pub bytes_rx: u64,
    pub secext: u64,
    pub wall_ms: f64,
}

/// Summarizes a finished session. A session that never exchanged a round
/// did not run a query and has no report.
pub fn meter_report(
    session: u32,
    meter: &Meter,
    n: usize,
    m: usize,
    k: usize,
    wall: Duration,
) -> Result<SessionMetrics> {
    if meter.rounds == 0 {
        return Err(Error::Protocol(format!(
            "session {session} ran no rounds; nothing to report"
        )));
    }
    Ok(SessionMetrics {
        session,
        n,
        m,
        k,
        rounds: meter.rounds,
        bytes_tx: meter.bytes_tx,
        bytes_rx: meter.bytes_rx,
        secext: meter.secext,
        wall_ms: wall.as_secs_f64() * 1e3,
    })
}

impl SessionMetrics {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# bytes are application-layer payload bytes");
        let _ = writeln!(s, "session = {}", self.session);
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "m = {}", self.m);
        let _ = writeln!(s, "k = {}", self.k);
        let _ = writeln!(s, "rounds = {}", self.rounds);
        let _ = writeln!(s, "bytes_tx = {}", self.bytes_tx);
        let _ = writeln!(s, "bytes_rx = {}", self.bytes_rx);
        let _ = writeln!(s, "secext = {}", self.secext);
        let _ = writeln!(s, "wall_ms = {:.3}", self.wall_ms);
        s
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:.3}",
            self.session,
            self.n,
            self.m,
            self.k,
            self.rounds,
            self.bytes_tx,
            self.bytes_rx,
            self.secext,
            self.wall_ms
        )
    }

    /// Same as `self == other` but ignoring wall time.
    pub fn same_counters(&self, other: &SessionMetrics) -> bool {
        SessionMetrics {
            wall_ms: 0.0,
            ..self.clone()
        } == SessionMetrics {
            wall_ms: 0.0,
            ..other.clone()
        }
    }
}

/// Writes the header followed by `rows`.
pub fn write_csv<W: Write>(mut out: W, rows: &[SessionMetrics]) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_row())?;
    }
    out.flush()?;
    Ok(())
}

/// Appends rows to a CSV file, writing the header if the file is new or
/// empty.
pub fn append_csv(path: impl AsRef<Path>, rows: &[SessionMetrics]) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if f.metadata()?.len() == 0 {
        writeln!(f, "{CSV_HEADER}")?;
    }
    for r in rows {
        writeln!(f, "{}", r.csv_row())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SessionMetrics {
        let meter = Meter {
            rounds: 10,
            bytes_tx: 80,
            bytes_rx: 80,
            secext: 44,
            ..Meter::default()
        };
        meter_report(3, &meter, 4, 2, 2, Duration::from_millis(5)).unwrap()
    }

    #[test]
    fn empty_session_is_an_error() {
        assert!(meter_report(1, &Meter::default(), 4, 2, 0, Duration::ZERO).is_err());
    }

    #[test]
    fn text_report_lines() {
        let text = sample().to_text();
        assert!(text.contains("secext = 44\n"));
        assert!(text.contains("rounds = 10\n"));
        assert_eq!(text.lines().filter(|l| l.contains(" = ")).count(), 9);
    }

    #[test]
    fn csv_rows() {
        let mut out = Vec::new();
        write_csv(&mut out, &[sample()]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, format!("{CSV_HEADER}\n3,4,2,2,10,80,80,44,5.000\n"));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        append_csv(&path, &[sample()]).unwrap();
        append_csv(&path, &[sample()]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with(CSV_HEADER));
    }
}
