use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Which branch produced the accepted iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    #[serde(rename = "edc-accepted")]
    Edc,
    #[serde(rename = "bcd-accepted")]
    Bcd,
}

/// One solver iteration. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub k: usize,
    pub eps: f64,
    pub phi_before: f64,
    pub phi_after: f64,
    /// `|grad Phi_eps(x_{k+1}, z_{k+1})|` at the iteration's `eps`.
    pub grad_norm: f64,
    pub branch: Branch,
    pub backtracks: usize,
    pub alpha_used: f64,
    pub beta_used: f64,
    pub eps_reduced: bool,
}

pub const LOG_COLUMNS: [&str; 10] = [
    "k",
    "eps",
    "phi_before",
    "phi_after",
    "grad_norm",
    "branch",
    "backtracks",
    "alpha_used",
    "beta_used",
    "eps_reduced",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterateLog {
    pub records: Vec<IterRecord>,
}

impl IterateLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn reductions(&self) -> usize {
        self.records.iter().filter(|r| r.eps_reduced).count()
    }

    pub fn max_backtracks(&self) -> usize {
        self.records.iter().map(|r| r.backtracks).max().unwrap_or(0)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if self.records.is_empty() {
            w.write_record(LOG_COLUMNS)?;
        }
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn from_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let records = r.deserialize().collect::<std::result::Result<Vec<IterRecord>, _>>()?;
        Ok(IterateLog { records })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(k: usize, branch: Branch) -> IterRecord {
        IterRecord {
            k,
            eps: 0.1,
            phi_before: 2.0,
            phi_after: 1.5,
            grad_norm: 0.25,
            branch,
            backtracks: k,
            alpha_used: 0.5,
            beta_used: 0.125,
            eps_reduced: k == 1,
        }
    }

    #[test]
    fn csv_header_and_roundtrip() {
        let log = IterateLog {
            records: vec![rec(0, Branch::Edc), rec(1, Branch::Bcd)],
        };
        let s = log.to_csv_string().unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), LOG_COLUMNS.join(","));
        assert_eq!(
            lines.next().unwrap(),
            "0,0.1,2.0,1.5,0.25,edc-accepted,0,0.5,0.125,false"
        );
        assert_eq!(IterateLog::from_csv(s.as_bytes()).unwrap(), log);
        assert_eq!(log.reductions(), 1);
        assert_eq!(log.max_backtracks(), 1);
    }

    #[test]
    fn empty_log_still_has_header() {
        let s = IterateLog::default().to_csv_string().unwrap();
        assert_eq!(s.trim_end(), LOG_COLUMNS.join(","));
    }

    #[test]
    fn json_roundtrip() {
        let log = IterateLog {
            records: vec![rec(3, Branch::Bcd)],
        };
        let back: IterateLog = serde_json::from_str(&log.to_json().unwrap()).unwrap();
        assert_eq!(back, log);
    }
}
