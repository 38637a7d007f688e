//! CSV emission. Every float is written with 17 significant digits so that
//! identical runs produce byte-identical files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use viscous_limit::system_model::HypothesisReport;
use viscous_limit::Error;

pub fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header columns `{prefix}_1 .. {prefix}_n`.
pub fn columns(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

/// A CSV table built in memory and written in one rename.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_floats(&mut self, row: impl IntoIterator<Item = f64>) {
        self.push(row.into_iter().map(fmt_f).collect());
    }

    pub fn write(&self, dir: &Path, name: &str) -> io::Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
        let path = dir.join(name);
        let tmp = dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Vacuous,
    Info,
    Error,
}

impl Status {
    fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Vacuous => "vacuous",
            Status::Info => "info",
            Status::Error => "error",
        }
    }
}

/// Whether a failed row means the input violates a hypothesis (exit 2) or
/// a numerical step went wrong (exit 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Hypothesis,
    Numerical,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub check: String,
    pub status: Status,
    pub kind: Kind,
    pub value: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Default)]
pub struct Summary {
    pub rows: Vec<Row>,
}

impl Summary {
    pub fn add(&mut self, check: impl Into<String>, status: Status, kind: Kind, value: Option<f64>, detail: impl Into<String>) {
        self.rows.push(Row { check: check.into(), status, kind, value, detail: detail.into() });
    }

    pub fn info(&mut self, check: impl Into<String>, value: f64, detail: impl Into<String>) {
        self.add(check, Status::Info, Kind::Numerical, Some(value), detail);
    }

    pub fn note(&mut self, check: impl Into<String>, detail: impl Into<String>) {
        self.add(check, Status::Info, Kind::Numerical, None, detail);
    }

    /// Numerical pass/fail row.
    pub fn numeric(&mut self, check: impl Into<String>, ok: bool, value: f64, detail: impl Into<String>) {
        let status = if ok { Status::Pass } else { Status::Fail };
        self.add(check, status, Kind::Numerical, Some(value), detail);
    }

    /// A library error; hypothesis violations fail, `Vacuous` is recorded as such.
    pub fn error(&mut self, check: impl Into<String>, e: &Error) {
        let (status, kind) = match e {
            Error::Vacuous(_) => (Status::Vacuous, Kind::Hypothesis),
            e if e.is_hypothesis() => (Status::Fail, Kind::Hypothesis),
            _ => (Status::Error, Kind::Numerical),
        };
        self.add(check, status, kind, None, e.to_string());
    }

    /// A hypothesis report: one row for the verdict, then one per constant
    /// and one per witness.
    pub fn report(&mut self, check: &str, r: &HypothesisReport) {
        let status = if r.passed { Status::Pass } else { Status::Fail };
        let detail = if r.passed { String::new() } else { format!("{} witness(es)", r.witnesses.len()) };
        self.add(check, status, Kind::Hypothesis, None, detail);
        for (k, v) in &r.constants {
            self.info(format!("{check}.{k}"), *v, "");
        }
        for w in &r.witnesses {
            let state = w.state.iter().map(|x| fmt_f(*x)).collect::<Vec<_>>().join(" ");
            self.add(format!("{check}.witness"), Status::Info, Kind::Hypothesis, Some(w.value), format!("{} at [{state}]", w.evidence));
        }
    }

    pub fn exit_code(&self) -> i32 {
        let failed = |k: Kind| self.rows.iter().any(|r| r.kind == k && matches!(r.status, Status::Fail | Status::Error));
        if failed(Kind::Hypothesis) {
            2
        } else if failed(Kind::Numerical) {
            1
        } else {
            0
        }
    }

    pub fn write(&self, dir: &Path) -> io::Result<PathBuf> {
        let mut t = Table::new(["check", "status", "value", "detail"]);
        for r in &self.rows {
            t.push(vec![
                r.check.clone(),
                r.status.as_str().to_string(),
                r.value.map(fmt_f).unwrap_or_default(),
                r.detail.clone(),
            ]);
        }
        t.write(dir, "summary.csv")
    }
}
