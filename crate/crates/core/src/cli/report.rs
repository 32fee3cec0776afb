//! CSV artifacts and the plain-text summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;

/// Output directory plus the provenance line stamped on every CSV.
pub struct Artifacts {
    dir: PathBuf,
    stamp: String,
}

impl Artifacts {
    pub fn new(dir: &Path, config_hash: &str) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            stamp: format!(
                "# {} {} config={}",
                env!("CARGO_PKG_NAME"),
                env!("CARGO_PKG_VERSION"),
                config_hash
            ),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes the stamp line and header, then one record per row.
    pub fn csv<I>(&self, name: &str, header: &[String], rows: I) -> anyhow::Result<PathBuf>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.path(name);
        let mut file = BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        );
        writeln!(file, "{}", self.stamp)?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(path)
    }

    pub fn write_summary(&self, report: &Report) -> anyhow::Result<PathBuf> {
        let path = self.path("summary.txt");
        std::fs::write(&path, report.render(&self.stamp))
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub detail: String,
    pub pass: bool,
}

/// Notes and pass/fail checks of one command.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub command: String,
    pub notes: Vec<String>,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            ..Self::default()
        }
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.notes.push(line.into());
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            detail: detail.into(),
            pass,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn render(&self, stamp: &str) -> String {
        let mut s = format!("{stamp}\ncommand: {}\n", self.command);
        for n in &self.notes {
            s.push_str(n);
            s.push('\n');
        }
        if !self.checks.is_empty() {
            let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
            s.push('\n');
            for c in &self.checks {
                let mark = if c.pass { "PASS" } else { "FAIL" };
                s.push_str(&format!("{mark}  {:width$}  {}\n", c.name, c.detail));
            }
        }
        s.push_str(&format!(
            "\nverdict: {}\n",
            if self.passed() { "pass" } else { "falsified" }
        ));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_carries_stamp_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let a = Artifacts::new(dir.path(), "abc").unwrap();
        let p = a
            .csv(
                "x.csv",
                &header(&["t", "v"]),
                vec![vec!["0".into(), "1.5".into()]],
            )
            .unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# ") && lines[0].ends_with("config=abc"));
        assert_eq!(lines[1], "t,v");
        assert_eq!(lines[2], "0,1.5");
    }

    #[test]
    fn verdict_follows_checks() {
        let mut r = Report::new("certify");
        r.check("a", true, "ok");
        assert!(r.passed());
        r.check("b", false, "bad");
        assert!(!r.passed());
        assert!(r.render("#").contains("FAIL  b"));
    }
}
