//! CSV persistence: observation records, filter paths and summary tables.
//!
//! Every file starts with a block of `# key: value` metadata lines followed
//! by a column header. Floating-point values are written with 17
//! significant digits, which round-trips every f64 exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::filters::{MeasurementScheme, SchemeKind};
use crate::rng::GENERATOR;
use crate::trajectory::ObservationRecord;

pub const RECORD_COLUMNS: &str = "t,dY";

/// Ordered `key: value` pairs written above the column header.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metadata {
    entries: Vec<(String, String)>,
}

impl Metadata {
    /// Generator name, version, RNG algorithm, config hash and seed.
    pub fn new(config_hash: Option<&str>, seed: u64) -> Self {
        Metadata::default()
            .with("generator", env!("CARGO_PKG_NAME"))
            .with("version", env!("CARGO_PKG_VERSION"))
            .with("rng", GENERATOR)
            .with("config_hash", config_hash.unwrap_or("-"))
            .with("seed", seed)
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    fn write(&self, out: &mut String) {
        for (k, v) in &self.entries {
            let _ = writeln!(out, "# {k}: {v}");
        }
    }
}

/// Formats a value with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// A column-oriented numeric table with metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub metadata: Metadata,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(metadata: Metadata, columns: Vec<String>) -> Self {
        Table {
            metadata,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        self.metadata.write(&mut out);
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut metadata = Metadata::default();
        let (header_line, header) = loop {
            match lines.next() {
                None => {
                    return Err(Error::Parse {
                        line: text.lines().count() + 1,
                        message: "missing column header".into(),
                    })
                }
                Some((n, l)) => {
                    if let Some(meta) = l.strip_prefix('#') {
                        let (k, v) = meta.split_once(':').ok_or_else(|| Error::Parse {
                            line: n,
                            message: format!("malformed metadata line `{l}`"),
                        })?;
                        metadata = metadata.with(k.trim(), v.trim());
                    } else if !l.trim().is_empty() {
                        break (n, l);
                    }
                }
            }
        };
        let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
        if columns.iter().any(|c| c.is_empty()) {
            return Err(Error::Parse {
                line: header_line,
                message: "empty column name".into(),
            });
        }
        let mut rows = Vec::new();
        for (n, l) in lines {
            if l.trim().is_empty() {
                continue;
            }
            let row = l
                .split(',')
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line: n,
                        message: format!("`{}` is not a number", f.trim()),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != columns.len() {
                return Err(Error::Parse {
                    line: n,
                    message: format!("{} fields, header has {}", row.len(), columns.len()),
                });
            }
            rows.push(row);
        }
        Ok(Table {
            metadata,
            columns,
            rows,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?)
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Scheme and grid keys of a record header on top of `base`.
pub fn record_metadata(record: &ObservationRecord, base: Metadata) -> Metadata {
    base.with("seed", record.seed)
        .with("scheme", record.scheme.kind)
        .with("kappa", record.scheme.kappa)
        .with("phase", record.scheme.phase)
        .with("dt", record.dt)
        .with("steps", record.steps())
}

pub fn record_to_table(record: &ObservationRecord, base: Metadata) -> Table {
    let mut table = Table::new(
        record_metadata(record, base),
        RECORD_COLUMNS.split(',').map(String::from).collect(),
    );
    for (k, &dy) in record.increments.iter().enumerate() {
        table.push(vec![k as f64 * record.dt, dy]);
    }
    table
}

pub fn record_to_csv(record: &ObservationRecord, base: Metadata) -> String {
    record_to_table(record, base).to_csv()
}

fn meta_value<T: std::str::FromStr>(meta: &Metadata, key: &str, line: usize) -> Result<T> {
    let raw = meta.get(key).ok_or_else(|| Error::Parse {
        line,
        message: format!("record header lacks `{key}`"),
    })?;
    raw.parse().map_err(|_| Error::Parse {
        line,
        message: format!("record header `{key}` has unreadable value `{raw}`"),
    })
}

/// Parses a record; also returns its metadata.
pub fn parse_record(text: &str) -> Result<(ObservationRecord, Metadata)> {
    let table = Table::parse(text)?;
    let meta_lines = table.metadata.entries().len();
    let header_line = text
        .lines()
        .position(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map_or(1, |p| p + 1);
    let meta = table.metadata.clone();
    let kind: SchemeKind = meta_value(&meta, "scheme", meta_lines)?;
    let kappa: f64 = meta
        .get("kappa")
        .map_or(Ok(0.0), |_| meta_value(&meta, "kappa", meta_lines))?;
    let phase: f64 = meta
        .get("phase")
        .map_or(Ok(0.0), |_| meta_value(&meta, "phase", meta_lines))?;
    let dt: f64 = meta_value(&meta, "dt", meta_lines)?;
    let steps: usize = meta_value(&meta, "steps", meta_lines)?;
    let seed: u64 = meta_value(&meta, "seed", meta_lines)?;
    if table.columns.join(",") != RECORD_COLUMNS {
        return Err(Error::Parse {
            line: header_line,
            message: format!(
                "expected columns `{RECORD_COLUMNS}`, found `{}`",
                table.columns.join(",")
            ),
        });
    }
    let scheme = match kind {
        SchemeKind::Homodyne => MeasurementScheme::homodyne(),
        SchemeKind::Counting => MeasurementScheme::counting(),
        SchemeKind::Imperfect => MeasurementScheme::imperfect(kappa).map_err(|e| Error::Parse {
            line: meta_lines,
            message: e.to_string(),
        })?,
    }
    .with_phase(phase);
    let data_lines: Vec<usize> = text
        .lines()
        .enumerate()
        .skip(header_line)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, _)| i + 1)
        .collect();
    if table.rows.len() != steps {
        return Err(Error::Parse {
            line: data_lines.last().copied().unwrap_or(header_line),
            message: format!("record declares {steps} steps but holds {}", table.rows.len()),
        });
    }
    let mut increments = Vec::with_capacity(steps);
    for (k, (row, &line)) in table.rows.iter().zip(&data_lines).enumerate() {
        let t_expected = k as f64 * dt;
        if (row[0] - t_expected).abs() > 1e-9 * t_expected.abs().max(1.0) {
            return Err(Error::Parse {
                line,
                message: format!("time {} does not match grid time {t_expected}", row[0]),
            });
        }
        let dy = row[1];
        if scheme.is_counting() && dy != 0.0 && dy != 1.0 {
            return Err(Error::Parse {
                line,
                message: format!("counting increment {dy} is not 0 or 1"),
            });
        }
        increments.push(dy);
    }
    let record = ObservationRecord {
        scheme,
        dt,
        increments,
        seed,
    };
    record.validate().map_err(|e| Error::Parse {
        line: meta_lines,
        message: e.to_string(),
    })?;
    Ok((record, meta))
}

pub fn write_record(record: &ObservationRecord, path: &Path) -> Result<()> {
    write_record_with(record, path, Metadata::new(None, record.seed))
}

pub fn write_record_with(record: &ObservationRecord, path: &Path, base: Metadata) -> Result<()> {
    write_text(path, &record_to_csv(record, base))
}

pub fn read_record(path: &Path) -> Result<ObservationRecord> {
    read_record_with_metadata(path).map(|(r, _)| r)
}

pub fn read_record_with_metadata(path: &Path) -> Result<(ObservationRecord, Metadata)> {
    parse_record(&read_text(path)?)
}
