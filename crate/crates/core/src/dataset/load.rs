use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{RatingLog, RatingScale};
use crate::error::DatasetError;

/// On-disk layout of a rating dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    /// `user_id,item_id,rating[,timestamp]`, optional header row.
    Csv,
    /// Netflix Prize training files: an `<item_id>:` line followed by
    /// `customer_id,rating,date` lines. The path may be one file or a
    /// directory of such files.
    Netflix,
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DatasetFormat::Csv),
            "netflix" => Ok(DatasetFormat::Netflix),
            other => Err(format!("unknown dataset format `{other}` (expected csv or netflix)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedLogs {
    pub logs: Vec<RatingLog>,
    /// Earlier occurrences of a repeated `(user, item)` pair that were dropped.
    pub duplicates_dropped: usize,
}

/// Read every log from `path`. Repeated `(user, item)` pairs keep the last
/// occurrence.
pub fn load_dataset(
    path: &Path,
    format: DatasetFormat,
    scale: RatingScale,
) -> Result<LoadedLogs, DatasetError> {
    let raw = match format {
        DatasetFormat::Csv => {
            let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
            parse_csv(file, path, scale)?
        }
        DatasetFormat::Netflix => {
            let mut logs = Vec::new();
            for file in netflix_files(path)? {
                let reader = fs::File::open(&file).map_err(|e| io_err(&file, e))?;
                logs.extend(parse_netflix(BufReader::new(reader), &file, scale)?);
            }
            logs
        }
    };
    Ok(dedup_keep_last(raw))
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn malformed(path: &Path, line: u64, message: impl Into<String>) -> DatasetError {
    DatasetError::Malformed {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn check_rating(
    path: &Path,
    line: u64,
    scale: RatingScale,
    rating: f64,
) -> Result<f64, DatasetError> {
    if scale.contains(rating) {
        Ok(rating)
    } else {
        Err(malformed(
            path,
            line,
            format!("rating {rating} outside [{}, {}]", scale.min, scale.max),
        ))
    }
}

pub(crate) fn parse_csv<R: Read>(
    reader: R,
    path: &Path,
    scale: RatingScale,
) -> Result<Vec<RatingLog>, DatasetError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);

    let mut logs = Vec::new();
    let mut first = true;
    for record in csv.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() < 3 || record.len() > 4 {
            return Err(malformed(
                path,
                line,
                format!("expected 3 or 4 fields, found {}", record.len()),
            ));
        }
        let rating = record[2].parse::<f64>();
        if first {
            first = false;
            // A first row whose rating column is not numeric is a header.
            if rating.is_err() {
                continue;
            }
        }
        let rating = rating
            .map_err(|_| malformed(path, line, format!("invalid rating `{}`", &record[2])))?;
        let rating = check_rating(path, line, scale, rating)?;
        if record[0].is_empty() || record[1].is_empty() {
            return Err(malformed(path, line, "empty user or item id"));
        }
        let timestamp = match record.get(3) {
            Some(ts) if !ts.is_empty() => Some(
                ts.parse::<i64>()
                    .map_err(|_| malformed(path, line, format!("invalid timestamp `{ts}`")))?,
            ),
            _ => None,
        };
        logs.push(RatingLog {
            user_id: record[0].to_owned(),
            item_id: record[1].to_owned(),
            rating,
            timestamp,
        });
    }
    Ok(logs)
}

fn netflix_files(path: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let meta = fs::metadata(path).map_err(|e| io_err(path, e))?;
    if !meta.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| io_err(path, e))? {
        let entry = entry.map_err(|e| io_err(path, e))?;
        let p = entry.path();
        if p.is_file() && p.extension().is_some_and(|ext| ext == "txt") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

pub(crate) fn parse_netflix<R: BufRead>(
    reader: R,
    path: &Path,
    scale: RatingScale,
) -> Result<Vec<RatingLog>, DatasetError> {
    let mut logs = Vec::new();
    let mut item: Option<String> = None;
    for (n, line) in reader.lines().enumerate() {
        let line_no = n as u64 + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(id) = line.strip_suffix(':') {
            if id.is_empty() || id.contains(',') {
                return Err(malformed(path, line_no, format!("invalid item header `{line}`")));
            }
            item = Some(id.to_owned());
            continue;
        }
        let Some(item_id) = item.as_ref() else {
            return Err(malformed(path, line_no, "rating line before any `<item_id>:` header"));
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 || fields.len() > 3 || fields[0].is_empty() {
            return Err(malformed(
                path,
                line_no,
                "expected `customer_id,rating,date`",
            ));
        }
        let rating = fields[1]
            .parse::<f64>()
            .map_err(|_| malformed(path, line_no, format!("invalid rating `{}`", fields[1])))?;
        let rating = check_rating(path, line_no, scale, rating)?;
        let timestamp = match fields.get(2) {
            Some(date) => Some(parse_date(date).ok_or_else(|| {
                malformed(path, line_no, format!("invalid date `{date}`"))
            })?),
            None => None,
        };
        logs.push(RatingLog {
            user_id: fields[0].to_owned(),
            item_id: item_id.clone(),
            rating,
            timestamp,
        });
    }
    Ok(logs)
}

/// `YYYY-MM-DD` as the integer `YYYYMMDD`.
fn parse_date(date: &str) -> Option<i64> {
    let mut parts = date.split('-');
    let (y, m, d) = (parts.next()?, parts.next()?, parts.next()?);
    if parts.next().is_some() || y.len() != 4 || m.len() != 2 || d.len() != 2 {
        return None;
    }
    let (y, m, d): (i64, i64, i64) = (y.parse().ok()?, m.parse().ok()?, d.parse().ok()?);
    ((1..=12).contains(&m) && (1..=31).contains(&d)).then_some(y * 10_000 + m * 100 + d)
}

fn dedup_keep_last(logs: Vec<RatingLog>) -> LoadedLogs {
    let mut last: HashMap<(&str, &str), usize> = HashMap::with_capacity(logs.len());
    for (pos, log) in logs.iter().enumerate() {
        last.insert((log.user_id.as_str(), log.item_id.as_str()), pos);
    }
    if last.len() == logs.len() {
        return LoadedLogs {
            logs,
            duplicates_dropped: 0,
        };
    }
    let keep: Vec<bool> = logs
        .iter()
        .enumerate()
        .map(|(pos, log)| last[&(log.user_id.as_str(), log.item_id.as_str())] == pos)
        .collect();
    let duplicates_dropped = logs.len() - last.len();
    let logs = logs
        .into_iter()
        .zip(keep)
        .filter_map(|(log, keep)| keep.then_some(log))
        .collect();
    LoadedLogs {
        logs,
        duplicates_dropped,
    }
}

/// Write logs as headerless `user_id,item_id,rating` CSV.
pub fn write_csv<W: std::io::Write>(logs: &[RatingLog], out: W) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(out);
    for log in logs {
        writeln!(w, "{},{},{}", log.user_id, log.item_id, log.rating)?;
    }
    w.flush()
}
