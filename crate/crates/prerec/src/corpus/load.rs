//! File ingestion for interaction logs and item catalogs.

use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use crate::corpus::{Interaction, InteractionLog, ItemCatalog, ItemRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    Csv,
    Jsonl,
}

impl std::str::FromStr for LogFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(LogFormat::Csv),
            "jsonl" => Ok(LogFormat::Jsonl),
            other => Err(Error::Config(format!("unknown log format {other}"))),
        }
    }
}

/// Loads interactions from CSV (`user_id,item_id,domain_id,timestamp` header)
/// or JSONL with the same keys. Duplicate rows are preserved; per-user order
/// is chronological with file order breaking ties.
pub fn load_interactions(path: &Path, format: LogFormat) -> Result<InteractionLog> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut events = Vec::new();
    match format {
        LogFormat::Csv => {
            let mut lines = reader.lines().enumerate();
            let header = match lines.next() {
                None => return InteractionLog::from_events(events),
                Some((_, line)) => line.map_err(|e| Error::io(path, e))?,
            };
            let columns: Vec<&str> = header.split(',').map(str::trim).collect();
            let col = |name: &str| -> Result<usize> {
                columns.iter().position(|c| *c == name).ok_or_else(|| Error::Ingest {
                    path: path.to_path_buf(),
                    row: 1,
                    message: format!("missing column {name}"),
                })
            };
            let (ui, ii, di, ti) = (
                col("user_id")?,
                col("item_id")?,
                col("domain_id")?,
                col("timestamp")?,
            );
            for (lineno, line) in lines {
                let row = lineno + 1; // 1-based, counting the header
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split(',').map(str::trim).collect();
                let field = |idx: usize, name: &str| -> Result<&str> {
                    match fields.get(idx) {
                        Some(v) if !v.is_empty() => Ok(*v),
                        _ => Err(Error::Ingest {
                            path: path.to_path_buf(),
                            row,
                            message: format!("missing {name}"),
                        }),
                    }
                };
                let timestamp: i64 =
                    field(ti, "timestamp")?
                        .parse()
                        .map_err(|_| Error::Ingest {
                            path: path.to_path_buf(),
                            row,
                            message: format!("unparsable timestamp {:?}", fields.get(ti)),
                        })?;
                if timestamp < 0 {
                    return Err(Error::Ingest {
                        path: path.to_path_buf(),
                        row,
                        message: format!("negative timestamp {timestamp}"),
                    });
                }
                events.push(Interaction {
                    user_id: field(ui, "user_id")?.to_string(),
                    item_id: field(ii, "item_id")?.to_string(),
                    domain_id: field(di, "domain_id")?.to_string(),
                    timestamp,
                });
            }
        }
        LogFormat::Jsonl => {
            #[derive(Deserialize)]
            struct Row {
                user_id: String,
                item_id: String,
                domain_id: String,
                timestamp: i64,
            }
            for (lineno, line) in reader.lines().enumerate() {
                let row = lineno + 1;
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: Row = serde_json::from_str(&line).map_err(|e| Error::Ingest {
                    path: path.to_path_buf(),
                    row,
                    message: e.to_string(),
                })?;
                if parsed.timestamp < 0 {
                    return Err(Error::Ingest {
                        path: path.to_path_buf(),
                        row,
                        message: format!("negative timestamp {}", parsed.timestamp),
                    });
                }
                events.push(Interaction {
                    user_id: parsed.user_id,
                    item_id: parsed.item_id,
                    domain_id: parsed.domain_id,
                    timestamp: parsed.timestamp,
                });
            }
        }
    }
    InteractionLog::from_events(events)
}

/// Loads a JSONL catalog: one `{item_id, domain_id, text?, embedding_ref?}`
/// object per line.
pub fn load_catalog(path: &Path) -> Result<ItemCatalog> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let row = lineno + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ItemRecord = serde_json::from_str(&line).map_err(|e| Error::Ingest {
            path: path.to_path_buf(),
            row,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    ItemCatalog::from_records(records)
}

/// Writes a log back out as CSV (round-trip and debugging aid).
pub fn write_interactions_csv(log: &InteractionLog, path: &Path) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(f, "user_id,item_id,domain_id,timestamp").map_err(|e| Error::io(path, e))?;
    for e in log.events() {
        writeln!(f, "{},{},{},{}", e.user_id, e.item_id, e.domain_id, e.timestamp)
            .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Writes a catalog as JSONL.
pub fn write_catalog(catalog: &ItemCatalog, path: &Path) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for r in catalog.records() {
        writeln!(f, "{}", serde_json::to_string(r).unwrap()).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        std::fs::write(&path, content).unwrap();
        (dir, path)
    }

    #[test]
    fn empty_file_loads_as_empty_log() {
        let (_d, path) = write_tmp("");
        let log = load_interactions(&path, LogFormat::Csv).unwrap();
        assert!(log.is_empty());
        assert_eq!(log.n_users(), 0);
    }

    #[test]
    fn rows_sort_chronologically_per_user() {
        let (_d, path) = write_tmp(
            "user_id,item_id,domain_id,timestamp\nu1,b,d,200\nu1,a,d,100\nu1,c,d,300\n",
        );
        let log = load_interactions(&path, LogFormat::Csv).unwrap();
        assert_eq!(log.n_users(), 1);
        let idxs = log.user_events("u1").unwrap();
        let items: Vec<&str> = idxs.iter().map(|&i| log.events()[i].item_id.as_str()).collect();
        assert_eq!(items, vec!["a", "b", "c"]);
    }

    #[test]
    fn equal_timestamps_keep_file_order() {
        let (_d, path) = write_tmp(
            "user_id,item_id,domain_id,timestamp\nu1,x,d,100\nu1,y,d,100\nu1,z,d,100\n",
        );
        let log = load_interactions(&path, LogFormat::Csv).unwrap();
        let idxs = log.user_events("u1").unwrap();
        let items: Vec<&str> = idxs.iter().map(|&i| log.events()[i].item_id.as_str()).collect();
        assert_eq!(items, vec!["x", "y", "z"]);
    }

    #[test]
    fn missing_item_id_names_the_row() {
        let (_d, path) = write_tmp(
            "user_id,item_id,domain_id,timestamp\nu1,a,d,100\nu2,,d,200\n",
        );
        let err = load_interactions(&path, LogFormat::Csv).unwrap_err();
        match err {
            Error::Ingest { row, message, .. } => {
                assert_eq!(row, 3);
                assert!(message.contains("item_id"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn unparsable_timestamp_is_an_ingest_error() {
        let (_d, path) = write_tmp(
            "user_id,item_id,domain_id,timestamp\nu1,a,d,not_a_number\n",
        );
        let err = load_interactions(&path, LogFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::Ingest { row: 2, .. }), "{err}");
    }

    #[test]
    fn jsonl_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        std::fs::write(
            &path,
            "{\"user_id\":\"u1\",\"item_id\":\"a\",\"domain_id\":\"d\",\"timestamp\":5}\n",
        )
        .unwrap();
        let log = load_interactions(&path, LogFormat::Jsonl).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log.events()[0].item_id, "a");
    }

    #[test]
    fn duplicate_rows_are_preserved() {
        let (_d, path) = write_tmp(
            "user_id,item_id,domain_id,timestamp\nu1,a,d,100\nu1,a,d,100\n",
        );
        let log = load_interactions(&path, LogFormat::Csv).unwrap();
        assert_eq!(log.len(), 2);
    }

    #[test]
    fn catalog_requires_text_or_embedding() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cat.jsonl");
        std::fs::write(&path, "{\"item_id\":\"a\",\"domain_id\":\"d\"}\n").unwrap();
        assert!(load_catalog(&path).is_err());
        std::fs::write(
            &path,
            "{\"item_id\":\"a\",\"domain_id\":\"d\",\"text\":\"desc\"}\n",
        )
        .unwrap();
        let cat = load_catalog(&path).unwrap();
        assert_eq!(cat.len(), 1);
    }
}
