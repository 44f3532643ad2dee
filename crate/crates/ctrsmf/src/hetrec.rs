//! Readers for the tab-separated hetrec2011 files.
//!
//! Each file has one header line. The layout is picked from the number of
//! columns, so both the plain and the `-timestamps` variants load:
//!
//! | file          | columns                                             |
//! |---------------|-----------------------------------------------------|
//! | interactions  | user, item, weight                                  |
//! | friendships   | user, friend \[, ms\] or \[, day, month, year, h, m, s\] |
//! | tags          | user, item, tag, ms or day, month, year \[, h, m, s\] |
//! | tag catalog   | tag id, tag text                                    |
//!
//! Calendar columns become epoch milliseconds (UTC). Bytes that are not
//! valid UTF-8 are replaced rather than rejected.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use ctrsmf_core::corpus::{CorpusError, InteractionEvent, SocialEdge, Sources, TagEvent};
use ctrsmf_core::Dataset;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("no interaction or tag file was given")]
    NoInteractions,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

struct Row<'a> {
    path: &'a Path,
    line: u64,
    fields: Vec<String>,
}

impl Row<'_> {
    fn error(&self, message: impl Into<String>) -> LoadError {
        LoadError::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            message: message.into(),
        }
    }

    fn int(&self, col: usize, what: &str) -> Result<i64, LoadError> {
        self.fields[col]
            .trim()
            .parse()
            .map_err(|_| self.error(format!("{what} `{}` is not an integer", self.fields[col])))
    }

    fn float(&self, col: usize, what: &str) -> Result<f64, LoadError> {
        self.fields[col]
            .trim()
            .parse()
            .map_err(|_| self.error(format!("{what} `{}` is not a number", self.fields[col])))
    }

    /// Epoch ms from `day, month, year[, hour, minute, second]` at `col`.
    fn calendar(&self, col: usize, with_time: bool) -> Result<i64, LoadError> {
        let part = |i: usize, what| self.int(col + i, what);
        let (d, m, y) = (part(0, "day")?, part(1, "month")?, part(2, "year")?);
        let date = u32::try_from(m)
            .ok()
            .zip(u32::try_from(d).ok())
            .and_then(|(m, d)| NaiveDate::from_ymd_opt(y as i32, m, d))
            .ok_or_else(|| self.error(format!("{d}/{m}/{y} is not a calendar date")))?;
        let (h, mi, s) = if with_time {
            (part(3, "hour")?, part(4, "minute")?, part(5, "second")?)
        } else {
            (0, 0, 0)
        };
        let time = date
            .and_hms_opt(h as u32, mi as u32, s as u32)
            .ok_or_else(|| self.error(format!("{h}:{mi}:{s} is not a time of day")))?;
        Ok(time.and_utc().timestamp_millis())
    }
}

/// Reads every data row, checking that the column count is one of `arities`
/// and the same throughout the file.
fn read_rows<'a>(path: &'a Path, arities: &[usize]) -> Result<Vec<Row<'a>>, LoadError> {
    let io = |source| LoadError::Io { path: path.to_path_buf(), source };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .has_headers(true)
        .from_path(path)
        .map_err(|e| io(e.into()))?;
    let mut rows = Vec::new();
    let mut width = None;
    for record in reader.byte_records() {
        let record = record.map_err(|e| io(e.into()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let fields: Vec<String> = record
            .iter()
            .map(|f| String::from_utf8_lossy(f).trim_end_matches('\r').to_string())
            .collect();
        let row = Row { path, line, fields };
        let n = row.fields.len();
        if !arities.contains(&n) {
            return Err(row.error(format!("expected {arities:?} columns, found {n}")));
        }
        if *width.get_or_insert(n) != n {
            return Err(row.error(format!("expected {} columns like the first row, found {n}", width.unwrap())));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn load_interactions(path: &Path) -> Result<Vec<InteractionEvent>, LoadError> {
    read_rows(path, &[3])?
        .iter()
        .map(|r| {
            Ok(InteractionEvent {
                user: r.int(0, "user id")?,
                item: r.int(1, "item id")?,
                weight: r.float(2, "weight")?,
                timestamp: None,
            })
        })
        .collect()
}

pub fn load_friendships(path: &Path) -> Result<Vec<SocialEdge>, LoadError> {
    read_rows(path, &[2, 3, 8])?
        .iter()
        .map(|r| {
            let timestamp = match r.fields.len() {
                3 => Some(r.int(2, "timestamp")?),
                8 => Some(r.calendar(2, true)?),
                _ => None,
            };
            Ok(SocialEdge {
                user: r.int(0, "user id")?,
                friend: r.int(1, "friend id")?,
                timestamp,
            })
        })
        .collect()
}

pub fn load_tags(path: &Path) -> Result<Vec<TagEvent>, LoadError> {
    read_rows(path, &[4, 6, 9])?
        .iter()
        .map(|r| {
            let timestamp = match r.fields.len() {
                4 => r.int(3, "timestamp")?,
                6 => r.calendar(3, false)?,
                _ => r.calendar(3, true)?,
            };
            Ok(TagEvent {
                user: r.int(0, "user id")?,
                item: r.int(1, "item id")?,
                tag: r.int(2, "tag id")?.to_string(),
                timestamp: Some(timestamp),
            })
        })
        .collect()
}

/// Tag ids listed in a `tags.dat` catalog, including tags nobody used.
pub fn load_tag_catalog(path: &Path) -> Result<Vec<String>, LoadError> {
    read_rows(path, &[1, 2])?
        .iter()
        .map(|r| Ok(r.int(0, "tag id")?.to_string()))
        .collect()
}

/// One bookmark-style interaction per tag assignment, for datasets without
/// a separate interaction file.
pub fn interactions_from_tags(tags: &[TagEvent]) -> Vec<InteractionEvent> {
    tags.iter()
        .map(|t| InteractionEvent {
            user: t.user,
            item: t.item,
            weight: 1.0,
            timestamp: t.timestamp,
        })
        .collect()
}

/// Input files for one dataset. Without an interaction file the user-item
/// pairs are read off the tag assignments.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HetrecPaths {
    pub interactions: Option<PathBuf>,
    pub friendships: Option<PathBuf>,
    pub tags: Option<PathBuf>,
    pub tag_catalog: Option<PathBuf>,
}

impl HetrecPaths {
    /// Finds the lastfm or delicious files in an unpacked archive directory.
    /// Timestamped variants are preferred over calendar-column ones.
    pub fn detect(dir: &Path) -> HetrecPaths {
        let first = |names: &[&str]| {
            names
                .iter()
                .map(|n| dir.join(n))
                .find(|p| p.is_file())
        };
        HetrecPaths {
            interactions: first(&["user_artists.dat"]),
            friendships: first(&[
                "user_friends.dat",
                "user_contacts-timestamps.dat",
                "user_contacts.dat",
            ]),
            tags: first(&[
                "user_taggedartists-timestamps.dat",
                "user_taggedartists.dat",
                "user_taggedbookmarks-timestamps.dat",
                "user_taggedbookmarks.dat",
            ]),
            tag_catalog: first(&["tags.dat"]),
        }
    }

    pub fn load(&self) -> Result<Dataset, LoadError> {
        let tags = self.tags.as_deref().map(load_tags).transpose()?;
        let interactions = match (&self.interactions, &tags) {
            (Some(p), _) => load_interactions(p)?,
            (None, Some(t)) => interactions_from_tags(t),
            (None, None) => return Err(LoadError::NoInteractions),
        };
        let friendships = self.friendships.as_deref().map(load_friendships).transpose()?;
        let catalog = self.tag_catalog.as_deref().map(load_tag_catalog).transpose()?;
        Ok(Dataset::assemble(Sources {
            interactions: &interactions,
            friendships: friendships.as_deref(),
            tags: tags.as_deref(),
            tag_catalog: catalog.as_deref(),
        })?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn calendar_columns_are_utc_midnight() {
        let f = file("userID\tartistID\ttagID\tday\tmonth\tyear\n2\t52\t13\t1\t4\t2009\n");
        let tags = load_tags(f.path()).unwrap();
        assert_eq!(tags[0].timestamp, Some(1_238_544_000_000));
        assert_eq!(tags[0].tag, "13");
    }

    #[test]
    fn timestamp_column_is_kept() {
        let f = file("userID\tfriendID\ttimestamp\n1\t2\t1289564622000\n");
        let edges = load_friendships(f.path()).unwrap();
        assert_eq!(edges[0].timestamp, Some(1_289_564_622_000));
        let plain = file("userID\tfriendID\n1\t2\n2\t1\n");
        assert_eq!(load_friendships(plain.path()).unwrap()[1].timestamp, None);
    }

    #[test]
    fn full_datetime_columns() {
        let f = file("u\tc\td\tm\ty\th\tmi\ts\n8\t28371\t9\t11\t2010\t1\t1\t2\n");
        let edges = load_friendships(f.path()).unwrap();
        assert_eq!(edges[0].timestamp, Some(1_289_264_462_000));
    }

    #[test]
    fn errors_name_the_line() {
        let f = file("userID\tartistID\tweight\n2\t51\t13883\n2\tx\t11690\n");
        let err = load_interactions(f.path()).unwrap_err().to_string();
        assert!(err.ends_with(":3: item id `x` is not an integer"), "{err}");
        let short = file("userID\tartistID\tweight\n2\t51\n");
        assert!(load_interactions(short.path()).unwrap_err().to_string().contains(":2:"));
    }

    #[test]
    fn invalid_utf8_is_replaced() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"tagID\ttagValue\n1\tmetal\n2\tm\xf6tley\n").unwrap();
        assert_eq!(load_tag_catalog(f.path()).unwrap(), vec!["1", "2"]);
    }

    #[test]
    fn bookmarks_come_from_tag_rows() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("user_taggedbookmarks-timestamps.dat"),
            "userID\tbookmarkID\ttagID\ttimestamp\n8\t1\t1\t1289255362000\n8\t1\t2\t1289255362000\n9\t2\t1\t1289255363000\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("user_contacts.dat"), "userID\tcontactID\td\tm\ty\th\tmi\ts\n8\t9\t10\t11\t2010\t1\t1\t2\n").unwrap();
        let paths = HetrecPaths::detect(dir.path());
        assert!(paths.interactions.is_none());
        let ds = paths.load().unwrap();
        assert_eq!((ds.stats.users, ds.stats.items, ds.stats.interactions), (2, 2, 2));
        assert_eq!(ds.stats.tag_assignments, 3);
        assert_eq!(ds.stats.relations, 1);
    }
}
