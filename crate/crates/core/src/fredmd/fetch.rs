use std::fs::{self, File, OpenOptions};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::calendar::YearMonth;
use crate::error::{Error, Result};

use super::{parse_vintage, VintageTable};

/// Environment variable that overrides the vintage cache directory.
pub const CACHE_ENV: &str = "DENSECAST_CACHE";

const FIRST_TAG: YearMonth = YearMonth { year: 2012, month: 1 };
const LAST_TAG: YearMonth = YearMonth { year: 2022, month: 12 };

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchConfig {
    /// Base URL; vintages are fetched from `{source_url}/{tag}.csv`.
    pub source_url: String,
    pub cache_dir: PathBuf,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    60
}

impl Default for FetchConfig {
    fn default() -> Self {
        Self {
            source_url: "https://files.stlouisfed.org/files/htdocs/fred-md/monthly".into(),
            cache_dir: default_cache_dir(),
            timeout_secs: default_timeout(),
        }
    }
}

/// `$DENSECAST_CACHE` if set, else `.densecast-cache` in the working directory.
pub fn default_cache_dir() -> PathBuf {
    std::env::var_os(CACHE_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(".densecast-cache"))
}

/// The cache directory actually used: `$DENSECAST_CACHE` wins over `explicit`.
pub fn resolved_cache_dir(explicit: &Path) -> PathBuf {
    std::env::var_os(CACHE_ENV).map(PathBuf::from).unwrap_or_else(|| explicit.to_path_buf())
}

fn check_tag(tag: &str) -> Result<Option<YearMonth>> {
    if tag == "current" {
        return Ok(None);
    }
    let ym = YearMonth::parse_date(tag).map_err(|_| Error::Validation(format!("bad release tag '{tag}'")))?;
    if ym < FIRST_TAG || ym > LAST_TAG {
        return Err(Error::Validation(format!(
            "release tag {ym} outside {FIRST_TAG}..{LAST_TAG}"
        )));
    }
    Ok(Some(ym))
}

pub fn vintage_url(source_url: &str, tag: &str) -> String {
    format!("{}/{tag}.csv", source_url.trim_end_matches('/'))
}

/// Downloads (or reads from cache) the vintage released in `tag`
/// (`YYYY-MM` or `current`) and parses it.
pub fn fetch_vintage(tag: &str, source_url: &str, cache_dir: &Path) -> Result<VintageTable> {
    fetch_vintage_with(tag, source_url, cache_dir, Duration::from_secs(default_timeout()))
}

pub(crate) fn fetch_vintage_with(tag: &str, source_url: &str, cache_dir: &Path, timeout: Duration) -> Result<VintageTable> {
    let ym = check_tag(tag)?;
    let tag = ym.map(|y| y.to_string()).unwrap_or_else(|| "current".to_string());
    let dir = resolved_cache_dir(cache_dir);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join(format!("{tag}.csv"));

    let bytes = {
        let lock_path = dir.join(".lock");
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(|e| Error::io(&lock_path, e))?;
        lock.lock().map_err(|e| Error::io(&lock_path, e))?;
        let out = if path.exists() {
            fs::read(&path).map_err(|e| Error::io(&path, e))
        } else {
            download(&tag, source_url, timeout).and_then(|bytes| {
                let tmp = dir.join(format!(".{tag}.csv.part"));
                fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
                fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
                Ok(bytes)
            })
        };
        let _ = File::unlock(&lock);
        out?
    };
    let mut table = parse_vintage(&bytes)?;
    if let Some(ym) = ym {
        table.release_tag = ym;
    }
    Ok(table)
}

fn download(tag: &str, source_url: &str, timeout: Duration) -> Result<Vec<u8>> {
    let url = vintage_url(source_url, tag);
    let agent = ureq::AgentBuilder::new().timeout(timeout).build();
    match agent.get(&url).call() {
        Ok(resp) => {
            let mut buf = Vec::new();
            resp.into_reader().read_to_end(&mut buf).map_err(|e| Error::Fetch {
                tag: tag.into(),
                msg: format!("reading body of {url}: {e}"),
                retryable: true,
            })?;
            Ok(buf)
        }
        Err(ureq::Error::Status(code, _)) => Err(Error::Fetch {
            tag: tag.into(),
            msg: format!("HTTP {code} from {url}"),
            retryable: code >= 500 || code == 429,
        }),
        Err(e) => Err(Error::Fetch {
            tag: tag.into(),
            msg: format!("{url}: {e}"),
            retryable: true,
        }),
    }
}
