use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use crate::calendar::{Timeline, YearMonth};
use crate::error::{Error, Result};
use crate::fredmd::{fetch_vintage, parse_gdp_csv, GdpColumn, TargetSeries, VintageTable};

/// Supplies the data known at each cutoff month plus the final target.
pub trait VintageSource: Sync {
    /// The vintage available at the end of month `cutoff`.
    fn vintage(&self, cutoff: YearMonth) -> Result<VintageTable>;

    /// Quarterly growth as finally published; used for targets and actuals.
    fn target(&self) -> Result<TargetSeries>;

    /// Human-readable description for manifests.
    fn describe(&self) -> String;
}

/// Archived FRED-MD releases plus a quarterly GDP file.
#[derive(Debug, Clone)]
pub struct FredMdSource {
    pub source_url: String,
    pub cache_dir: PathBuf,
    /// Local GDP CSV; downloaded from `gdp_url` into the cache when absent.
    pub gdp_csv: Option<PathBuf>,
    pub gdp_url: String,
    pub gdp_column: GdpColumn,
    pub timeline: Timeline,
}

impl VintageSource for FredMdSource {
    /// The release tagged with the cutoff month.
    fn vintage(&self, cutoff: YearMonth) -> Result<VintageTable> {
        let mut v = fetch_vintage(&cutoff.to_string(), &self.source_url, &self.cache_dir).map_err(|e| match e {
            Error::Fetch { .. } => Error::Run(format!("vintage for {cutoff} unavailable: {e}")),
            e => e,
        })?;
        v.truncate_after(cutoff);
        Ok(v)
    }

    fn target(&self) -> Result<TargetSeries> {
        let path = match &self.gdp_csv {
            Some(p) => p.clone(),
            None => {
                let p = self.cache_dir.join("gdp.csv");
                if !p.exists() {
                    fs::create_dir_all(&self.cache_dir).map_err(|e| Error::io(&self.cache_dir, e))?;
                    let bytes = download(&self.gdp_url)?;
                    fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
                }
                p
            }
        };
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        parse_gdp_csv(&bytes, self.gdp_column, self.timeline)
    }

    fn describe(&self) -> String {
        format!("FRED-MD vintages from {}", self.source_url)
    }
}

fn download(url: &str) -> Result<Vec<u8>> {
    use std::io::Read;
    let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(60)).build();
    let fail = |msg: String| Error::Fetch {
        tag: "gdp".into(),
        msg,
        retryable: true,
    };
    let resp = agent.get(url).call().map_err(|e| fail(format!("{url}: {e}")))?;
    let mut buf = Vec::new();
    resp.into_reader()
        .read_to_end(&mut buf)
        .map_err(|e| fail(format!("reading {url}: {e}")))?;
    Ok(buf)
}
