//! Synthetic monthly panel and quarterly target with a known one-factor
//! structure and a nonlinear, heteroskedastic target link. Lets the full
//! pipeline run without network access.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::calendar::{Timeline, YearMonth};
use crate::dfm::aggregate;
use crate::error::Result;
use crate::eval::VintageSource;
use crate::fredmd::{TCode, TargetSeries, VintageTable, DFM_SERIES};

pub const FIXTURE_SERIES: usize = 20;
pub const FIXTURE_MONTHS: usize = 750;
pub const FIXTURE_START: YearMonth = YearMonth { year: 1959, month: 7 };

/// Generated panel with per-series publication lags.
#[derive(Debug, Clone)]
pub struct SyntheticFixture {
    pub seed: u64,
    /// Complete panel, as eventually published.
    pub panel: VintageTable,
    /// Months each series trails the cutoff.
    pub lags: Vec<usize>,
    pub target: TargetSeries,
    /// The latent monthly factor.
    pub factor: Vec<f64>,
}

impl SyntheticFixture {
    /// Factor `f_t = 0.5 f_{t-1} + 0.2 f_{t-2} + exp(h_t / 2) e_t` with
    /// log-variance `h_t = 0.95 h_{t-1} + 0.25 v_t`. Monthly latent growth is
    /// `0.25 + 0.4 f_t - 0.15 f_t^2 + 0.3 u_t`; quarterly growth aggregates it
    /// with weights `(1, 2, 3, 2, 1) / 3`.
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = FIXTURE_MONTHS;
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

        let mut f = vec![0.0; n];
        let mut h = 0.0;
        for t in 0..n {
            h = 0.95 * h + 0.25 * normal();
            let lag1 = if t >= 1 { f[t - 1] } else { 0.0 };
            let lag2 = if t >= 2 { f[t - 2] } else { 0.0 };
            f[t] = 0.5 * lag1 + 0.2 * lag2 + (0.5 * h).exp() * normal();
        }
        let ym: Vec<f64> = f.iter().map(|&v| 0.25 + 0.4 * v - 0.15 * v * v + 0.3 * normal()).collect();

        let mut names: Vec<String> = DFM_SERIES.iter().map(|(c, _)| c.to_string()).collect();
        names.extend((names.len()..FIXTURE_SERIES).map(|j| format!("SYN{j:02}")));
        let mut tcodes = Vec::with_capacity(FIXTURE_SERIES);
        let mut lags = Vec::with_capacity(FIXTURE_SERIES);
        let mut cols = Vec::with_capacity(FIXTURE_SERIES);
        for j in 0..FIXTURE_SERIES {
            let lambda = 0.5 + 0.5 * ((j * 7) % 10) as f64 / 10.0;
            let rho = 0.1 * (j % 5) as f64;
            let sd = if j < DFM_SERIES.len() { 0.5 } else { 0.8 };
            let nonlinear = (12..16).contains(&j);
            let mut u = 0.0;
            let stationary: Vec<f64> = f
                .iter()
                .map(|&v| {
                    u = rho * u + sd * normal();
                    let signal = if nonlinear { lambda * (v * v - 1.7) / 2.0 } else { lambda * v };
                    signal + u
                })
                .collect();
            let (code, col) = if j < DFM_SERIES.len() {
                // log levels whose growth is the stationary series
                let mut level = 100.0f64;
                let c: Vec<f64> = stationary
                    .iter()
                    .map(|x| {
                        level *= (0.01 * x).exp();
                        level
                    })
                    .collect();
                (TCode::LogDiff, c)
            } else if j % 3 == 0 {
                let mut level = 0.0;
                let c: Vec<f64> = stationary
                    .iter()
                    .map(|x| {
                        level += x;
                        level
                    })
                    .collect();
                (TCode::Diff, c)
            } else {
                (TCode::Level, stationary)
            };
            tcodes.push(code);
            lags.push(j % 3);
            cols.push(col);
        }
        let dates: Vec<YearMonth> = (0..n as i64).map(|i| FIXTURE_START.add_months(i)).collect();
        let values = (0..n).map(|t| cols.iter().map(|c| Some(c[t])).collect()).collect();
        let panel = VintageTable {
            release_tag: *dates.last().unwrap(),
            dates,
            mnemonics: names,
            tcodes,
            values,
        };

        let timeline = Timeline::new(FIXTURE_START).expect("fixture starts a quarter");
        let nq = n / 3;
        let mut quarters = Vec::new();
        let mut growth = Vec::new();
        for q in 2..=nq as i64 {
            let t = (3 * q - 1) as usize;
            let w = [ym[t], ym[t - 1], ym[t - 2], ym[t - 3], ym[t - 4]];
            quarters.push(timeline.quarter_at(q));
            growth.push(aggregate(&w));
        }
        let target = TargetSeries::new(timeline, quarters, growth).expect("consecutive quarters");
        Self {
            seed,
            panel,
            lags,
            target,
            factor: f,
        }
    }
}

impl VintageSource for SyntheticFixture {
    /// The panel through `cutoff` with series `j` missing its last `lags[j]` months.
    fn vintage(&self, cutoff: YearMonth) -> Result<VintageTable> {
        let mut v = self.panel.clone();
        v.truncate_after(cutoff);
        v.release_tag = cutoff;
        let rows = v.values.len();
        for (j, &lag) in self.lags.iter().enumerate() {
            for row in v.values.iter_mut().skip(rows.saturating_sub(lag)) {
                row[j] = None;
            }
        }
        Ok(v)
    }

    fn target(&self) -> Result<TargetSeries> {
        Ok(self.target.clone())
    }

    fn describe(&self) -> String {
        format!("synthetic fixture (seed {})", self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::Quarter;

    #[test]
    fn shape_and_determinism() {
        let a = SyntheticFixture::generate(1);
        assert_eq!(a.panel.n_series(), FIXTURE_SERIES);
        assert_eq!(a.panel.n_months(), FIXTURE_MONTHS);
        a.panel.validate().unwrap();
        assert_eq!(a.target.last_quarter(), Some(Quarter::new(2021, 4).unwrap()));
        let b = SyntheticFixture::generate(1);
        assert_eq!(a.panel, b.panel);
        assert_eq!(a.target, b.target);
        assert_ne!(SyntheticFixture::generate(2).panel, a.panel);
    }

    #[test]
    fn vintage_has_ragged_edge() {
        let fx = SyntheticFixture::generate(3);
        let cutoff = YearMonth::new(2015, 2).unwrap();
        let v = fx.vintage(cutoff).unwrap();
        assert_eq!(*v.dates.last().unwrap(), cutoff);
        let last = v.values.last().unwrap();
        for (j, &lag) in fx.lags.iter().enumerate() {
            assert_eq!(last[j].is_none(), lag > 0, "series {j}");
        }
        let idx = v.values.len() - 3;
        assert!(v.values[idx].iter().all(Option::is_some));
    }

    #[test]
    fn target_aggregates_monthly_growth() {
        let fx = SyntheticFixture::generate(4);
        assert!(fx.target.growth.iter().all(|g| g.is_finite()));
        let mean = fx.target.growth.iter().sum::<f64>() / fx.target.growth.len() as f64;
        // E[y] = 3 (0.25 - 0.15 E f^2) is below 0.75
        assert!(mean < 0.75 && mean > -1.5, "{mean}");
    }
}
