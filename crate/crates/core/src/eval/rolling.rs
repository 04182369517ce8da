use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::bbb::{pilot_obs_sigma, predict_bbb, train_bbb, VariationalNetwork};
use crate::calendar::{Quarter, YearMonth};
use crate::dfm::{density_nowcast_dfm, fit_bridge, fit_dfm, nowcast_variance, DfmSpec};
use crate::error::{Error, Result};
use crate::fredmd::{
    build_information_set, dfm_feature_subset, extrapolate_ragged_edge, regressor_window, InfoSetKind, PanelMatrix, RaggedPanel,
    TargetSeries, VintageTable,
};
use crate::nn::{bottleneck_sparsity, train, Architecture, Checkpoint, Dataset, Network, TargetScaler, Tensor};
use crate::mc_dropout::predict_mcdropout;
use crate::stats::{EmpiricalDensity, Provenance};

use super::config::RunConfig;
use super::metrics::naive_nowcast;
use super::record::{sort_records, Density, Engine, NowcastRecord};
use super::source::VintageSource;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one engine's nowcast of one quarter; depends only on its inputs.
pub fn derive_seed(global: u64, q: Quarter, kind: InfoSetKind, engine: Engine) -> u64 {
    let mut h = mix(global);
    for part in [q.ordinal() as u64, kind.month_in_quarter() as u64, engine.code()] {
        h = mix(h ^ part);
    }
    h
}

/// Everything the neural engines need for one quarter.
#[derive(Debug, Clone)]
pub struct QuarterData {
    pub quarter: Quarter,
    pub kind: InfoSetKind,
    pub cutoff: YearMonth,
    pub train_start: Quarter,
    pub val_start: Quarter,
    pub train: Dataset,
    pub val: Dataset,
    /// Regressor window of the evaluated quarter.
    pub x: Tensor,
    pub features: usize,
    /// Latest target quarter among training and validation samples.
    pub last_target: Quarter,
    /// Latest regressor month among all samples.
    pub last_regressor: YearMonth,
}

/// Transformed regressor panel known at `cutoff`, standardized on the
/// months through `fit_through`, trailing gaps extrapolated to the cutoff.
/// Series with leading or interior gaps are dropped.
pub fn vintage_panel(vintage: &VintageTable, cutoff: YearMonth, fit_through: YearMonth) -> Result<PanelMatrix> {
    let first = *vintage
        .dates
        .first()
        .ok_or_else(|| Error::InsufficientData("empty vintage".into()))?;
    let mut ragged = RaggedPanel::from_vintage(vintage, first, cutoff)?;
    // second differences lose the first two months
    let lead = MAX_TCODE_LAG.min(ragged.values.len());
    ragged.values.drain(..lead);
    ragged.dates.drain(..lead);
    let dropped = ragged.retain_ragged_edge_columns(0..ragged.values.len());
    if !dropped.is_empty() {
        log::debug!("{cutoff}: dropped {} series with gaps", dropped.len());
    }
    if ragged.n_features() == 0 {
        return Err(Error::InsufficientData(format!("no usable series at {cutoff}")));
    }
    let fit_rows = ragged
        .row_of(fit_through)
        .ok_or_else(|| Error::Windowing(format!("vintage for {cutoff} does not cover {fit_through}")))?
        + 1;
    ragged.standardize(0..fit_rows)?;
    extrapolate_ragged_edge(&ragged, cutoff)
}

const MAX_TCODE_LAG: usize = 2;

/// Builds the training, validation and evaluation inputs of quarter `q`
/// from the vintage known at the information-set cutoff.
pub fn prepare_quarter(
    vintage: &VintageTable,
    target: &TargetSeries,
    cfg: &RunConfig,
    kind: InfoSetKind,
    q: Quarter,
) -> Result<QuarterData> {
    let cutoff = kind.cutoff(q);
    let (train_start, val_start) = cfg.windows.windows(q);
    let panel = vintage_panel(vintage, cutoff, kind.cutoff(val_start.add(-1)))?;
    let history = TargetSeries::new(
        target.timeline,
        target.range(train_start, q).iter().map(|p| p.0).collect(),
        target.range(train_start, q).iter().map(|p| p.1).collect(),
    )?;
    let set = build_information_set(&panel, &history, kind, cfg.engines.seq_len)?;
    let train_set = set.between(train_start, val_start);
    let val_set = set.between(val_start, q);
    if train_set.len() < cfg.windows.train_quarters / 2 || val_set.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{q}: {} training and {} validation sequences",
            train_set.len(),
            val_set.len()
        )));
    }
    let last_target = set.sequences.iter().map(|s| s.quarter).max().expect("non-empty");
    let last_regressor = set.sequences.iter().map(|s| s.cutoff).max().expect("non-empty");
    let x = Tensor::from_rows(&regressor_window(&panel, q, kind, cfg.engines.seq_len)?)?;
    Ok(QuarterData {
        quarter: q,
        kind,
        cutoff,
        train_start,
        val_start,
        train: Dataset::from_sequences(&train_set)?,
        val: Dataset::from_sequences(&val_set)?,
        x,
        features: panel.n_features(),
        last_target,
        last_regressor,
    })
}

fn stamp(mut r: NowcastRecord, d: &QuarterData, seed: u64) -> NowcastRecord {
    r.train_end = d.val_start.add(-1);
    r.fit_end = d.last_target;
    r.cutoff = Some(d.cutoff);
    r.seed = seed;
    r
}

fn empirical(dens: EmpiricalDensity, engine: Engine, d: &QuarterData) -> Density {
    Density::Empirical(dens.with_provenance(Provenance {
        engine: engine.name().into(),
        quarter: d.quarter,
        info_set: d.kind,
    }))
}

fn new_network(arch: &Architecture, d: &QuarterData, seq_len: usize, seed: u64) -> Result<Network> {
    let specs = arch.layers(seq_len, d.features)?;
    Network::new(specs, vec![seq_len, d.features], &mut ChaCha8Rng::seed_from_u64(seed))
}

fn checkpoint_path(dir: &Path, engine: Engine, d: &QuarterData) -> PathBuf {
    dir.join(format!("{}_{}_{}q{}.dcnn", engine, d.kind, d.quarter.year, d.quarter.q))
}

/// Monte Carlo dropout nowcast of one quarter.
pub fn run_mcdropout(d: &QuarterData, cfg: &RunConfig, seed: u64, ckpt_dir: Option<&Path>) -> Result<NowcastRecord> {
    let scaler = TargetScaler::fit(&d.train.ys);
    let train_s = d.train.map_targets(|y| scaler.scale(y));
    let val_s = d.val.map_targets(|y| scaler.scale(y));
    let mut net = new_network(&cfg.engines.arch, d, cfg.engines.seq_len, seed)?;
    let mut tc = cfg.engines.train.clone();
    tc.rng_seed = seed;
    let hist = train(&mut net, &train_s, &val_s, &tc)?;
    let dens = predict_mcdropout(&net, &d.x, cfg.engines.mcdropout_draws, mix(seed ^ 0xd7))?.affine(scaler.std, scaler.mean)?;
    if let Some(dir) = ckpt_dir {
        let mut ck = Checkpoint::deterministic(&net, seed, serde_json::to_value(&tc)?);
        ck.meta.target_scaler = Some(scaler);
        ck.write(&checkpoint_path(dir, Engine::McDropout, d))?;
    }
    let mut r = NowcastRecord::new(d.quarter, d.kind, Engine::McDropout, empirical(dens, Engine::McDropout, d));
    r.diagnostics = json!({
        "epochs": hist.epochs_run(),
        "best_epoch": hist.best_epoch,
        "best_val_loss": hist.best_val_loss(),
        "bottleneck_sparsity": bottleneck_sparsity(&net).ok(),
    });
    Ok(stamp(r, d, seed))
}

/// Bayes-by-Backprop nowcast: a dropout-free pilot network fixes the
/// observation noise (its validation RMSE) and the variational means start
/// from its weights.
pub fn run_bbb(d: &QuarterData, cfg: &RunConfig, seed: u64, ckpt_dir: Option<&Path>) -> Result<NowcastRecord> {
    let scaler = TargetScaler::fit(&d.train.ys);
    let train_s = d.train.map_targets(|y| scaler.scale(y));
    let val_s = d.val.map_targets(|y| scaler.scale(y));
    let arch = Architecture {
        dropout: 0.0,
        ..cfg.engines.arch
    };
    let mut pilot = new_network(&arch, d, cfg.engines.seq_len, seed)?;
    let mut bc = cfg.bbb_config();
    bc.train.rng_seed = seed;
    train(&mut pilot, &train_s, &val_s, &bc.train)?;
    // held-out residuals: the training fit of the pilot is optimistic
    let obs_sigma = pilot_obs_sigma(&pilot, &val_s)?;
    let mut vnet = VariationalNetwork::from_network(pilot, bc.rho_init, bc.prior_sigma, obs_sigma)?;
    bc.train.rng_seed = mix(seed ^ 0xbb);
    let state = train_bbb(&mut vnet, &train_s, &val_s, &bc)?;
    let dens = predict_bbb(&vnet, &d.x, bc.n_predict, mix(seed ^ 0xd8))?.affine(scaler.std, scaler.mean)?;
    if let Some(dir) = ckpt_dir {
        let mut ck = vnet.to_checkpoint(seed, serde_json::to_value(&bc)?);
        ck.meta.target_scaler = Some(scaler);
        ck.write(&checkpoint_path(dir, Engine::Bbb, d))?;
    }
    let mut r = NowcastRecord::new(d.quarter, d.kind, Engine::Bbb, empirical(dens, Engine::Bbb, d));
    r.diagnostics = json!({
        "epochs": state.elbo_history.len(),
        "best_epoch": state.best_epoch,
        "obs_sigma": obs_sigma,
        "kl_weight": state.kl_weight,
        "best_val_objective": state.val_history.get(state.best_epoch),
    });
    Ok(stamp(r, d, seed))
}

/// Factor-model nowcast. The vintage's indicators are extended with empty
/// months through the end of `q` so the filter predicts the missing months.
pub fn run_dfm(
    vintage: &VintageTable,
    target: &TargetSeries,
    cfg: &RunConfig,
    kind: InfoSetKind,
    q: Quarter,
    warm: Option<&DfmSpec>,
) -> Result<(NowcastRecord, DfmSpec)> {
    let cutoff = kind.cutoff(q);
    let mut panel = dfm_feature_subset(vintage)?;
    let last = *panel.dates.last().ok_or_else(|| Error::InsufficientData("empty factor panel".into()))?;
    if last > cutoff {
        return Err(Error::Contract(format!("factor panel runs to {last}, past the cutoff {cutoff}")));
    }
    let k = panel.n_features();
    let mut ym = last.add_months(1);
    while ym <= q.last_month() {
        panel.dates.push(ym);
        panel.values.push(vec![None; k]);
        ym = ym.add_months(1);
    }
    let spec = fit_dfm(&panel, &cfg.engines.dfm.dfm_config(), warm)?;
    let (train_start, val_start) = cfg.windows.windows(q);
    let history = target.range(train_start, q);
    let bridge = fit_bridge(&spec.factor_scores, &history, &cfg.engines.dfm.bridge_config())?;
    let dens = density_nowcast_dfm(&bridge, &spec, &spec.factor_scores, q)?;
    let mut r = NowcastRecord::new(q, kind, Engine::Dfm, Density::Gaussian(dens));
    r.train_end = val_start.add(-1);
    r.fit_end = history.last().map(|h| h.0).unwrap_or(r.train_end);
    r.cutoff = Some(cutoff);
    r.diagnostics = json!({
        "phi": bridge.phi,
        "c": bridge.c,
        "sigma2_eps": bridge.sigma2_eps,
        "factor_variance": spec.factor_variance(),
        "variance": nowcast_variance(&bridge, &spec)?,
        "loglik": spec.loglik,
        "em_iterations": spec.em_iterations,
        "bridge_quarters": bridge.n_quarters,
    });
    Ok((r, spec))
}

/// Naive benchmark over the training window.
pub fn run_naive(target: &TargetSeries, cfg: &RunConfig, kind: InfoSetKind, q: Quarter) -> Result<NowcastRecord> {
    let (train_start, val_start) = cfg.windows.windows(q);
    let history: Vec<f64> = target.range(train_start, val_start).iter().map(|p| p.1).collect();
    let g = naive_nowcast(&history, cfg.engines.naive)?;
    let mut r = NowcastRecord::new(q, kind, Engine::Naive, Density::Gaussian(g));
    r.train_end = val_start.add(-1);
    r.fit_end = r.train_end;
    r.cutoff = Some(kind.cutoff(q));
    Ok(r)
}

fn flag(q: Quarter, kind: InfoSetKind, engine: Engine, seed: u64, e: &Error) -> NowcastRecord {
    log::warn!("{engine} failed for {q} ({kind}): {e}");
    let mut r = NowcastRecord::failed(q, kind, engine, e);
    r.seed = seed;
    r.cutoff = Some(kind.cutoff(q));
    r
}

/// Rolls the train/validation windows over the evaluation quarters, one
/// refit per engine, information set and quarter. A missing vintage aborts
/// the run; an engine failure yields a flagged record. Output is sorted by
/// engine, information set and quarter and does not depend on scheduling.
pub fn rolling_run(source: &dyn VintageSource, cfg: &RunConfig) -> Result<Vec<NowcastRecord>> {
    cfg.validate()?;
    let target = source.target()?;
    let quarters = cfg.windows.eval_quarters();
    let engines = &cfg.engines.list;
    let ckpt_dir = cfg.output.save_checkpoints.then(|| cfg.output.dir.join("checkpoints"));
    if let Some(dir) = &ckpt_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut records = Vec::new();
    for &kind in &cfg.engines.info_sets {
        let vintages: Vec<VintageTable> = quarters
            .iter()
            .map(|&q| {
                let cutoff = kind.cutoff(q);
                source
                    .vintage(cutoff)
                    .map_err(|e| Error::Run(format!("no vintage for {cutoff} ({q}, {kind}): {e}")))
            })
            .collect::<Result<_>>()?;

        if engines.iter().any(|e| e.is_neural()) {
            let jobs: Vec<(usize, Engine)> = (0..quarters.len())
                .flat_map(|i| engines.iter().filter(|e| e.is_neural()).map(move |&e| (i, e)))
                .collect();
            let prepared: Vec<Result<QuarterData>> = quarters
                .par_iter()
                .zip(&vintages)
                .map(|(&q, v)| prepare_quarter(v, &target, cfg, kind, q))
                .collect();
            let out: Vec<NowcastRecord> = jobs
                .par_iter()
                .map(|&(i, engine)| {
                    let q = quarters[i];
                    let seed = derive_seed(cfg.seeds.global, q, kind, engine);
                    let res = prepared[i].as_ref().map_err(clone_error).and_then(|d| match engine {
                        Engine::McDropout => run_mcdropout(d, cfg, seed, ckpt_dir.as_deref()),
                        Engine::Bbb => run_bbb(d, cfg, seed, ckpt_dir.as_deref()),
                        _ => unreachable!("neural engines only"),
                    });
                    res.unwrap_or_else(|e| flag(q, kind, engine, seed, &e))
                })
                .collect();
            records.extend(out);
        }

        if engines.contains(&Engine::Dfm) {
            let mut warm: Option<DfmSpec> = None;
            for (&q, v) in quarters.iter().zip(&vintages) {
                let seed = derive_seed(cfg.seeds.global, q, kind, Engine::Dfm);
                match run_dfm(v, &target, cfg, kind, q, warm.as_ref()) {
                    Ok((mut r, spec)) => {
                        r.seed = seed;
                        records.push(r);
                        warm = Some(spec);
                    }
                    Err(e) => records.push(flag(q, kind, Engine::Dfm, seed, &e)),
                }
            }
        }

        if engines.contains(&Engine::Naive) {
            for &q in &quarters {
                let seed = derive_seed(cfg.seeds.global, q, kind, Engine::Naive);
                let mut r = run_naive(&target, cfg, kind, q).unwrap_or_else(|e| flag(q, kind, Engine::Naive, seed, &e));
                r.seed = seed;
                records.push(r);
            }
        }
    }
    for r in &mut records {
        r.actual = target.get(r.quarter);
    }
    sort_records(&mut records);
    Ok(records)
}

/// Errors are not `Clone`; preparation failures are shared by two engines.
fn clone_error(e: &Error) -> Error {
    match e {
        Error::InsufficientData(m) => Error::InsufficientData(m.clone()),
        Error::Windowing(m) => Error::Windowing(m.clone()),
        other => Error::Data(other.to_string()),
    }
}
