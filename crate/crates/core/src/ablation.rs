//! Paired dense-versus-sparse reward comparison: one agent per (seed,
//! preset) trained at the same step budget, all scored on the same fixed
//! routes under the full reward so returns are comparable.

use crate::affordance::OBS_DIM;
use crate::env::{Env, EnvConfig};
use crate::error::{Error, Result};
use crate::eval::{benchmark, parallel_map, BenchmarkResult, BenchmarkSpec};
use crate::learner::{train, CurveRow, SacConfig, SacLearner};
use crate::reward::RewardPreset;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    /// Compared against `full`.
    pub variant: RewardPreset,
    pub seeds: Vec<u64>,
    pub steps: u64,
    pub bench: BenchmarkSpec,
}

#[derive(Debug, Clone)]
pub struct AblationRun {
    pub seed: u64,
    pub preset: RewardPreset,
    pub learner: SacLearner,
    pub curve: Vec<CurveRow>,
    pub result: BenchmarkResult,
}

/// One comparison-CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub seed: String,
    pub preset: String,
    pub route_completion: f64,
    pub episode_return: f64,
    pub average_speed: f64,
    pub distance: f64,
    pub collision_rate: f64,
    pub dpv: f64,
    /// Mean training return over the last ten finished episodes, measured
    /// under the preset the agent was trained with.
    pub final_train_return: f64,
}

fn tail_mean(curve: &[CurveRow]) -> f64 {
    let tail = &curve[curve.len().saturating_sub(10)..];
    if tail.is_empty() {
        0.0
    } else {
        tail.iter().map(|r| r.episode_return).sum::<f64>() / tail.len() as f64
    }
}

pub fn ablate(base: &EnvConfig, sac: &SacConfig, spec: &AblationSpec, config_hash: &str) -> Result<Vec<AblationRun>> {
    if spec.seeds.is_empty() {
        return Err(Error::Usage("ablation needs at least one seed".into()));
    }
    if spec.variant == RewardPreset::Full {
        return Err(Error::config("preset", "the variant must differ from `full`"));
    }
    let mut eval_cfg = base.clone();
    eval_cfg.reward.toggles = RewardPreset::Full.toggles();
    let jobs: Vec<(u64, RewardPreset)> =
        spec.seeds.iter().flat_map(|&s| [(s, RewardPreset::Full), (s, spec.variant)]).collect();
    let inner = BenchmarkSpec { jobs: 1, ..spec.bench.clone() };
    parallel_map(&jobs, spec.bench.jobs.max(1), |&(seed, preset)| {
        let mut cfg = base.clone();
        cfg.reward.toggles = preset.toggles();
        let mut env = Env::new(cfg)?;
        let mut learner = SacLearner::new(OBS_DIM, 2, sac.clone(), seed)?;
        learner.config_hash = config_hash.to_string();
        let curve = train(&mut env, &mut learner, spec.steps, seed, |_| {})?;
        let result = benchmark(&eval_cfg, &learner, &inner, config_hash)?;
        Ok(AblationRun { seed, preset, learner, curve, result })
    })
}

/// Per-run rows followed by one `mean` row per preset.
pub fn comparison_rows(runs: &[AblationRun]) -> Vec<AblationRow> {
    let row = |seed: String, preset: RewardPreset, rs: &[&AblationRun]| {
        let n = rs.len() as f64;
        let m = |f: &dyn Fn(&AblationRun) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
        AblationRow {
            seed,
            preset: preset.name().to_string(),
            route_completion: m(&|r| r.result.report.route_completion.mean),
            episode_return: m(&|r| r.result.report.episode_return.mean),
            average_speed: m(&|r| r.result.report.average_speed.mean),
            distance: m(&|r| r.result.report.distance.mean),
            collision_rate: m(&|r| r.result.report.collision_rate.mean),
            dpv: m(&|r| r.result.report.dpv.mean),
            final_train_return: m(&|r| tail_mean(&r.curve)),
        }
    };
    let mut out: Vec<AblationRow> = runs.iter().map(|r| row(r.seed.to_string(), r.preset, &[r])).collect();
    let mut presets: Vec<RewardPreset> = Vec::new();
    for r in runs {
        if !presets.contains(&r.preset) {
            presets.push(r.preset);
        }
    }
    for p in presets {
        let rs: Vec<&AblationRun> = runs.iter().filter(|r| r.preset == p).collect();
        out.push(row("mean".into(), p, &rs));
    }
    out
}

/// The full preset beats the variant on both mean route completion and
/// mean episode return.
pub fn full_wins(rows: &[AblationRow], variant: RewardPreset) -> bool {
    let mean = |p: RewardPreset| rows.iter().find(|r| r.seed == "mean" && r.preset == p.name());
    match (mean(RewardPreset::Full), mean(variant)) {
        (Some(f), Some(v)) => f.route_completion > v.route_completion && f.episode_return > v.episode_return,
        _ => false,
    }
}

pub fn comparison_csv(rows: &[AblationRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Input(format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| Error::Input(format!("csv: {e}")))
}
