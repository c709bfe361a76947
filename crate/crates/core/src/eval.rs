//! Episode traces, driving metrics and the fixed-route benchmark.

use crate::affordance::{AffordanceVector, Observation, OBS_DIM};
use crate::env::{Action, EndReason, Env, EnvConfig};
use crate::error::{Error, Result};
use crate::learner::{ActMode, SacLearner};
use crate::reward::RewardBreakdown;
use crate::rng::{derive_seed, stream};
use crate::scenario::{EventSet, RouteRequest, WorldState};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub route_id: usize,
    pub repetition: usize,
    pub dt: f64,
    /// Ego pose `[x, y, heading]` at reset.
    pub start: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub t: u64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub action: Action,
    pub reward: RewardBreakdown,
    /// Running sum of `reward.total` up to and including this step.
    pub episode_return: f64,
    pub events: EventSet,
    pub affordances: AffordanceVector,
    pub delta_k: usize,
    /// Index of the route being driven (0 for the initial route).
    pub route_no: u32,
    /// Ego arc length along that route and the route's length.
    pub route_s: f64,
    pub route_len: f64,
    pub replanned: bool,
    pub end: Option<EndReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub header: TraceHeader,
    pub steps: Vec<StepRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum TraceLine {
    Header(TraceHeader),
    Step(StepRecord),
}

impl EpisodeTrace {
    pub fn end_reason(&self) -> Option<EndReason> {
        self.steps.last().and_then(|s| s.end)
    }

    pub fn total_return(&self) -> f64 {
        self.steps.iter().fold(0.0, |acc, s| acc + s.reward.total)
    }

    /// Path length of the ego over the episode.
    pub fn distance(&self) -> f64 {
        let mut prev = (self.header.start[0], self.header.start[1]);
        let mut d = 0.0;
        for s in &self.steps {
            d += (s.x - prev.0).hypot(s.y - prev.1);
            prev = (s.x, s.y);
        }
        d
    }

    /// `(length, covered)` of every route driven for at least one step.
    pub fn route_coverage(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(u32, f64, f64)> = Vec::new();
        for s in &self.steps {
            let covered = if s.events.reached_destination { s.route_len } else { s.route_s.clamp(0.0, s.route_len) };
            match out.last_mut() {
                Some(last) if last.0 == s.route_no => last.2 = last.2.max(covered),
                _ => out.push((s.route_no, s.route_len, covered)),
            }
        }
        out.into_iter().map(|(_, l, c)| (l, c)).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &TraceLine::Header(self.header.clone()))?;
        w.write_all(b"\n")?;
        for s in &self.steps {
            serde_json::to_writer(&mut w, &TraceLine::Step(s.clone()))?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        buf
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut header = None;
        let mut steps = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::Input(format!("trace line {}: {e}", i + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line).map_err(|e| Error::Input(format!("trace line {}: {e}", i + 1)))? {
                TraceLine::Header(h) if header.is_none() => header = Some(h),
                TraceLine::Header(_) => return Err(Error::Input(format!("trace line {}: second header", i + 1))),
                TraceLine::Step(s) => steps.push(s),
            }
        }
        let header = header.ok_or_else(|| Error::Input("trace has no header record".into()))?;
        Ok(Self { header, steps })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(std::io::BufReader::new(f))
    }
}

/// Anything that maps observations to actions during evaluation.
pub trait Policy {
    fn act(&mut self, obs: &Observation, world: &WorldState) -> Result<Action>;
}

impl<F: FnMut(&Observation, &WorldState) -> Action> Policy for F {
    fn act(&mut self, obs: &Observation, world: &WorldState) -> Result<Action> {
        Ok(self(obs, world))
    }
}

/// The learner's deterministic (mean) action.
#[derive(Debug, Clone, Copy)]
pub struct Deterministic<'a>(pub &'a SacLearner);

impl Policy for Deterministic<'_> {
    fn act(&mut self, obs: &Observation, _: &WorldState) -> Result<Action> {
        // deterministic mode draws no randomness
        let mut rng = stream(0, "unused");
        let (a, _) = self.0.act(obs.as_slice(), ActMode::Deterministic, &mut rng)?;
        Ok(Action::new(a[0], a[1]))
    }
}

/// Rolls out one episode and records every step.
pub fn run_episode<P: Policy>(
    env: &mut Env,
    policy: &mut P,
    seed: u64,
    route_id: usize,
    repetition: usize,
    config_hash: &str,
) -> Result<EpisodeTrace> {
    let mut obs = env.reset(seed)?;
    let w = env.world().expect("reset creates a world");
    let header = TraceHeader {
        version: TRACE_VERSION,
        config_hash: config_hash.to_string(),
        seed,
        route_id,
        repetition,
        dt: w.config.dt,
        start: [w.ego.x, w.ego.y, w.ego.heading],
    };
    let mut steps = Vec::new();
    let mut route_no = 0u32;
    let mut ret = 0.0;
    loop {
        let w = env.world().expect("active episode");
        let action = policy.act(&obs, w)?;
        let route_len = w.route.length();
        // route frame is read after the step but before any replan
        let r = env.step(action)?;
        let w = env.world().expect("active episode");
        let route_s = if r.info.replanned { route_len } else { w.ego_projection().s };
        ret += r.reward;
        steps.push(StepRecord {
            t: r.info.t,
            x: r.info.ego.x,
            y: r.info.ego.y,
            heading: r.info.ego.heading,
            v: r.info.ego.v,
            action: r.info.action,
            reward: r.info.breakdown,
            episode_return: ret,
            events: r.info.events,
            affordances: r.info.affordances,
            delta_k: r.info.delta_k,
            route_no,
            route_s,
            route_len,
            replanned: r.info.replanned,
            end: r.info.end,
        });
        if r.info.replanned {
            route_no += 1;
        }
        if r.done() {
            return Ok(EpisodeTrace { header, steps });
        }
        obs = r.obs;
    }
}

/// Per-episode metrics; one CSV row each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub route_id: usize,
    pub repetition: usize,
    pub seed: u64,
    /// km/h
    pub average_speed: f64,
    pub route_completion: f64,
    pub distance: f64,
    pub collision: bool,
    /// Ego speed at the collision step in km/h, 0 without a collision.
    pub collision_speed: f64,
    pub violations: u32,
    pub dpv: f64,
    pub termination_reason: String,
    pub duration_s: f64,
    pub steps: usize,
    pub episode_return: f64,
}

const KMH: f64 = 3.6;

pub fn episode_metrics(tr: &EpisodeTrace) -> EpisodeMetrics {
    let distance = tr.distance();
    let duration_s = tr.steps.len() as f64 * tr.header.dt;
    let cov = tr.route_coverage();
    let (len_sum, cov_sum) = cov.iter().fold((0.0, 0.0), |(a, b), (l, c)| (a + l, b + c));
    let route_completion = if len_sum > 0.0 { (cov_sum / len_sum).min(1.0) } else { 0.0 };
    let collision_step = tr.steps.iter().find(|s| s.events.any_collision());
    let violations: u32 = tr.steps.iter().map(|s| s.events.violation_count()).sum();
    EpisodeMetrics {
        route_id: tr.header.route_id,
        repetition: tr.header.repetition,
        seed: tr.header.seed,
        average_speed: if duration_s > 0.0 { distance / duration_s * KMH } else { 0.0 },
        route_completion,
        distance,
        collision: collision_step.is_some(),
        collision_speed: collision_step.map_or(0.0, |s| s.v * KMH),
        violations,
        dpv: if violations > 0 { distance / violations as f64 } else { distance },
        termination_reason: tr.end_reason().map_or("none", EndReason::name).to_string(),
        duration_s,
        steps: tr.steps.len(),
        episode_return: tr.total_return(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricStat {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub episodes: usize,
    /// Total distance over total driving time, km/h.
    pub average_speed: MetricStat,
    pub route_completion: MetricStat,
    pub distance: MetricStat,
    pub collision_rate: MetricStat,
    /// Mean over collision episodes only.
    pub collision_speed: MetricStat,
    /// Total distance over total violations.
    pub dpv: MetricStat,
    pub episode_return: MetricStat,
    pub total_distance: f64,
    pub total_violations: u32,
    /// No collision occurred; `collision_speed` is 0 by convention.
    pub no_collisions: bool,
    /// No violation occurred; `dpv` equals the total distance.
    pub no_violations: bool,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn stat(mean_value: f64, per_episode: &[f64]) -> MetricStat {
    MetricStat { mean: mean_value, std: sample_std(per_episode) }
}

pub fn aggregate(eps: &[EpisodeMetrics]) -> Result<MetricsReport> {
    if eps.is_empty() {
        return Err(Error::Usage("no episodes to aggregate".into()));
    }
    let col = |f: fn(&EpisodeMetrics) -> f64| eps.iter().map(f).collect::<Vec<f64>>();
    let dist = col(|e| e.distance);
    let total_distance: f64 = dist.iter().sum();
    let total_time: f64 = eps.iter().map(|e| e.duration_s).sum();
    let total_violations: u32 = eps.iter().map(|e| e.violations).sum();
    let cs: Vec<f64> = eps.iter().filter(|e| e.collision).map(|e| e.collision_speed).collect();
    let rc = col(|e| e.route_completion);
    let cr = col(|e| if e.collision { 1.0 } else { 0.0 });
    let ret = col(|e| e.episode_return);
    Ok(MetricsReport {
        episodes: eps.len(),
        average_speed: stat(
            if total_time > 0.0 { total_distance / total_time * KMH } else { 0.0 },
            &col(|e| e.average_speed),
        ),
        route_completion: stat(mean(&rc), &rc),
        distance: stat(total_distance / eps.len() as f64, &dist),
        collision_rate: stat(mean(&cr), &cr),
        collision_speed: stat(mean(&cs), &cs),
        dpv: stat(
            if total_violations > 0 { total_distance / total_violations as f64 } else { total_distance },
            &col(|e| e.dpv),
        ),
        episode_return: stat(mean(&ret), &ret),
        total_distance,
        total_violations,
        no_collisions: cs.is_empty(),
        no_violations: total_violations == 0,
    })
}

pub fn compute_metrics(traces: &[EpisodeTrace]) -> Result<MetricsReport> {
    if traces.is_empty() {
        return Err(Error::Usage("compute_metrics needs at least one trace".into()));
    }
    aggregate(&traces.iter().map(episode_metrics).collect::<Vec<_>>())
}

pub const CSV_COLUMNS: [&str; 20] = [
    "route_id",
    "repetition",
    "seed",
    "AS",
    "RC",
    "TD",
    "CR_flag",
    "CS",
    "violations",
    "DPV",
    "termination_reason",
    "duration_s",
    "steps",
    "return",
    "AS_std",
    "RC_std",
    "TD_std",
    "CR_std",
    "CS_std",
    "DPV_std",
];

/// CSV with one row per episode and a final `summary` row holding the
/// aggregated means and their standard deviations.
pub fn metrics_csv(eps: &[EpisodeMetrics], report: &MetricsReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wr = |e: csv::Error| Error::Input(format!("csv: {e}"));
    w.write_record(CSV_COLUMNS).map_err(wr)?;
    for e in eps {
        let row = [
            e.route_id.to_string(),
            e.repetition.to_string(),
            e.seed.to_string(),
            e.average_speed.to_string(),
            e.route_completion.to_string(),
            e.distance.to_string(),
            (e.collision as u8).to_string(),
            e.collision_speed.to_string(),
            e.violations.to_string(),
            e.dpv.to_string(),
            e.termination_reason.clone(),
            e.duration_s.to_string(),
            e.steps.to_string(),
            e.episode_return.to_string(),
        ];
        w.write_record(row.iter().map(String::as_str).chain(std::iter::repeat_n("", 6))).map_err(wr)?;
    }
    let r = report;
    let total_steps: usize = eps.iter().map(|e| e.steps).sum();
    let total_time: f64 = eps.iter().map(|e| e.duration_s).sum();
    let summary = [
        "summary".to_string(),
        String::new(),
        String::new(),
        r.average_speed.mean.to_string(),
        r.route_completion.mean.to_string(),
        r.distance.mean.to_string(),
        r.collision_rate.mean.to_string(),
        r.collision_speed.mean.to_string(),
        r.total_violations.to_string(),
        r.dpv.mean.to_string(),
        String::new(),
        total_time.to_string(),
        total_steps.to_string(),
        r.episode_return.mean.to_string(),
        r.average_speed.std.to_string(),
        r.route_completion.std.to_string(),
        r.distance.std.to_string(),
        r.collision_rate.std.to_string(),
        r.collision_speed.std.to_string(),
        r.dpv.std.to_string(),
    ];
    w.write_record(&summary).map_err(wr)?;
    w.into_inner().map_err(|e| Error::Input(format!("csv: {e}")))
}

/// Reads episode rows back from a metrics CSV, skipping the summary row.
pub fn read_metrics_csv(bytes: &[u8]) -> Result<Vec<EpisodeMetrics>> {
    let mut r = csv::Reader::from_reader(bytes);
    let bad = |what: &str| Error::Input(format!("metrics csv: bad {what}"));
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Input(format!("metrics csv: {e}")))?;
        if &rec[0] == "summary" {
            continue;
        }
        let f = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(CSV_COLUMNS[i]));
        out.push(EpisodeMetrics {
            route_id: rec[0].parse().map_err(|_| bad("route_id"))?,
            repetition: rec[1].parse().map_err(|_| bad("repetition"))?,
            seed: rec[2].parse().map_err(|_| bad("seed"))?,
            average_speed: f(3)?,
            route_completion: f(4)?,
            distance: f(5)?,
            collision: &rec[6] == "1",
            collision_speed: f(7)?,
            violations: rec[8].parse().map_err(|_| bad("violations"))?,
            dpv: f(9)?,
            termination_reason: rec[10].to_string(),
            duration_s: f(11)?,
            steps: rec[12].parse().map_err(|_| bad("steps"))?,
            episode_return: f(13)?,
        });
    }
    Ok(out)
}

/// Picks `n` distinct spawn-point pairs whose routes are long enough.
pub fn fixed_routes(cfg: &EnvConfig, n: usize, seed: u64) -> Result<Vec<RouteRequest>> {
    let env = Env::new(cfg.clone())?;
    let net = env.network().clone();
    let spawns = net.spec.spawn_points.len();
    let mut rng = stream(seed, "fixed-routes");
    let mut out: Vec<RouteRequest> = Vec::new();
    for _ in 0..1000 * n.max(1) {
        if out.len() == n {
            break;
        }
        let req = RouteRequest { start: rng.random_range(0..spawns), goal: rng.random_range(0..spawns) };
        if req.start == req.goal || out.contains(&req) {
            continue;
        }
        let mut probe = cfg.scenario.clone();
        probe.route = Some(req);
        probe.background_vehicles = 0;
        if crate::scenario::build_scenario_on(net.clone(), std::sync::Arc::new(probe), 0)
            .is_ok_and(|w| w.route.length() >= cfg.scenario.min_route_length)
        {
            out.push(req);
        }
    }
    if out.len() < n {
        return Err(Error::Scenario { map: net.name().to_string(), reason: format!("only {} usable routes", out.len()) });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub routes: Vec<RouteRequest>,
    pub repetitions: usize,
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    pub jobs: usize,
}

#[derive(Debug, Clone)]
pub struct BenchmarkResult {
    pub traces: Vec<EpisodeTrace>,
    pub episodes: Vec<EpisodeMetrics>,
    pub report: MetricsReport,
}

pub fn benchmark_seed(seed: u64, route: usize, rep: usize) -> u64 {
    derive_seed(seed, &format!("bench-{route}-{rep}"))
}

/// Runs every route `repetitions` times with the learner's deterministic
/// policy. Dimensions are checked before any rollout.
pub fn benchmark(cfg: &EnvConfig, learner: &SacLearner, spec: &BenchmarkSpec, config_hash: &str) -> Result<BenchmarkResult> {
    if spec.routes.is_empty() || spec.repetitions == 0 {
        return Err(Error::Usage("benchmark needs at least one route and one repetition".into()));
    }
    learner.check_dims(OBS_DIM, 2)?;
    let jobs: Vec<(usize, usize)> =
        (0..spec.routes.len()).flat_map(|r| (0..spec.repetitions).map(move |k| (r, k))).collect();
    let run = |&(r, k): &(usize, usize)| -> Result<EpisodeTrace> {
        let mut c = cfg.clone();
        c.scenario.route = Some(spec.routes[r]);
        let mut env = Env::new(c)?;
        run_episode(&mut env, &mut Deterministic(learner), benchmark_seed(spec.seed, r, k), r, k, config_hash)
    };
    let traces = parallel_map(&jobs, spec.jobs.max(1), run)?;
    let episodes: Vec<EpisodeMetrics> = traces.iter().map(episode_metrics).collect();
    let report = aggregate(&episodes)?;
    Ok(BenchmarkResult { traces, episodes, report })
}

/// Order-preserving map over `items` using up to `jobs` threads.
pub fn parallel_map<T: Sync, U: Send>(
    items: &[T],
    jobs: usize,
    f: impl Fn(&T) -> Result<U> + Sync,
) -> Result<Vec<U>> {
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    let parts: Vec<Result<Vec<U>>> = std::thread::scope(|s| {
        let handles: Vec<_> =
            items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Result<Vec<U>>>())).collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn trace_file_name(route: usize, rep: usize) -> String {
    format!("route{route:02}_rep{rep}.jsonl")
}

/// Writes `traces/` and `metrics.csv` under `dir`; returns the CSV path.
pub fn write_benchmark(dir: &Path, res: &BenchmarkResult) -> Result<PathBuf> {
    let tdir = dir.join("traces");
    std::fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
    for t in &res.traces {
        t.save(&tdir.join(trace_file_name(t.header.route_id, t.header.repetition)))?;
    }
    let csv_path = dir.join("metrics.csv");
    std::fs::write(&csv_path, metrics_csv(&res.episodes, &res.report)?).map_err(|e| Error::io(&csv_path, e))?;
    Ok(csv_path)
}
