//! The six CSI schemes and the Monte-Carlo driver.
//!
//! | scheme | beamformer | power | phases |
//! |---|---|---|---|
//! | S1 | instantaneous | instantaneous | instantaneous |
//! | S2 | instantaneous | instantaneous | statistical |
//! | S3 | instantaneous | statistical | statistical |
//! | S4 | instantaneous | statistical | zero |
//! | S5 | instantaneous | instantaneous | zero |
//! | S6 | instantaneous | instantaneous | uniform random |

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::asymptotics::{mean_std, solve_taubar, GramSpectrum};
use crate::beamforming::{mmse_beamformer, sinr_per_user, Beamformer, SinrReport};
use crate::emf::{emf_to_power_bounds, ExposureSpec};
use crate::error::{domain, Error, Result};
use crate::model::{effective_channels, ChannelRealization, ChannelStatistics, SystemConfig};
use crate::parallel::{map_indexed, Execution};
use crate::phaseopt::{
    optimize_phases_instantaneous, optimize_phases_statistical, AscentOptions, AscentTrace, PhaseVector,
};
use crate::power::{allocate_power_asymptotic, allocate_power_instantaneous, alpha0, PowerAllocation};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeId {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PhaseRule {
    Instantaneous,
    Statistical,
    Zero,
    Random,
}

impl SchemeId {
    pub const ALL: [SchemeId; 6] = [
        SchemeId::S1,
        SchemeId::S2,
        SchemeId::S3,
        SchemeId::S4,
        SchemeId::S5,
        SchemeId::S6,
    ];

    pub fn index(self) -> u64 {
        self as u64 + 1
    }

    fn phase_rule(self) -> PhaseRule {
        match self {
            SchemeId::S1 => PhaseRule::Instantaneous,
            SchemeId::S2 | SchemeId::S3 => PhaseRule::Statistical,
            SchemeId::S4 | SchemeId::S5 => PhaseRule::Zero,
            SchemeId::S6 => PhaseRule::Random,
        }
    }

    /// Whether powers come from the large-system allocation.
    pub fn statistical_power(self) -> bool {
        matches!(self, SchemeId::S3 | SchemeId::S4)
    }

    /// Whether the scheme needs the one-time statistical phase design.
    pub fn needs_statistical_design(self) -> bool {
        self.phase_rule() == PhaseRule::Statistical
    }

    pub fn description(self) -> &'static str {
        match self {
            SchemeId::S1 => "instantaneous beamformer, power and phases",
            SchemeId::S2 => "instantaneous beamformer and power, statistical phases",
            SchemeId::S3 => "instantaneous beamformer, statistical power and phases",
            SchemeId::S4 => "instantaneous beamformer, statistical power, zero phases",
            SchemeId::S5 => "instantaneous beamformer and power, zero phases",
            SchemeId::S6 => "instantaneous beamformer and power, random phases",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.index())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_uppercase();
        let digits = t.strip_prefix("SCHEME").or_else(|| t.strip_prefix('S')).unwrap_or(&t);
        match digits.trim() {
            "1" => Ok(SchemeId::S1),
            "2" => Ok(SchemeId::S2),
            "3" => Ok(SchemeId::S3),
            "4" => Ok(SchemeId::S4),
            "5" => Ok(SchemeId::S5),
            "6" => Ok(SchemeId::S6),
            _ => Err(domain(format!("unknown scheme {s:?}; expected S1 to S6"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeOptions {
    pub max_rounds: usize,
    /// Stop alternating when the min SINR improves by less than this
    /// (relative) between rounds.
    pub round_tol: f64,
    pub ascent: AscentOptions,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self {
            max_rounds: 20,
            round_tol: 1e-6,
            ascent: AscentOptions::default(),
        }
    }
}

/// Phases designed once from statistical CSI and reused for every fading
/// realization drawn under the same statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticalDesign {
    pub phases: PhaseVector,
    pub alpha0: f64,
    /// `tau-bar` at the designed phases.
    pub tau_bar: f64,
    /// `tau-bar` at the starting phases.
    pub tau_bar_init: f64,
    pub trace: AscentTrace,
    pub elapsed: Duration,
}

/// Run the statistical phase design for the given per-user caps (on `p_k / K`).
pub fn statistical_design(stats: &ChannelStatistics, caps: &[f64], opts: &AscentOptions) -> Result<StatisticalDesign> {
    let start = Instant::now();
    let a0 = alpha0(&stats.path_losses, caps)?;
    let init = PhaseVector::zeros(stats.ris_elements());
    let (phases, trace) = optimize_phases_statistical(stats, a0, &init, opts)?;
    let tau_bar = trace.final_objective();
    Ok(StatisticalDesign {
        phases,
        alpha0: a0,
        tau_bar,
        tau_bar_init: trace.objective[0],
        trace,
        elapsed: start.elapsed(),
    })
}

/// Everything a scheme needs besides the fading realization.
#[derive(Debug, Clone)]
pub struct SchemeContext<'a> {
    pub stats: &'a ChannelStatistics,
    /// Caps on the per-user powers `p_k / K`.
    pub caps: &'a [f64],
    /// Precomputed statistical design; computed on demand when absent.
    pub design: Option<&'a StatisticalDesign>,
    pub options: &'a SchemeOptions,
    pub seed: u64,
    pub trial: u64,
}

/// Output of one scheme on one realization.
#[derive(Debug, Clone)]
pub struct AllocationResult {
    pub scheme: SchemeId,
    pub seed: u64,
    pub trial: u64,
    pub beamformer: Beamformer,
    pub power: PowerAllocation,
    pub phases: PhaseVector,
    /// SINRs evaluated directly from the returned beamformer, powers and
    /// phases.
    pub sinr: SinrReport,
    pub rounds: usize,
    /// Min SINR after every completed round.
    pub round_history: Vec<f64>,
    pub converged: bool,
    /// Wall-clock time of the per-realization work.
    pub elapsed: Duration,
    /// Wall-clock time of the one-time statistical design, if any.
    pub statistical_elapsed: Duration,
}

impl AllocationResult {
    pub fn min_sinr(&self) -> f64 {
        self.sinr.tau
    }
}

struct RoundOutcome {
    power: PowerAllocation,
    beamformer: Beamformer,
    sinr: SinrReport,
}

/// Power step followed by the MMSE beamformer for fixed phases.
fn power_then_beamformer(
    scheme: SchemeId,
    ctx: &SchemeContext<'_>,
    real: &ChannelRealization,
    phases: &PhaseVector,
) -> Result<RoundOutcome> {
    let stats = ctx.stats;
    let eff = effective_channels(stats, phases, real)?;
    let power = if scheme.statistical_power() {
        allocate_power_asymptotic(&stats.path_losses, ctx.caps)?
    } else {
        allocate_power_instantaneous(&eff.g_tilde, &stats.path_losses, ctx.caps, stats.noise_power)?
    };
    let beamformer = mmse_beamformer(&eff.g, &power.p_phys, stats.noise_power)?;
    let sinr = sinr_per_user(&eff.g, &power.p_phys, &beamformer, stats.noise_power)?;
    Ok(RoundOutcome {
        power,
        beamformer,
        sinr,
    })
}

fn in_round(round: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Round {
        round,
        source: Box::new(e),
    }
}

/// Run one scheme on one fading realization.
///
/// Statistical steps run before the exact-CSI loop and stay frozen. Each
/// round then updates phases (S1 only), powers and finally the MMSE
/// beamformer, so the reported SINRs are those of the returned combiners.
pub fn run_scheme(scheme: SchemeId, real: &ChannelRealization, ctx: &SchemeContext<'_>) -> Result<AllocationResult> {
    let stats = ctx.stats;
    if ctx.caps.len() != stats.users() {
        return Err(domain("one power cap per user is required"));
    }
    let mut statistical_elapsed = Duration::ZERO;
    let owned_design;
    let design = match (scheme.needs_statistical_design(), ctx.design) {
        (false, _) => None,
        (true, Some(d)) => {
            statistical_elapsed = d.elapsed;
            Some(d)
        }
        (true, None) => {
            owned_design = statistical_design(stats, ctx.caps, &ctx.options.ascent)?;
            statistical_elapsed = owned_design.elapsed;
            Some(&owned_design)
        }
    };

    let start = Instant::now();
    let n = stats.ris_elements();
    let mut phases = match scheme.phase_rule() {
        PhaseRule::Statistical => design.expect("statistical design present").phases.clone(),
        PhaseRule::Random => {
            let mut rng = stream_rng(ctx.seed, Stream::Scheme, &[ctx.trial, scheme.index()]);
            PhaseVector::random(n, &mut rng)
        }
        PhaseRule::Zero | PhaseRule::Instantaneous => PhaseVector::zeros(n),
    };

    if scheme.phase_rule() != PhaseRule::Instantaneous {
        let out = power_then_beamformer(scheme, ctx, real, &phases).map_err(in_round(1))?;
        return Ok(AllocationResult {
            scheme,
            seed: ctx.seed,
            trial: ctx.trial,
            round_history: vec![out.sinr.tau],
            beamformer: out.beamformer,
            power: out.power,
            phases,
            sinr: out.sinr,
            rounds: 1,
            converged: true,
            elapsed: start.elapsed(),
            statistical_elapsed,
        });
    }

    // S1: full power for the first phase step, then alternate
    let mut p = ctx.caps.to_vec();
    let mut best: Option<RoundOutcome> = None;
    let mut best_phases = phases.clone();
    let mut history = Vec::new();
    let mut converged = false;
    for round in 1..=ctx.options.max_rounds {
        let (next, _) =
            optimize_phases_instantaneous(stats, real, &p, &phases, &ctx.options.ascent).map_err(in_round(round))?;
        phases = next;
        let out = power_then_beamformer(scheme, ctx, real, &phases).map_err(in_round(round))?;
        let tau = out.sinr.tau;
        let previous = best.as_ref().map(|b| b.sinr.tau);
        match previous {
            Some(prev) if tau < prev => {
                // a smoothed-objective step can lose on the exact minimum;
                // keep the previous round
                converged = true;
                break;
            }
            _ => {
                history.push(tau);
                p = out.power.p_phys.clone();
                best = Some(out);
                best_phases = phases.clone();
                if let Some(prev) = previous {
                    if (tau - prev) / prev < ctx.options.round_tol {
                        converged = true;
                        break;
                    }
                }
            }
        }
    }
    let out = best.expect("at least one round");
    Ok(AllocationResult {
        scheme,
        seed: ctx.seed,
        trial: ctx.trial,
        rounds: history.len(),
        round_history: history,
        beamformer: out.beamformer,
        power: out.power,
        phases: best_phases,
        sinr: out.sinr,
        converged,
        elapsed: start.elapsed(),
        statistical_elapsed,
    })
}

#[derive(Default, Debug, Clone, PartialEq)]
pub struct MonteCarloOptions {
    /// Redraw geometry and `H1` for every trial instead of sharing one set of
    /// statistics across trials.
    pub redraw_statistics: bool,
    /// Per-user exposure limits replacing the uniform ones of the
    /// configuration.
    pub exposure: Option<ExposureSpec>,
    pub scheme: SchemeOptions,
    pub execution: Execution,
}

/// Per-scheme Monte-Carlo statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSummary {
    pub scheme: SchemeId,
    /// Successful trials.
    pub trials: usize,
    pub failures: usize,
    pub first_error: Option<String>,
    pub mean_min_sinr: f64,
    pub std_min_sinr: f64,
    pub min_min_sinr: f64,
    pub max_min_sinr: f64,
    /// Mean over trials of the summed transmit powers `sum_k p_k` (W).
    pub mean_power_sum: f64,
    /// Mean one-time statistical design time per set of statistics (ms).
    pub statistical_ms: f64,
    /// Mean per-realization time (ms).
    pub per_realization_ms: f64,
    /// Per-trial min SINRs in trial order (NaN for failed trials).
    pub min_sinrs: Vec<f64>,
}

impl SchemeSummary {
    /// Wall-clock estimate for serving `realizations` fading blocks under one
    /// set of statistics.
    pub fn amortized_ms(&self, realizations: usize) -> f64 {
        self.statistical_ms + realizations as f64 * self.per_realization_ms
    }
}

struct TrialRecord {
    min_sinr: f64,
    power_sum: f64,
    elapsed: Duration,
}

/// Statistics number `index` of a Monte-Carlo run (index 0 is the shared
/// set; trial `t` uses `t + 1` when statistics are redrawn).
pub fn draw_statistics(config: &SystemConfig, seed: u64, index: u64) -> Result<ChannelStatistics> {
    let mut rng = stream_rng(seed, Stream::Statistics, &[index]);
    let geometry = config.deployment.sample(config.users, &mut rng);
    ChannelStatistics::generate(config, &geometry, &mut rng)
}

/// Fading realization of trial `trial`.
pub fn draw_realization(config: &SystemConfig, seed: u64, trial: u64) -> ChannelRealization {
    let mut rng = stream_rng(seed, Stream::Fading, &[trial]);
    ChannelRealization::sample(config.ris_elements, config.users, &mut rng)
}

/// Per-user caps on `p_k / K` implied by the configuration.
pub fn config_caps(config: &SystemConfig) -> Result<Vec<f64>> {
    Ok(emf_to_power_bounds(&ExposureSpec::from_config(config))?.per_user_caps)
}

/// Monte-Carlo evaluation of several schemes with common random numbers:
/// trial `t` sees the same statistics and fading realization under every
/// scheme.
pub fn monte_carlo_many(
    schemes: &[SchemeId],
    config: &SystemConfig,
    n_trials: usize,
    seed: u64,
    opts: &MonteCarloOptions,
) -> Result<Vec<SchemeSummary>> {
    config.validate()?;
    if n_trials == 0 {
        return Err(domain("need at least one trial"));
    }
    if schemes.is_empty() {
        return Err(domain("no schemes requested"));
    }
    let caps = match &opts.exposure {
        Some(spec) if spec.sar_ref.len() != config.users => {
            return Err(domain(format!(
                "exposure limits given for {} users, system has {}",
                spec.sar_ref.len(),
                config.users
            )))
        }
        Some(spec) => emf_to_power_bounds(spec)?.per_user_caps,
        None => config_caps(config)?,
    };
    let needs_design = schemes.iter().any(|s| s.needs_statistical_design());

    // statistics index 0 is shared unless redrawn per trial
    let shared = if opts.redraw_statistics {
        None
    } else {
        let stats = draw_statistics(config, seed, 0)?;
        let design = if needs_design {
            Some(statistical_design(&stats, &caps, &opts.scheme.ascent)?)
        } else {
            None
        };
        Some((stats, design))
    };

    let per_trial = map_indexed(opts.execution, n_trials, |t| {
        let trial = t as u64;
        let owned;
        let (stats, design) = match &shared {
            Some((s, d)) => (s, d.as_ref()),
            None => {
                let stats = draw_statistics(config, seed, trial + 1)?;
                let design = if needs_design {
                    Some(statistical_design(&stats, &caps, &opts.scheme.ascent)?)
                } else {
                    None
                };
                owned = (stats, design);
                (&owned.0, owned.1.as_ref())
            }
        };
        let real = draw_realization(config, seed, trial);
        let ctx = SchemeContext {
            stats,
            caps: &caps,
            design,
            options: &opts.scheme,
            seed,
            trial,
        };
        let kf = config.users as f64;
        let records: Vec<Result<TrialRecord>> = schemes
            .iter()
            .map(|&s| {
                run_scheme(s, &real, &ctx).map(|r| TrialRecord {
                    min_sinr: r.min_sinr(),
                    power_sum: kf * r.power.total_power(),
                    elapsed: r.elapsed,
                })
            })
            .collect();
        Ok::<_, Error>((records, design.map(|d| d.elapsed)))
    });

    let mut design_times = Vec::new();
    let mut columns: Vec<Vec<Result<TrialRecord>>> = schemes.iter().map(|_| Vec::new()).collect();
    for trial in per_trial {
        let (records, design_time) = trial?;
        if let Some(d) = design_time {
            design_times.push(d.as_secs_f64() * 1e3);
        }
        for (col, rec) in columns.iter_mut().zip(records) {
            col.push(rec);
        }
    }
    let statistical_ms = if design_times.is_empty() {
        0.0
    } else if opts.redraw_statistics {
        mean_std(&design_times).0
    } else {
        design_times[0]
    };

    Ok(schemes
        .iter()
        .zip(columns)
        .map(|(&scheme, records)| {
            summarize(
                scheme,
                records,
                if scheme.needs_statistical_design() {
                    statistical_ms
                } else {
                    0.0
                },
            )
        })
        .collect())
}

fn summarize(scheme: SchemeId, records: Vec<Result<TrialRecord>>, statistical_ms: f64) -> SchemeSummary {
    let mut min_sinrs = Vec::with_capacity(records.len());
    let mut ok_sinrs = Vec::new();
    let mut powers = Vec::new();
    let mut times = Vec::new();
    let mut first_error = None;
    let mut failures = 0;
    for rec in records {
        match rec {
            Ok(r) => {
                min_sinrs.push(r.min_sinr);
                ok_sinrs.push(r.min_sinr);
                powers.push(r.power_sum);
                times.push(r.elapsed.as_secs_f64() * 1e3);
            }
            Err(e) => {
                min_sinrs.push(f64::NAN);
                failures += 1;
                first_error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let (mean, std) = mean_std(&ok_sinrs);
    SchemeSummary {
        scheme,
        trials: ok_sinrs.len(),
        failures,
        first_error,
        mean_min_sinr: mean,
        std_min_sinr: std,
        min_min_sinr: ok_sinrs.iter().copied().fold(f64::NAN, f64::min),
        max_min_sinr: ok_sinrs.iter().copied().fold(f64::NAN, f64::max),
        mean_power_sum: mean_std(&powers).0,
        statistical_ms,
        per_realization_ms: mean_std(&times).0,
        min_sinrs,
    }
}

/// Monte-Carlo evaluation of a single scheme.
pub fn monte_carlo(
    scheme: SchemeId,
    config: &SystemConfig,
    n_trials: usize,
    seed: u64,
    opts: &MonteCarloOptions,
) -> Result<SchemeSummary> {
    Ok(monte_carlo_many(&[scheme], config, n_trials, seed, opts)?.remove(0))
}

/// `tau-bar` for the statistics at the given phases; a cheap large-system
/// prediction of the min SINR reached by S2 and S3.
pub fn predicted_min_sinr(stats: &ChannelStatistics, caps: &[f64], phases: &PhaseVector) -> Result<f64> {
    let a0 = alpha0(&stats.path_losses, caps)?;
    let u = stats.cascade(phases)?;
    solve_taubar(a0, &GramSpectrum::new(&u), stats.noise_power, stats.users())
}
