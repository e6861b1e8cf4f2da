//! Per-bit error-probability estimation from decoder soft outputs.
//!
//! One simulated block yields a whole vector of "first error happens at
//! information bit i" terms. In practical mode each decision contributes
//! the posterior chance it was wrong, discounted by the chance that all
//! earlier information decisions were right; averaging those vectors
//! gives a bit-error profile and, summed, a block-error estimate that
//! converges far faster than counting rare block errors directly. In
//! genie mode the decoder follows the known transmitted bits and the
//! terms are the observed first-error masses themselves (half a mass on
//! an exactly tied decision), so their sums reproduce true first-error
//! probabilities instead of a soft surrogate.
//!
//! Sampling is chunked: every chunk of blocks draws from its own
//! counter-derived RNG stream and is folded back in chunk order, so
//! results are bit-identical for any worker count. The stop rule is
//! evaluated at chunk granularity for the same reason.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{channel_llr, for_each_support_llr, transmit, ChannelModel};
use crate::code::{message_to_uvector, polar_encode, BitVector, CodeSpec};
use crate::decoder::{CheckNode, ScDecoder, ScMode, SclDecoder};
use crate::rng::{chunk_rng, StreamDomain, StreamKey};
use crate::{Error, Result};

/// Default clip for list-stage reliability values. Stages that discarded
/// nothing are perfectly reliable; clipping turns them into a finite
/// error mass of 1/(1+e^30), about 9.4e-14 per decision.
pub const STAGE_CLIP: f64 = 30.0;

/// Probability that a decision backed by reliability `x` is wrong:
/// 1/(1+e^x).
#[inline]
fn err_prob(x: f64) -> f64 {
    1.0 / (1.0 + x.exp())
}

fn sc_terms_into(decision_llrs: &[f64], info_set: &[usize], out: &mut [f64]) {
    debug_assert_eq!(info_set.len(), out.len());
    let mut survive = 1.0;
    for (term, &pos) in out.iter_mut().zip(info_set) {
        let q = err_prob(decision_llrs[pos - 1].abs().min(STAGE_CLIP));
        *term = q * survive;
        survive *= 1.0 - q;
    }
}

fn scl_terms_into(stage_reliability: &[f64], clip: f64, out: &mut [f64]) {
    debug_assert_eq!(stage_reliability.len(), out.len());
    let mut survive = 1.0;
    for (term, &rel) in out.iter_mut().zip(stage_reliability) {
        let q = err_prob(rel.clamp(-clip, clip));
        *term = q * survive;
        survive *= 1.0 - q;
    }
}

/// Soft first-error terms for one decision-fed SC trace, in
/// information-set order: the posterior error chance of each decision
/// times the survival chance of everything before it. Reliabilities are
/// clipped at [`STAGE_CLIP`] like the list terms, so a list of one
/// reproduces these terms to rounding error.
pub fn sc_sample_terms(decision_llrs: &[f64], info_set: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; info_set.len()];
    sc_terms_into(decision_llrs, info_set, &mut out);
    out
}

fn genie_terms_into(decision_llrs: &[f64], true_u: &BitVector, info_set: &[usize], out: &mut [f64]) {
    debug_assert_eq!(info_set.len(), out.len());
    let mut survive = 1.0;
    for (term, &pos) in out.iter_mut().zip(info_set) {
        let llr = decision_llrs[pos - 1];
        let e = if llr == 0.0 {
            0.5
        } else if u8::from(llr < 0.0) != true_u.get(pos - 1) {
            1.0
        } else {
            0.0
        };
        *term = e * survive;
        survive *= 1.0 - e;
    }
}

/// Hard first-error masses for one known-feedback SC trace: 1 on the
/// first wrong hard decision, with exactly tied decisions carrying half
/// their mass forward. The terms sum to the block's first-error mass, so
/// their expectation over outputs is the exact genie block-error rate.
pub fn genie_sample_terms(
    decision_llrs: &[f64],
    true_u: &BitVector,
    info_set: &[usize],
) -> Vec<f64> {
    let mut out = vec![0.0; info_set.len()];
    genie_terms_into(decision_llrs, true_u, info_set, &mut out);
    out
}

/// First-error probability terms for one list trace, from the per-stage
/// retained/discarded mass ratios, clipped at [`STAGE_CLIP`].
pub fn scl_sample_terms(stage_reliability: &[f64]) -> Vec<f64> {
    scl_sample_terms_with_clip(stage_reliability, STAGE_CLIP)
}

pub fn scl_sample_terms_with_clip(stage_reliability: &[f64], clip: f64) -> Vec<f64> {
    let mut out = vec![0.0; stage_reliability.len()];
    scl_terms_into(stage_reliability, clip, &mut out);
    out
}

/// Information positions whose estimated first-error probability reaches
/// `gamma`, 1-based and ascending. This is the natural candidate set for
/// flip decoding.
pub fn flip_candidate_set(summary: &ProfileSummary, gamma: f64) -> Vec<usize> {
    summary
        .info_set
        .iter()
        .zip(&summary.estimates)
        .filter(|&(_, &e)| e >= gamma)
        .map(|(&pos, _)| pos)
        .collect()
}

#[derive(Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    #[inline]
    fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Accumulated terms for one chunk of samples.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfilePartial {
    pub chunk_index: u32,
    pub samples: u64,
    pub errors: u64,
    pub term_sums: Vec<f64>,
    pub term_sq_sums: Vec<f64>,
}

/// Collection of per-chunk partial sums. Merging concatenates, so the
/// operation is associative and commutative; ordering is imposed once,
/// at finalize time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BitErrorProfile {
    info_set: Vec<usize>,
    partials: Vec<ProfilePartial>,
}

impl BitErrorProfile {
    pub fn new(info_set: Vec<usize>) -> Self {
        BitErrorProfile {
            info_set,
            partials: Vec::new(),
        }
    }

    pub fn info_set(&self) -> &[usize] {
        &self.info_set
    }

    pub fn push(&mut self, partial: ProfilePartial) {
        debug_assert_eq!(partial.term_sums.len(), self.info_set.len());
        self.partials.push(partial);
    }

    pub fn merge(mut self, other: BitErrorProfile) -> Result<BitErrorProfile> {
        if self.info_set != other.info_set {
            return Err(Error::Config(
                "cannot merge profiles over different information sets".into(),
            ));
        }
        self.partials.extend(other.partials);
        Ok(self)
    }

    /// Folds the partials in chunk order with compensated summation.
    pub fn finalize(&self) -> ProfileSummary {
        let k = self.info_set.len();
        let mut order: Vec<&ProfilePartial> = self.partials.iter().collect();
        order.sort_by_key(|p| p.chunk_index);
        let mut sums = vec![Kahan::default(); k];
        let mut sq_sums = vec![Kahan::default(); k];
        let mut samples = 0u64;
        let mut errors = 0u64;
        for part in order {
            samples += part.samples;
            errors += part.errors;
            for i in 0..k {
                sums[i].add(part.term_sums[i]);
                sq_sums[i].add(part.term_sq_sums[i]);
            }
        }
        let n = (samples as f64).max(1.0);
        let estimates: Vec<f64> = sums.iter().map(|s| s.sum / n).collect();
        let variances: Vec<f64> = (0..k)
            .map(|i| {
                if samples < 2 {
                    return 0.0;
                }
                let mean = estimates[i];
                let var = (sq_sums[i].sum - n * mean * mean) / (n - 1.0);
                (var / n).max(0.0)
            })
            .collect();
        let mut total = Kahan::default();
        for e in &estimates {
            total.add(*e);
        }
        ProfileSummary {
            info_set: self.info_set.clone(),
            estimator_bler: total.sum,
            mc_bler: errors as f64 / n,
            estimates,
            variances,
            samples,
            errors,
        }
    }
}

/// Finalized profile: per-bit estimates plus the block-level view.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub info_set: Vec<usize>,
    pub estimates: Vec<f64>,
    /// Variance of each per-bit mean estimate.
    pub variances: Vec<f64>,
    pub samples: u64,
    pub errors: u64,
    pub estimator_bler: f64,
    pub mc_bler: f64,
}

/// When to stop sampling: after `target_errors` observed block errors,
/// or at `max_samples`, whichever comes first. Evaluated per chunk.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StopRule {
    pub target_errors: u64,
    pub max_samples: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            target_errors: 100,
            max_samples: 1_000_000,
        }
    }
}

/// Which trace feeds the estimator, and with it which terms it records.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateMode {
    /// Decision feedback, exactly what a deployed decoder sees; terms
    /// are the soft first-error products.
    Practical,
    /// Known-true feedback; terms are the observed first-error masses,
    /// which average to the exact genie block-error rate.
    Genie,
}

/// Decoder driving the estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorDecoder {
    Sc,
    Scl { list_size: usize },
}

/// Everything that parameterizes one estimation run.
#[derive(Clone, Debug)]
pub struct EstimateOptions {
    pub mode: EstimateMode,
    pub decoder: EstimatorDecoder,
    /// CRC-aided final selection for the Monte Carlo error count (list
    /// decoding only; the profile terms do not depend on it).
    pub crc_aided: bool,
    pub stop: StopRule,
    pub chunk_size: u64,
    pub seed: u64,
    /// Substream coordinates, so paired and multi-point runs can share
    /// or separate their noise.
    pub domain: StreamDomain,
    pub lane: u16,
    pub slot: u16,
    /// Reliability clip for list-stage terms.
    pub clip: f64,
    pub check_node: CheckNode,
    /// Draw random payloads instead of the all-zero block.
    pub random_payload: bool,
    /// Keep the per-sample block-error outcomes (chunk order) for paired
    /// comparisons.
    pub collect_outcomes: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            mode: EstimateMode::Practical,
            decoder: EstimatorDecoder::Sc,
            crc_aided: false,
            stop: StopRule::default(),
            chunk_size: 256,
            seed: 0,
            domain: StreamDomain::Estimate,
            lane: 0,
            slot: 0,
            clip: STAGE_CLIP,
            check_node: CheckNode::Exact,
            random_payload: false,
            collect_outcomes: false,
        }
    }
}

/// Result of [`estimate`].
#[derive(Clone, Debug)]
pub struct EstimateReport {
    pub profile: BitErrorProfile,
    pub summary: ProfileSummary,
    /// Whether the error target was reached before the sample budget.
    pub converged: bool,
    pub outcomes: Option<Vec<bool>>,
}

fn validate_options(spec: &CodeSpec, options: &EstimateOptions) -> Result<()> {
    if options.mode == EstimateMode::Genie {
        if let EstimatorDecoder::Scl { .. } = options.decoder {
            return Err(Error::Config(
                "known-feedback traces are defined for SC only; list estimation \
                 is already decision-fed"
                    .into(),
            ));
        }
    }
    if options.crc_aided {
        match options.decoder {
            EstimatorDecoder::Scl { .. } if spec.crc().is_some() => {}
            EstimatorDecoder::Scl { .. } => {
                return Err(Error::Config(
                    "CRC-aided selection requires a code spec with a CRC".into(),
                ))
            }
            EstimatorDecoder::Sc => {
                return Err(Error::Config(
                    "CRC-aided selection applies to list decoding only".into(),
                ))
            }
        }
    }
    if options.chunk_size == 0 {
        return Err(Error::Config("chunk size must be positive".into()));
    }
    if options.clip <= 0.0 || options.clip.is_nan() {
        return Err(Error::Config("reliability clip must be positive".into()));
    }
    if options.stop.max_samples == 0 {
        return Err(Error::Config("sample budget must be positive".into()));
    }
    Ok(())
}

/// Per-worker state for drawing and scoring one block at a time.
struct SampleEngine<'a> {
    spec: &'a CodeSpec,
    channel: &'a ChannelModel,
    options: &'a EstimateOptions,
    sc: ScDecoder,
    scl: Option<SclDecoder>,
    zero_u: BitVector,
    zero_x: BitVector,
    /// Terms of the most recent sample.
    terms: Vec<f64>,
}

impl<'a> SampleEngine<'a> {
    fn new(
        spec: &'a CodeSpec,
        channel: &'a ChannelModel,
        options: &'a EstimateOptions,
    ) -> Result<Self> {
        let n = spec.block_len();
        let scl = match options.decoder {
            EstimatorDecoder::Scl { list_size } => Some(SclDecoder::with_check_node(
                n,
                list_size,
                options.check_node,
            )?),
            EstimatorDecoder::Sc => None,
        };
        Ok(SampleEngine {
            spec,
            channel,
            options,
            sc: ScDecoder::with_check_node(n, options.check_node)?,
            scl,
            zero_u: BitVector::zeros(n),
            zero_x: BitVector::zeros(n),
            terms: vec![0.0; spec.k_total()],
        })
    }

    /// Draws one block, decodes it, fills `self.terms`, and reports
    /// whether the block was a protocol error.
    fn sample(&mut self, noise_rng: &mut ChaCha12Rng, payload_rng: &mut ChaCha12Rng) -> Result<bool> {
        let (u, x) = if self.options.random_payload {
            let payload = BitVector::from_bits(
                (0..self.spec.payload_len())
                    .map(|_| u8::from(payload_rng.gen::<bool>()))
                    .collect::<Vec<u8>>(),
            )?;
            let u = message_to_uvector(&payload, self.spec)?;
            let x = polar_encode(&u, self.spec)?;
            (u, x)
        } else {
            (self.zero_u.clone(), self.zero_x.clone())
        };
        let y = transmit(&x, self.channel, noise_rng);
        let llrs = channel_llr(&y, self.channel)?;

        match self.options.decoder {
            EstimatorDecoder::Sc => {
                let mode = match self.options.mode {
                    EstimateMode::Practical => ScMode::Practical,
                    EstimateMode::Genie => ScMode::Genie { true_u: &u },
                };
                let out = self.sc.decode(self.spec, &llrs, mode)?;
                match self.options.mode {
                    EstimateMode::Practical => {
                        sc_terms_into(&out.decision_llrs, self.spec.info_set(), &mut self.terms);
                        Ok(out.u_hat != u)
                    }
                    EstimateMode::Genie => {
                        genie_terms_into(
                            &out.decision_llrs,
                            &u,
                            self.spec.info_set(),
                            &mut self.terms,
                        );
                        Ok(self.spec.info_set().iter().any(|&pos| {
                            u8::from(out.decision_llrs[pos - 1] < 0.0) != u.get(pos - 1)
                        }))
                    }
                }
            }
            EstimatorDecoder::Scl { .. } => {
                let out = self.scl.as_ref().unwrap().decode(
                    self.spec,
                    &llrs,
                    Some(&u),
                    self.options.crc_aided,
                )?;
                scl_terms_into(&out.stage_reliability, self.options.clip, &mut self.terms);
                Ok(out.u_hat != u)
            }
        }
    }
}

struct ChunkResult {
    partial: ProfilePartial,
    outcomes: Option<Vec<bool>>,
}

fn run_chunk(
    spec: &CodeSpec,
    channel: &ChannelModel,
    options: &EstimateOptions,
    chunk_index: u32,
    samples: u64,
) -> Result<ChunkResult> {
    let key = StreamKey::new(options.domain, options.lane.into(), options.slot.into());
    let payload_key =
        StreamKey::new(StreamDomain::Payload, options.lane.into(), options.slot.into());
    let mut noise_rng = chunk_rng(options.seed, key, chunk_index);
    let mut payload_rng = chunk_rng(options.seed, payload_key, chunk_index);

    let mut engine = SampleEngine::new(spec, channel, options)?;
    let k = spec.k_total();
    let mut term_sums = vec![Kahan::default(); k];
    let mut term_sq_sums = vec![Kahan::default(); k];
    let mut errors = 0u64;
    let mut outcomes = options.collect_outcomes.then(Vec::new);

    for _ in 0..samples {
        let error = engine.sample(&mut noise_rng, &mut payload_rng)?;
        for i in 0..k {
            term_sums[i].add(engine.terms[i]);
            term_sq_sums[i].add(engine.terms[i] * engine.terms[i]);
        }
        if error {
            errors += 1;
        }
        if let Some(v) = outcomes.as_mut() {
            v.push(error);
        }
    }

    Ok(ChunkResult {
        partial: ProfilePartial {
            chunk_index,
            samples,
            errors,
            term_sums: term_sums.iter().map(|s| s.sum).collect(),
            term_sq_sums: term_sq_sums.iter().map(|s| s.sum).collect(),
        },
        outcomes,
    })
}

/// Runs a chunked Monte Carlo estimate of the bit-error profile.
pub fn estimate(
    spec: &CodeSpec,
    channel: &ChannelModel,
    options: &EstimateOptions,
) -> Result<EstimateReport> {
    channel.validate()?;
    validate_options(spec, options)?;

    let wave = rayon::current_num_threads().max(1) * 2;
    let mut profile = BitErrorProfile::new(spec.info_set().to_vec());
    let mut outcomes = options.collect_outcomes.then(Vec::new);
    let mut samples = 0u64;
    let mut errors = 0u64;
    let mut next_chunk = 0u32;
    let mut stopped = false;

    while !stopped && samples < options.stop.max_samples {
        let mut batch = Vec::with_capacity(wave);
        let mut planned = samples;
        for _ in 0..wave {
            if planned >= options.stop.max_samples {
                break;
            }
            let take = options.chunk_size.min(options.stop.max_samples - planned);
            batch.push((next_chunk, take));
            planned += take;
            next_chunk += 1;
        }
        if batch.is_empty() {
            break;
        }
        let results: Result<Vec<ChunkResult>> = batch
            .par_iter()
            .map(|&(ci, ns)| run_chunk(spec, channel, options, ci, ns))
            .collect();
        for chunk in results? {
            samples += chunk.partial.samples;
            errors += chunk.partial.errors;
            profile.push(chunk.partial);
            if let (Some(all), Some(one)) = (outcomes.as_mut(), chunk.outcomes) {
                all.extend(one);
            }
            if errors >= options.stop.target_errors {
                stopped = true;
                break;
            }
        }
    }

    let summary = profile.finalize();
    Ok(EstimateReport {
        converged: errors >= options.stop.target_errors,
        profile,
        summary,
        outcomes,
    })
}

/// Exact profile for finite channels and small blocks: walks the whole
/// output support conditioned on the all-zero codeword.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExhaustiveReport {
    pub info_set: Vec<usize>,
    /// Expected first-error terms per information position.
    pub term_expectations: Vec<f64>,
    /// Sum of the term expectations.
    pub estimator_bler: f64,
    /// Exact block-error probability of the decision-fed decoder under
    /// the all-zero codeword, tie decisions resolved toward bit 0.
    pub protocol_bler: f64,
    pub outputs: u64,
}

pub fn estimate_exhaustive(
    spec: &CodeSpec,
    channel: &ChannelModel,
    mode: EstimateMode,
) -> Result<ExhaustiveReport> {
    channel.validate()?;
    let n = spec.block_len();
    let k = spec.k_total();
    let zero_u = BitVector::zeros(n);
    let zero_x = BitVector::zeros(n);
    let mut sc = ScDecoder::new(n)?;
    let mut terms = vec![0.0; k];
    let mut term_exp = vec![Kahan::default(); k];
    let mut protocol = Kahan::default();
    let mut outputs = 0u64;
    let mut inner: Result<()> = Ok(());

    for_each_support_llr(channel, &zero_x, |llrs, prob| {
        if inner.is_err() {
            return;
        }
        outputs += 1;
        let step = (|| -> Result<()> {
            let sc_mode = match mode {
                EstimateMode::Practical => ScMode::Practical,
                EstimateMode::Genie => ScMode::Genie { true_u: &zero_u },
            };
            let out = sc.decode(spec, llrs, sc_mode)?;
            match mode {
                EstimateMode::Practical => {
                    sc_terms_into(&out.decision_llrs, spec.info_set(), &mut terms);
                }
                EstimateMode::Genie => {
                    genie_terms_into(&out.decision_llrs, &zero_u, spec.info_set(), &mut terms);
                }
            }
            for i in 0..k {
                term_exp[i].add(prob * terms[i]);
            }
            let error = match mode {
                EstimateMode::Practical => !out.u_hat.is_zero(),
                EstimateMode::Genie => spec
                    .info_set()
                    .iter()
                    .any(|&pos| out.decision_llrs[pos - 1] < 0.0),
            };
            if error {
                protocol.add(prob);
            }
            Ok(())
        })();
        if let Err(e) = step {
            inner = Err(e);
        }
    })?;
    inner?;

    let term_expectations: Vec<f64> = term_exp.iter().map(|s| s.sum).collect();
    let mut total = Kahan::default();
    for t in &term_expectations {
        total.add(*t);
    }
    Ok(ExhaustiveReport {
        info_set: spec.info_set().to_vec(),
        term_expectations,
        estimator_bler: total.sum,
        protocol_bler: protocol.sum,
        outputs,
    })
}

/// Estimator and plain Monte Carlo trajectories over a sample grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub samples: u64,
    pub estimator_bler: f64,
    pub mc_bler: f64,
    pub errors: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceRun {
    pub run: usize,
    pub points: Vec<ConvergencePoint>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceSummaryRow {
    pub samples: u64,
    pub estimator_mean: f64,
    pub estimator_std: f64,
    pub mc_mean: f64,
    pub mc_std: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub grid: Vec<u64>,
    pub runs: Vec<ConvergenceRun>,
    pub summary: Vec<ConvergenceSummaryRow>,
}

/// Repeats short estimation runs and snapshots both block-error readings
/// at exact sample counts. Runs execute in parallel (one RNG slot each);
/// within a run samples are drawn serially so the grid cuts are exact.
pub fn convergence_report(
    spec: &CodeSpec,
    channel: &ChannelModel,
    options: &EstimateOptions,
    grid: &[u64],
    runs: usize,
) -> Result<ConvergenceReport> {
    channel.validate()?;
    validate_options(spec, options)?;
    if grid.is_empty() || runs == 0 {
        return Err(Error::Config("empty convergence grid or run count".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted[0] == 0 {
        return Err(Error::Config("grid points must be positive".into()));
    }
    if runs > usize::from(u16::MAX) {
        return Err(Error::Config("too many runs".into()));
    }

    let run_series: Result<Vec<ConvergenceRun>> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut options_run = options.clone();
            options_run.slot = run as u16;
            single_trajectory(spec, channel, &options_run, &sorted, run)
        })
        .collect();
    let run_series = run_series?;

    let summary = sorted
        .iter()
        .enumerate()
        .map(|(gi, &samples)| {
            let est: Vec<f64> = run_series
                .iter()
                .map(|r| r.points[gi].estimator_bler)
                .collect();
            let mc: Vec<f64> = run_series.iter().map(|r| r.points[gi].mc_bler).collect();
            let (estimator_mean, estimator_std) = mean_std(&est);
            let (mc_mean, mc_std) = mean_std(&mc);
            ConvergenceSummaryRow {
                samples,
                estimator_mean,
                estimator_std,
                mc_mean,
                mc_std,
            }
        })
        .collect();

    Ok(ConvergenceReport {
        grid: sorted,
        runs: run_series,
        summary,
    })
}

fn single_trajectory(
    spec: &CodeSpec,
    channel: &ChannelModel,
    options: &EstimateOptions,
    grid: &[u64],
    run: usize,
) -> Result<ConvergenceRun> {
    let total = *grid.last().unwrap();
    let k = spec.k_total();
    let key = StreamKey::new(options.domain, options.lane.into(), options.slot.into());
    let payload_key =
        StreamKey::new(StreamDomain::Payload, options.lane.into(), options.slot.into());
    let mut engine = SampleEngine::new(spec, channel, options)?;

    let mut term_sums = vec![Kahan::default(); k];
    let mut errors = 0u64;
    let mut points = Vec::with_capacity(grid.len());
    let mut next_grid = 0usize;
    let mut done = 0u64;

    while done < total {
        let chunk_index = (done / options.chunk_size) as u32;
        let chunk_end = ((u64::from(chunk_index) + 1) * options.chunk_size).min(total);
        let mut noise_rng = chunk_rng(options.seed, key, chunk_index);
        let mut payload_rng = chunk_rng(options.seed, payload_key, chunk_index);
        while done < chunk_end {
            let error = engine.sample(&mut noise_rng, &mut payload_rng)?;
            for (sum, &term) in term_sums.iter_mut().zip(&engine.terms) {
                sum.add(term);
            }
            if error {
                errors += 1;
            }
            done += 1;
            while next_grid < grid.len() && grid[next_grid] == done {
                let n = done as f64;
                let mut total_terms = Kahan::default();
                for s in &term_sums {
                    total_terms.add(s.sum / n);
                }
                points.push(ConvergencePoint {
                    samples: done,
                    estimator_bler: total_terms.sum,
                    mc_bler: errors as f64 / n,
                    errors,
                });
                next_grid += 1;
            }
        }
    }
    debug_assert_eq!(points.len(), grid.len());
    Ok(ConvergenceRun { run, points })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::{sc_decode, scl_decode};
    use proptest::prelude::*;
    use rand::Rng;

    fn spec_8_4() -> CodeSpec {
        CodeSpec::new(8, 4, vec![4, 6, 7, 8]).unwrap()
    }

    #[test]
    fn sc_terms_worked_example() {
        let terms = sc_sample_terms(&[2.0, -1.0], &[1, 2]);
        assert!((terms[0] - 0.11920292202211755).abs() < 1e-15);
        assert!((terms[1] - 0.2368828180899101).abs() < 1e-15);
    }

    #[test]
    fn erased_trace_halves_forever() {
        let terms = sc_sample_terms(&[0.0, 0.0, 0.0], &[1, 2, 3]);
        assert_eq!(terms, vec![0.5, 0.25, 0.125]);
    }

    #[test]
    fn scl_terms_worked_example() {
        let terms = scl_sample_terms(&[3.0, -1.0]);
        assert!((terms[0] - 1.0 / (1.0 + 3f64.exp())).abs() < 1e-15);
        assert!((terms[1] - 0.6963874871945261).abs() < 1e-13);
    }

    #[test]
    fn unpruned_stages_contribute_the_clip_floor() {
        let terms = scl_sample_terms(&[f64::INFINITY]);
        let floor = 9.357622968839299e-14;
        assert!((terms[0] - floor).abs() < 1e-25);
        let wider = scl_sample_terms_with_clip(&[f64::INFINITY], 40.0);
        assert!(wider[0] < floor);
    }

    #[test]
    fn list_of_one_terms_match_sc_terms() {
        let spec = CodeSpec::new(16, 9, vec![4, 6, 7, 8, 11, 12, 13, 15, 16]).unwrap();
        let key = StreamKey::new(StreamDomain::Test, 3, 0);
        for trial in 0..50 {
            let mut rng = chunk_rng(23, key, trial);
            let llrs: Vec<f64> = (0..16).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let sc = sc_decode(&spec, &llrs, ScMode::Practical).unwrap();
            let scl = scl_decode(&spec, &llrs, 1, None, false).unwrap();
            let sc_terms = sc_sample_terms(&sc.decision_llrs, spec.info_set());
            let scl_terms = scl_sample_terms(&scl.stage_reliability);
            for (a, b) in sc_terms.iter().zip(&scl_terms) {
                assert!((a - b).abs() < 1e-12, "trial {trial}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn merge_order_does_not_change_the_summary() {
        let mk = |idx: u32, base: f64| ProfilePartial {
            chunk_index: idx,
            samples: 3,
            errors: u64::from(idx % 2),
            term_sums: vec![base, base / 3.0],
            term_sq_sums: vec![base * base / 7.0, base / 11.0],
        };
        let parts = [mk(0, 0.1), mk(1, 0.7), mk(2, 1.3e-9)];
        let build = |order: &[usize]| {
            let mut p = BitErrorProfile::new(vec![2, 5]);
            for &i in order {
                p.push(parts[i].clone());
            }
            p.finalize()
        };
        let a = build(&[0, 1, 2]);
        let b = build(&[2, 0, 1]);
        assert_eq!(a.samples, b.samples);
        for i in 0..2 {
            assert_eq!(a.estimates[i].to_bits(), b.estimates[i].to_bits());
            assert_eq!(a.variances[i].to_bits(), b.variances[i].to_bits());
        }
        assert_eq!(a.estimator_bler.to_bits(), b.estimator_bler.to_bits());
    }

    #[test]
    fn merge_rejects_mismatched_sets() {
        let a = BitErrorProfile::new(vec![1, 2]);
        let b = BitErrorProfile::new(vec![1, 3]);
        assert!(a.merge(b).is_err());
    }

    #[test]
    fn constant_terms_have_zero_variance() {
        let mut p = BitErrorProfile::new(vec![1]);
        for idx in 0..4 {
            p.push(ProfilePartial {
                chunk_index: idx,
                samples: 2,
                errors: 0,
                term_sums: vec![0.25 * 2.0],
                term_sq_sums: vec![0.0625 * 2.0],
            });
        }
        let s = p.finalize();
        assert!((s.estimates[0] - 0.25).abs() < 1e-15);
        assert!(s.variances[0].abs() < 1e-15);
    }

    #[test]
    fn estimate_is_deterministic_and_stops_on_target() {
        let spec = spec_8_4();
        let channel = ChannelModel::Bsc { p: 0.1 };
        let options = EstimateOptions {
            stop: StopRule {
                target_errors: 20,
                max_samples: 100_000,
            },
            seed: 42,
            collect_outcomes: true,
            ..EstimateOptions::default()
        };
        let a = estimate(&spec, &channel, &options).unwrap();
        let b = estimate(&spec, &channel, &options).unwrap();
        assert!(a.converged);
        assert!(a.summary.errors >= 20);
        assert_eq!(a.summary.samples % 256, 0);
        assert_eq!(a.summary.samples, b.summary.samples);
        assert_eq!(a.outcomes, b.outcomes);
        for (x, y) in a.summary.estimates.iter().zip(&b.summary.estimates) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        // The estimator and the raw count live on the same samples and
        // must agree in order of magnitude.
        assert!(a.summary.estimator_bler > 0.0);
        assert!(a.summary.mc_bler > 0.0);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let spec = spec_8_4();
        let channel = ChannelModel::Bsc { p: 0.08 };
        let options = EstimateOptions {
            stop: StopRule {
                target_errors: 30,
                max_samples: 50_000,
            },
            seed: 7,
            ..EstimateOptions::default()
        };
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate(&spec, &channel, &options).unwrap())
        };
        let single = run(1);
        let multi = run(4);
        assert_eq!(single.summary.samples, multi.summary.samples);
        assert_eq!(single.summary.errors, multi.summary.errors);
        for (x, y) in single
            .summary
            .estimates
            .iter()
            .zip(&multi.summary.estimates)
        {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(
            single.summary.estimator_bler.to_bits(),
            multi.summary.estimator_bler.to_bits()
        );
    }

    #[test]
    fn genie_list_estimation_is_rejected() {
        let spec = spec_8_4();
        let channel = ChannelModel::Bsc { p: 0.1 };
        let options = EstimateOptions {
            mode: EstimateMode::Genie,
            decoder: EstimatorDecoder::Scl { list_size: 2 },
            ..EstimateOptions::default()
        };
        assert!(estimate(&spec, &channel, &options).is_err());
    }

    #[test]
    fn exhaustive_requires_a_finite_channel() {
        let spec = spec_8_4();
        let channel = ChannelModel::Awgn { esn0_db: 2.0 };
        assert!(estimate_exhaustive(&spec, &channel, EstimateMode::Genie).is_err());
    }

    /// Small-scale version of the independence check between the library
    /// computation and a direct first-error sweep. The direct sweep
    /// scores each output by walking the known-feedback trace and
    /// assigning each decision an error chance of 0, 1/2 (tied LLR), or
    /// 1 by sign.
    #[test]
    fn exhaustive_matches_direct_first_error_sweep() {
        for (channel, info_set) in [
            (ChannelModel::Bsc { p: 0.2 }, vec![2, 3, 4]),
            (ChannelModel::Bec { erasure_prob: 0.4 }, vec![1, 3, 4]),
        ] {
            let spec = CodeSpec::new(4, info_set.len(), info_set).unwrap();
            let report = estimate_exhaustive(&spec, &channel, EstimateMode::Genie).unwrap();

            let zero_u = BitVector::zeros(4);
            let zero_x = BitVector::zeros(4);
            let mut sc = ScDecoder::new(4).unwrap();
            let mut direct = 0.0;
            for_each_support_llr(&channel, &zero_x, |llrs, prob| {
                let out = sc
                    .decode(&spec, llrs, ScMode::Genie { true_u: &zero_u })
                    .unwrap();
                let mut survive = 1.0;
                let mut err = 0.0;
                for &pos in spec.info_set() {
                    let l = out.decision_llrs[pos - 1];
                    let q = if l > 0.0 {
                        0.0
                    } else if l < 0.0 {
                        1.0
                    } else {
                        0.5
                    };
                    err += q * survive;
                    survive *= 1.0 - q;
                }
                direct += prob * err;
            })
            .unwrap();
            assert!(
                (report.estimator_bler - direct).abs() < 1e-12,
                "{channel}: {} vs {direct}",
                report.estimator_bler
            );
        }
    }

    #[test]
    fn exhaustive_practical_dominates_genie() {
        let spec = spec_8_4();
        let channel = ChannelModel::Bsc { p: 0.15 };
        let genie = estimate_exhaustive(&spec, &channel, EstimateMode::Genie).unwrap();
        let practical = estimate_exhaustive(&spec, &channel, EstimateMode::Practical).unwrap();
        assert!(practical.estimator_bler >= genie.estimator_bler - 1e-13);
    }

    #[test]
    fn convergence_grid_is_exact_and_reproducible() {
        let spec = spec_8_4();
        let channel = ChannelModel::Bsc { p: 0.1 };
        let options = EstimateOptions {
            seed: 3,
            ..EstimateOptions::default()
        };
        let grid = [100, 300, 1000];
        let a = convergence_report(&spec, &channel, &options, &grid, 3).unwrap();
        let b = convergence_report(&spec, &channel, &options, &grid, 3).unwrap();
        assert_eq!(a.grid, vec![100, 300, 1000]);
        for (ra, rb) in a.runs.iter().zip(&b.runs) {
            for (pa, pb) in ra.points.iter().zip(&rb.points) {
                assert_eq!(pa.samples, pb.samples);
                assert_eq!(pa.estimator_bler.to_bits(), pb.estimator_bler.to_bits());
                assert_eq!(pa.errors, pb.errors);
            }
        }
        // Distinct runs see distinct noise.
        assert_ne!(
            a.runs[0].points[2].estimator_bler.to_bits(),
            a.runs[1].points[2].estimator_bler.to_bits()
        );
    }

    #[test]
    fn candidate_set_respects_the_threshold() {
        let summary = ProfileSummary {
            info_set: vec![4, 6, 7, 8],
            estimates: vec![0.2, 1e-5, 0.0501, 0.0],
            variances: vec![0.0; 4],
            samples: 100,
            errors: 10,
            estimator_bler: 0.25,
            mc_bler: 0.1,
        };
        assert_eq!(flip_candidate_set(&summary, 0.05), vec![4, 7]);
        assert_eq!(flip_candidate_set(&summary, 0.3), Vec::<usize>::new());
        assert_eq!(flip_candidate_set(&summary, 0.0), vec![4, 6, 7, 8]);
    }

    proptest! {
        #[test]
        fn terms_sum_to_at_most_one(
            llrs in proptest::collection::vec(-20.0f64..20.0, 8),
            mask in proptest::collection::vec(proptest::bool::ANY, 8),
        ) {
            let info_set: Vec<usize> = (1..=8).filter(|&i| mask[i - 1]).collect();
            prop_assume!(!info_set.is_empty());
            let terms = sc_sample_terms(&llrs, &info_set);
            let total: f64 = terms.iter().sum();
            prop_assert!(total <= 1.0 + 1e-12);
            prop_assert!(terms.iter().all(|&t| t >= 0.0));
        }

        #[test]
        fn scl_terms_sum_to_at_most_one(
            rels in proptest::collection::vec(-40.0f64..40.0, 12),
        ) {
            let terms = scl_sample_terms(&rels);
            let total: f64 = terms.iter().sum();
            prop_assert!(total <= 1.0 + 1e-12);
        }
    }
}
